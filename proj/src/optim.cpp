#include "din/optim.hpp"

#include <cmath>

namespace din {

void Adam::step(ParameterStore& store, double lr_backbone, double lr_head) {
  ++t_;
  const double bc1 = 1.0 - std::pow(p_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(p_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& prm = store[i];
    if (!prm.trainable) continue;
    auto [it, fresh] = state_.try_emplace(prm.name);
    if (fresh) {
      it->second.m = Tensor(prm.value.shape());
      it->second.v = Tensor(prm.value.shape());
    }
    Tensor& m = it->second.m;
    Tensor& v = it->second.v;
    const double lr = prm.group == LrGroup::kHead ? lr_head : lr_backbone;
    for (std::size_t k = 0; k < prm.value.size(); ++k) {
      const double g = prm.grad[k];
      m[k] = p_.beta1 * m[k] + (1.0 - p_.beta1) * g;
      v[k] = p_.beta2 * v[k] + (1.0 - p_.beta2) * g * g;
      if (lr == 0.0) continue;
      const double mhat = m[k] / bc1, vhat = v[k] / bc2;
      prm.value[k] -= lr * mhat / (std::sqrt(vhat) + p_.eps);
    }
  }
}

}  // namespace din
