#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "din/layers.hpp"

namespace din {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are keyed by parameter name, so
/// tensors added later (a new head) start from zero moments.
class Adam {
 public:
  explicit Adam(AdamParams p = {}) : p_(p) {}

  /// Updates every trainable tensor from its accumulated gradient using the
  /// learning rate of its group.
  void step(ParameterStore& store, double lr_backbone, double lr_head);
  std::uint64_t steps() const { return t_; }

 private:
  struct Moments {
    Tensor m, v;
  };
  AdamParams p_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace din
