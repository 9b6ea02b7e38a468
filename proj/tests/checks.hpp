#pragma once

// Property and oracle checks shared by the unit tests and the acceptance
// runner. Every function is deterministic for a given seed.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "din/frontend.hpp"
#include "din/gaussian.hpp"
#include "din/losses.hpp"
#include "din/network.hpp"
#include "din/scoring.hpp"
#include "loss_oracles.hpp"
#include "test_support.hpp"

namespace din::checks {

using testing::central_difference;
using testing::layer_grad_error;
using testing::probe_indices;
using testing::random_tensor;
using testing::rel_error;

struct Outcome {
  bool pass = true;
  std::string detail;
};

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------- gradients

using ErrorTable = std::map<std::string, double>;

inline void keep_worst(ErrorTable& t, const std::string& name, double v) {
  t[name] = std::max(t[name], v);
}

inline ErrorTable layer_gradient_errors(int instances, std::uint64_t seed) {
  Rng rng(seed);
  ErrorTable t;
  const DinConfig cfg;
  auto run = [&](const std::string& name, Tensor& x, ParameterStore& st, auto& layer) {
    keep_worst(t, name,
               layer_grad_error(x, st, [&](const Tensor& v) { return layer.forward(v, Mode::kTrain); },
                                [&](const Tensor& d) { return layer.backward(d); }, rng));
  };
  for (int inst = 0; inst < instances; ++inst) {
    const std::uint64_t s = seed + 100 + inst;
    {
      ParameterStore st;
      Conv2d conv(st, "c", 2, 3, 4, 4, 1 + inst % 2, 1, 1, s, LrGroup::kBackbone);
      Tensor x = random_tensor({2, 2, 6, 5}, rng);
      run("conv2d", x, st, conv);
    }
    {
      const std::size_t ks[][2] = {{3, 3}, {3, 1}, {5, 1}};
      const auto& k = ks[inst % 3];
      ParameterStore st;
      DepthwiseConv2d dw(st, "d", 3, k[0], k[1], 1 + inst % 2, s, LrGroup::kBackbone);
      Tensor x = random_tensor({2, 3, 6, 5}, rng);
      run("depthwise", x, st, dw);
    }
    {
      ParameterStore st;
      PointwiseConv2d pw(st, "p", 3, 4, 1 + inst % 2, s, LrGroup::kBackbone);
      Tensor x = random_tensor({2, 3, 5, 4}, rng);
      run("pointwise", x, st, pw);
    }
    {
      ParameterStore st;
      BatchNorm bn(st, "bn", 3, 1e-5, 0.1, LrGroup::kBackbone);
      bn.gamma().value = random_tensor({3}, rng);
      bn.beta().value = random_tensor({3}, rng);
      Tensor x = inst % 2 ? random_tensor({4, 3, 3, 2}, rng) : random_tensor({6, 3}, rng);
      run("batchnorm", x, st, bn);
    }
    {
      ParameterStore st;
      Gelu act;
      Tensor x = random_tensor({3, 7}, rng, 2.0);
      run("gelu", x, st, act);
    }
    {
      ParameterStore st;
      Linear fc(st, "fc", 5, 3, true, s, LrGroup::kHead);
      Tensor x = random_tensor({4, 5}, rng);
      run("linear", x, st, fc);
    }
    {
      ParameterStore st;
      GlobalMaxPool pool;
      // Well separated values so +-h never changes the argmax.
      Tensor x({2, 3, 3, 3});
      std::vector<double> vals(x.size());
      for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.1 * static_cast<double>(i);
      for (std::size_t i = vals.size(); i > 1; --i) std::swap(vals[i - 1], vals[uniform_upto(rng, i - 1)]);
      std::copy(vals.begin(), vals.end(), x.data());
      run("maxpool", x, st, pool);
    }
    {
      ParameterStore st;
      DenseUnit du(st, "du", 6, 4, cfg, s, LrGroup::kHead);
      Tensor x = random_tensor({5, 6}, rng);
      run("dense_unit", x, st, du);
    }
    {
      ParameterStore st;
      const bool project = inst % 2 == 0;
      DewIncBlock blk(st, "b", 4, project ? 8 : 4, project ? 2 : 1, cfg, s);
      Tensor x = random_tensor({2, 4, 6, 5}, rng);
      run("dew_inc_block", x, st, blk);
    }
  }
  return t;
}

inline Tensor unit_columns(Tensor w) {
  for (std::size_t c = 0; c < w.dim(1); ++c) {
    double ss = 0.0;
    for (std::size_t r = 0; r < w.dim(0); ++r) ss += w.at(r, c) * w.at(r, c);
    for (std::size_t r = 0; r < w.dim(0); ++r) w.at(r, c) /= std::sqrt(ss);
  }
  return w;
}

inline std::vector<Group> random_groups(std::size_t n, Rng& rng) {
  std::vector<Group> g(n);
  for (auto& v : g) v = static_cast<Group>(uniform_upto(rng, 2));
  return g;
}

inline double grad_error(Tensor& x, const Tensor& grad, const std::function<double()>& f) {
  double worst = 0.0;
  for (std::size_t i : probe_indices(x.size(), 64))
    worst = std::max(worst, rel_error(grad[i], central_difference(f, x[i])));
  return worst;
}

inline ErrorTable loss_gradient_errors(int instances, std::uint64_t seed) {
  Rng rng(seed);
  ErrorTable t;
  for (int inst = 0; inst < instances; ++inst) {
    const std::size_t n = 3 + inst % 5, d = 3 + inst % 4, classes = 2 + inst % 3;
    {
      Tensor y = random_tensor({n, d}, rng);
      Tensor w = unit_columns(random_tensor({d, classes}, rng));
      std::vector<int> labels(n);
      for (auto& l : labels) l = static_cast<int>(uniform_upto(rng, classes - 1));
      const AngularMarginParams p{1 + inst % 4, inst % 2 ? 30.0 : 4.0};
      const auto r = a_softmax_loss(y, labels, w, p);
      auto f = [&] { return a_softmax_loss(y, labels, w, p).value; };
      keep_worst(t, "a_softmax", std::max(grad_error(y, r.grad_y, f), grad_error(w, r.grad_w, f)));
    }
    {
      Tensor z = random_tensor({n + 2, d}, rng, 2.0);
      const auto groups = random_groups(n + 2, rng);
      const ContrastiveParams p{inst % 2 ? 0.1 : 0.5, inst % 3 != 0};
      const auto r = contrastive_loss(z, groups, p);
      keep_worst(t, "contrastive", grad_error(z, r.grad_z, [&] { return contrastive_loss(z, groups, p).value; }));
    }
    {
      Tensor x = random_tensor({n, d}, rng);
      std::vector<std::uint8_t> mask(n);
      for (auto& m : mask) m = static_cast<std::uint8_t>(uniform_upto(rng, 1));
      mask[0] = 1;
      std::vector<double> c(d);
      for (auto& v : c) v = standard_normal(rng);
      const auto r = center_loss(x, mask, c);
      keep_worst(t, "center", grad_error(x, r.grad, [&] { return center_loss(x, mask, c).value; }));
    }
    {
      Tensor l = random_tensor({n, 2}, rng, 3.0);
      std::vector<int> labels(n);
      for (auto& v : labels) v = static_cast<int>(uniform_upto(rng, 1));
      const auto r = cross_entropy(l, labels);
      keep_worst(t, "cross_entropy", grad_error(l, r.grad, [&] { return cross_entropy(l, labels).value; }));
    }
  }
  return t;
}

inline Outcome gradient_suite(int instances, std::uint64_t seed, double tol, double max_seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  ErrorTable all = layer_gradient_errors(instances, seed);
  for (const auto& [k, v] : loss_gradient_errors(instances, seed + 1)) all[k] = v;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Outcome o;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [k, v] : all) {
    if (!(v < tol)) o.pass = false;
    if (v >= worst) {
      worst = v;
      worst_name = k;
    }
  }
  o.pass = o.pass && secs < max_seconds;
  o.detail = std::to_string(all.size()) + " kinds x " + std::to_string(instances) +
             " instances, worst " + worst_name + " " + fmt(worst) + ", " + fmt(secs) + " s";
  return o;
}

// -------------------------------------------------------------- loss oracles

struct OracleComparison {
  double worst = 0.0;         // max |got - oracle| / max(1, |oracle|)
  double max_exponent = 0.0;  // largest |z.z/tau| seen in the contrastive cases
  bool finite = true;
  int batches = 0;
};

inline double max_abs_similarity(const Tensor& z, double tau) {
  double best = 0.0;
  std::vector<double> norm(z.dim(0));
  for (std::size_t i = 0; i < z.dim(0); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < z.dim(1); ++j) s += z.at(i, j) * z.at(i, j);
    norm[i] = std::sqrt(s);
  }
  for (std::size_t a = 0; a < z.dim(0); ++a)
    for (std::size_t b = 0; b < z.dim(0); ++b) {
      if (a == b) continue;
      double s = 0.0;
      for (std::size_t j = 0; j < z.dim(1); ++j) s += z.at(a, j) * z.at(b, j);
      best = std::max(best, std::abs(s / (norm[a] * norm[b] * tau)));
    }
  return best;
}

inline OracleComparison loss_oracle_comparison(int batches, std::uint64_t seed) {
  Rng rng(seed);
  OracleComparison r;
  auto diff = [](double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); };
  for (int inst = 0; inst < batches; ++inst) {
    const std::size_t n = 2 + uniform_upto(rng, 14), d = 2 + uniform_upto(rng, 14);
    const std::size_t classes = 2 + uniform_upto(rng, 5);
    const Tensor y = random_tensor({n, d}, rng);
    const Tensor w = unit_columns(random_tensor({d, classes}, rng));
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(uniform_upto(rng, classes - 1));
    const int m = 1 + inst % 4;
    const double l1 = a_softmax_loss(y, labels, w, {m, 30.0}).value;
    const double o1 = oracle::a_softmax(y, labels, w, m, 30.0);

    // Every third batch: clustered rows so that similarities reach +-1/tau.
    Tensor z = random_tensor({n, d}, rng);
    const auto groups = random_groups(n, rng);
    const bool stress = inst % 3 == 0;
    if (stress)
      for (std::size_t i = 0; i < n; ++i) {
        const double sign = groups[i] == Group::kBonafide ? 1.0 : -1.0;
        for (std::size_t j = 0; j < d; ++j)
          z.at(i, j) = (j == static_cast<std::size_t>(groups[i]) % d ? 5.0 * sign : 0.0) + 0.05 * z.at(i, j);
      }
    const double tau = stress || inst % 2 ? 0.01 : 0.2;
    const auto l2 = contrastive_loss(z, groups, {tau, true});
    const double o2 = oracle::contrastive(z, groups, tau, true);
    r.max_exponent = std::max(r.max_exponent, max_abs_similarity(z, tau));

    std::vector<std::uint8_t> mask(n);
    for (auto& v : mask) v = static_cast<std::uint8_t>(uniform_upto(rng, 1));
    std::vector<double> c(d);
    for (auto& v : c) v = standard_normal(rng);
    const double l3 = center_loss(y, mask, c).value;
    const double o3 = oracle::center(y, mask, c);

    std::vector<int> bin(n);
    for (auto& v : bin) v = static_cast<int>(uniform_upto(rng, 1));
    const Tensor logits = random_tensor({n, 2}, rng, 10.0);
    const double ce = cross_entropy(logits, bin).value;
    const double oce = oracle::cross_entropy(logits, bin);

    const LossWeights lw;
    const double l = combined_loss(l1, l2.value, l3, lw);
    const double ol = static_cast<double>(static_cast<long double>(lw.alpha) * o1 +
                                          static_cast<long double>(lw.beta) * o2 +
                                          static_cast<long double>(lw.gamma) * o3);
    r.finite = r.finite && std::isfinite(l2.value) && l2.grad_z.all_finite() && std::isfinite(l);
    r.worst = std::max({r.worst, diff(l1, o1), diff(l2.value, o2), diff(l3, o3), diff(ce, oce), diff(l, ol)});
    ++r.batches;
  }
  return r;
}

// ---------------------------------------------------------------- phi law

inline Outcome phi_law(int grid) {
  Outcome o;
  double worst_jump = 0.0, worst_rise = 0.0;
  for (int m = 1; m <= 4; ++m) {
    if (phi(0.0, m) != 1.0 || phi(std::numbers::pi, m) != 1.0 - 2.0 * m) {
      o.pass = false;
      o.detail += "endpoint mismatch m=" + std::to_string(m) + "; ";
    }
    for (int k = 1; k < m; ++k) {
      const double b = k * std::numbers::pi / m;
      worst_jump = std::max(worst_jump, std::abs(phi(b - 1e-12, m) - phi(b + 1e-12, m)));
    }
    double prev = phi(0.0, m);
    for (int i = 1; i <= grid; ++i) {
      const double cur = phi(std::numbers::pi * i / grid, m);
      worst_rise = std::max(worst_rise, cur - prev);
      prev = cur;
    }
  }
  o.pass = o.pass && worst_jump < 1e-6 && worst_rise <= 0.0;
  o.detail += "m=1..4, max jump " + fmt(worst_jump) + ", max rise " + fmt(worst_rise) +
              " over " + std::to_string(grid) + " points";
  return o;
}

// ------------------------------------------------------------ linear algebra

inline Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (std::size_t r = 0; r < t.dim(0); ++r)
    for (std::size_t c = 0; c < t.dim(1); ++c) m(r, c) = t.at(r, c);
  return m;
}

inline Tensor random_spd(std::size_t d, Rng& rng) {
  const Tensor a = random_tensor({d, d}, rng);
  Tensor s({d, d});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double v = i == j ? 0.5 : 0.0;
      for (std::size_t k = 0; k < d; ++k) v += a.at(i, k) * a.at(j, k);
      s.at(i, j) = v;
    }
  return s;
}

inline Outcome mahalanobis_oracle(int cases, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int inst = 0; inst < cases; ++inst) {
    const std::size_t d = 1 + uniform_upto(rng, 31);
    const auto g = fit_gaussian(random_tensor({d + 3 + uniform_upto(rng, 40), d}, rng));
    std::vector<double> x(d);
    Eigen::VectorXd diff(d);
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = 2.0 * standard_normal(rng);
      diff(i) = x[i] - g.mean[i];
    }
    const Eigen::MatrixXd shrunk = to_eigen(g.cov) + g.epsilon * Eigen::MatrixXd::Identity(d, d);
    const Eigen::LLT<Eigen::MatrixXd> llt(shrunk);
    const double solve = std::sqrt(diff.dot(llt.solve(diff)));
    worst = std::max(worst, std::abs(mahalanobis(x, g) - solve));
  }
  BonafideGaussian unit;
  unit.mean = {0.0, 0.0};
  unit.cov = Tensor({2, 2});
  unit.precision = Tensor({2, 2});
  unit.precision.at(0, 0) = unit.precision.at(1, 1) = 1.0;
  const double x34[2] = {3.0, 4.0};
  const double five = std::abs(mahalanobis(x34, unit) - 5.0);
  Outcome o;
  o.pass = worst <= 1e-8 && five <= 1e-12;
  o.detail = std::to_string(cases) + " cases D<=32, max |d - solve| " + fmt(worst) +
             ", |d((3,4)) - 5| " + fmt(five);
  return o;
}

// ------------------------------------------------------------------ metrics

inline ScoreRecord scored(double d, Label l) {
  ScoreRecord r;
  r.utt_id = "u";
  r.distance = d;
  r.label = l;
  return r;
}

inline std::vector<ScoreRecord> random_records(std::size_t nb, std::size_t nf, double shift, Rng& rng,
                                               bool coarse = false) {
  std::vector<ScoreRecord> out;
  auto draw = [&](double mu) {
    const double v = mu + standard_normal(rng);
    return coarse ? std::round(v * 4.0) / 4.0 : v;
  };
  for (std::size_t i = 0; i < nb; ++i) out.push_back(scored(draw(0.0), Label::kBonafide));
  for (std::size_t i = 0; i < nf; ++i) out.push_back(scored(draw(shift), Label::kFake));
  return out;
}

/// Dense uniform threshold grid; EER where FAR - FRR first becomes >= 0,
/// interpolated between the two neighbouring grid points.
inline double grid_eer(const std::vector<ScoreRecord>& rs, std::size_t points) {
  double lo = rs[0].distance, hi = rs[0].distance;
  for (const auto& r : rs) {
    lo = std::min(lo, r.distance);
    hi = std::max(hi, r.distance);
  }
  lo -= 1.0;
  hi += 1.0;
  std::vector<double> b, f;
  for (const auto& r : rs) (*r.label == Label::kBonafide ? b : f).push_back(r.distance);
  std::sort(b.begin(), b.end());
  std::sort(f.begin(), f.end());
  std::size_t ib = 0, jf = 0;
  double prev_far = 0.0, prev_frr = 1.0;
  for (std::size_t g = 0; g < points; ++g) {
    const double t = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(points - 1);
    while (ib < b.size() && b[ib] <= t) ++ib;
    while (jf < f.size() && f[jf] <= t) ++jf;
    const double far = static_cast<double>(jf) / static_cast<double>(f.size());
    const double frr = static_cast<double>(b.size() - ib) / static_cast<double>(b.size());
    const double diff = far - frr;
    if (diff >= 0.0) {
      if (g == 0 || diff == 0.0) return far;
      const double dp = prev_far - prev_frr, a = -dp / (diff - dp);
      return prev_far + a * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  return 1.0;
}

inline double pairwise_auc(const std::vector<ScoreRecord>& rs) {
  double wins = 0.0;
  std::size_t nb = 0, nf = 0;
  for (const auto& a : rs) (*a.label == Label::kBonafide ? nb : nf) += 1;
  for (const auto& a : rs) {
    if (*a.label != Label::kBonafide) continue;
    for (const auto& b : rs) {
      if (*b.label != Label::kFake) continue;
      if (a.distance < b.distance) wins += 1.0;
      else if (a.distance == b.distance) wins += 0.5;
    }
  }
  return wins / static_cast<double>(nb * nf);
}

inline Outcome metric_oracles(int sets, std::uint64_t seed) {
  Rng rng(seed);
  double eer_gap = 0.0, mono = 0.0;
  bool auc_exact = true;
  for (int inst = 0; inst < sets; ++inst) {
    const std::size_t nb = 1 + uniform_upto(rng, 119), nf = 200 - nb;
    const auto rs = random_records(nb, nf, 0.25 * (inst % 8), rng, inst % 4 == 0);
    const double eer = compute_eer(rs).eer, auc = compute_auc(rs);
    eer_gap = std::max(eer_gap, std::abs(eer - grid_eer(rs, 1000000)));
    auc_exact = auc_exact && auc == pairwise_auc(rs);
    auto mapped = rs;
    for (auto& r : mapped) r.distance = std::exp(r.distance) + std::pow(r.distance, 3.0);
    mono = std::max({mono, std::abs(compute_eer(mapped).eer - eer), std::abs(compute_auc(mapped) - auc)});
  }
  Outcome o;
  o.pass = eer_gap < 1e-3 && auc_exact && mono <= 1e-12;
  o.detail = std::to_string(sets) + " sets of 200, max |EER - grid| " + fmt(eer_gap) + ", AUC " +
             (auc_exact ? "exact" : "MISMATCH") + ", monotone drift " + fmt(mono);
  return o;
}

// -------------------------------------------------------------- complexity

struct Count {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

inline std::size_t out_len(std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
  return (in + 2 * p - k) / s + 1;
}

/// Layer-by-layer tally of the deployed model written out from the
/// architecture description: bias-free convolutions, BN with scale and shift,
/// 2 FLOPs per multiply-add, 2 per BN and GELU element, 1 per residual add
/// and per pooled element, FC head with bias.
inline Count closed_form_complexity(const DinConfig& c, std::size_t h, std::size_t w) {
  Count r;
  const std::size_t k = c.stem_kernel, pad = (k - 1) / 2;
  h = out_len(h, k, c.stem_stride, pad);
  w = out_len(w, k, c.stem_stride, pad);
  std::uint64_t ch = c.stem_channels;
  r.params += c.in_channels * ch * k * k + 2 * ch;
  r.flops += 2 * ch * h * w * c.in_channels * k * k + 4 * ch * h * w;
  for (int b = 0; b < 4; ++b) {
    const std::uint64_t out = c.block_channels[b], q = out / 4, s = c.block_strides[b];
    const std::uint64_t oh = (h - 1) / s + 1, ow = (w - 1) / s + 1, area = oh * ow;
    for (std::uint64_t taps : {0, 9, 3, 5}) {
      if (taps) {
        r.params += ch * taps + 2 * ch;
        r.flops += 2 * ch * area * taps + 4 * ch * area;
      }
      r.params += ch * q + 2 * q;
      r.flops += 2 * q * area * ch + 4 * q * area;
    }
    if (ch != out || s != 1) {
      r.params += ch * out + 2 * out;
      r.flops += 2 * out * area * ch + 2 * out * area;
    }
    r.flops += out * area;
    ch = out;
    h = oh;
    w = ow;
  }
  r.flops += ch * h * w;
  r.params += ch * c.entropy_classes + c.entropy_classes;
  r.flops += 2 * ch * c.entropy_classes + c.entropy_classes;
  return r;
}

// ---------------------------------------------------------------- gaussian

inline Outcome gaussian_consistency(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = 16, n = 10000;
  const Tensor sigma = random_spd(d, rng);
  const Eigen::MatrixXd es = to_eigen(sigma);
  const Eigen::MatrixXd l = es.llt().matrixL();
  Eigen::VectorXd mu(d);
  for (std::size_t i = 0; i < d; ++i) mu(i) = 3.0 * standard_normal(rng);
  Tensor samples({n, d});
  for (std::size_t k = 0; k < n; ++k) {
    Eigen::VectorXd z(d);
    for (std::size_t i = 0; i < d; ++i) z(i) = standard_normal(rng);
    const Eigen::VectorXd x = mu + l * z;
    for (std::size_t i = 0; i < d; ++i) samples.at(k, i) = x(i);
  }
  const auto g = fit_gaussian(samples);
  Eigen::VectorXd m(d);
  for (std::size_t i = 0; i < d; ++i) m(i) = g.mean[i];
  const double mean_err = (m - mu).norm() / mu.norm();
  const double cov_err = (to_eigen(g.cov) - es).norm() / es.norm();
  const Eigen::MatrixXd shrunk = to_eigen(g.cov) + g.epsilon * Eigen::MatrixXd::Identity(d, d);
  const double resid =
      (to_eigen(g.precision) * shrunk - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff();
  Outcome o;
  o.pass = mean_err < 0.1 && cov_err < 0.1 && resid < 1e-6;
  o.detail = "D=16 n=10000: mean rel err " + fmt(mean_err) + ", cov rel Frobenius err " +
             fmt(cov_err) + ", max |P(S+eps I) - I| " + fmt(resid);
  return o;
}

// ---------------------------------------------------------------- features

inline AudioClip sine_clip(double seconds, double freq, double amp = 0.5, int sr = 16000) {
  AudioClip c;
  c.sample_rate_hz = sr;
  c.utt_id = "sine";
  const auto n = static_cast<std::size_t>(std::llround(seconds * sr));
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    c.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / sr);
  return c;
}

inline Outcome feature_pipeline(std::uint64_t seed) {
  Outcome o;
  auto fail = [&](const std::string& why) {
    o.pass = false;
    o.detail += why + "; ";
  };
  const FrontendConfig cfg;
  Rng rng(seed);

  std::size_t tensors = 0;
  for (double secs : {0.1, 0.25, 1.0, 3.3, 4.0, 5.0, 7.9, 9.0, 12.5}) {
    AudioClip c;
    c.utt_id = "noise";
    c.sample_rate_hz = cfg.sample_rate_hz;
    c.samples.resize(static_cast<std::size_t>(secs * cfg.sample_rate_hz));
    for (auto& v : c.samples) v = 0.2 * standard_normal(rng);
    for (const auto& s : extract_features(c, cfg, false)) {
      ++tensors;
      if (s.data.shape() != std::vector<std::size_t>{3, 128, 128} || !s.data.all_finite())
        fail("bad tensor for " + fmt(secs) + " s clip");
    }
  }

  const int k0 = 64;
  const auto sine = sine_clip(4.0, k0 * 16000.0 / cfg.window_size, 1.0);
  const Tensor p = stft_power(sine.samples, cfg);
  const double peak = p.at(k0, 60), want = std::pow(cfg.window_size / 4.0, 2);
  double leak = 0.0;
  for (std::size_t k = 0; k < p.dim(0); ++k)
    if (k + 1 < static_cast<std::size_t>(k0) || k > static_cast<std::size_t>(k0) + 1)
      leak = std::max(leak, p.at(k, 60) / peak);
  if (std::abs(peak / want - 1.0) > 1e-9 || std::abs(p.at(k0 - 1, 60) / peak - 0.25) > 1e-9 ||
      std::abs(p.at(k0 + 1, 60) / peak - 0.25) > 1e-9 || leak > 1e-12)
    fail("sine bin alignment");

  std::vector<double> x(64000);
  for (auto& v : x) v = 0.3 * standard_normal(rng);
  const Tensor px = stft_power(x, cfg);
  const std::size_t n = static_cast<std::size_t>(cfg.window_size), hop = static_cast<std::size_t>(cfg.hop_size);
  double parseval = 0.0;
  for (std::size_t t = 1; t < 124; t += 7) {
    double energy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
      const double s = x[t * hop + i - n / 2] * w;
      energy += s * s;
    }
    double spec = px.at(0, t) + px.at(n / 2, t);
    for (std::size_t k = 1; k < n / 2; ++k) spec += 2.0 * px.at(k, t);
    parseval = std::max(parseval, std::abs(spec / (n * energy) - 1.0));
  }
  if (parseval > 1e-10) fail("Parseval");

  const Tensor a = random_tensor({8, 128}, rng), b = random_tensor({8, 128}, rng);
  Tensor mix({8, 128});
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 2.5 * a[i] - 0.75 * b[i];
  const Tensor da = compute_delta(a, cfg.delta_width), db = compute_delta(b, cfg.delta_width),
               dm = compute_delta(mix, cfg.delta_width);
  double lin = 0.0;
  for (std::size_t i = 0; i < dm.size(); ++i) lin = std::max(lin, std::abs(dm[i] - (2.5 * da[i] - 0.75 * db[i])));
  if (lin > 1e-12) fail("delta linearity");

  SpectrogramTensor t{random_tensor({3, 128, 128}, rng), "u", 0};
  SpecAugParams off = cfg.specaug;
  off.enabled = false;
  Rng r1(seed + 1);
  if (!testing::same_values(spec_augment(t, off, r1).data, t.data)) fail("SpecAug identity");

  o.detail += std::to_string(tensors) + " tensors 3x128x128 from 0.1-12.5 s clips, sine peak/want " +
              fmt(peak / want) + ", Parseval err " + fmt(parseval) + ", delta lin err " + fmt(lin) +
              ", SpecAug off identity";
  return o;
}

}  // namespace din::checks
