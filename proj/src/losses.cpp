#include "din/losses.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>

#include "din/error.hpp"

namespace din {

void AngularMarginParams::validate() const {
  if (m < 1) throw UsageError("a-softmax: margin m must be an integer >= 1");
  if (!(s > 0.0)) throw UsageError("a-softmax: scale s must be > 0");
}

void ContrastiveParams::validate() const {
  if (!(tau > 0.0)) throw UsageError("contrastive: tau must be > 0");
}

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) throw UsageError("loss weights must be >= 0");
}

namespace {

std::atomic<std::uint64_t> g_phi_clamps{0};

double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Chebyshev polynomial of the second kind U_n(x).
double chebyshev_u(int n, double x) {
  if (n == 0) return 1.0;
  double prev = 1.0, cur = 2.0 * x;
  for (int k = 2; k <= n; ++k) {
    const double next = 2.0 * x * cur - prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

int margin_segment(double theta, int m) {
  const int k = static_cast<int>(std::floor(theta * m / std::numbers::pi));
  return std::clamp(k, 0, m - 1);
}

// Row norms; throws on a zero row.
std::vector<double> row_norms(const Tensor& x, const char* who) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += x.at(i, j) * x.at(i, j);
    norms[i] = std::sqrt(ss);
    if (!(norms[i] > 0.0)) throw NumericalError(std::string(who) + ": degenerate embedding (zero-norm row)");
  }
  return norms;
}

// Gradient w.r.t. unnormalized row y given gradient g w.r.t. yhat = y/|y|.
void backprop_normalize(const double* yhat, double norm, const double* g, double* out, std::size_t d) {
  double proj = 0.0;
  for (std::size_t j = 0; j < d; ++j) proj += yhat[j] * g[j];
  for (std::size_t j = 0; j < d; ++j) out[j] = (g[j] - yhat[j] * proj) / norm;
}

}  // namespace

double phi(double theta, int m) {
  if (m < 1) throw UsageError("phi: m must be >= 1");
  if (theta < 0.0 || theta > std::numbers::pi || std::isnan(theta)) {
    g_phi_clamps.fetch_add(1, std::memory_order_relaxed);
    theta = std::isnan(theta) ? 0.0 : std::clamp(theta, 0.0, std::numbers::pi);
  }
  const int k = margin_segment(theta, m);
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return sign * std::cos(m * theta) - 2.0 * k;
}

std::uint64_t phi_clamp_count() { return g_phi_clamps.load(std::memory_order_relaxed); }

AngularLossResult a_softmax_loss(const Tensor& y, std::span<const int> labels, const Tensor& w,
                                 const AngularMarginParams& p) {
  p.validate();
  if (y.rank() != 2 || w.rank() != 2 || y.dim(1) != w.dim(0))
    throw UsageError("a-softmax: Y is N x d and W must be d x classes");
  const std::size_t n = y.dim(0), d = y.dim(1), classes = w.dim(1);
  if (labels.size() != n) throw UsageError("a-softmax: label count mismatch");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= classes)
      throw UsageError("a-softmax: label " + std::to_string(l) + " out of range");

  const auto norms = row_norms(y, "a-softmax");
  AngularLossResult r;
  r.grad_y = Tensor({n, d});
  r.grad_w = Tensor({d, classes});
  if (n == 0) return r;

  std::vector<double> yhat(d), cosv(classes), logits(classes), dcos(classes), gyhat(d);
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) yhat[j] = y.at(i, j) / norms[i];
    std::vector<bool> clamped(classes, false);
    for (std::size_t c = 0; c < classes; ++c) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += yhat[j] * w.at(j, c);
      if (dot > 1.0 || dot < -1.0) clamped[c] = true;
      cosv[c] = std::clamp(dot, -1.0, 1.0);
    }
    const auto target = static_cast<std::size_t>(labels[i]);
    const double theta = std::acos(cosv[target]);
    const int k = margin_segment(theta, p.m);
    for (std::size_t c = 0; c < classes; ++c)
      logits[c] = p.s * (c == target ? phi(theta, p.m) : cosv[c]);
    const double lse = log_sum_exp(logits);
    total += lse - logits[target];

    for (std::size_t c = 0; c < classes; ++c) {
      const double prob = std::exp(logits[c] - lse);
      double dl = (c == target ? prob - 1.0 : prob) * inv_n;
      if (c == target) {
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        dl *= sign * p.m * chebyshev_u(p.m - 1, cosv[c]);
      }
      dcos[c] = clamped[c] ? 0.0 : p.s * dl;
    }
    std::fill(gyhat.begin(), gyhat.end(), 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      if (dcos[c] == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        gyhat[j] += dcos[c] * w.at(j, c);
        r.grad_w.at(j, c) += dcos[c] * yhat[j];
      }
    }
    backprop_normalize(yhat.data(), norms[i], gyhat.data(), r.grad_y.data() + i * d, d);
  }
  r.value = total * inv_n;
  return r;
}

ContrastiveResult contrastive_loss(const Tensor& z, std::span<const Group> groups,
                                   const ContrastiveParams& p) {
  p.validate();
  if (z.rank() != 2) throw UsageError("contrastive: Z must be N x d");
  const std::size_t n = z.dim(0), d = z.dim(1);
  if (groups.size() != n) throw UsageError("contrastive: group count mismatch");

  ContrastiveResult r;
  r.grad_z = Tensor({n, d});
  auto active = [&](std::size_t i) { return p.include_bonafide || groups[i] != Group::kBonafide; };

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i)
    if (active(i)) rows.push_back(i);
  if (rows.empty()) return r;

  Tensor zsub({rows.size(), d});
  for (std::size_t a = 0; a < rows.size(); ++a)
    std::copy_n(z.data() + rows[a] * d, d, zsub.data() + a * d);
  const auto norms = row_norms(zsub, "contrastive");
  Tensor zhat({rows.size(), d});
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t j = 0; j < d; ++j) zhat.at(a, j) = zsub.at(a, j) / norms[a];

  const std::size_t m = rows.size();
  Tensor sim({m, m});
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += zhat.at(a, j) * zhat.at(b, j);
      sim.at(a, b) = s / p.tau;
    }

  bool any_negative = false;
  std::size_t anchors = 0;
  // dsim accumulates d(loss sum)/d(sim) before the anchor-count average.
  Tensor dsim({m, m});
  double total = 0.0;
  std::vector<std::size_t> pos, neg;
  std::vector<double> terms;
  for (std::size_t a = 0; a < m; ++a) {
    pos.clear();
    neg.clear();
    for (std::size_t b = 0; b < m; ++b) {
      if (b == a) continue;
      (groups[rows[b]] == groups[rows[a]] ? pos : neg).push_back(b);
    }
    if (!neg.empty()) any_negative = true;
    if (pos.empty()) {
      ++r.skipped_anchors;
      continue;
    }
    ++anchors;
    const double inv_p = 1.0 / static_cast<double>(pos.size());
    for (auto c : pos) {
      terms.assign(1, sim.at(a, c));
      for (auto j : neg) terms.push_back(sim.at(a, j));
      const double lse = log_sum_exp(terms);
      total += inv_p * (lse - sim.at(a, c));
      // d/d s_ac = inv_p (p_c - 1); d/d s_aj = inv_p p_j
      dsim.at(a, c) += inv_p * (std::exp(sim.at(a, c) - lse) - 1.0);
      for (auto j : neg) dsim.at(a, j) += inv_p * std::exp(sim.at(a, j) - lse);
    }
  }
  r.no_negatives = !any_negative;
  if (anchors == 0) return r;

  const double inv_a = 1.0 / static_cast<double>(anchors);
  r.value = total * inv_a;
  Tensor gzhat({m, d});
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      const double g = dsim.at(a, b) * inv_a / p.tau;
      if (g == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        gzhat.at(a, j) += g * zhat.at(b, j);
        gzhat.at(b, j) += g * zhat.at(a, j);
      }
    }
  for (std::size_t a = 0; a < m; ++a)
    backprop_normalize(zhat.data() + a * d, norms[a], gzhat.data() + a * d,
                       r.grad_z.data() + rows[a] * d, d);
  return r;
}

LossResult center_loss(const Tensor& x, std::span<const std::uint8_t> bonafide_mask,
                       std::span<const double> center) {
  if (x.rank() != 2 || x.dim(1) != center.size())
    throw UsageError("center loss: X must be N x D with D = center length");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (bonafide_mask.size() != n) throw UsageError("center loss: mask length mismatch");
  LossResult r;
  r.grad = Tensor({n, d});
  std::size_t k = 0;
  for (auto b : bonafide_mask) k += b ? 1 : 0;
  if (k == 0) return r;
  const double inv_k = 1.0 / static_cast<double>(k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!bonafide_mask[i]) continue;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x.at(i, j) - center[j];
      total += diff * diff;
      r.grad.at(i, j) = 2.0 * inv_k * diff;
    }
  }
  r.value = total * inv_k;
  return r;
}

double combined_loss(double l1, double l2, double l3, const LossWeights& w) {
  return w.alpha * l1 + w.beta * l2 + w.gamma * l3;
}

LossResult cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw UsageError("cross entropy: logits must be N x classes");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw UsageError("cross entropy: label count mismatch");
  LossResult r;
  r.grad = Tensor({n, k});
  if (n == 0) return r;
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k)
      throw UsageError("cross entropy: label out of range");
    const std::span<const double> row(logits.data() + i * k, k);
    const double lse = log_sum_exp(row);
    total += lse - row[static_cast<std::size_t>(label)];
    for (std::size_t c = 0; c < k; ++c)
      r.grad.at(i, c) = (std::exp(row[c] - lse) - (static_cast<int>(c) == label ? 1.0 : 0.0)) * inv_n;
  }
  r.value = total * inv_n;
  return r;
}

}  // namespace din
