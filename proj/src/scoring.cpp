#include "din/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include "json.hpp"
#include <sstream>

#include "din/error.hpp"
#include "din/io_util.hpp"

namespace din {

double mahalanobis(std::span<const double> x, const BonafideGaussian& g) {
  const std::size_t d = g.dim();
  if (x.size() != d)
    throw UsageError("mahalanobis: embedding has " + std::to_string(x.size()) +
                     " dims, Gaussian has " + std::to_string(d));
  std::vector<double> r(d);
  for (std::size_t i = 0; i < d; ++i) r[i] = x[i] - g.mean[i];
  double q = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double* row = g.precision.data() + i * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += row[j] * r[j];
    q += r[i] * s;
  }
  return std::sqrt(std::max(q, 0.0));
}

ScoreRecord score_segments(const std::string& utt_id, std::span<const SpectrogramTensor> segments,
                           DinNetwork& net, const BonafideGaussian& g, Aggregation agg) {
  if (segments.empty()) throw DataError("score: utterance " + utt_id + " has no segments");
  ScoreRecord rec;
  rec.utt_id = utt_id;
  rec.n_segments = static_cast<int>(segments.size());
  const std::size_t d = net.config().embedding_dim();
  double sum = 0.0, mx = 0.0;
  for (const auto& seg : segments) {
    const Tensor x = net.forward_backbone(stack_batch({&seg.data}), Mode::kInference);
    const double dist = mahalanobis(std::span<const double>(x.data(), d), g);
    sum += dist;
    mx = std::max(mx, dist);
  }
  rec.distance = agg == Aggregation::kMax ? mx : sum / static_cast<double>(segments.size());
  if (!std::isfinite(rec.distance)) throw NumericalError("score: non-finite distance for " + utt_id);
  return rec;
}

ScoreRecord score_segments_softmax(const std::string& utt_id,
                                   std::span<const SpectrogramTensor> segments, DinNetwork& net,
                                   Aggregation agg) {
  if (segments.empty()) throw DataError("score: utterance " + utt_id + " has no segments");
  if (net.config().entropy_classes != 2)
    throw UsageError("softmax scoring needs a two-class entropy head");
  ScoreRecord rec;
  rec.utt_id = utt_id;
  rec.n_segments = static_cast<int>(segments.size());
  double sum = 0.0, mx = 0.0;
  for (const auto& seg : segments) {
    const Tensor x = net.forward_backbone(stack_batch({&seg.data}), Mode::kInference);
    const Tensor z = net.forward_entropy_head(x, Mode::kInference);
    const double p = 1.0 / (1.0 + std::exp(z.data()[0] - z.data()[1]));
    sum += p;
    mx = std::max(mx, p);
  }
  rec.distance = agg == Aggregation::kMax ? mx : sum / static_cast<double>(segments.size());
  if (!std::isfinite(rec.distance)) throw NumericalError("score: non-finite probability for " + utt_id);
  return rec;
}

ScoreRecord score_utterance(const AudioClip& clip, DinNetwork& net, const BonafideGaussian& g,
                            const FrontendConfig& cfg, Aggregation agg) {
  const auto segs = extract_features(clip, cfg, false);
  return score_segments(clip.utt_id, segs, net, g, agg);
}

namespace {

struct Split {
  std::vector<double> bona, fake;
};

Split split_scores(std::span<const ScoreRecord> records, const char* who) {
  Split s;
  for (const auto& r : records) {
    if (!r.label) throw DataError(std::string(who) + ": record " + r.utt_id + " has no label");
    (*r.label == Label::kBonafide ? s.bona : s.fake).push_back(r.distance);
  }
  if (s.bona.empty() || s.fake.empty())
    throw DataError(std::string(who) + ": need at least one bonafide and one fake record");
  std::sort(s.bona.begin(), s.bona.end());
  std::sort(s.fake.begin(), s.fake.end());
  return s;
}

}  // namespace

EerResult compute_eer(std::span<const ScoreRecord> records) {
  const Split s = split_scores(records, "eer");
  std::vector<double> all(s.bona);
  all.insert(all.end(), s.fake.begin(), s.fake.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::vector<double> thresholds;
  thresholds.push_back(all.front() - 1.0);
  for (std::size_t i = 0; i + 1 < all.size(); ++i)
    thresholds.push_back(all[i] + 0.5 * (all[i + 1] - all[i]));
  thresholds.push_back(all.back() + 1.0);

  const double nb = static_cast<double>(s.bona.size()), nf = static_cast<double>(s.fake.size());
  auto rates = [&](double t) {
    const auto fa = std::upper_bound(s.fake.begin(), s.fake.end(), t) - s.fake.begin();
    const auto br = s.bona.end() - std::upper_bound(s.bona.begin(), s.bona.end(), t);
    return std::pair<double, double>{static_cast<double>(fa) / nf, static_cast<double>(br) / nb};
  };

  auto [far_prev, frr_prev] = rates(thresholds.front());
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    const auto [far, frr] = rates(thresholds[i]);
    const double diff = far - frr;
    if (diff >= 0.0) {
      if (diff == 0.0) return {far, thresholds[i]};
      const double diff_prev = far_prev - frr_prev;
      const double a = -diff_prev / (diff - diff_prev);
      return {far_prev + a * (far - far_prev),
              thresholds[i - 1] + a * (thresholds[i] - thresholds[i - 1])};
    }
    far_prev = far;
    frr_prev = frr;
  }
  return {far_prev, thresholds.back()};  // unreachable: the last threshold has FAR = 1, FRR = 0
}

double compute_auc(std::span<const ScoreRecord> records) {
  const Split s = split_scores(records, "auc");
  // Twice the Mann-Whitney statistic, kept integral so the result is exact.
  std::uint64_t twice_u = 0;
  std::size_t lo = 0, hi = 0;
  for (double b : s.bona) {
    while (lo < s.fake.size() && s.fake[lo] <= b) ++lo;  // fakes <= b
    while (hi < s.fake.size() && s.fake[hi] < b) ++hi;   // fakes < b
    const std::size_t greater = s.fake.size() - lo, ties = lo - hi;
    twice_u += 2 * greater + ties;
  }
  return static_cast<double>(twice_u) /
         (2.0 * static_cast<double>(s.bona.size()) * static_cast<double>(s.fake.size()));
}

Confusion confusion_at(std::span<const ScoreRecord> records, double threshold, Label positive) {
  Confusion c;
  for (const auto& r : records) {
    if (!r.label) throw DataError("accuracy: record " + r.utt_id + " has no label");
    const Label pred = r.distance > threshold ? Label::kFake : Label::kBonafide;
    const bool pos_pred = pred == positive, pos_true = *r.label == positive;
    if (pos_pred && pos_true) ++c.tp;
    else if (pos_pred) ++c.fp;
    else if (pos_true) ++c.fn;
    else ++c.tn;
  }
  return c;
}

AccF1 accuracy_f1(std::span<const ScoreRecord> records, double threshold, Label positive) {
  const Confusion c = confusion_at(records, threshold, positive);
  const double total = static_cast<double>(c.tp + c.fp + c.tn + c.fn);
  AccF1 out;
  if (total > 0) out.accuracy = static_cast<double>(c.tp + c.tn) / total;
  const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
  out.f1 = denom > 0 ? 2.0 * static_cast<double>(c.tp) / denom : 0.0;
  return out;
}

double calibrate_threshold(std::span<const ScoreRecord> dev) { return compute_eer(dev).threshold; }

EvalReport evaluate(std::span<const ScoreRecord> records, std::optional<double> threshold,
                    Label positive) {
  EvalReport r;
  const EerResult e = compute_eer(records);
  r.eer = e.eer;
  r.eer_threshold = e.threshold;
  r.auc = compute_auc(records);
  r.threshold_used = threshold.value_or(e.threshold);
  const AccF1 af = accuracy_f1(records, r.threshold_used, positive);
  r.accuracy = af.accuracy;
  r.f1 = af.f1;
  r.positive = positive;
  for (const auto& rec : records) (*rec.label == Label::kBonafide ? r.n_bonafide : r.n_fake)++;
  return r;
}

std::string report_text(const EvalReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "EER        " << 100.0 * r.eer << " %\n"
     << "EER thr    " << r.eer_threshold << "\n"
     << "AUC        " << 100.0 * r.auc << " %\n"
     << "Accuracy   " << 100.0 * r.accuracy << " %\n"
     << "F1 (" << label_name(r.positive) << ")  " << 100.0 * r.f1 << " %\n"
     << "threshold  " << r.threshold_used << "\n"
     << "bonafide   " << r.n_bonafide << "\n"
     << "fake       " << r.n_fake << "\n";
  return os.str();
}

std::string report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["eer"] = r.eer;
  j["eer_threshold"] = r.eer_threshold;
  j["auc"] = r.auc;
  j["accuracy"] = r.accuracy;
  j["f1"] = r.f1;
  j["threshold_used"] = r.threshold_used;
  j["positive_class"] = label_name(r.positive);
  j["n_bonafide"] = r.n_bonafide;
  j["n_fake"] = r.n_fake;
  return j.dump();
}

std::string label_name(Label l) { return l == Label::kBonafide ? "bonafide" : "fake"; }

Label parse_label(std::string_view s) {
  if (s == "bonafide") return Label::kBonafide;
  if (s == "fake" || s == "spoof") return Label::kFake;
  throw DataError("unknown label '" + std::string(s) + "'");
}

std::string format_scores(std::vector<ScoreRecord> records) {
  std::sort(records.begin(), records.end(),
            [](const ScoreRecord& a, const ScoreRecord& b) { return a.utt_id < b.utt_id; });
  std::string out;
  for (const auto& r : records) {
    out += r.utt_id + '\t' + io::format_double(r.distance) + '\t' + std::to_string(r.n_segments);
    if (r.label) {
      out += '\t' + label_name(*r.label);
      if (r.generator_id) out += '\t' + *r.generator_id;
    }
    out += '\n';
  }
  return out;
}

std::vector<ScoreRecord> parse_scores(std::string_view text) {
  std::vector<ScoreRecord> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto f = io::split_ws(line);
    if (f.empty()) continue;
    const std::string where = "scores line " + std::to_string(line_no);
    if (f.size() < 3 || f.size() > 5) throw DataError(where + ": expected 3 to 5 fields");
    ScoreRecord r;
    r.utt_id = f[0];
    auto [p1, e1] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), r.distance);
    auto [p2, e2] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), r.n_segments);
    if (e1 != std::errc{} || p1 != f[1].data() + f[1].size() || e2 != std::errc{} ||
        p2 != f[2].data() + f[2].size())
      throw DataError(where + ": bad number");
    if (!(r.distance >= 0.0) || !std::isfinite(r.distance) || r.n_segments < 1)
      throw DataError(where + ": distance must be finite and >= 0, n_segments >= 1");
    if (f.size() >= 4) r.label = parse_label(f[3]);
    if (f.size() == 5) r.generator_id = f[4];
    out.push_back(std::move(r));
  }
  return out;
}

void write_scores(const std::filesystem::path& path, std::vector<ScoreRecord> records) {
  io::atomic_write(path, format_scores(std::move(records)));
}

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path) {
  return parse_scores(io::read_file(path));
}

}  // namespace din
