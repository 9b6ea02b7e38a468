#include "din/config.hpp"

#include <set>

#include "din/error.hpp"
#include "din/io_util.hpp"
#include "json.hpp"

namespace din {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Reads fields out of one JSON object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw UsageError("config: " + where_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      read(*it, out);
    } catch (const json::exception& e) {
      throw UsageError("config: " + path(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key()))
        throw UsageError("config: unknown key '" + path(it.key().c_str()) + "'");
  }

 private:
  void read(const json& v, double& out) { out = v.get<double>(); }
  void read(const json& v, bool& out) { out = v.get<bool>(); }
  void read(const json& v, int& out) { out = v.get<int>(); }
  void read(const json& v, std::uint64_t& out) {
    if (!v.is_number_unsigned()) throw UsageError("config: expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  void read(const json& v, std::string& out) { out = v.get<std::string>(); }
  void read(const json& v, std::filesystem::path& out) { out = v.get<std::string>(); }
  void read(const json& v, std::array<std::size_t, 4>& out) {
    if (!v.is_array() || v.size() != 4) throw UsageError("config: expected an array of 4 integers");
    for (std::size_t i = 0; i < 4; ++i) {
      std::uint64_t x = 0;
      read(v[i], x);
      out[i] = x;
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string(what) + ": invalid JSON: " + e.what());
  }
}

void read_specaug(const json& j, SpecAugParams& p) {
  Reader r(j, "frontend.specaug");
  r.get("enabled", p.enabled);
  r.get("n_freq_masks", p.n_freq_masks);
  r.get("max_freq_mask", p.max_freq_mask);
  r.get("n_time_masks", p.n_time_masks);
  r.get("max_time_mask", p.max_time_mask);
  r.finish();
}

void read_frontend(const json& j, FrontendConfig& f) {
  Reader r(j, "frontend");
  r.get("sample_rate_hz", f.sample_rate_hz);
  r.get("segment_seconds", f.segment_seconds);
  r.get("window_size", f.window_size);
  r.get("hop_size", f.hop_size);
  r.get("n_filters", f.n_filters);
  r.get("target_frames", f.target_frames);
  r.get("log_floor", f.log_floor);
  r.get("delta_width", f.delta_width);
  if (const json* s = r.child("specaug")) read_specaug(*s, f.specaug);
  r.finish();
}

void read_model(const json& j, DinConfig& m) {
  Reader r(j, "model");
  r.get("in_channels", m.in_channels);
  r.get("stem_channels", m.stem_channels);
  r.get("stem_kernel", m.stem_kernel);
  r.get("stem_stride", m.stem_stride);
  r.get("block_channels", m.block_channels);
  r.get("block_strides", m.block_strides);
  r.get("softmax_head_hidden", m.softmax_head_hidden);
  r.get("n_classes_stage1", m.n_classes_stage1);
  r.get("contrastive_dim", m.contrastive_dim);
  r.get("entropy_classes", m.entropy_classes);
  r.get("bn_eps", m.bn_eps);
  r.get("bn_momentum", m.bn_momentum);
  r.finish();
}

void read_train(const json& j, TrainConfig& t) {
  Reader r(j, "train");
  r.get("epochs_stage1", t.epochs_stage1);
  r.get("epochs_stage2", t.epochs_stage2);
  r.get("batch_size", t.batch_size);
  r.get("lr_stage1", t.lr_stage1);
  r.get("lr_stage2_head", t.lr_stage2_head);
  r.get("lr_stage2_backbone", t.lr_stage2_backbone);
  if (const json* a = r.child("adam")) {
    Reader ra(*a, "train.adam");
    ra.get("beta1", t.adam.beta1);
    ra.get("beta2", t.adam.beta2);
    ra.get("eps", t.adam.eps);
    ra.finish();
  }
  if (const json* w = r.child("weights")) {
    Reader rw(*w, "train.weights");
    rw.get("alpha", t.weights.alpha);
    rw.get("beta", t.weights.beta);
    rw.get("gamma", t.weights.gamma);
    rw.finish();
  }
  if (const json* a = r.child("angular")) {
    Reader ra(*a, "train.angular");
    ra.get("m", t.angular.m);
    ra.get("s", t.angular.s);
    ra.finish();
  }
  if (const json* c = r.child("contrastive")) {
    Reader rc(*c, "train.contrastive");
    rc.get("tau", t.contrastive.tau);
    rc.get("include_bonafide", t.contrastive.include_bonafide);
    rc.finish();
  }
  r.get("center_refresh_interval", t.center_refresh_interval);
  std::string mode = t.center_mode == CenterMode::kHybrid ? "hybrid" : "global_only";
  r.get("center_mode", mode);
  if (mode == "hybrid") t.center_mode = CenterMode::kHybrid;
  else if (mode == "global_only") t.center_mode = CenterMode::kGlobalOnly;
  else throw UsageError("config: train.center_mode must be hybrid or global_only");
  r.get("seed", t.seed);
  r.get("min_bonafide_per_batch", t.min_bonafide_per_batch);
  r.get("checkpoint_interval", t.checkpoint_interval);
  r.get("inference_batch", t.inference_batch);
  r.get("shrinkage_factor", t.shrinkage_factor);
  r.get("log_wall_time", t.log_wall_time);
  r.finish();
}

void read_scoring(const json& j, ScoringConfig& s) {
  Reader r(j, "scoring");
  std::string agg = s.aggregation == Aggregation::kMean ? "mean" : "max";
  r.get("aggregation", agg);
  if (agg == "mean") s.aggregation = Aggregation::kMean;
  else if (agg == "max") s.aggregation = Aggregation::kMax;
  else throw UsageError("config: scoring.aggregation must be mean or max");
  std::string pos = label_name(s.positive_class);
  r.get("positive_class", pos);
  if (pos != "fake" && pos != "bonafide")
    throw UsageError("config: scoring.positive_class must be fake or bonafide");
  s.positive_class = parse_label(pos);
  r.finish();
}

void read_paths(const json& j, PathsConfig& p, const std::filesystem::path& base) {
  Reader r(j, "paths");
  r.get("train_manifest", p.train_manifest);
  r.get("dev_manifest", p.dev_manifest);
  r.get("eval_manifest", p.eval_manifest);
  r.get("features_dir", p.features_dir);
  r.get("checkpoint_dir", p.checkpoint_dir);
  r.get("log_dir", p.log_dir);
  r.finish();
  for (auto* f : {&p.train_manifest, &p.dev_manifest, &p.eval_manifest, &p.features_dir,
                  &p.checkpoint_dir, &p.log_dir})
    if (!f->empty() && f->is_relative() && !base.empty()) *f = base / *f;
}

ordered_json model_json(const DinConfig& m) {
  ordered_json j;
  j["in_channels"] = m.in_channels;
  j["stem_channels"] = m.stem_channels;
  j["stem_kernel"] = m.stem_kernel;
  j["stem_stride"] = m.stem_stride;
  j["block_channels"] = m.block_channels;
  j["block_strides"] = m.block_strides;
  j["softmax_head_hidden"] = m.softmax_head_hidden;
  j["n_classes_stage1"] = m.n_classes_stage1;
  j["contrastive_dim"] = m.contrastive_dim;
  j["entropy_classes"] = m.entropy_classes;
  j["bn_eps"] = m.bn_eps;
  j["bn_momentum"] = m.bn_momentum;
  return j;
}

}  // namespace

void RunConfig::validate() const {
  frontend.validate();
  model.validate();
  train.validate();
  if (model.n_classes_stage1 < 1 + generator_group_map.size())
    throw UsageError("config: model.n_classes_stage1 (" + std::to_string(model.n_classes_stage1) +
                     ") must be at least 1 + number of mapped generators (" +
                     std::to_string(generator_group_map.size()) + ")");
  for (const auto& [gen, g] : generator_group_map)
    if (g != Group::kTts && g != Group::kVc)
      throw UsageError("config: generator " + gen + " must map to TTS or VC");
}

RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  const json j = parse_json(json_text, "config");
  Reader r(j, "");
  int version = -1;
  r.get("version", version);
  if (version != kConfigVersion)
    throw UsageError("config: version must be " + std::to_string(kConfigVersion));
  RunConfig cfg;
  if (const json* f = r.child("frontend")) read_frontend(*f, cfg.frontend);
  if (const json* m = r.child("model")) read_model(*m, cfg.model);
  if (const json* t = r.child("train")) read_train(*t, cfg.train);
  if (const json* s = r.child("scoring")) read_scoring(*s, cfg.scoring);
  if (const json* g = r.child("generator_group_map")) {
    if (!g->is_object()) throw UsageError("config: generator_group_map must be an object");
    cfg.generator_group_map.clear();
    for (auto it = g->begin(); it != g->end(); ++it) {
      if (!it->is_string()) throw UsageError("config: group of " + it.key() + " must be a string");
      const std::string name = it->get<std::string>();
      if (name != "TTS" && name != "VC")
        throw UsageError("config: group of " + it.key() + " must be TTS or VC");
      cfg.generator_group_map[it.key()] = parse_group(name);
    }
  }
  if (const json* p = r.child("paths")) read_paths(*p, cfg.paths, base_dir);
  r.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(io::read_file(path), path.parent_path());
}

std::string run_config_to_json(const RunConfig& c) {
  ordered_json j;
  j["version"] = kConfigVersion;
  const auto& f = c.frontend;
  j["frontend"] = {{"sample_rate_hz", f.sample_rate_hz},
                   {"segment_seconds", f.segment_seconds},
                   {"window_size", f.window_size},
                   {"hop_size", f.hop_size},
                   {"n_filters", f.n_filters},
                   {"target_frames", f.target_frames},
                   {"log_floor", f.log_floor},
                   {"delta_width", f.delta_width},
                   {"specaug",
                    {{"enabled", f.specaug.enabled},
                     {"n_freq_masks", f.specaug.n_freq_masks},
                     {"max_freq_mask", f.specaug.max_freq_mask},
                     {"n_time_masks", f.specaug.n_time_masks},
                     {"max_time_mask", f.specaug.max_time_mask}}}};
  j["model"] = model_json(c.model);
  const auto& t = c.train;
  j["train"] = {{"epochs_stage1", t.epochs_stage1},
                {"epochs_stage2", t.epochs_stage2},
                {"batch_size", t.batch_size},
                {"lr_stage1", t.lr_stage1},
                {"lr_stage2_head", t.lr_stage2_head},
                {"lr_stage2_backbone", t.lr_stage2_backbone},
                {"adam", {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps}}},
                {"weights",
                 {{"alpha", t.weights.alpha}, {"beta", t.weights.beta}, {"gamma", t.weights.gamma}}},
                {"angular", {{"m", t.angular.m}, {"s", t.angular.s}}},
                {"contrastive",
                 {{"tau", t.contrastive.tau}, {"include_bonafide", t.contrastive.include_bonafide}}},
                {"center_refresh_interval", t.center_refresh_interval},
                {"center_mode", t.center_mode == CenterMode::kHybrid ? "hybrid" : "global_only"},
                {"seed", t.seed},
                {"min_bonafide_per_batch", t.min_bonafide_per_batch},
                {"checkpoint_interval", t.checkpoint_interval},
                {"inference_batch", t.inference_batch},
                {"shrinkage_factor", t.shrinkage_factor},
                {"log_wall_time", t.log_wall_time}};
  j["scoring"] = {{"aggregation", c.scoring.aggregation == Aggregation::kMean ? "mean" : "max"},
                  {"positive_class", label_name(c.scoring.positive_class)}};
  ordered_json gm = ordered_json::object();
  for (const auto& [gen, g] : c.generator_group_map) gm[gen] = group_name(g);
  j["generator_group_map"] = gm;
  const auto& p = c.paths;
  j["paths"] = {{"train_manifest", p.train_manifest.generic_string()},
                {"dev_manifest", p.dev_manifest.generic_string()},
                {"eval_manifest", p.eval_manifest.generic_string()},
                {"features_dir", p.features_dir.generic_string()},
                {"checkpoint_dir", p.checkpoint_dir.generic_string()},
                {"log_dir", p.log_dir.generic_string()}};
  return j.dump(2) + "\n";
}

std::string model_config_to_json(const DinConfig& cfg) { return model_json(cfg).dump(); }

DinConfig parse_model_config(std::string_view json_text) {
  DinConfig m;
  read_model(parse_json(json_text, "model config"), m);
  m.validate();
  return m;
}

SyntheticDatasetSpec parse_synth_spec(std::string_view json_text) {
  const json j = parse_json(json_text, "synth spec");
  Reader r(j, "");
  int version = kConfigVersion;
  r.get("version", version);
  if (version != kConfigVersion)
    throw UsageError("synth spec: version must be " + std::to_string(kConfigVersion));
  SyntheticDatasetSpec s;
  r.get("n_per_class", s.n_per_class);
  r.get("duration_s", s.duration_s);
  r.get("seed", s.seed);
  r.get("sample_rate_hz", s.sample_rate_hz);
  r.finish();
  s.validate();
  return s;
}

}  // namespace din
