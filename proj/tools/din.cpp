#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "din/audio.hpp"
#include "din/checkpoint.hpp"
#include "din/config.hpp"
#include "din/dataset.hpp"
#include "din/error.hpp"
#include "din/feature_cache.hpp"
#include "din/io_util.hpp"
#include "din/scoring.hpp"
#include "din/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace din;

namespace {

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

/// Segments of one utterance: the feature cache when present, otherwise the
/// front end on the WAV file, rounded to the cache precision so both routes
/// agree.
std::vector<SpectrogramTensor> load_segments(const ManifestEntry& e, const RunConfig& cfg) {
  if (!cfg.paths.features_dir.empty()) {
    const fs::path cache = feature_cache_path(cfg.paths.features_dir, e.utt_id);
    if (fs::exists(cache)) {
      auto segs = read_feature_cache(cache, e.utt_id);
      const auto& s = segs.front().data;
      if (s.dim(1) != static_cast<std::size_t>(cfg.frontend.n_filters) ||
          s.dim(2) != static_cast<std::size_t>(cfg.frontend.target_frames))
        throw DataError("feature cache " + cache.string() + " does not match the frontend config");
      return segs;
    }
  }
  auto segs = extract_features(read_wav(e.wav_path, e.utt_id), cfg.frontend, false);
  for (auto& s : segs)
    for (auto& v : s.data.values()) v = static_cast<double>(static_cast<float>(v));
  return segs;
}

std::vector<TrainSample> load_training_set(const std::vector<ManifestEntry>& entries,
                                           const RunConfig& cfg) {
  std::vector<TrainSample> out;
  for (const auto& e : entries) {
    const int cls = stage1_class(e, cfg.generator_group_map);
    const Group group = e.key == Key::kBonafide
                            ? Group::kBonafide
                            : cfg.generator_group_map.at(e.generator_id);
    for (auto& seg : load_segments(e, cfg))
      out.push_back({std::move(seg.data), e.utt_id, seg.segment_index, cls, group});
  }
  return out;
}

std::map<std::string, Tensor> train_state(int stage, int epochs_done, const CenterState* center) {
  std::map<std::string, Tensor> extras;
  extras["state.stage"] = Tensor({1}, stage);
  extras["state.epoch"] = Tensor({1}, epochs_done);
  if (center) {
    Tensor c({center->c.size()});
    std::copy(center->c.begin(), center->c.end(), c.data());
    extras["state.center"] = c;
  }
  return extras;
}

class LogFile {
 public:
  LogFile(const fs::path& path, bool append) {
    if (path.empty()) return;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw DataError("cannot open log file " + path.string());
  }
  void write(const TrainLogRecord& r) {
    if (out_.is_open()) out_ << format_log_record(r) << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

TrainHooks make_hooks(const RunConfig& cfg, LogFile& log) {
  TrainHooks hooks;
  hooks.log = [&log](const TrainLogRecord& r) { log.write(r); };
  const fs::path dir = cfg.paths.checkpoint_dir;
  const int total1 = cfg.train.epochs_stage1, total2 = cfg.train.epochs_stage2;
  hooks.checkpoint = [dir, total1, total2](int stage, int done, const DinNetwork& net,
                                           const CenterState* center, bool diagnostic) {
    if (dir.empty()) return;
    const auto extras = train_state(stage, done, center);
    const std::string base = "stage" + std::to_string(stage);
    if (diagnostic) {
      save_checkpoint(dir / (base + "_diagnostic.dinc"), net, extras);
      return;
    }
    char name[64];
    std::snprintf(name, sizeof name, "%s_epoch%03d.dinc", base.c_str(), done);
    save_checkpoint(dir / name, net, extras);
    if (done == (stage == 1 ? total1 : total2)) save_checkpoint(dir / (base + ".dinc"), net, extras);
  };
  return hooks;
}

int state_int(const LoadedCheckpoint& ck, const std::string& key, int fallback) {
  const auto it = ck.extras.find(key);
  return it == ck.extras.end() ? fallback : static_cast<int>(it->second[0]);
}

void cmd_train(const std::string& config_path, const std::string& stage,
               const std::string& resume) {
  const RunConfig cfg = load_run_config(config_path);
  if (cfg.paths.train_manifest.empty()) throw UsageError("train: paths.train_manifest is not set");
  const auto data = load_training_set(read_manifest(cfg.paths.train_manifest), cfg);

  std::unique_ptr<DinNetwork> net;
  CenterState center;
  int start1 = 0, start2 = 0;
  bool run1 = stage == "1" || stage == "all", run2 = stage == "2" || stage == "all";
  fs::path from = resume;
  if (from.empty() && stage == "2") from = cfg.paths.checkpoint_dir / "stage1.dinc";
  if (!from.empty()) {
    LoadedCheckpoint ck = load_checkpoint(from);
    const int done = state_int(ck, "state.epoch", 0);
    if (ck.net->heads() == HeadSet::kStage1) {
      start1 = done;
      if (auto it = ck.extras.find("state.center"); it != ck.extras.end())
      {
        center.c.assign(it->second.values().begin(), it->second.values().end());
        center.initialized = true;
      }
    } else {
      if (stage == "1") throw UsageError("train: cannot resume stage 1 from a stage-2 checkpoint");
      run1 = false;
      start2 = done;
    }
    net = std::move(ck.net);
  } else {
    cfg.model.validate();
    net = std::make_unique<DinNetwork>(cfg.model, HeadSet::kStage1, cfg.train.seed);
  }
  if (run1) {
    LogFile log(cfg.paths.log_dir.empty() ? fs::path{} : cfg.paths.log_dir / "train_stage1.tsv",
                start1 > 0);
    center = train_stage1(*net, data, cfg.train, cfg.frontend.specaug, center, start1,
                          make_hooks(cfg, log));
    if (cfg.train.epochs_stage1 == start1 && !cfg.paths.checkpoint_dir.empty())
      save_checkpoint(cfg.paths.checkpoint_dir / "stage1.dinc", *net,
                      train_state(1, start1, &center));
  }
  if (run2) {
    LogFile log(cfg.paths.log_dir.empty() ? fs::path{} : cfg.paths.log_dir / "train_stage2.tsv",
                start2 > 0);
    train_stage2(*net, data, cfg.train, cfg.frontend.specaug, start2, make_hooks(cfg, log));
    if (cfg.train.epochs_stage2 == 0 && !cfg.paths.checkpoint_dir.empty())
      save_checkpoint(cfg.paths.checkpoint_dir / "stage2.dinc", *net, train_state(2, 0, nullptr));
  }
}

void cmd_extract(const std::string& config_path, const std::string& manifest,
                 const std::string& out_dir) {
  const RunConfig cfg = config_or_default(config_path);
  std::size_t n = 0;
  for (const auto& e : read_manifest(manifest)) {
    const auto segs = extract_features(read_wav(e.wav_path, e.utt_id), cfg.frontend, false);
    write_feature_cache(feature_cache_path(out_dir, e.utt_id), segs);
    ++n;
  }
  std::cout << "extracted " << n << " utterances\n";
}

void cmd_fit(const std::string& config_path, const std::string& ckpt, const std::string& manifest,
             const std::string& out, std::optional<double> eps) {
  const RunConfig cfg = load_run_config(config_path);
  LoadedCheckpoint ck = load_checkpoint(ckpt);
  std::vector<ManifestEntry> bona;
  for (const auto& e : read_manifest(manifest))
    if (e.key == Key::kBonafide) bona.push_back(e);
  std::vector<TrainSample> samples;
  for (const auto& e : bona)
    for (auto& seg : load_segments(e, cfg))
      samples.push_back({std::move(seg.data), e.utt_id, seg.segment_index, 0, Group::kBonafide});
  std::vector<const TrainSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  const BonafideGaussian g = fit_bonafide_gaussian(*ck.net, ptrs, cfg.train, eps);
  save_gaussian(out, g);
  std::cout << "fitted D=" << g.dim() << " on " << g.n_samples << " segments, epsilon "
            << io::format_double(g.epsilon) << "\n";
}

void cmd_score(const std::string& config_path, const std::string& ckpt, const std::string& stats,
               const std::string& manifest, const std::string& out, const std::string& method) {
  const RunConfig cfg = load_run_config(config_path);
  LoadedCheckpoint ck = load_checkpoint(ckpt);
  const bool softmax = method == "softmax";
  if (!softmax && stats.empty()) throw UsageError("score: --stats is required for mahalanobis");
  const BonafideGaussian g = softmax ? BonafideGaussian{} : load_gaussian(stats);
  std::vector<ScoreRecord> records;
  for (const auto& e : read_manifest(manifest)) {
    const auto segs = load_segments(e, cfg);
    ScoreRecord r = softmax
                        ? score_segments_softmax(e.utt_id, segs, *ck.net, cfg.scoring.aggregation)
                        : score_segments(e.utt_id, segs, *ck.net, g, cfg.scoring.aggregation);
    r.label = e.key == Key::kBonafide ? Label::kBonafide : Label::kFake;
    r.generator_id = e.generator_id;
    records.push_back(std::move(r));
  }
  write_scores(out, records);
  std::cout << "scored " << records.size() << " utterances\n";
}

void cmd_evaluate(const std::string& scores, std::optional<double> threshold,
                  const std::string& calibrate, const std::string& positive,
                  const std::string& json_out) {
  const auto records = read_scores(scores);
  if (!calibrate.empty()) threshold = calibrate_threshold(read_scores(calibrate));
  const EvalReport r = evaluate(records, threshold, parse_label(positive));
  std::cout << report_text(r) << report_json(r) << "\n";
  if (!json_out.empty()) io::atomic_write(json_out, report_json(r) + "\n");
}

void cmd_export(const std::string& config_path, const std::string& ckpt,
                const std::string& manifest, const std::string& out) {
  const RunConfig cfg = config_or_default(config_path);
  LoadedCheckpoint ck = load_checkpoint(ckpt);
  const std::size_t d = ck.net->config().embedding_dim();
  std::string text;
  for (const auto& e : read_manifest(manifest)) {
    const auto segs = load_segments(e, cfg);
    std::vector<double> mean(d, 0.0);
    for (const auto& s : segs) {
      const Tensor x = ck.net->forward_backbone(stack_batch({&s.data}), Mode::kInference);
      for (std::size_t j = 0; j < d; ++j) mean[j] += x[j] / static_cast<double>(segs.size());
    }
    text += e.utt_id;
    for (double v : mean) text += '\t' + io::format_double(v);
    text += '\n';
  }
  io::atomic_write(out, text);
}

void cmd_count(const std::string& config_path, bool as_json) {
  const RunConfig cfg = config_or_default(config_path);
  const auto h = static_cast<std::size_t>(cfg.frontend.n_filters);
  const auto w = static_cast<std::size_t>(cfg.frontend.target_frames);
  const ComplexityReport r = count_complexity(cfg.model, h, w);
  if (as_json) {
    nlohmann::ordered_json j;
    j["input"] = {cfg.model.in_channels, h, w};
    j["params"] = r.inference_params();
    j["flops"] = r.inference_flops();
    j["backbone_params"] = r.backbone_params;
    j["backbone_flops"] = r.backbone_flops;
    j["entropy_head_params"] = r.entropy_head_params;
    j["stage1_params"] = r.stage1_params();
    std::cout << j.dump() << "\n";
    return;
  }
  std::printf("input              %zux%zux%zu\n", cfg.model.in_channels, h, w);
  std::printf("params             %llu (%.3f M)\n", (unsigned long long)r.inference_params(),
              r.inference_params() / 1e6);
  std::printf("flops              %llu (%.1f M)\n", (unsigned long long)r.inference_flops(),
              r.inference_flops() / 1e6);
  std::printf("backbone params    %llu\n", (unsigned long long)r.backbone_params);
  std::printf("stage-1 params     %llu\n", (unsigned long long)r.stage1_params());
}

void cmd_synth(const std::string& spec_path, const std::string& out) {
  const SyntheticDatasetSpec spec = parse_synth_spec(io::read_file(spec_path));
  const SyntheticSplits s = generate_synthetic_dataset(spec, out);
  std::cout << "wrote " << 3 * spec.n_per_class << " utterances: train " << s.train.size()
            << ", dev " << s.dev.size() << ", eval " << s.eval.size() << "\n";
}

void cmd_protocol(const std::string& protocol, const std::string& audio_dir,
                  const std::string& config_path, bool allow_unmapped, const std::string& out) {
  const RunConfig cfg = config_or_default(config_path);
  write_manifest(out, parse_cm_protocol(io::read_file(protocol), cfg.generator_group_map,
                                        audio_dir, allow_unmapped));
}

const char* code_name(ExitCode c) {
  switch (c) {
    case ExitCode::kUsage: return "usage";
    case ExitCode::kData: return "data";
    case ExitCode::kNumerical: return "numerical";
    default: return "ok";
  }
}

int fail(ExitCode code, std::string msg) {
  for (char& ch : msg)
    if (ch == '\n') ch = ' ';
  std::cerr << "din: error[" << code_name(code) << "]: " << msg << "\n";
  return static_cast<int>(code);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depthwise-Inception deepfake speech detector"};
  app.require_subcommand(1);

  std::string config, manifest, out, checkpoint, stats, scores, calibrate, resume, spec, protocol,
      audio_dir, json_out;
  std::string stage = "all", positive = "fake", method = "mahalanobis";
  std::optional<double> threshold, epsilon;
  bool as_json = false, allow_unmapped = false;

  auto* extract = app.add_subcommand("extract", "Compute feature caches for a manifest");
  extract->add_option("--config", config)->check(CLI::ExistingFile);
  extract->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  extract->add_option("--out", out)->required();

  auto* train = app.add_subcommand("train", "Train stage 1, stage 2 or both");
  train->add_option("--config", config)->required()->check(CLI::ExistingFile);
  train->add_option("--stage", stage)->check(CLI::IsMember({"1", "2", "all"}));
  train->add_option("--resume", resume)->check(CLI::ExistingFile);

  auto* fit = app.add_subcommand("fit-gaussian", "Fit the bonafide Gaussian");
  fit->add_option("--config", config)->required()->check(CLI::ExistingFile);
  fit->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  fit->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  fit->add_option("--out", out)->required();
  fit->add_option("--epsilon", epsilon, "Covariance shrinkage (default 1e-3 trace/D)");

  auto* score = app.add_subcommand("score", "Mahalanobis scores for a manifest");
  score->add_option("--config", config)->required()->check(CLI::ExistingFile);
  score->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  score->add_option("--stats", stats)->check(CLI::ExistingFile);
  score->add_option("--method", method, "mahalanobis (default) or softmax P(fake)")
      ->check(CLI::IsMember({"mahalanobis", "softmax"}));
  score->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  score->add_option("--out", out)->required();

  auto* eval = app.add_subcommand("evaluate", "EER, AUC, accuracy and F1 of a scores file");
  eval->add_option("--scores", scores)->required()->check(CLI::ExistingFile);
  auto* thr = eval->add_option("--threshold", threshold);
  eval->add_option("--calibrate", calibrate, "Dev scores used to pick the threshold")
      ->check(CLI::ExistingFile)
      ->excludes(thr);
  eval->add_option("--positive", positive)->check(CLI::IsMember({"fake", "bonafide"}));
  eval->add_option("--json", json_out, "Also write the JSON report here");

  auto* exp = app.add_subcommand("export-embeddings", "Mean backbone embedding per utterance");
  exp->add_option("--config", config)->check(CLI::ExistingFile);
  exp->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  exp->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  exp->add_option("--out", out)->required();

  auto* count = app.add_subcommand("count", "Parameter and FLOP report");
  count->add_option("--config", config)->check(CLI::ExistingFile);
  count->add_flag("--json", as_json);

  auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset");
  synth->add_option("--spec", spec)->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out)->required();

  auto* proto = app.add_subcommand("protocol-to-manifest", "Convert an ASVspoof CM protocol");
  proto->add_option("--protocol", protocol)->required()->check(CLI::ExistingFile);
  proto->add_option("--audio-dir", audio_dir)->required();
  proto->add_option("--config", config)->check(CLI::ExistingFile);
  proto->add_flag("--allow-unmapped", allow_unmapped);
  proto->add_option("--out", out)->required();

  auto* init = app.add_subcommand("init-config", "Print the default config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(ExitCode::kUsage, e.what());
  }

  try {
    if (*extract) cmd_extract(config, manifest, out);
    else if (*train) cmd_train(config, stage, resume);
    else if (*fit) cmd_fit(config, checkpoint, manifest, out, epsilon);
    else if (*score) cmd_score(config, checkpoint, stats, manifest, out, method);
    else if (*eval) cmd_evaluate(scores, threshold, calibrate, positive, json_out);
    else if (*exp) cmd_export(config, checkpoint, manifest, out);
    else if (*count) cmd_count(config, as_json);
    else if (*synth) cmd_synth(spec, out);
    else if (*proto) cmd_protocol(protocol, audio_dir, config, allow_unmapped, out);
    else if (*init) std::cout << run_config_to_json(RunConfig{});
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(ExitCode::kData, e.what());
  } catch (const std::exception& e) {
    return fail(ExitCode::kData, e.what());
  }
  return 0;
}
