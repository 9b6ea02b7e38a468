#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "din/dataset.hpp"
#include "din/frontend.hpp"
#include "din/network.hpp"
#include "din/scoring.hpp"
#include "din/training.hpp"

namespace din {

inline constexpr int kConfigVersion = 1;

struct ScoringConfig {
  Aggregation aggregation = Aggregation::kMean;
  Label positive_class = Label::kFake;
};

/// Locations used by the CLI; relative paths are resolved against the
/// directory of the config file.
struct PathsConfig {
  std::filesystem::path train_manifest;
  std::filesystem::path dev_manifest;
  std::filesystem::path eval_manifest;
  std::filesystem::path features_dir;
  std::filesystem::path checkpoint_dir;
  std::filesystem::path log_dir;
};

struct RunConfig {
  FrontendConfig frontend;
  DinConfig model;
  TrainConfig train;
  ScoringConfig scoring;
  GroupMap generator_group_map = default_group_map();
  PathsConfig paths;

  void validate() const;
};

/// Strict JSON: every object must carry only known keys and the top level a
/// "version" equal to kConfigVersion. Missing keys keep their defaults.
RunConfig parse_run_config(std::string_view json_text,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

std::string model_config_to_json(const DinConfig& cfg);
DinConfig parse_model_config(std::string_view json_text);

SyntheticDatasetSpec parse_synth_spec(std::string_view json_text);

}  // namespace din
