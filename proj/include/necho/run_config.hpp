#pragma once

// Flat key-value run configuration shared by every subcommand. Keys are
// dotted ("train.max_epochs", "loss.lambda_tr2d", "spec"); values are JSON
// scalars or arrays. Resolution order: defaults, then the config file, then
// `--set` overrides.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "necho/distillation.hpp"
#include "necho/ehr_data.hpp"
#include "necho/model.hpp"
#include "necho/training.hpp"

namespace necho {

// Architecture fields of ModelConfig; vocabulary sizes come from the dataset.
struct ArchitectureConfig {
  int hidden_dim = 128;
  double dropout = 0.1;
  int heads = 4;
  int layers = 3;
  int ffn_dim = 256;
  int note_dim = 32;
  int note_layers = 2;
  int note_heads = 4;
  int note_ffn_dim = 64;
  std::uint64_t teacher_init_seed = 1;
  std::uint64_t student_init_seed = 2;

  ModelConfig model_for(const DatasetConfig& data, FusionVariant fusion) const;
  bool operator==(const ArchitectureConfig&) const = default;
};

struct PathConfig {
  std::string dataset = "dataset.jsonl";
  std::string stats = "dataset_stats.txt";
  std::string teacher = "teacher.ckpt";
  std::string student = "student.ckpt";
  std::string metrics = "metrics.jsonl";
  std::string evaluation = "evaluation.json";
  std::string report = "report.json";
  bool operator==(const PathConfig&) const = default;
};

struct RunConfig {
  DatasetConfig data;
  ArchitectureConfig model;
  TrainConfig train;  // train.student_spec and train.schedule surface as "spec" and "schedule.*"
  LossWeights loss;
  std::array<double, 3> split_ratios = {0.8, 0.1, 0.1};
  std::uint64_t split_seed = 11;
  PathConfig paths;
  std::string label;   // report row; derived from the toggles when empty
  bool no_kd = false;  // distill without a teacher

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

nlohmann::json to_flat_json(const RunConfig& config);
// Strict: unknown keys and type mismatches throw ConfigError naming the key.
// Keys absent from `flat` keep their default values.
RunConfig from_flat_json(const nlohmann::json& flat);

// "key=value"; the value is parsed as JSON, falling back to a plain string.
std::pair<std::string, nlohmann::json> parse_assignment(const std::string& text);

// Defaults < file (if non-empty path) < overrides.
RunConfig resolve_run_config(const std::string& file, const std::vector<std::string>& overrides);

// "full", "no_kd", or the active ablation toggles joined by ", ".
std::string derive_label(const RunConfig& config);

}  // namespace necho
