#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "seecg/gradcheck.hpp"
#include "seecg/training.hpp"

namespace seecg::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kRuntimeError = 2 };

// Everything a run needs. Zero-valued model.n_leads / n_samples / n_classes are
// filled from the dataset manifest when the config is resolved.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string manifest;
  std::string output_dir = "run";
  SplitMode split_mode = SplitMode::BySubject;
  double train_fraction = 0.8;  // 1.0 = train on everything, no held-out set
  std::size_t folds = 5;
  std::size_t threads = 1;
  ModelConfig model;
  TrainConfig train;
};

// JSON text of the config with every field present.
std::string to_json_text(const RunConfig& config);

// Layers `json_text` (a full or partial config document) and then `overrides`
// ("dotted.key=value", value parsed as JSON or else taken as a string) over `base`.
// Unknown keys and ill-typed values raise ConfigError naming the dotted field;
// malformed JSON raises ConfigError with the parser's line/column.
RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides,
                           const RunConfig& base = {});

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                          const RunConfig& base = {});

// Fills zero model dimensions from the manifest header and validates both configs.
void resolve(RunConfig& config, const DatasetManifest& manifest);

// Small model used by the gradient check when no config says otherwise.
ModelConfig tiny_model_config();

struct GradCheckOptions {
  double epsilon = 1e-4;
  double tolerance = 1e-4;
  std::size_t batch = 4;
  std::size_t max_params = 20000;
  bool force = false;
  bool inject_fault = false;
  // Fresh evaluation points tried when the worst scalar sits on a ReLU kink.
  std::size_t max_redraws = 10;
};

struct GradCheckOutcome {
  GradCheckReport report;
  std::size_t parameters = 0;
  std::size_t redraws = 0;
  bool passed = false;
};

// Finite-difference check of the whole model in double precision at a random point
// (jittered parameters, random batch, random one-hot loss weights). When the worst
// scalar fails, central differences at ε and ε/10 are compared without looking at the
// analytic gradient; if they disagree the function is not smooth within ε there and a
// new point is drawn. Throws ConfigError when the model exceeds `max_params` without `force`.
GradCheckOutcome run_gradcheck(const ModelConfig& config, std::uint64_t seed, const GradCheckOptions& options = {});

// Entry point of the `seecg` binary; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace seecg::cli
