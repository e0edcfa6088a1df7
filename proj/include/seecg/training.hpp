#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seecg/model.hpp"
#include "seecg/random.hpp"
#include "seecg/signal.hpp"

namespace seecg {

// ---- losses ---------------------------------------------------------------

// Mean over the batch of -log softmax(logits)[target], via a max-shifted log-softmax.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> targets);

// Mean over the batch of -α·w[target]·(1 - p)^γ·log p with p = softmax(logits)[target].
// `class_weights` is optional (empty = all ones).
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, std::span<const std::size_t> targets, double alpha, double gamma,
                     std::span<const double> class_weights = {});

// ---- optimizer ------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<std::string> names;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::size_t t = 0;

  AdamState() = default;
  explicit AdamState(std::span<const ParamRef<T>> params);
};

// One bias-corrected Adam update of every parameter from its accumulated gradient.
// Throws ValueError when a parameter has no gradient or does not match the state.
template <typename T>
void adam_step(std::span<const ParamRef<T>> params, AdamState<T>& state, double lr, const AdamConfig& config = {});

// ---- schedule / config ----------------------------------------------------

enum class LossKind { CrossEntropy, Focal };

struct TrainConfig {
  std::size_t max_epochs = 128;
  double initial_lr = 1e-2;
  std::vector<std::size_t> decay_epochs{16, 32, 64, 128};
  double decay_factor = 10.0;
  std::size_t batch_size = 64;
  LossKind loss = LossKind::Focal;
  double alpha = 0.25;
  double gamma = 2.0;
  std::vector<double> class_weights;  // empty = uniform
  AdamConfig adam;
  std::uint64_t seed = 0;

  void validate() const;
};

// initial_lr / decay_factor^(number of decay epochs ≤ epoch).
double lr_at_epoch(const TrainConfig& config, std::size_t epoch);

// ---- metrics --------------------------------------------------------------

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricsReport {
  std::size_t samples = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]
  double accuracy = 0.0;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
};

MetricsReport compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                              std::size_t n_classes);

// Row-wise argmax of [N,k] logits; ties go to the lowest class index.
template <typename T>
std::vector<std::size_t> predict_labels(const Tensor<T>& logits);

// ---- training loop ----------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<MetricsReport> validation;
};

struct History {
  std::vector<EpochRecord> epochs;
};

struct RunOptions {
  // Worker threads for evaluation; training updates are always single-threaded.
  std::size_t threads = 1;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Stacks the records into a [N, leads, samples] batch.
Tensor<float> make_batch(const std::vector<EcgRecord>& records, std::span<const std::size_t> indices);

// Throws DataError naming the first record whose shape or label does not fit the model.
void check_records(const ModelConfig& config, const std::vector<EcgRecord>& records);

History train(Model<float>& model, const std::vector<EcgRecord>& train_records,
              const std::vector<EcgRecord>& val_records, const TrainConfig& config, const RunOptions& options = {});

// Evaluation-mode metrics; the model's mode is restored afterwards.
MetricsReport evaluate(Model<float>& model, const std::vector<EcgRecord>& records, std::size_t batch_size,
                       std::size_t threads = 1);

// Seed for model initialization derived from the run seed.
inline std::uint64_t init_seed(std::uint64_t run_seed) { return sub_seed(run_seed, "init"); }

struct FoldResult {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  History history;
  MetricsReport report;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over folds
};

struct CrossValidation {
  std::vector<FoldResult> folds;
  MetricSummary micro_f1, macro_f1, macro_precision, macro_recall, accuracy;
};

CrossValidation crossvalidate(const std::vector<EcgRecord>& records, const TrainConfig& config,
                              const ModelConfig& model_config, std::size_t k, SplitMode mode = SplitMode::BySubject,
                              const RunOptions& options = {});

MetricSummary summarize(std::span<const double> values);

}  // namespace seecg
