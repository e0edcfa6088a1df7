#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "seecg/graph.hpp"
#include "seecg/training.hpp"

namespace seecg {

namespace {

template <typename T>
Tensor<T> batch_loss(const TrainConfig& config, const Tensor<T>& logits, std::span<const std::size_t> targets) {
  if (config.loss == LossKind::CrossEntropy) return cross_entropy(logits, targets);
  return focal_loss(logits, targets, config.alpha, config.gamma, config.class_weights);
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

class ModeGuard {
 public:
  ModeGuard(Model<float>& model, Mode mode) : model_(model), previous_(model.mode()) { model.set_mode(mode); }
  ~ModeGuard() { model_.set_mode(previous_); }
  ModeGuard(const ModeGuard&) = delete;
  ModeGuard& operator=(const ModeGuard&) = delete;

 private:
  Model<float>& model_;
  Mode previous_;
};

}  // namespace

Tensor<float> make_batch(const std::vector<EcgRecord>& records, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ValueError("make_batch: no records selected");
  const EcgRecord& first = records.at(indices[0]);
  const std::size_t leads = first.n_leads(), samples = first.n_samples();
  Tensor<float> out(Shape{indices.size(), leads, samples});
  auto data = out.data();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const EcgRecord& r = records.at(indices[b]);
    if (r.n_leads() != leads || r.n_samples() != samples) {
      throw DataError("make_batch: record '" + r.record_id + "' has a different shape from '" + first.record_id + "'");
    }
    for (std::size_t l = 0; l < leads; ++l) {
      const auto& s = r.leads[l].samples;
      if (s.size() != samples) throw DataError("make_batch: record '" + r.record_id + "' has leads of different lengths");
      for (std::size_t t = 0; t < samples; ++t) data[(b * leads + l) * samples + t] = static_cast<float>(s[t]);
    }
  }
  return out;
}

void check_records(const ModelConfig& config, const std::vector<EcgRecord>& records) {
  for (const auto& r : records) {
    if (r.n_leads() != config.n_leads || r.n_samples() != config.n_samples) {
      throw DataError("record '" + r.record_id + "' is " + std::to_string(r.n_leads()) + " leads x " +
                      std::to_string(r.n_samples()) + " samples; the model expects " + std::to_string(config.n_leads) +
                      " x " + std::to_string(config.n_samples));
    }
    for (const auto& lead : r.leads) {
      if (lead.samples.size() != config.n_samples) throw DataError("record '" + r.record_id + "' has leads of different lengths");
    }
    if (r.label >= config.n_classes) {
      throw DataError("record '" + r.record_id + "' has label " + std::to_string(r.label) + " but the model has " +
                      std::to_string(config.n_classes) + " classes");
    }
  }
}

History train(Model<float>& model, const std::vector<EcgRecord>& train_records,
              const std::vector<EcgRecord>& val_records, const TrainConfig& config, const RunOptions& options) {
  config.validate();
  if (!config.class_weights.empty() && config.class_weights.size() != model.config.n_classes) {
    throw ConfigError("class_weights", "need one weight per class (" + std::to_string(model.config.n_classes) + ")");
  }
  if (train_records.empty()) throw DataError("train: no training records");
  check_records(model.config, train_records);
  check_records(model.config, val_records);

  const auto params = model.parameters();
  const std::span<const ParamRef<float>> pspan(params);
  AdamState<float> adam(pspan);
  const std::uint64_t shuffle_seed = sub_seed(config.seed, "shuffle");
  History history;

  std::vector<std::size_t> order(train_records.size());
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr = lr_at_epoch(config, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(sub_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);

    model.set_mode(Mode::Train);
    double loss_sum = 0.0;
    for (const auto& batch : make_batches(order, config.batch_size)) {
      const Tensor<float> x = make_batch(train_records, batch);
      std::vector<std::size_t> targets;
      targets.reserve(batch.size());
      for (std::size_t i : batch) targets.push_back(train_records[i].label);

      zero_grads(pspan);
      Graph<float> graph;
      Tensor<float> loss;
      {
        Recording<float> recording(graph);
        loss = batch_loss(config, model.forward(x), std::span<const std::size_t>(targets));
      }
      graph.backward(loss);
      adam_step(pspan, adam, lr, config.adam);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(train_records.size());
    if (!val_records.empty()) rec.validation = evaluate(model, val_records, config.batch_size, options.threads);
    history.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(history.epochs.back());
  }
  for (const auto& p : params) p.tensor->clear_grad();
  model.set_mode(Mode::Eval);
  return history;
}

MetricsReport evaluate(Model<float>& model, const std::vector<EcgRecord>& records, std::size_t batch_size,
                       std::size_t threads) {
  if (records.empty()) throw DataError("evaluate: no records");
  if (batch_size == 0) throw ValueError("evaluate: batch size must be positive");
  check_records(model.config, records);
  ModeGuard guard(model, Mode::Eval);

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batches = make_batches(order, batch_size);
  std::vector<std::size_t> predicted(records.size());

  auto run_batch = [&](std::size_t b) {
    const auto labels = predict_labels(model.infer(make_batch(records, batches[b])));
    for (std::size_t i = 0; i < batches[b].size(); ++i) predicted[batches[b][i]] = labels[i];
  };

  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), batches.size());
  if (workers <= 1) {
    for (std::size_t b = 0; b < batches.size(); ++b) run_batch(b);
  } else {
    // Batches are claimed dynamically but each writes only its own slots, so the result
    // does not depend on scheduling.
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t b = next++; b < batches.size(); b = next++) run_batch(b);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<std::size_t> truth;
  truth.reserve(records.size());
  for (const auto& r : records) truth.push_back(r.label);
  return compute_metrics(truth, predicted, model.config.n_classes);
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

CrossValidation crossvalidate(const std::vector<EcgRecord>& records, const TrainConfig& config,
                              const ModelConfig& model_config, std::size_t k, SplitMode mode,
                              const RunOptions& options) {
  config.validate();
  model_config.validate();
  const auto folds = kfold(records, k, config.seed, mode);
  CrossValidation cv;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    FoldResult fold;
    fold.test_indices = folds[f];
    for (std::size_t o = 0; o < folds.size(); ++o) {
      if (o != f) fold.train_indices.insert(fold.train_indices.end(), folds[o].begin(), folds[o].end());
    }
    std::sort(fold.train_indices.begin(), fold.train_indices.end());
    std::vector<EcgRecord> train_set, test_set;
    for (std::size_t i : fold.train_indices) train_set.push_back(records[i]);
    for (std::size_t i : fold.test_indices) test_set.push_back(records[i]);

    Model<float> model = build<float>(model_config, init_seed(config.seed));
    fold.history = train(model, train_set, {}, config, options);
    fold.report = evaluate(model, test_set, config.batch_size, options.threads);
    cv.folds.push_back(std::move(fold));
  }
  auto collect = [&](double MetricsReport::*field) {
    std::vector<double> v;
    for (const auto& f : cv.folds) v.push_back(f.report.*field);
    return summarize(v);
  };
  cv.micro_f1 = collect(&MetricsReport::micro_f1);
  cv.macro_f1 = collect(&MetricsReport::macro_f1);
  cv.macro_precision = collect(&MetricsReport::macro_precision);
  cv.macro_recall = collect(&MetricsReport::macro_recall);
  cv.accuracy = collect(&MetricsReport::accuracy);
  return cv;
}

}  // namespace seecg
