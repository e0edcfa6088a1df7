#include "seecg/training.hpp"

namespace seecg {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

MetricsReport compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                              std::size_t n_classes) {
  if (truth.size() != predicted.size()) {
    throw ShapeError("compute_metrics", "N", std::to_string(truth.size()) + " labels vs " +
                                                 std::to_string(predicted.size()) + " predictions");
  }
  if (n_classes == 0) throw ValueError("compute_metrics: need at least one class");
  MetricsReport r;
  r.samples = truth.size();
  r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n_classes || predicted[i] >= n_classes) {
      throw ValueError("compute_metrics: label outside [0, " + std::to_string(n_classes) + ") at sample " +
                       std::to_string(i));
    }
    ++r.confusion[truth[i]][predicted[i]];
  }

  std::size_t tp_total = 0, fp_total = 0, fn_total = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t tp = r.confusion[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < n_classes; ++o) {
      if (o == c) continue;
      fp += r.confusion[o][c];
      fn += r.confusion[c][o];
    }
    ClassMetrics m;
    m.support = tp + fn;
    m.precision = ratio(tp, tp + fp);
    m.recall = ratio(tp, tp + fn);
    m.f1 = f1_of(m.precision, m.recall);
    r.per_class.push_back(m);
    tp_total += tp;
    fp_total += fp;
    fn_total += fn;
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
  }
  const double k = static_cast<double>(n_classes);
  r.macro_precision /= k;
  r.macro_recall /= k;
  r.macro_f1 /= k;
  r.micro_precision = ratio(tp_total, tp_total + fp_total);
  r.micro_recall = ratio(tp_total, tp_total + fn_total);
  r.micro_f1 = f1_of(r.micro_precision, r.micro_recall);
  r.accuracy = ratio(tp_total, r.samples);
  return r;
}

template <typename T>
std::vector<std::size_t> predict_labels(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("predict_labels", "rank", "logits must be [N,k], got " + shape_str(logits.shape()));
  const std::size_t n = logits.extent(0), k = logits.extent(1);
  std::vector<std::size_t> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 1; j < k; ++j)
      if (logits[i * k + j] > logits[i * k + out[i]]) out[i] = j;
  }
  return out;
}

template std::vector<std::size_t> predict_labels(const Tensor<float>&);
template std::vector<std::size_t> predict_labels(const Tensor<double>&);

}  // namespace seecg
