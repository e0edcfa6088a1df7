#include <algorithm>
#include <cmath>

#include "seecg/training.hpp"

namespace seecg {

template <typename T>
AdamState<T>::AdamState(std::span<const ParamRef<T>> params) {
  for (const auto& p : params) {
    names.push_back(p.name);
    m.emplace_back(p.tensor->numel(), T(0));
    v.emplace_back(p.tensor->numel(), T(0));
  }
}

template <typename T>
void adam_step(std::span<const ParamRef<T>> params, AdamState<T>& state, double lr, const AdamConfig& config) {
  if (params.size() != state.names.size()) {
    throw ValueError("adam_step: state holds " + std::to_string(state.names.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.name != state.names[i]) throw ValueError("adam_step: parameter '" + p.name + "' does not match state entry '" + state.names[i] + "'");
    if (!p.tensor->has_grad()) throw ValueError("adam_step: parameter '" + p.name + "' has no gradient");
    if (state.m[i].size() != p.tensor->numel()) throw ValueError("adam_step: parameter '" + p.name + "' changed size");
  }
  ++state.t;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].tensor->data();
    const auto grad = std::as_const(*params[i].tensor).grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = static_cast<double>(grad[j]);
      const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * g;
      const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      data[j] = static_cast<T>(static_cast<double>(data[j]) - lr * (mj / c1) / (std::sqrt(vj / c2) + config.eps));
    }
  }
}

void TrainConfig::validate() const {
  if (max_epochs == 0) throw ConfigError("max_epochs", "must be positive");
  if (!(initial_lr >= 0.0) || !std::isfinite(initial_lr)) throw ConfigError("initial_lr", "must be a non-negative number");
  if (!std::is_sorted(decay_epochs.begin(), decay_epochs.end())) throw ConfigError("decay_epochs", "must be sorted ascending");
  if (!(decay_factor > 0.0) || !std::isfinite(decay_factor)) throw ConfigError("decay_factor", "must be positive");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha", "must lie in (0, 1]");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma", "must be non-negative");
  for (double w : class_weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("class_weights", "weights must be positive");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("adam.beta1", "must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("adam.beta2", "must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("adam.eps", "must be positive");
}

double lr_at_epoch(const TrainConfig& config, std::size_t epoch) {
  if (epoch >= config.max_epochs) {
    throw ValueError("lr_at_epoch: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(config.max_epochs) + ")");
  }
  const auto decays = std::upper_bound(config.decay_epochs.begin(), config.decay_epochs.end(), epoch) -
                      config.decay_epochs.begin();
  return config.initial_lr / std::pow(config.decay_factor, static_cast<double>(decays));
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<const ParamRef<float>>, AdamState<float>&, double, const AdamConfig&);
template void adam_step(std::span<const ParamRef<double>>, AdamState<double>&, double, const AdamConfig&);

}  // namespace seecg
