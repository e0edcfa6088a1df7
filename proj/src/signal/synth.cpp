#include <cmath>
#include <numbers>

#include "seecg/random.hpp"
#include "seecg/signal.hpp"

namespace seecg {

namespace {

struct Component {
  double cycles;
  double phase;
  double amplitude;
};

std::string padded(std::size_t i, std::size_t width) {
  std::string s = std::to_string(i);
  return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

}  // namespace

std::vector<std::string> synth_class_names(std::size_t n_classes) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < n_classes; ++c) out.push_back("class" + std::to_string(c));
  return out;
}

std::vector<EcgRecord> synth_dataset(const SynthConfig& cfg) {
  if (cfg.n_classes < 2) throw ValueError("synth: n_classes must be at least 2");
  if (cfg.n_records == 0 || cfg.n_leads == 0 || cfg.n_samples < 8) {
    throw ValueError("synth: need at least one record, one lead and 8 samples");
  }
  if (!(cfg.noise_std >= 0.0) || !std::isfinite(cfg.noise_std)) throw ValueError("synth: noise_std must be non-negative");
  if (cfg.components == 0 || cfg.records_per_subject == 0 || !(cfg.sample_rate > 0.0)) {
    throw ValueError("synth: components, records_per_subject and sample_rate must be positive");
  }

  // Integer cycle counts from a shared pool, handed out without replacement, so
  // no two classes share a frequency and each one sits exactly on a DFT bin.
  const std::size_t needed = cfg.n_classes * cfg.components;
  const std::size_t lowest = 2;
  const std::size_t highest = std::min(cfg.n_samples / 2, lowest + std::max<std::size_t>(3 * needed, 24));
  if (highest < lowest + needed) throw ValueError("synth: n_samples too short for the requested classes");
  std::vector<std::size_t> pool;
  for (std::size_t f = lowest; f < highest; ++f) pool.push_back(f);
  Rng pool_rng(sub_seed(cfg.seed, "frequency_pool"));
  pool_rng.shuffle(pool);

  std::vector<std::vector<Component>> classes(cfg.n_classes);
  std::vector<std::vector<double>> lead_gain(cfg.n_classes, std::vector<double>(cfg.n_leads));
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    Rng rng(sub_seed(cfg.seed, "class" + std::to_string(c)));
    for (std::size_t j = 0; j < cfg.components; ++j) {
      const double cycles = static_cast<double>(pool[c * cfg.components + j]);
      classes[c].push_back({cycles, rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.5, 1.0)});
    }
    for (auto& g : lead_gain[c]) g = rng.uniform(0.5, 1.5);
  }

  // Clean class waveforms, shared by all records of the class.
  std::vector<std::vector<double>> waveform(cfg.n_classes, std::vector<double>(cfg.n_samples, 0.0));
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    for (std::size_t t = 0; t < cfg.n_samples; ++t) {
      double v = 0.0;
      for (const auto& comp : classes[c]) {
        v += comp.amplitude *
             std::sin(2.0 * std::numbers::pi * comp.cycles * static_cast<double>(t) / static_cast<double>(cfg.n_samples) +
                      comp.phase);
      }
      waveform[c][t] = v;
    }
  }

  const std::size_t width = std::to_string(cfg.n_records).size();
  const std::size_t subjects = (cfg.n_records + cfg.records_per_subject - 1) / cfg.records_per_subject;
  const std::size_t subject_width = std::to_string(subjects).size();
  std::vector<EcgRecord> out;
  out.reserve(cfg.n_records);
  for (std::size_t i = 0; i < cfg.n_records; ++i) {
    // Each record draws from its own stream, so records do not depend on generation order.
    Rng rng(sub_seed(sub_seed(cfg.seed, "record"), static_cast<std::uint64_t>(i)));
    EcgRecord rec;
    rec.record_id = "r" + padded(i, width);
    rec.subject_id = "s" + padded(i / cfg.records_per_subject, subject_width);
    rec.label = i % cfg.n_classes;
    const double gain = rng.uniform(0.8, 1.2);
    rec.leads.resize(cfg.n_leads);
    for (std::size_t l = 0; l < cfg.n_leads; ++l) {
      auto& lead = rec.leads[l];
      lead.sample_rate_hz = cfg.sample_rate;
      lead.samples.resize(cfg.n_samples);
      const double g = gain * lead_gain[rec.label][l];
      for (std::size_t t = 0; t < cfg.n_samples; ++t) {
        double v = g * waveform[rec.label][t];
        if (cfg.noise_std > 0.0) v += cfg.noise_std * rng.normal();
        lead.samples[t] = v;
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace seecg
