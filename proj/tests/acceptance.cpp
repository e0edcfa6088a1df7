// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "seecg/cli.hpp"
#include "seecg/ops.hpp"

namespace {

using namespace seecg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor<double> random_tensor(Rng& rng, Shape shape) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// max |a - b| / max(max |b|, 1e-12): error relative to the oracle's scale.
double rel_error(const Tensor<double>& a, const std::vector<double>& oracle) {
  if (a.numel() != oracle.size()) return INFINITY;
  double diff = 0.0, scale = 1e-12;
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - oracle[i]));
    scale = std::max(scale, std::abs(oracle[i]));
  }
  return diff / scale;
}

// ---- 1: naive oracles -------------------------------------------------------

std::vector<double> conv2d_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                                  std::size_t st, std::size_t sl, std::size_t pt, std::size_t pl) {
  const auto N = x.extent(0), C = x.extent(1), T = x.extent(2), L = x.extent(3);
  const auto O = w.extent(0), KT = w.extent(2), KL = w.extent(3);
  const auto To = (T + 2 * pt - KT) / st + 1, Lo = (L + 2 * pl - KL) / sl + 1;
  std::vector<double> out(N * O * To * Lo);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t t = 0; t < To; ++t)
        for (std::size_t l = 0; l < Lo; ++l) {
          double acc = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < KT; ++i)
              for (std::size_t j = 0; j < KL; ++j) {
                const long ti = static_cast<long>(t * st + i) - static_cast<long>(pt);
                const long lj = static_cast<long>(l * sl + j) - static_cast<long>(pl);
                if (ti < 0 || lj < 0 || ti >= static_cast<long>(T) || lj >= static_cast<long>(L)) continue;
                acc += w[((o * C + c) * KT + i) * KL + j] * x[((n * C + c) * T + ti) * L + lj];
              }
          out[((n * O + o) * To + t) * Lo + l] = acc;
        }
  return out;
}

std::vector<double> conv1d_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                                  std::size_t s, std::size_t p) {
  const auto N = x.extent(0), C = x.extent(1), T = x.extent(2);
  const auto O = w.extent(0), K = w.extent(2);
  const auto To = (T + 2 * p - K) / s + 1;
  std::vector<double> out(N * O * To);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t t = 0; t < To; ++t) {
        double acc = b[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t k = 0; k < K; ++k) {
            const long ti = static_cast<long>(t * s + k) - static_cast<long>(p);
            if (ti < 0 || ti >= static_cast<long>(T)) continue;
            acc += w[(o * C + c) * K + k] * x[(n * C + c) * T + ti];
          }
        out[(n * O + o) * To + t] = acc;
      }
  return out;
}

std::vector<double> linear_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
  const auto N = x.extent(0), F = x.extent(1), O = w.extent(0);
  std::vector<double> out(N * O);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o) {
      double acc = b[o];
      for (std::size_t f = 0; f < F; ++f) acc += w[o * F + f] * x[n * F + f];
      out[n * O + o] = acc;
    }
  return out;
}

std::vector<double> avg_pool1d_oracle(const Tensor<double>& x, std::size_t window, std::size_t stride) {
  const auto N = x.extent(0), C = x.extent(1), T = x.extent(2);
  const auto To = (T - window) / stride + 1;
  std::vector<double> out(N * C * To);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < To; ++t) {
        double acc = 0.0;
        for (std::size_t k = 0; k < window; ++k) acc += x[(n * C + c) * T + t * stride + k];
        out[(n * C + c) * To + t] = acc / static_cast<double>(window);
      }
  return out;
}

std::vector<double> global_pool_oracle(const Tensor<double>& x) {
  const auto N = x.extent(0), C = x.extent(1);
  const auto S = x.numel() / (N * C);
  std::vector<double> out(N * C);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    double acc = 0.0;
    for (std::size_t s = 0; s < S; ++s) acc += x[nc * S + s];
    out[nc] = acc / static_cast<double>(S);
  }
  return out;
}

Outcome criterion_oracles() {
  const auto start = Clock::now();
  constexpr int kInstances = 250;
  Rng rng(sub_seed(1, "oracles"));
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); };
  double worst_c2 = 0, worst_c1 = 0, worst_lin = 0, worst_pool = 0;
  for (int it = 0; it < kInstances; ++it) {
    {
      const auto N = pick(1, 3), C = pick(1, 4), O = pick(1, 4), KT = pick(1, 5), KL = pick(1, 3);
      const auto st = pick(1, 3), sl = pick(1, 2), pt = pick(0, KT / 2 + 1), pl = pick(0, KL / 2);
      const auto T = pick(std::max<std::size_t>(KT, 1), 12), L = pick(std::max<std::size_t>(KL, 1), 6);
      auto x = random_tensor(rng, {N, C, T, L});
      auto w = random_tensor(rng, {O, C, KT, KL});
      auto b = random_tensor(rng, {O});
      const auto y = conv2d(x, w, b, Conv2dOptions{{st, sl}, {pt, pl}});
      worst_c2 = std::max(worst_c2, rel_error(y, conv2d_oracle(x, w, b, st, sl, pt, pl)));
    }
    {
      const auto N = pick(1, 3), C = pick(1, 5), O = pick(1, 5), K = pick(1, 7), s = pick(1, 3), p = pick(0, K / 2 + 1);
      const auto T = pick(K, 20);
      auto x = random_tensor(rng, {N, C, T});
      auto w = random_tensor(rng, {O, C, K});
      auto b = random_tensor(rng, {O});
      const auto y = conv1d(x, w, b, Conv1dOptions{s, p});
      worst_c1 = std::max(worst_c1, rel_error(y, conv1d_oracle(x, w, b, s, p)));
    }
    {
      const auto N = pick(1, 5), F = pick(1, 16), O = pick(1, 8);
      auto x = random_tensor(rng, {N, F});
      auto w = random_tensor(rng, {O, F});
      auto b = random_tensor(rng, {O});
      worst_lin = std::max(worst_lin, rel_error(linear(x, w, b), linear_oracle(x, w, b)));
    }
    {
      const auto N = pick(1, 3), C = pick(1, 4), T = pick(1, 16), window = pick(1, T), stride = pick(1, 3);
      auto x = random_tensor(rng, {N, C, T});
      worst_pool = std::max(worst_pool, rel_error(avg_pool1d(x, window, stride), avg_pool1d_oracle(x, window, stride)));
      auto x4 = random_tensor(rng, {N, C, pick(1, 8), pick(1, 4)});
      worst_pool = std::max(worst_pool, rel_error(global_avg_pool(x4), global_pool_oracle(x4)));
    }
  }
  const double secs = seconds_since(start);
  const double worst = std::max({worst_c2, worst_c1, worst_lin, worst_pool});
  Outcome o;
  o.pass = worst < 1e-6 && secs < 30.0;
  o.detail = std::to_string(kInstances) + " instances each; max rel err conv2d " + fmt("%.2e", worst_c2) + ", conv1d " +
             fmt("%.2e", worst_c1) + ", linear " + fmt("%.2e", worst_lin) + ", pooling " + fmt("%.2e", worst_pool) +
             "; " + fmt("%.1f s", secs);
  return o;
}

// ---- 2: end-to-end gradient check ---------------------------------------------

Outcome criterion_gradcheck() {
  const auto start = Clock::now();
  const auto r = cli::run_gradcheck(cli::tiny_model_config(), 0);
  const double secs = seconds_since(start);
  Outcome o;
  o.pass = r.passed && r.report.max_relative_error < 1e-4 && secs < 60.0;
  o.detail = "tiny model (" + std::to_string(r.parameters) + " params), eps 1e-4: max rel err " +
             fmt("%.2e", r.report.max_relative_error) + " at " + r.report.worst_parameter + ", " +
             std::to_string(r.redraws) + " kink redraw(s); " + fmt("%.1f s", secs);
  return o;
}

// ---- 3: loss identities -------------------------------------------------------

Outcome criterion_losses() {
  Rng rng(sub_seed(3, "losses"));
  double worst = 0.0;
  for (int b = 0; b < 100; ++b) {
    const std::size_t n = 1 + rng.index(8), k = 2 + rng.index(6);
    Tensor<double> logits(Shape{n, k});
    for (auto& v : logits.data()) v = rng.uniform(-5.0, 5.0);
    std::vector<std::size_t> targets(n);
    for (auto& t : targets) t = rng.index(k);
    const double f = focal_loss(logits, targets, 1.0, 0.0).item();
    const double c = cross_entropy(logits, targets).item();
    worst = std::max(worst, std::abs(f - c));
  }
  Tensor<double> zero(Shape{1, 2});
  const std::size_t target[] = {0};
  const double got = focal_loss(zero, target, 0.25, 2.0).item();
  const double expected = 0.25 * 0.25 * std::numbers::ln2;
  Outcome o;
  o.pass = worst < 1e-7 && std::abs(got - expected) < 1e-6;
  o.detail = "focal(γ=0,α=1) vs CE max diff " + fmt("%.2e", worst) + " over 100 batches; focal([0,0]) = " +
             fmt("%.9f", got) + " vs " + fmt("%.9f", expected);
  return o;
}

// ---- 4: learning-rate schedule ---------------------------------------------------

Outcome criterion_schedule() {
  const TrainConfig cfg;
  struct Range {
    std::size_t lo, hi;
    double lr;
  };
  const Range ranges[] = {{0, 16, 1e-2}, {16, 32, 1e-3}, {32, 64, 1e-4}, {64, 128, 1e-5}};
  std::size_t mismatches = 0;
  for (const auto& r : ranges)
    for (std::size_t e = r.lo; e < r.hi; ++e)
      if (lr_at_epoch(cfg, e) != r.lr) ++mismatches;
  Outcome o;
  o.pass = mismatches == 0;
  o.detail = "epochs 0..127 against 1e-2/1e-3/1e-4/1e-5 (exact ==): " + std::to_string(mismatches) + " mismatches";
  return o;
}

// ---- 5: resampling ------------------------------------------------------------

Outcome criterion_resampling() {
  std::vector<double> x(64);
  for (std::size_t t = 0; t < 64; ++t) x[t] = std::sin(2.0 * std::numbers::pi * 3.0 * static_cast<double>(t) / 64.0);
  const auto y = fourier_resample(x, 48);
  const auto spec = dft(y);
  // Single-sided amplitude of each bin below Nyquist.
  std::size_t peak = 0;
  double peak_amp = 0.0, other = 0.0;
  for (std::size_t k = 1; k < 24; ++k) {
    const double a = 2.0 * std::abs(spec[k]) / 48.0;
    if (a > peak_amp) {
      other = std::max(other, peak_amp);
      peak_amp = a;
      peak = k;
    } else {
      other = std::max(other, a);
    }
  }
  other = std::max({other, std::abs(spec[0]) / 48.0, std::abs(spec[24]) / 48.0});
  const double amp_err = std::abs(peak_amp - 1.0);

  Rng rng(sub_seed(5, "resample"));
  double dc_err = 0.0;
  for (std::size_t n : {17, 32, 64, 100}) {
    for (std::size_t m : {8, 31, 48, 64, 128}) {
      std::vector<double> s(n);
      for (auto& v : s) v = rng.normal();
      const auto r = fourier_resample(s, m);
      double mean_in = 0.0, mean_out = 0.0;
      for (double v : s) mean_in += v / static_cast<double>(n);
      for (double v : r) mean_out += v / static_cast<double>(m);
      dc_err = std::max(dc_err, std::abs(mean_in - mean_out));
    }
  }

  double dft_err = 0.0;
  for (std::size_t n = 1; n <= 64; ++n) {
    std::vector<double> s(n);
    for (auto& v : s) v = rng.uniform(-1.0, 1.0);
    const auto fast = dft(s);
    for (std::size_t k = 0; k < n; ++k) {
      Complex acc{0.0, 0.0};
      for (std::size_t t = 0; t < n; ++t) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
        acc += s[t] * Complex(std::cos(ang), std::sin(ang));
      }
      dft_err = std::max(dft_err, std::abs(fast[k] - acc));
    }
  }
  Outcome o;
  o.pass = peak == 3 && amp_err < 1e-6 && other < 1e-6 && dc_err < 1e-9 && dft_err < 1e-9;
  o.detail = "64→48 peak at bin " + std::to_string(peak) + ", amp err " + fmt("%.2e", amp_err) + ", largest other bin " +
             fmt("%.2e", other) + "; DC err " + fmt("%.2e", dc_err) + "; dft vs direct sum (n ≤ 64) " +
             fmt("%.2e", dft_err);
  return o;
}

// ---- 6: learning on synthetic data ------------------------------------------------

ModelConfig small_model(std::size_t leads, std::size_t samples, std::size_t classes) {
  ModelConfig m;
  m.n_leads = leads;
  m.n_samples = samples;
  m.n_classes = classes;
  m.stem_channels = 4;
  m.stage2_channels = 8;
  m.branch_channels = 8;
  m.block1d_channels = 16;
  m.blocks_per_branch_2d = 1;
  m.blocks_per_branch_1d = 1;
  m.se_ratio = 4;
  return m;
}

Outcome criterion_learning() {
  const auto start = Clock::now();
  SynthConfig sc;
  sc.seed = 2024;
  sc.n_records = 200;
  sc.n_classes = 5;
  sc.n_leads = 8;
  sc.n_samples = 2048;
  // Noise for 10 dB SNR: noise power = mean clean power / 10.
  double power = 0.0;
  std::size_t count = 0;
  for (const auto& r : synth_dataset(sc))
    for (const auto& lead : r.leads)
      for (double v : lead.samples) {
        power += v * v;
        ++count;
      }
  sc.noise_std = std::sqrt(power / static_cast<double>(count) / 10.0);
  const auto records = synth_dataset(sc);

  const auto parts = split(records, 0.8, sc.seed, SplitMode::BySubject);
  std::vector<EcgRecord> train_set, test_set;
  for (auto i : parts.train) train_set.push_back(records[i]);
  for (auto i : parts.test) test_set.push_back(records[i]);

  TrainConfig tc;
  tc.max_epochs = 20;
  tc.batch_size = 16;
  tc.seed = sc.seed;
  auto model = build<float>(small_model(8, 2048, 5), init_seed(sc.seed));
  (void)train(model, train_set, {}, tc);
  const auto train_report = evaluate(model, train_set, tc.batch_size);
  const auto test_report = evaluate(model, test_set, tc.batch_size);
  const double secs = seconds_since(start);
  Outcome o;
  o.pass = train_report.micro_f1 >= 0.99 && test_report.micro_f1 >= 0.90 && secs < 600.0;
  o.detail = "5 classes × 8 leads × 2048 samples, 200 records, noise_std " + fmt("%.3f", sc.noise_std) + " (10 dB), " +
             std::to_string(tc.max_epochs) + " epochs, " + std::to_string(param_count(model)) +
             " params: train micro-F1 " + fmt("%.4f", train_report.micro_f1) + " (" +
             std::to_string(train_set.size()) + "), held-out micro-F1 " + fmt("%.4f", test_report.micro_f1) + " (" +
             std::to_string(test_set.size()) + "); " + fmt("%.0f s", secs);
  return o;
}

// ---- 7 / 8: CLI-driven runs ----------------------------------------------------------

int run_cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch_root() {
  const fs::path p = fs::temp_directory_path() / "seecg_acceptance";
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> small_model_sets() {
  return {"--set", "model.stem_channels=4",  "--set", "model.stage2_channels=4", "--set",
          "model.branch_channels=4",         "--set", "model.block1d_channels=8", "--set",
          "model.blocks_per_branch_2d=1",    "--set", "model.blocks_per_branch_1d=1", "--set",
          "model.se_ratio=2",                "--set", "train.max_epochs=2",       "--set",
          "train.batch_size=8"};
}

fs::path synth_on_disk(const fs::path& dir) {
  const int code = run_cli({"synth", "--records", "40", "--classes", "4", "--leads", "4", "--samples", "256", "--noise",
                            "0.2", "--seed", "8", "--out", dir.string()});
  if (code != 0) throw Error("synth failed");
  return dir / "manifest.txt";
}

Outcome criterion_ablation(const fs::path& root) {
  struct Row {
    const char* label;
    const char* flag;  // nullptr = full model
    std::function<bool(const std::set<std::string>&, const std::set<std::string>&)> lacks;
  };
  auto contains = [](const std::set<std::string>& names, const std::string& needle) {
    return std::any_of(names.begin(), names.end(), [&](const std::string& n) { return n.find(needle) != std::string::npos; });
  };
  auto branches = [](const std::set<std::string>& names) {
    std::set<std::string> b;
    for (const auto& n : names)
      if (n.rfind("branch_", 0) == 0) b.insert(n.substr(0, n.find('.')));
    return b;
  };
  const std::vector<Row> rows = {
      {"full", nullptr, [](const auto&, const auto&) { return true; }},
      {"w/o SE", "--no-se",
       [&](const auto& full, const auto& abl) { return contains(full, ".se.") && !contains(abl, ".se."); }},
      {"w/o 2-D blocks", "--no-2d-blocks",
       [&](const auto& full, const auto& abl) { return contains(full, ".block2d_") && !contains(abl, ".block2d_"); }},
      {"w/o parallel", "--no-parallel",
       [&](const auto& full, const auto& abl) { return branches(full).size() > 1 && branches(abl).size() == 1; }},
  };
  const auto manifest = synth_on_disk(root / "ablation_data");
  std::set<std::string> full_names;
  std::string detail;
  bool pass = true;
  for (const auto& row : rows) {
    const fs::path out = root / (std::string("ablation_") + (row.flag ? row.flag + 2 : "full"));
    std::vector<std::string> args = {"train", "--manifest", manifest.string(), "--out", out.string()};
    if (row.flag) args.push_back(row.flag);
    const auto sets = small_model_sets();
    args.insert(args.end(), sets.begin(), sets.end());
    std::string err;
    const int code = run_cli(args, &err);
    bool ok = code == 0 && fs::exists(out / "weights.bin");
    std::set<std::string> names;
    if (ok) {
      const auto cfg = cli::load_run_config(out / "config.json", {});
      auto model = load_weights<float>(cfg.model, out / "weights.bin");
      for (const auto& p : model.parameters()) names.insert(p.name);
      if (!row.flag) full_names = names;
      ok = row.lacks(full_names, names);
    }
    pass = pass && ok;
    detail += std::string(detail.empty() ? "" : "; ") + row.label + ": " + std::to_string(names.size()) + " tensors" +
              (ok ? "" : " [failed" + (err.empty() ? std::string() : ": " + err.substr(0, err.find('\n'))) + "]");
  }
  return {pass, detail + "; all four training runs " + (pass ? "completed" : "not all completed")};
}

Outcome criterion_determinism(const fs::path& root) {
  const auto manifest = synth_on_disk(root / "determinism_data");
  auto train_to = [&](const std::string& name) {
    std::vector<std::string> args = {"train", "--manifest", manifest.string(), "--out", (root / name).string(), "--seed",
                                     "31"};
    const auto sets = small_model_sets();
    args.insert(args.end(), sets.begin(), sets.end());
    if (run_cli(args) != 0) throw Error("train run failed");
    return slurp(root / name / "weights.bin");
  };
  const std::string a = train_to("det_a"), b = train_to("det_b");
  const bool identical = !a.empty() && a == b;

  // 5-fold partitions of a dataset with several records per subject.
  SynthConfig sc;
  sc.n_records = 97;
  sc.n_leads = 1;
  sc.n_samples = 64;
  sc.records_per_subject = 3;
  const auto records = synth_dataset(sc);
  const auto folds = kfold(records, 5, 31, SplitMode::BySubject);
  std::vector<int> seen(records.size(), 0);
  std::map<std::string, std::size_t> subject_fold;
  bool disjoint = folds.size() == 5;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (auto i : folds[f]) {
      ++seen[i];
      const auto [it, inserted] = subject_fold.emplace(records[i].subject_id, f);
      if (!inserted && it->second != f) disjoint = false;
    }
  }
  const bool exhaustive = std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
  Outcome o;
  o.pass = identical && disjoint && exhaustive;
  o.detail = "two train runs: weights " + std::string(identical ? "byte-identical" : "DIFFER") + " (" +
             std::to_string(a.size()) + " bytes); 5 folds over " + std::to_string(records.size()) + " records / " +
             std::to_string(subject_fold.size()) + " subjects: " + (disjoint ? "subject-disjoint" : "subjects shared") +
             ", " + (exhaustive ? "each record exactly once" : "coverage broken");
  return o;
}

}  // namespace

int main() {
  const fs::path root = scratch_root();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle equivalence", criterion_oracles},
      {"gradient integrity", criterion_gradcheck},
      {"loss identities", criterion_losses},
      {"schedule fidelity", criterion_schedule},
      {"resampling fidelity", criterion_resampling},
      {"learning capability", criterion_learning},
      {"ablation structure", [&] { return criterion_ablation(root); }},
      {"determinism", [&] { return criterion_determinism(root); }},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  fs::remove_all(root);
  return all ? 0 : 1;
}
