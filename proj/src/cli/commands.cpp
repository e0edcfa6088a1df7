#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "seecg/cli.hpp"
#include "seecg/gradcheck.hpp"
#include "seecg/ops.hpp"

namespace seecg::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Options shared by the commands that read a run config.
struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> manifest;
  std::optional<std::size_t> threads;
  bool no_se = false;
  bool no_2d = false;
  bool no_parallel = false;
};

void add_common(CLI::App& cmd, CommonOptions& o, bool with_out = true) {
  cmd.add_option("--config", o.config_path, "JSON run config");
  cmd.add_option("--set", o.sets, "Override a config field: dotted.key=value (repeatable)");
  cmd.add_option("--seed", o.seed, "Run seed");
  if (with_out) cmd.add_option("--out", o.out, "Output directory");
  cmd.add_option("--manifest", o.manifest, "Dataset manifest");
  cmd.add_option("--threads", o.threads, "Evaluation worker threads");
  cmd.add_flag("--no-se", o.no_se, "Ablation: drop squeeze-excitation gates");
  cmd.add_flag("--no-2d-blocks", o.no_2d, "Ablation: drop the per-branch 2-D residual blocks");
  cmd.add_flag("--no-parallel", o.no_parallel, "Ablation: keep a single branch");
}

// Command-line flags become overrides so they share the config's validation.
RunConfig make_config(const CommonOptions& o, const RunConfig& base = {}) {
  std::vector<std::string> sets = o.sets;
  if (o.seed) sets.push_back("seed=" + std::to_string(*o.seed));
  if (o.out) sets.push_back("output_dir=" + json(*o.out).dump());
  if (o.manifest) sets.push_back("manifest=" + json(*o.manifest).dump());
  if (o.threads) sets.push_back("threads=" + std::to_string(*o.threads));
  if (o.no_se) sets.emplace_back("model.use_se=false");
  if (o.no_2d) sets.emplace_back("model.use_2d_blocks=false");
  if (o.no_parallel) sets.emplace_back("model.use_parallel=false");
  if (o.config_path.empty()) return parse_run_config("", sets, base);
  return load_run_config(o.config_path, sets, base);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("failed writing " + path.string());
}

json report_json(const MetricsReport& r, const std::vector<std::string>& classes) {
  json per_class = json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    per_class.push_back({{"class", c < classes.size() ? classes[c] : std::to_string(c)},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"support", m.support}});
  }
  return {{"samples", r.samples},
          {"accuracy", r.accuracy},
          {"micro_precision", r.micro_precision},
          {"micro_recall", r.micro_recall},
          {"micro_f1", r.micro_f1},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"macro_f1", r.macro_f1},
          {"per_class", per_class},
          {"confusion", r.confusion}};
}

json history_json(const History& h) {
  json out = json::array();
  for (const auto& e : h.epochs) {
    json row{{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}};
    if (e.validation) {
      row["validation"] = {{"micro_f1", e.validation->micro_f1},
                           {"macro_f1", e.validation->macro_f1},
                           {"accuracy", e.validation->accuracy}};
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<EcgRecord> subset(const std::vector<EcgRecord>& records, const std::vector<std::size_t>& idx) {
  std::vector<EcgRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(records[i]);
  return out;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// Loads the manifest named by the config, resolves the config against it and
// saves the resolved config before any expensive work starts.
Dataset prepare_run(RunConfig& cfg, std::ostream& err) {
  if (cfg.manifest.empty()) throw ConfigError("manifest", "required (--manifest or config)");
  const DatasetManifest header = read_manifest(cfg.manifest);
  resolve(cfg, header);
  if (cfg.threads > 1) {
    err << "note: --threads parallelizes evaluation only; trained weights are identical for any thread count\n";
  }
  fs::create_directories(cfg.output_dir);
  write_text(fs::path(cfg.output_dir) / "config.json", to_json_text(cfg));
  return load_dataset(cfg.manifest);
}

RunOptions progress(const RunConfig& cfg, std::ostream& out, const std::string& prefix = "") {
  RunOptions opts;
  opts.threads = cfg.threads;
  opts.on_epoch = [&out, prefix](const EpochRecord& e) {
    out << prefix << "epoch " << e.epoch << " lr " << e.lr << " loss " << fixed(e.train_loss, 6);
    if (e.validation) out << " val_micro_f1 " << fixed(e.validation->micro_f1);
    out << "\n";
  };
  return opts;
}

int cmd_train(const CommonOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg = make_config(o);
  Dataset data = prepare_run(cfg, err);
  const fs::path dir = cfg.output_dir;

  std::vector<std::size_t> train_idx, test_idx;
  if (cfg.train_fraction < 1.0) {
    auto s = split(data.records, cfg.train_fraction, cfg.seed, cfg.split_mode);
    train_idx = std::move(s.train);
    test_idx = std::move(s.test);
  } else {
    for (std::size_t i = 0; i < data.records.size(); ++i) train_idx.push_back(i);
  }
  const auto train_set = subset(data.records, train_idx);
  const auto test_set = subset(data.records, test_idx);
  out << "train " << train_set.size() << " records, held out " << test_set.size() << "\n";

  auto model = build<float>(cfg.model, init_seed(cfg.seed));
  out << "parameters " << param_count(model) << "\n";
  const History history = train(model, train_set, test_set, cfg.train, progress(cfg, out));
  save_weights(model, dir / "weights.bin");
  write_text(dir / "history.json", history_json(history).dump(2) + "\n");

  const auto& classes = data.manifest.classes;
  json metrics{{"train", report_json(evaluate(model, train_set, cfg.train.batch_size, cfg.threads), classes)},
               {"test", nullptr}};
  if (!test_set.empty()) {
    const auto report = evaluate(model, test_set, cfg.train.batch_size, cfg.threads);
    metrics["test"] = report_json(report, classes);
    out << "held-out micro_f1 " << fixed(report.micro_f1) << " macro_f1 " << fixed(report.macro_f1) << "\n";
  }
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  out << "wrote " << (dir / "weights.bin").string() << "\n";
  return kOk;
}

int cmd_eval(const CommonOptions& o, const std::string& weights, const std::string& report_path, std::ostream& out,
             std::ostream& err) {
  CommonOptions opts = o;
  if (opts.config_path.empty()) opts.config_path = (fs::path(weights).parent_path() / "config.json").string();
  RunConfig cfg = make_config(opts);
  if (cfg.manifest.empty()) throw ConfigError("manifest", "required (--manifest or config)");
  resolve(cfg, read_manifest(cfg.manifest));
  if (cfg.threads > 1) err << "note: --threads parallelizes evaluation only\n";
  const Dataset data = load_dataset(cfg.manifest);
  auto model = load_weights<float>(cfg.model, weights);
  const auto report = evaluate(model, data.records, cfg.train.batch_size, cfg.threads);
  out << "records " << report.samples << " accuracy " << fixed(report.accuracy) << " micro_f1 "
      << fixed(report.micro_f1) << " macro_f1 " << fixed(report.macro_f1) << "\n";
  if (!report_path.empty()) write_text(report_path, report_json(report, data.manifest.classes).dump(2) + "\n");
  return kOk;
}

int cmd_crossval(const CommonOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig cfg = make_config(o);
  Dataset data = prepare_run(cfg, err);
  RunOptions opts = progress(cfg, out);
  std::size_t fold_no = 0;
  opts.on_epoch = [&, inner = opts.on_epoch](const EpochRecord& e) {
    // Fold boundaries show up as the epoch counter restarting.
    if (e.epoch == 0) ++fold_no;
    out << "fold " << fold_no << " ";
    inner(e);
  };
  const auto cv = crossvalidate(data.records, cfg.train, cfg.model, cfg.folds, cfg.split_mode, opts);

  auto summary = [](const MetricSummary& s) { return json{{"mean", s.mean}, {"std", s.std}}; };
  json folds = json::array();
  for (std::size_t f = 0; f < cv.folds.size(); ++f) {
    const auto& fr = cv.folds[f];
    std::vector<std::string> test_ids;
    for (auto i : fr.test_indices) test_ids.push_back(data.records[i].record_id);
    folds.push_back({{"fold", f},
                     {"train_records", fr.train_indices.size()},
                     {"test_records", test_ids},
                     {"report", report_json(fr.report, data.manifest.classes)}});
    out << "fold " << f + 1 << " micro_f1 " << fixed(fr.report.micro_f1) << " macro_f1 " << fixed(fr.report.macro_f1)
        << "\n";
  }
  const json doc{{"folds", folds},
                 {"summary",
                  {{"micro_f1", summary(cv.micro_f1)},
                   {"macro_f1", summary(cv.macro_f1)},
                   {"macro_precision", summary(cv.macro_precision)},
                   {"macro_recall", summary(cv.macro_recall)},
                   {"accuracy", summary(cv.accuracy)}}}};
  write_text(fs::path(cfg.output_dir) / "crossval.json", doc.dump(2) + "\n");
  out << "micro_f1 " << fixed(cv.micro_f1.mean) << " ± " << fixed(cv.micro_f1.std) << "  macro_f1 "
      << fixed(cv.macro_f1.mean) << " ± " << fixed(cv.macro_f1.std) << "\n";
  return kOk;
}

int cmd_preprocess(const std::string& manifest, std::size_t target_len, const std::string& out_dir,
                   std::ostream& out) {
  const Dataset data = load_dataset(manifest);
  if (data.records.empty()) throw DataError("preprocess: manifest lists no records");
  if (target_len == 0) {
    std::size_t shortest = std::numeric_limits<std::size_t>::max();
    for (const auto& r : data.records) shortest = std::min(shortest, r.n_samples());
    target_len = default_target_length(shortest);
  }
  std::vector<EcgRecord> resampled;
  std::vector<RecordIssue> issues;
  for (const auto& r : data.records) {
    try {
      resampled.push_back(resample_records({r}, target_len).front());
    } catch (const Error& e) {
      issues.push_back({r.record_id, "", e.what()});
    }
  }
  if (!issues.empty()) throw DatasetError(std::move(issues));
  const auto path = write_dataset(out_dir, resampled, data.manifest.classes);
  out << "resampled " << resampled.size() << " records to " << target_len << " samples: " << path.string() << "\n";
  return kOk;
}

int cmd_synth(SynthConfig sc, const std::string& out_dir, std::ostream& out) {
  std::vector<EcgRecord> records;
  try {
    records = synth_dataset(sc);
  } catch (const ValueError& e) {
    throw ConfigError("synth", e.what());
  }
  const auto path = write_dataset(out_dir, records, synth_class_names(sc.n_classes));
  out << "wrote " << records.size() << " records: " << path.string() << "\n";
  return kOk;
}

class FaultGuard {
 public:
  explicit FaultGuard(bool on) { debug::set_backward_fault(on); }
  ~FaultGuard() { debug::set_backward_fault(false); }
  FaultGuard(const FaultGuard&) = delete;
  FaultGuard& operator=(const FaultGuard&) = delete;
};

int cmd_gradcheck(const CommonOptions& o, const GradCheckOptions& g, std::ostream& out, std::ostream& err) {
  RunConfig base;
  base.model = tiny_model_config();
  const RunConfig cfg = make_config(o, base);
  if (g.inject_fault) err << "warning: backward fault injected; the check is expected to fail\n";
  const auto r = run_gradcheck(cfg.model, cfg.seed, g);
  out << "parameters " << r.parameters << "\n";
  if (r.redraws > 0) out << "redrew the evaluation point " << r.redraws << " time(s) to step off ReLU kinks\n";
  out << "max relative error " << std::scientific << std::setprecision(3) << r.report.max_relative_error
      << std::defaultfloat << " at " << r.report.worst_parameter << "\n"
      << (r.passed ? "PASS" : "FAIL") << " (tolerance " << g.tolerance << ")\n";
  return r.passed ? kOk : kRuntimeError;
}

void print_dataset_error(const DatasetError& e, std::ostream& err) {
  err << "error: " << e.issues().size() << " record(s) failed\n";
  for (const auto& i : e.issues()) {
    err << "  " << (i.record_id.empty() ? "<unnamed>" : i.record_id);
    if (!i.path.empty()) err << " (" << i.path << ")";
    err << ": " << i.message << "\n";
  }
}

}  // namespace

GradCheckOutcome run_gradcheck(const ModelConfig& config, std::uint64_t seed, const GradCheckOptions& g) {
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("model." + e.field(), e.detail());
  }
  if (g.batch == 0) throw ConfigError("--batch", "must be positive");
  if (!(g.epsilon > 0.0)) throw ConfigError("--eps", "must be positive");
  const FaultGuard fault(g.inject_fault);

  GradCheckOutcome outcome;
  for (std::size_t attempt = 0;; ++attempt) {
    auto model = build<double>(config, init_seed(seed));
    outcome.parameters = param_count(model);
    if (outcome.parameters > g.max_params && !g.force) {
      throw ConfigError("model", std::to_string(outcome.parameters) + " parameters exceed --max-params " +
                                     std::to_string(g.max_params) + "; finite differences would be slow (use --force)");
    }
    // Move parameters off their zero/one initial values so every path carries signal.
    Rng rng(sub_seed(sub_seed(seed, "gradcheck"), static_cast<std::uint64_t>(attempt)));
    for (const auto& p : model.parameters())
      for (auto& v : p.tensor->data()) v += 0.2 * rng.uniform(-1.0, 1.0);
    Tensor<double> batch(Shape{g.batch, config.n_leads, config.n_samples});
    for (auto& v : batch.data()) v = rng.normal();
    Tensor<double> target(Shape{g.batch, config.n_classes});
    for (std::size_t i = 0; i < g.batch; ++i) target[i * config.n_classes + rng.index(config.n_classes)] = -0.25;

    std::vector<Tensor<double>> initial_buffers;
    for (const auto& b : model.buffers()) initial_buffers.push_back(*b.tensor);
    const std::function<Tensor<double>()> loss = [&] {
      // Every evaluation starts from the same running statistics.
      const auto bufs = model.buffers();
      for (std::size_t i = 0; i < bufs.size(); ++i) *bufs[i].tensor = initial_buffers[i];
      return sum(mul(log_softmax(model.forward(batch)), target));
    };
    const auto params = model.parameters();
    outcome.report = grad_check<double>(loss, params, g.epsilon);
    outcome.passed = outcome.report.max_relative_error < g.tolerance;
    if (outcome.passed || attempt == g.max_redraws) return outcome;

    // Smoothness probe of the worst scalar, independent of the analytic gradient.
    const std::string& worst = outcome.report.worst_parameter;
    const std::size_t open = worst.rfind('[');
    const std::string name = worst.substr(0, open);
    const std::size_t index = std::stoul(worst.substr(open + 1));
    Tensor<double>* t = nullptr;
    for (const auto& p : params)
      if (p.name == name) t = p.tensor;
    auto central = [&](double eps) {
      const NoRecording<double> off;
      const double saved = (*t)[index];
      (*t)[index] = saved + eps;
      const double plus = loss().item();
      (*t)[index] = saved - eps;
      const double minus = loss().item();
      (*t)[index] = saved;
      return (plus - minus) / (2.0 * eps);
    };
    const double coarse = central(g.epsilon), fine = central(g.epsilon / 10.0);
    const double scale = std::max({std::abs(coarse), std::abs(fine), 1e-8});
    if (std::abs(coarse - fine) <= g.tolerance * scale) return outcome;  // smooth: a genuine mismatch
    ++outcome.redraws;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SE-ECGNet: multi-lead ECG classification", "seecg"};
  app.require_subcommand(1);

  CommonOptions train_o, eval_o, cv_o, gc_o;
  auto* train_cmd = app.add_subcommand("train", "Train a model and save weights, history and metrics");
  add_common(*train_cmd, train_o);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate saved weights on a dataset");
  add_common(*eval_cmd, eval_o, false);
  std::string weights, report_path;
  eval_cmd->add_option("--weights", weights, "Weight file")->required();
  eval_cmd->add_option("--report", report_path, "Write the metrics report as JSON");

  auto* cv_cmd = app.add_subcommand("crossval", "k-fold cross-validation");
  add_common(*cv_cmd, cv_o);

  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare backprop gradients with finite differences");
  add_common(*gc_cmd, gc_o, false);
  GradCheckOptions gopt;
  gc_cmd->add_option("--eps", gopt.epsilon, "Finite-difference step");
  gc_cmd->add_option("--tolerance", gopt.tolerance, "Largest accepted relative error");
  gc_cmd->add_option("--batch", gopt.batch, "Batch size of the random input");
  gc_cmd->add_option("--max-params", gopt.max_params, "Refuse larger models unless --force");
  gc_cmd->add_flag("--force", gopt.force, "Run even when the model is large");
  gc_cmd->add_flag("--inject-backward-fault", gopt.inject_fault)->group("");

  auto* pre_cmd = app.add_subcommand("preprocess", "Resample every record to a common length");
  std::string pre_manifest, pre_out;
  std::size_t target_len = 0;
  pre_cmd->add_option("--manifest", pre_manifest, "Input manifest")->required();
  pre_cmd->add_option("--target-len", target_len, "Samples per lead (0 = largest power of two not above the input)");
  pre_cmd->add_option("--out", pre_out, "Output dataset directory")->required();

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic multi-lead dataset");
  SynthConfig sc;
  std::string synth_out;
  synth_cmd->add_option("--records", sc.n_records, "Number of records");
  synth_cmd->add_option("--classes", sc.n_classes, "Number of classes");
  synth_cmd->add_option("--leads", sc.n_leads, "Leads per record");
  synth_cmd->add_option("--samples", sc.n_samples, "Samples per lead");
  synth_cmd->add_option("--noise", sc.noise_std, "Gaussian noise standard deviation");
  synth_cmd->add_option("--seed", sc.seed, "Generator seed");
  synth_cmd->add_option("--rate", sc.sample_rate, "Sample rate in Hz");
  synth_cmd->add_option("--per-subject", sc.records_per_subject, "Records per subject");
  synth_cmd->add_option("--out", synth_out, "Output dataset directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_o, out, err);
    if (eval_cmd->parsed()) return cmd_eval(eval_o, weights, report_path, out, err);
    if (cv_cmd->parsed()) return cmd_crossval(cv_o, out, err);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_o, gopt, out, err);
    if (pre_cmd->parsed()) return cmd_preprocess(pre_manifest, target_len, pre_out, out);
    if (synth_cmd->parsed()) return cmd_synth(sc, synth_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DatasetError& e) {
    print_dataset_error(e, err);
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}

}  // namespace seecg::cli
