#include <fstream>
#include <sstream>

#include "json.hpp"

#include "seecg/cli.hpp"

namespace seecg::cli {

namespace {

using nlohmann::json;

const char* split_name(SplitMode m) { return m == SplitMode::BySubject ? "subject" : "record"; }
const char* loss_name(LossKind k) { return k == LossKind::Focal ? "focal" : "cross_entropy"; }

json to_json(const RunConfig& c) {
  const ModelConfig& m = c.model;
  const TrainConfig& t = c.train;
  return json{
      {"seed", c.seed},
      {"manifest", c.manifest},
      {"output_dir", c.output_dir},
      {"threads", c.threads},
      {"data", {{"split", split_name(c.split_mode)}, {"train_fraction", c.train_fraction}, {"folds", c.folds}}},
      {"model",
       {{"n_leads", m.n_leads},
        {"n_samples", m.n_samples},
        {"n_classes", m.n_classes},
        {"stem_kernel", m.stem_kernel},
        {"stage2_kernel", m.stage2_kernel},
        {"branch_kernels", m.branch_kernels},
        {"stem_channels", m.stem_channels},
        {"stage2_channels", m.stage2_channels},
        {"branch_channels", m.branch_channels},
        {"block1d_channels", m.block1d_channels},
        {"blocks_per_branch_2d", m.blocks_per_branch_2d},
        {"blocks_per_branch_1d", m.blocks_per_branch_1d},
        {"se_ratio", m.se_ratio},
        {"use_2d_blocks", m.use_2d_blocks},
        {"use_se", m.use_se},
        {"use_parallel", m.use_parallel}}},
      {"train",
       {{"max_epochs", t.max_epochs},
        {"initial_lr", t.initial_lr},
        {"decay_epochs", t.decay_epochs},
        {"decay_factor", t.decay_factor},
        {"batch_size", t.batch_size},
        {"loss", loss_name(t.loss)},
        {"alpha", t.alpha},
        {"gamma", t.gamma},
        {"class_weights", t.class_weights},
        {"adam", {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps}}}}},
  };
}

// Typed readers; `path` is the dotted field name used in errors.
class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& at(const std::string& path) const {
    const json* j = &root_;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = path.find('.', start);
      j = &j->at(path.substr(start, dot - start));
      if (dot == std::string::npos) return *j;
      start = dot + 1;
    }
  }

  std::size_t size(const std::string& path) const { return unsigned_of(at(path), path); }
  std::uint64_t u64(const std::string& path) const { return unsigned_of(at(path), path); }

  double real(const std::string& path) const {
    const json& j = at(path);
    if (!j.is_number()) throw ConfigError(path, "expected a number, got " + std::string(j.type_name()));
    return j.get<double>();
  }

  bool boolean(const std::string& path) const {
    const json& j = at(path);
    if (!j.is_boolean()) throw ConfigError(path, "expected true or false, got " + std::string(j.type_name()));
    return j.get<bool>();
  }

  std::string string(const std::string& path) const {
    const json& j = at(path);
    if (!j.is_string()) throw ConfigError(path, "expected a string, got " + std::string(j.type_name()));
    return j.get<std::string>();
  }

  std::vector<std::size_t> sizes(const std::string& path) const {
    std::vector<std::size_t> out;
    for (const json& e : array(path)) out.push_back(unsigned_of(e, path));
    return out;
  }

  std::vector<double> reals(const std::string& path) const {
    std::vector<double> out;
    for (const json& e : array(path)) {
      if (!e.is_number()) throw ConfigError(path, "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

 private:
  const json& array(const std::string& path) const {
    const json& j = at(path);
    if (!j.is_array()) throw ConfigError(path, "expected an array, got " + std::string(j.type_name()));
    return j;
  }

  static std::uint64_t unsigned_of(const json& j, const std::string& path) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer()) throw ConfigError(path, "must be non-negative, got " + j.dump());
    throw ConfigError(path, "expected a non-negative integer, got " + j.dump());
  }

  const json& root_;
};

RunConfig from_json(const json& j) {
  const Reader r(j);
  RunConfig c;
  c.seed = r.u64("seed");
  c.manifest = r.string("manifest");
  c.output_dir = r.string("output_dir");
  c.threads = r.size("threads");
  const std::string split = r.string("data.split");
  if (split == "subject") {
    c.split_mode = SplitMode::BySubject;
  } else if (split == "record") {
    c.split_mode = SplitMode::ByRecord;
  } else {
    throw ConfigError("data.split", "expected \"subject\" or \"record\", got \"" + split + "\"");
  }
  c.train_fraction = r.real("data.train_fraction");
  c.folds = r.size("data.folds");

  ModelConfig& m = c.model;
  m.n_leads = r.size("model.n_leads");
  m.n_samples = r.size("model.n_samples");
  m.n_classes = r.size("model.n_classes");
  m.stem_kernel = r.size("model.stem_kernel");
  m.stage2_kernel = r.size("model.stage2_kernel");
  m.branch_kernels = r.sizes("model.branch_kernels");
  m.stem_channels = r.size("model.stem_channels");
  m.stage2_channels = r.size("model.stage2_channels");
  m.branch_channels = r.size("model.branch_channels");
  m.block1d_channels = r.size("model.block1d_channels");
  m.blocks_per_branch_2d = r.size("model.blocks_per_branch_2d");
  m.blocks_per_branch_1d = r.size("model.blocks_per_branch_1d");
  m.se_ratio = r.size("model.se_ratio");
  m.use_2d_blocks = r.boolean("model.use_2d_blocks");
  m.use_se = r.boolean("model.use_se");
  m.use_parallel = r.boolean("model.use_parallel");

  TrainConfig& t = c.train;
  t.max_epochs = r.size("train.max_epochs");
  t.initial_lr = r.real("train.initial_lr");
  t.decay_epochs = r.sizes("train.decay_epochs");
  t.decay_factor = r.real("train.decay_factor");
  t.batch_size = r.size("train.batch_size");
  const std::string loss = r.string("train.loss");
  if (loss == "focal") {
    t.loss = LossKind::Focal;
  } else if (loss == "cross_entropy") {
    t.loss = LossKind::CrossEntropy;
  } else {
    throw ConfigError("train.loss", "expected \"focal\" or \"cross_entropy\", got \"" + loss + "\"");
  }
  t.alpha = r.real("train.alpha");
  t.gamma = r.real("train.gamma");
  t.class_weights = r.reals("train.class_weights");
  t.adam.beta1 = r.real("train.adam.beta1");
  t.adam.beta2 = r.real("train.adam.beta2");
  t.adam.eps = r.real("train.adam.eps");
  t.seed = c.seed;
  return c;
}

// Overlays `patch` onto `target`; keys must already exist in `target`.
void merge(json& target, const json& patch, const std::string& prefix) {
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!target.contains(key)) throw ConfigError(path, "unknown field");
    json& slot = target[key];
    if (slot.is_object()) {
      if (!value.is_object()) throw ConfigError(path, "expected an object, got " + std::string(value.type_name()));
      merge(slot, value, path);
    } else {
      slot = value;
    }
  }
}

void apply_override(json& target, const std::string& text) {
  const std::size_t eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(text, "override must look like dotted.key=value");
  }
  const std::string path = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  // Build the nested patch {"a": {"b": value}} and merge it so unknown keys are caught.
  json patch = value;
  std::size_t end = path.size();
  while (true) {
    const std::size_t dot = path.rfind('.', end - 1);
    const std::size_t start = dot == std::string::npos ? 0 : dot + 1;
    const std::string key = path.substr(start, end - start);
    if (key.empty()) throw ConfigError(path, "empty key in override");
    patch = json{{key, std::move(patch)}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  merge(target, patch, "");
}

}  // namespace

std::string to_json_text(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides,
                           const RunConfig& base) {
  json doc = to_json(base);
  if (!json_text.empty()) {
    json patch;
    try {
      patch = json::parse(json_text);
    } catch (const json::parse_error& e) {
      throw ConfigError("<document>", std::string("malformed JSON: ") + e.what());
    }
    if (!patch.is_object()) throw ConfigError("<document>", "top level must be an object");
    merge(doc, patch, "");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig out = from_json(doc);
  if (!(out.train_fraction > 0.0 && out.train_fraction <= 1.0)) {
    throw ConfigError("data.train_fraction", "must be in (0, 1]");
  }
  if (out.folds < 2) throw ConfigError("data.folds", "must be at least 2");
  if (out.threads == 0) throw ConfigError("threads", "must be at least 1");
  try {
    out.train.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("train." + e.field(), e.detail());
  }
  return out;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                          const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), overrides, base);
}

void resolve(RunConfig& config, const DatasetManifest& manifest) {
  ModelConfig& m = config.model;
  auto fill = [](std::size_t& field, std::size_t from_manifest, const char* name) {
    if (field == 0) {
      field = from_manifest;
    } else if (from_manifest != 0 && field != from_manifest) {
      throw ConfigError(std::string("model.") + name, std::to_string(field) + " does not match the manifest's " +
                                                          std::to_string(from_manifest));
    }
  };
  fill(m.n_leads, manifest.n_leads, "n_leads");
  fill(m.n_samples, manifest.n_samples, "n_samples");
  fill(m.n_classes, manifest.classes.size(), "n_classes");
  if (m.n_samples == 0) {
    throw ConfigError("model.n_samples", "not set and the manifest does not fix a record length");
  }
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("model." + e.field(), e.detail());
  }
  if (!config.train.class_weights.empty() && config.train.class_weights.size() != m.n_classes) {
    throw ConfigError("train.class_weights", std::to_string(config.train.class_weights.size()) + " weights for " +
                                                 std::to_string(m.n_classes) + " classes");
  }
}

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.n_leads = 2;
  c.n_samples = 64;
  c.n_classes = 3;
  c.stem_kernel = 5;
  c.stage2_kernel = 5;
  c.branch_kernels = {3, 5};
  c.stem_channels = 4;
  c.stage2_channels = 4;
  c.branch_channels = 4;
  c.block1d_channels = 4;
  c.blocks_per_branch_2d = 1;
  c.blocks_per_branch_1d = 1;
  c.se_ratio = 2;
  return c;
}

}  // namespace seecg::cli
