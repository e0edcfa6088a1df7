#include <cmath>

#include "seecg/model.hpp"
#include "seecg/random.hpp"

namespace seecg {

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Tracks the time extent through the strided stages so that a configuration whose
// time axis runs out is rejected at build time, naming the stage.
class TimePlan {
 public:
  explicit TimePlan(std::size_t samples) : extent_(samples) {}

  void stride2(const std::string& stage) {
    if (extent_ < 2) {
      throw ConfigError("n_samples", "time axis is down to " + std::to_string(extent_) +
                                         " sample(s) before strided stage '" + stage +
                                         "'; use longer inputs or fewer blocks");
    }
    extent_ = strided_extent(extent_, 2);
  }

  std::size_t extent() const { return extent_; }

 private:
  std::size_t extent_;
};

ResBlockSpec block_spec(const ModelConfig& c, std::size_t k, std::size_t in, std::size_t out, BlockDim dim) {
  ResBlockSpec spec;
  spec.kernel_size = k;
  spec.in_channels = in;
  spec.out_channels = out;
  spec.stride = 2;
  spec.dim = dim;
  spec.se_enabled = c.use_se;
  spec.se_ratio = c.se_ratio;
  return spec;
}

std::string branch_name(std::size_t kernel) { return "branch_k" + std::to_string(kernel); }

// Fan-in-scaled uniform init. Conv kernels feed ReLUs (He bound sqrt(6 / fan_in));
// dense layers use 1 / sqrt(fan_in). Biases and BN shifts start at 0, BN scales at 1.
template <typename T>
void initialize(const ParamRef<T>& p, std::uint64_t seed) {
  Tensor<T>& t = *p.tensor;
  if (ends_with(p.name, ".gamma")) {
    for (auto& v : t.data()) v = T(1);
    return;
  }
  const bool conv = t.rank() >= 3;
  const bool dense = t.rank() == 2;
  if (!conv && !dense) {
    for (auto& v : t.data()) v = T(0);
    return;
  }
  const std::size_t fan_in = t.numel() / t.extent(0);
  const double bound = conv ? std::sqrt(6.0 / static_cast<double>(fan_in)) : 1.0 / std::sqrt(static_cast<double>(fan_in));
  Rng rng(sub_seed(seed, p.name));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
Tensor<T> fold_leads(const Tensor<T>& x) {
  // [N,C,T,L] → [N,C,L,T] → [N, C·L, T]
  const Tensor<T> swapped = transpose_last2(x);
  return reshape(swapped, Shape{x.extent(0), x.extent(1) * x.extent(3), x.extent(2)});
}

}  // namespace

template <typename T>
Model<T> build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model<T> m;
  m.config = config;
  TimePlan plan(config.n_samples);

  plan.stride2("stem");
  m.stem_weight = Tensor<T>(Shape{config.stem_channels, 1, config.stem_kernel, 1});
  std::size_t channels = config.stem_channels;

  if (config.use_2d_blocks) {
    plan.stride2("stage2");
    m.stage2.emplace(block_spec(config, config.stage2_kernel, channels, config.stage2_channels, BlockDim::TwoD));
    channels = config.stage2_channels;
  }

  const TimePlan after_trunk = plan;
  for (std::size_t k : config.active_branch_kernels()) {
    Branch<T> branch;
    branch.kernel = k;
    TimePlan bplan = after_trunk;
    std::size_t c = channels;
    if (config.use_2d_blocks) {
      for (std::size_t i = 0; i < config.blocks_per_branch_2d; ++i) {
        bplan.stride2(branch_name(k) + ".block2d_" + std::to_string(i));
        branch.blocks2d.emplace_back(block_spec(config, k, c, config.branch_channels, BlockDim::TwoD));
        c = config.branch_channels;
      }
    }
    c *= config.n_leads;
    for (std::size_t i = 0; i < config.blocks_per_branch_1d; ++i) {
      bplan.stride2(branch_name(k) + ".block1d_" + std::to_string(i));
      branch.blocks1d.emplace_back(block_spec(config, k, c, config.block1d_channels, BlockDim::OneD));
      c = config.block1d_channels;
    }
    m.branches.push_back(std::move(branch));
  }

  const std::size_t features = m.branches.size() * config.block1d_channels;
  m.classifier_weight = Tensor<T>(Shape{config.n_classes, features});
  m.classifier_bias = Tensor<T>(Shape{config.n_classes});

  for (const auto& p : m.parameters()) initialize(p, seed);
  return m;
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::parameters() {
  std::vector<ParamRef<T>> out;
  out.push_back({"stem.weight", &stem_weight});
  if (stage2) stage2->collect_parameters("stage2", out);
  for (auto& b : branches) {
    const std::string name = branch_name(b.kernel);
    for (std::size_t i = 0; i < b.blocks2d.size(); ++i)
      b.blocks2d[i].collect_parameters(name + ".block2d_" + std::to_string(i), out);
    for (std::size_t i = 0; i < b.blocks1d.size(); ++i)
      b.blocks1d[i].collect_parameters(name + ".block1d_" + std::to_string(i), out);
  }
  out.push_back({"classifier.weight", &classifier_weight});
  out.push_back({"classifier.bias", &classifier_bias});
  return out;
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::buffers() {
  std::vector<ParamRef<T>> out;
  if (stage2) stage2->collect_buffers("stage2", out);
  for (auto& b : branches) {
    const std::string name = branch_name(b.kernel);
    for (std::size_t i = 0; i < b.blocks2d.size(); ++i)
      b.blocks2d[i].collect_buffers(name + ".block2d_" + std::to_string(i), out);
    for (std::size_t i = 0; i < b.blocks1d.size(); ++i)
      b.blocks1d[i].collect_buffers(name + ".block1d_" + std::to_string(i), out);
  }
  return out;
}

template <typename T>
void Model<T>::set_mode(Mode mode) {
  if (stage2) stage2->set_mode(mode);
  for (auto& b : branches) {
    for (auto& blk : b.blocks2d) blk.set_mode(mode);
    for (auto& blk : b.blocks1d) blk.set_mode(mode);
  }
}

template <typename T>
Mode Model<T>::mode() const {
  return branches.at(0).blocks1d.at(0).bn1.mode;
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& batch) {
  if (batch.rank() != 3) {
    throw ShapeError("forward", "rank", "expected [N, leads, samples], got " + shape_str(batch.shape()));
  }
  if (batch.extent(1) != config.n_leads) {
    throw ShapeError("forward", "leads",
                     "expected " + std::to_string(config.n_leads) + ", got " + std::to_string(batch.extent(1)));
  }
  if (batch.extent(2) != config.n_samples) {
    throw ShapeError("forward", "samples",
                     "expected " + std::to_string(config.n_samples) + ", got " + std::to_string(batch.extent(2)));
  }
  const std::size_t n = batch.extent(0);

  Tensor<T> x;
  {
    NamedScope<T> scope("stem");
    // [N, leads, samples] → one-channel [N, 1, samples, leads] image
    const Tensor<T> image = transpose_last2(reshape(batch, Shape{n, 1, config.n_leads, config.n_samples}));
    const std::size_t pad = (config.stem_kernel - 1) / 2;
    x = conv2d(image, track(stem_weight), Conv2dOptions{{2, 1}, {pad, 0}});
  }
  if (stage2) {
    NamedScope<T> scope("stage2");
    x = res_block_forward(x, *stage2);
  }

  std::vector<Tensor<T>> features;
  features.reserve(branches.size());
  for (auto& b : branches) {
    NamedScope<T> scope(branch_name(b.kernel));
    Tensor<T> h = x;
    for (std::size_t i = 0; i < b.blocks2d.size(); ++i) {
      NamedScope<T> inner("block2d_" + std::to_string(i));
      h = res_block_forward(h, b.blocks2d[i]);
    }
    {
      NamedScope<T> inner("fold");
      h = fold_leads(h);
    }
    for (std::size_t i = 0; i < b.blocks1d.size(); ++i) {
      NamedScope<T> inner("block1d_" + std::to_string(i));
      h = res_block_forward(h, b.blocks1d[i]);
    }
    NamedScope<T> inner("pool");
    features.push_back(global_avg_pool(h));
  }

  NamedScope<T> scope("classifier");
  const Tensor<T> joined = features.size() == 1 ? features.front() : concat(std::span<const Tensor<T>>(features), 1);
  return linear(joined, track(classifier_weight), track(classifier_bias));
}

template <typename T>
Tensor<T> Model<T>::infer(const Tensor<T>& batch) const {
  if (mode() != Mode::Eval) throw ValueError("infer: model must be in evaluation mode");
  NoRecording<T> off;
  // Evaluation-mode batch norm reads its state only, so nothing is mutated here.
  return const_cast<Model&>(*this).forward(batch);
}

template <typename T>
std::size_t param_count(Model<T>& model) {
  const auto params = model.parameters();
  return param_count(std::span<const ParamRef<T>>(params));
}

template struct Model<float>;
template struct Model<double>;
template Model<float> build(const ModelConfig&, std::uint64_t);
template Model<double> build(const ModelConfig&, std::uint64_t);
template std::size_t param_count(Model<float>&);
template std::size_t param_count(Model<double>&);

}  // namespace seecg
