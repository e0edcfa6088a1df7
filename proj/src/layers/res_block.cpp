#include "seecg/layers.hpp"

namespace seecg {

void ResBlockSpec::validate() const {
  if (kernel_size == 0 || kernel_size % 2 == 0) {
    throw ConfigError("kernel_size", "must be odd and positive, got " + std::to_string(kernel_size));
  }
  if (stride != 1 && stride != 2) throw ConfigError("stride", "must be 1 or 2, got " + std::to_string(stride));
  if (in_channels == 0) throw ConfigError("in_channels", "must be positive");
  if (out_channels == 0) throw ConfigError("out_channels", "must be positive");
  if (se_enabled && se_ratio == 0) throw ConfigError("se_ratio", "must be positive");
}

namespace {

const ResBlockSpec& validated(const ResBlockSpec& spec) {
  spec.validate();
  return spec;
}

Shape conv_shape(BlockDim dim, std::size_t out, std::size_t in, std::size_t k) {
  return dim == BlockDim::TwoD ? Shape{out, in, k, 1} : Shape{out, in, k};
}

template <typename T>
Tensor<T> block_conv(const ResBlockSpec& spec, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b,
                     std::size_t stride, std::size_t pad) {
  if (spec.dim == BlockDim::TwoD) {
    const Conv2dOptions opts{{stride, 1}, {pad, 0}};
    return b ? conv2d(x, w, *b, opts) : conv2d(x, w, opts);
  }
  const Conv1dOptions opts{stride, pad};
  return b ? conv1d(x, w, *b, opts) : conv1d(x, w, opts);
}

}  // namespace

template <typename T>
ResBlock<T>::ResBlock(const ResBlockSpec& s)
    : spec(validated(s)),
      bn1(s.in_channels),
      conv1_weight(conv_shape(s.dim, s.out_channels, s.in_channels, s.kernel_size)),
      bn2(s.out_channels),
      conv2_weight(conv_shape(s.dim, s.out_channels, s.out_channels, s.kernel_size)),
      conv2_bias(Shape{s.out_channels}) {
  if (spec.se_enabled) se.emplace(spec.out_channels, spec.se_ratio);
  if (spec.has_projection()) {
    proj_weight.emplace(conv_shape(spec.dim, spec.out_channels, spec.in_channels, 1));
  }
}

template <typename T>
void ResBlock<T>::collect_parameters(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + ".bn1.gamma", &bn1.gamma});
  out.push_back({prefix + ".bn1.beta", &bn1.beta});
  out.push_back({prefix + ".conv1.weight", &conv1_weight});
  out.push_back({prefix + ".bn2.gamma", &bn2.gamma});
  out.push_back({prefix + ".bn2.beta", &bn2.beta});
  out.push_back({prefix + ".conv2.weight", &conv2_weight});
  out.push_back({prefix + ".conv2.bias", &conv2_bias});
  if (se) {
    out.push_back({prefix + ".se.w1", &se->w1});
    out.push_back({prefix + ".se.b1", &se->b1});
    out.push_back({prefix + ".se.w2", &se->w2});
    out.push_back({prefix + ".se.b2", &se->b2});
  }
  if (proj_weight) {
    out.push_back({prefix + ".proj.weight", &*proj_weight});
  }
}

template <typename T>
void ResBlock<T>::collect_buffers(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + ".bn1.running_mean", &bn1.running_mean});
  out.push_back({prefix + ".bn1.running_var", &bn1.running_var});
  out.push_back({prefix + ".bn2.running_mean", &bn2.running_mean});
  out.push_back({prefix + ".bn2.running_var", &bn2.running_var});
}

template <typename T>
void ResBlock<T>::set_mode(Mode mode) {
  bn1.mode = mode;
  bn2.mode = mode;
}

template <typename T>
Tensor<T> res_block_forward(const Tensor<T>& input, ResBlock<T>& block) {
  const ResBlockSpec& spec = block.spec;
  const std::size_t rank = spec.dim == BlockDim::TwoD ? 4 : 3;
  if (input.rank() != rank) {
    throw ShapeError("res_block", "rank", "expected rank " + std::to_string(rank) + ", got " + shape_str(input.shape()));
  }
  if (input.extent(1) != spec.in_channels) {
    throw ShapeError("res_block", "C",
                     "block expects " + std::to_string(spec.in_channels) + " channels, input has " +
                         std::to_string(input.extent(1)));
  }

  Tensor<T> h;
  {
    NamedScope<T> scope("bn1");
    h = relu(batch_norm(input, block.bn1));
  }
  {
    NamedScope<T> scope("conv1");
    h = block_conv<T>(spec, h, track(block.conv1_weight), nullptr, spec.stride, spec.padding());
  }
  {
    NamedScope<T> scope("bn2");
    h = relu(batch_norm(h, block.bn2));
  }
  {
    NamedScope<T> scope("conv2");
    const Tensor<T> bias = track(block.conv2_bias);
    h = block_conv<T>(spec, h, track(block.conv2_weight), &bias, 1, spec.padding());
  }
  if (block.se) {
    NamedScope<T> scope("se");
    h = se_forward(h, *block.se);
  }

  NamedScope<T> scope("skip");
  if (!block.proj_weight) return add(h, input);
  const Tensor<T> skip = block_conv<T>(spec, input, track(*block.proj_weight), nullptr, spec.stride, 0);
  return add(h, skip);
}

template struct ResBlock<float>;
template struct ResBlock<double>;
template Tensor<float> res_block_forward(const Tensor<float>&, ResBlock<float>&);
template Tensor<double> res_block_forward(const Tensor<double>&, ResBlock<double>&);

}  // namespace seecg
