#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "seecg/layers.hpp"

namespace seecg {

struct ModelConfig {
  std::size_t n_leads = 0;
  std::size_t n_samples = 0;
  std::size_t n_classes = 0;
  std::size_t stem_kernel = 25;
  std::size_t stage2_kernel = 15;
  std::vector<std::size_t> branch_kernels{3, 5, 7};
  std::size_t stem_channels = 16;
  std::size_t stage2_channels = 32;
  std::size_t branch_channels = 32;
  std::size_t block1d_channels = 64;
  std::size_t blocks_per_branch_2d = 2;
  std::size_t blocks_per_branch_1d = 2;
  std::size_t se_ratio = 16;
  bool use_2d_blocks = true;
  bool use_se = true;
  bool use_parallel = true;

  // Throws ConfigError naming the first invalid field.
  void validate() const;

  // Branch kernels actually built: all of them, or only one when use_parallel is off
  // (kernel 5 if listed, otherwise the middle entry).
  std::vector<std::size_t> active_branch_kernels() const;

  // Stable text form of every structural field; the weight-file fingerprint hashes it.
  std::string canonical() const;
  std::uint64_t fingerprint() const;

  bool operator==(const ModelConfig&) const = default;
};

// Time extent after a same-padded convolution with the given stride.
inline std::size_t strided_extent(std::size_t in, std::size_t stride) { return (in + stride - 1) / stride; }

template <typename T>
struct Branch {
  std::size_t kernel = 0;
  std::vector<ResBlock<T>> blocks2d;
  std::vector<ResBlock<T>> blocks1d;
};

// Input [N, n_leads, n_samples] is viewed as a one-channel time × lead image:
//   stem conv (stem_kernel × 1, stride 2) → stage-2 block → per branch:
//   2-D blocks → fold leads into channels → 1-D blocks → global average pool
//   → concat over branches → linear classifier producing logits.
// Every block strides time by 2 in its first conv; the lead axis is never strided.
template <typename T>
struct Model {
  ModelConfig config;
  Tensor<T> stem_weight;
  std::optional<ResBlock<T>> stage2;
  std::vector<Branch<T>> branches;
  Tensor<T> classifier_weight;
  Tensor<T> classifier_bias;

  // Registry in a fixed order; names are unique.
  std::vector<ParamRef<T>> parameters();
  // Batch-norm running statistics: saved with the weights but not trained.
  std::vector<ParamRef<T>> buffers();

  void set_mode(Mode mode);
  Mode mode() const;

  Tensor<T> forward(const Tensor<T>& batch);
  // Evaluation-mode forward that leaves the model untouched, safe to call concurrently.
  Tensor<T> infer(const Tensor<T>& batch) const;
};

// Throws ConfigError for invalid configs, including a time axis that is already down
// to a single sample when a strided stage is reached (the error names that stage).
template <typename T>
Model<T> build(const ModelConfig& config, std::uint64_t seed);

template <typename T>
std::size_t param_count(Model<T>& model);

// Little-endian file: magic, format version, config fingerprint, record count, then
// per tensor (parameters followed by buffers): name length, name, rank, extents,
// float32 values; closed by a checksum over all preceding bytes.
inline constexpr std::uint32_t kWeightFormatVersion = 1;

template <typename T>
void save_weights(Model<T>& model, const std::filesystem::path& path);

// Throws ConfigMismatchError when the file was written for another config and
// FormatError when it is truncated or corrupted.
template <typename T>
Model<T> load_weights(const ModelConfig& config, const std::filesystem::path& path);

}  // namespace seecg
