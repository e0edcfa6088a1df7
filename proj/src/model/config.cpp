#include <algorithm>
#include <set>
#include <sstream>

#include "seecg/model.hpp"
#include "seecg/random.hpp"

namespace seecg {

namespace {

void require_positive(std::size_t v, const char* field) {
  if (v == 0) throw ConfigError(field, "must be a positive integer");
}

void require_odd_kernel(std::size_t k, const std::string& field) {
  if (k == 0 || k % 2 == 0) throw ConfigError(field, "kernel must be odd and positive, got " + std::to_string(k));
}

}  // namespace

void ModelConfig::validate() const {
  require_positive(n_leads, "n_leads");
  require_positive(n_samples, "n_samples");
  if (n_classes < 2) throw ConfigError("n_classes", "need at least 2 classes, got " + std::to_string(n_classes));
  require_odd_kernel(stem_kernel, "stem_kernel");
  require_odd_kernel(stage2_kernel, "stage2_kernel");
  if (branch_kernels.empty()) throw ConfigError("branch_kernels", "must not be empty");
  std::set<std::size_t> seen;
  for (std::size_t k : branch_kernels) {
    require_odd_kernel(k, "branch_kernels");
    if (!seen.insert(k).second) throw ConfigError("branch_kernels", "duplicate kernel " + std::to_string(k));
  }
  require_positive(stem_channels, "stem_channels");
  require_positive(stage2_channels, "stage2_channels");
  require_positive(branch_channels, "branch_channels");
  require_positive(block1d_channels, "block1d_channels");
  require_positive(blocks_per_branch_2d, "blocks_per_branch_2d");
  require_positive(blocks_per_branch_1d, "blocks_per_branch_1d");
  require_positive(se_ratio, "se_ratio");
}

std::vector<std::size_t> ModelConfig::active_branch_kernels() const {
  if (use_parallel || branch_kernels.size() <= 1) return branch_kernels;
  if (std::find(branch_kernels.begin(), branch_kernels.end(), 5) != branch_kernels.end()) return {5};
  return {branch_kernels[branch_kernels.size() / 2]};
}

std::string ModelConfig::canonical() const {
  std::ostringstream out;
  out << "n_leads=" << n_leads << ";n_samples=" << n_samples << ";n_classes=" << n_classes
      << ";stem_kernel=" << stem_kernel << ";stage2_kernel=" << stage2_kernel << ";branch_kernels=";
  for (std::size_t i = 0; i < branch_kernels.size(); ++i) out << (i ? "," : "") << branch_kernels[i];
  out << ";stem_channels=" << stem_channels << ";stage2_channels=" << stage2_channels
      << ";branch_channels=" << branch_channels << ";block1d_channels=" << block1d_channels
      << ";blocks_per_branch_2d=" << blocks_per_branch_2d << ";blocks_per_branch_1d=" << blocks_per_branch_1d
      << ";se_ratio=" << se_ratio << ";use_2d_blocks=" << use_2d_blocks << ";use_se=" << use_se
      << ";use_parallel=" << use_parallel;
  return out.str();
}

std::uint64_t ModelConfig::fingerprint() const { return fnv1a64(canonical()); }

}  // namespace seecg
