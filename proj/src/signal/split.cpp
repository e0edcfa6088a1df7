#include <algorithm>
#include <cmath>
#include <map>

#include "seecg/random.hpp"
#include "seecg/signal.hpp"

namespace seecg {

namespace {

// Record indices per group, groups in a seeded random order. Groups are sorted by
// key first so the order does not depend on how the records happen to be listed.
std::vector<std::vector<std::size_t>> shuffled_groups(const std::vector<EcgRecord>& records, std::uint64_t seed,
                                                      SplitMode mode) {
  std::map<std::string, std::vector<std::size_t>> by_key;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_key[mode == SplitMode::BySubject ? records[i].group_key() : records[i].record_id].push_back(i);
  }
  std::vector<std::vector<std::size_t>> groups;
  groups.reserve(by_key.size());
  for (auto& [key, idx] : by_key) groups.push_back(std::move(idx));
  Rng rng(sub_seed(seed, "split"));
  rng.shuffle(groups);
  return groups;
}

std::vector<std::size_t> flatten(std::span<const std::vector<std::size_t>> groups) {
  std::vector<std::size_t> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TrainTestSplit split(const std::vector<EcgRecord>& records, double train_fraction, std::uint64_t seed, SplitMode mode) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValueError("split: train fraction must lie in (0, 1)");
  }
  const auto groups = shuffled_groups(records, seed, mode);
  if (groups.size() < 2) throw DataError("split: need at least 2 distinct subjects, got " + std::to_string(groups.size()));
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(groups.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, groups.size() - 1);
  const std::span<const std::vector<std::size_t>> all(groups);
  return {flatten(all.first(n_train)), flatten(all.subspan(n_train))};
}

std::vector<std::vector<std::size_t>> kfold(const std::vector<EcgRecord>& records, std::size_t k, std::uint64_t seed,
                                            SplitMode mode) {
  if (k < 2) throw ValueError("kfold: need at least 2 folds");
  const auto groups = shuffled_groups(records, seed, mode);
  if (groups.size() < k) {
    throw DataError("kfold: " + std::to_string(groups.size()) + " distinct subjects cannot fill " + std::to_string(k) +
                    " folds");
  }
  std::vector<std::vector<std::vector<std::size_t>>> per_fold(k);
  for (std::size_t i = 0; i < groups.size(); ++i) per_fold[i % k].push_back(groups[i]);
  std::vector<std::vector<std::size_t>> out;
  for (const auto& f : per_fold) out.push_back(flatten(f));
  return out;
}

}  // namespace seecg
