#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "seecg/gradcheck.hpp"
#include "seecg/model.hpp"
#include "seecg/random.hpp"

using namespace seecg;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.n_leads = 2;
  c.n_samples = 64;
  c.n_classes = 3;
  c.stem_kernel = 5;
  c.stage2_kernel = 5;
  c.stem_channels = 4;
  c.stage2_channels = 4;
  c.branch_channels = 4;
  c.block1d_channels = 4;
  c.blocks_per_branch_2d = 1;
  c.blocks_per_branch_1d = 1;
  c.se_ratio = 2;
  return c;
}

template <typename T>
Tensor<T> random_batch(Rng& rng, const ModelConfig& c, std::size_t n) {
  Tensor<T> t(Shape{n, c.n_leads, c.n_samples});
  for (auto& v : t.data()) v = static_cast<T>(rng.normal());
  return t;
}

std::set<std::string> names_of(Model<float>& m) {
  std::set<std::string> out;
  for (const auto& p : m.parameters()) out.insert(p.name);
  return out;
}

bool any_contains(const std::set<std::string>& names, const std::string& needle) {
  for (const auto& n : names)
    if (n.find(needle) != std::string::npos) return true;
  return false;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("seecg_model_test_" + name);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c = tiny_config();
  EXPECT_NO_THROW(c.validate());
  auto field_of = [](ModelConfig bad) {
    try {
      bad.validate();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  ModelConfig bad = c;
  bad.n_classes = 1;
  EXPECT_EQ(field_of(bad), "n_classes");
  bad = c;
  bad.stem_kernel = 4;
  EXPECT_EQ(field_of(bad), "stem_kernel");
  bad = c;
  bad.branch_kernels = {};
  EXPECT_EQ(field_of(bad), "branch_kernels");
  bad = c;
  bad.branch_kernels = {3, 6};
  EXPECT_EQ(field_of(bad), "branch_kernels");
  bad = c;
  bad.n_leads = 0;
  EXPECT_EQ(field_of(bad), "n_leads");
  bad = c;
  bad.block1d_channels = 0;
  EXPECT_EQ(field_of(bad), "block1d_channels");
}

TEST(ModelConfig, FingerprintTracksStructure) {
  ModelConfig a = tiny_config();
  ModelConfig b = a;
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  b.n_classes = 4;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  b = a;
  b.use_se = false;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(Model, DefaultConfigProducesLogitsPerRecord) {
  ModelConfig c;
  c.n_leads = 8;
  c.n_samples = 2048;
  c.n_classes = 34;
  auto m = build<float>(c, 1);
  Rng rng(1);
  auto logits = m.forward(random_batch<float>(rng, c, 2));
  EXPECT_EQ(logits.shape(), (Shape{2, 34}));
  for (float v : logits.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Model, ShapeContractOverRandomConfigs) {
  Rng rng(2);
  for (int trial = 0; trial < 12; ++trial) {
    ModelConfig c;
    c.n_leads = 1 + rng.index(3);
    c.n_samples = 32 + rng.index(40);
    c.n_classes = 2 + rng.index(5);
    c.stem_kernel = 1 + 2 * rng.index(4);
    c.stage2_kernel = 1 + 2 * rng.index(3);
    c.branch_kernels = {3, 5, 7};
    c.branch_kernels.resize(1 + rng.index(3));
    c.stem_channels = 1 + rng.index(3);
    c.stage2_channels = 1 + rng.index(4);
    c.branch_channels = 1 + rng.index(4);
    c.block1d_channels = 1 + rng.index(4);
    c.blocks_per_branch_2d = 1 + rng.index(2);
    c.blocks_per_branch_1d = 1 + rng.index(2);
    c.se_ratio = 1 + rng.index(3);
    c.use_se = rng.index(2) == 1;
    c.use_2d_blocks = rng.index(2) == 1;
    c.use_parallel = rng.index(2) == 1;
    auto m = build<float>(c, trial);
    const std::size_t n = 2 + rng.index(3);
    auto logits = m.forward(random_batch<float>(rng, c, n));
    EXPECT_EQ(logits.shape(), (Shape{n, c.n_classes})) << c.canonical();
  }
}

TEST(Model, SingleBranchWithoutParallel) {
  ModelConfig c = tiny_config();
  c.use_parallel = false;
  auto m = build<float>(c, 0);
  ASSERT_EQ(m.branches.size(), 1u);
  EXPECT_EQ(m.branches[0].kernel, 5u);
  auto names = names_of(m);
  EXPECT_FALSE(any_contains(names, "branch_k3"));
  EXPECT_FALSE(any_contains(names, "branch_k7"));
  EXPECT_TRUE(any_contains(names, "branch_k5"));

  c.branch_kernels = {3, 7, 9};
  EXPECT_EQ(c.active_branch_kernels(), (std::vector<std::size_t>{7}));
}

TEST(Model, AblationsRemoveTheirComponents) {
  ModelConfig c = tiny_config();
  auto full = build<float>(c, 0);
  auto all = names_of(full);
  EXPECT_TRUE(any_contains(all, ".se."));
  EXPECT_TRUE(any_contains(all, "stage2."));
  EXPECT_TRUE(any_contains(all, ".block2d_"));
  EXPECT_EQ(full.branches.size(), 3u);

  ModelConfig no_se = c;
  no_se.use_se = false;
  auto m1 = build<float>(no_se, 0);
  EXPECT_FALSE(any_contains(names_of(m1), ".se."));

  ModelConfig no_2d = c;
  no_2d.use_2d_blocks = false;
  auto m2 = build<float>(no_2d, 0);
  auto n2 = names_of(m2);
  EXPECT_FALSE(any_contains(n2, "stage2"));
  EXPECT_FALSE(any_contains(n2, "block2d"));
  EXPECT_TRUE(any_contains(n2, "block1d"));

  Rng rng(3);
  const auto batch = random_batch<float>(rng, c, 2);
  EXPECT_EQ(m1.forward(batch).shape(), (Shape{2, 3}));
  EXPECT_EQ(m2.forward(batch).shape(), (Shape{2, 3}));
}

TEST(Model, ParameterNamesAreUnique) {
  ModelConfig c = tiny_config();
  auto m = build<float>(c, 0);
  const auto params = m.parameters();
  EXPECT_EQ(names_of(m).size(), params.size());
  std::set<std::string> buffers;
  for (const auto& b : m.buffers()) EXPECT_TRUE(buffers.insert(b.name).second);
  for (const auto& b : buffers) EXPECT_FALSE(names_of(m).count(b));
}

TEST(Model, BuildIsDeterministic) {
  ModelConfig c = tiny_config();
  auto a = build<float>(c, 42);
  auto b = build<float>(c, 42);
  auto d = build<float>(c, 43);
  auto pa = a.parameters(), pb = b.parameters(), pd = d.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(pa[i].tensor->values(), pb[i].tensor->values()) << pa[i].name;
    differs = differs || pa[i].tensor->values() != pd[i].tensor->values();
  }
  EXPECT_TRUE(differs);
}

TEST(Model, InitializationFollowsFanIn) {
  ModelConfig c = tiny_config();
  auto m = build<double>(c, 5);
  for (const auto& p : m.parameters()) {
    const Tensor<double>& t = *p.tensor;
    if (p.name.ends_with(".gamma")) {
      for (double v : t.data()) EXPECT_EQ(v, 1.0);
    } else if (t.rank() <= 1) {
      for (double v : t.data()) EXPECT_EQ(v, 0.0) << p.name;
    } else {
      const double fan_in = static_cast<double>(t.numel() / t.extent(0));
      const double bound = t.rank() >= 3 ? std::sqrt(6.0 / fan_in) : 1.0 / std::sqrt(fan_in);
      for (double v : t.data()) EXPECT_LE(std::abs(v), bound) << p.name;
    }
  }
  for (const auto& b : m.buffers()) {
    const double expected = b.name.ends_with("running_var") ? 1.0 : 0.0;
    for (double v : b.tensor->data()) EXPECT_EQ(v, expected);
  }
}

TEST(Model, TimeCollapseIsRejectedNamingTheStage) {
  ModelConfig c = tiny_config();
  c.n_samples = 4;  // stem → 2, stage2 → 1, nothing left for the branch blocks
  try {
    (void)build<float>(c, 0);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "n_samples");
    EXPECT_NE(std::string(e.what()).find("branch_k3.block2d_0"), std::string::npos) << e.what();
  }
  c.n_samples = 16;
  EXPECT_NO_THROW((void)build<float>(c, 0));
}

TEST(Model, ForwardRejectsMismatchedBatch) {
  ModelConfig c = tiny_config();
  auto m = build<float>(c, 0);
  auto axis_of = [&](Shape shape) {
    try {
      (void)m.forward(Tensor<float>(std::move(shape)));
    } catch (const ShapeError& e) {
      EXPECT_NE(std::string(e.what()).find("expected"), std::string::npos);
      return e.axis();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(axis_of({2, 3, 64}), "leads");
  EXPECT_EQ(axis_of({2, 2, 63}), "samples");
  EXPECT_EQ(axis_of({2, 64}), "rank");
}

TEST(Model, ZeroBatchGivesFiniteLogits) {
  ModelConfig c = tiny_config();
  auto m = build<float>(c, 0);
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    m.set_mode(mode);
    auto logits = m.forward(Tensor<float>(Shape{3, 2, 64}));
    for (float v : logits.data()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Model, EvaluationIsPerRecordAndPermutationCovariant) {
  ModelConfig c = tiny_config();
  auto m = build<double>(c, 8);
  m.set_mode(Mode::Eval);
  Rng rng(8);
  auto batch = random_batch<double>(rng, c, 3);
  const std::size_t rec = c.n_leads * c.n_samples;

  Tensor<double> dup(Shape{2, c.n_leads, c.n_samples});
  for (std::size_t i = 0; i < rec; ++i) dup[i] = dup[rec + i] = batch[rec + i];
  auto d = m.infer(dup);
  for (std::size_t k = 0; k < c.n_classes; ++k) EXPECT_EQ(d[k], d[c.n_classes + k]);

  const std::size_t perm[] = {2, 0, 1};
  Tensor<double> shuffled(batch.shape());
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t i = 0; i < rec; ++i) shuffled[r * rec + i] = batch[perm[r] * rec + i];
  auto y = m.infer(batch);
  auto ys = m.infer(shuffled);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < c.n_classes; ++k)
      EXPECT_NEAR(ys[r * c.n_classes + k], y[perm[r] * c.n_classes + k], 1e-12);

  EXPECT_EQ(m.infer(batch).values(), y.values());
  m.set_mode(Mode::Train);
  EXPECT_THROW((void)m.infer(batch), ValueError);
}

TEST(Model, MatchesStraightLineComposition) {
  ModelConfig c = tiny_config();
  auto m = build<double>(c, 9);
  auto ref = m;  // separate BN state, since training-mode forwards update running statistics
  Rng rng(9);
  auto batch = random_batch<double>(rng, c, 3);
  auto logits = m.forward(batch);

  const std::size_t n = 3, leads = c.n_leads, samples = c.n_samples;
  Tensor<double> image(Shape{n, 1, samples, leads});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t l = 0; l < leads; ++l)
      for (std::size_t t = 0; t < samples; ++t) image[(b * samples + t) * leads + l] = batch[(b * leads + l) * samples + t];
  auto x = conv2d(image, ref.stem_weight, Conv2dOptions{{2, 1}, {(c.stem_kernel - 1) / 2, 0}});
  x = res_block_forward(x, *ref.stage2);

  std::vector<Tensor<double>> pooled;
  for (auto& br : ref.branches) {
    auto h = x;
    for (auto& blk : br.blocks2d) h = res_block_forward(h, blk);
    const std::size_t ch = h.extent(1), tt = h.extent(2), ll = h.extent(3);
    Tensor<double> folded(Shape{n, ch * ll, tt});
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t cc = 0; cc < ch; ++cc)
        for (std::size_t l = 0; l < ll; ++l)
          for (std::size_t t = 0; t < tt; ++t)
            folded[(b * ch * ll + cc * ll + l) * tt + t] = h[((b * ch + cc) * tt + t) * ll + l];
    h = folded;
    for (auto& blk : br.blocks1d) h = res_block_forward(h, blk);
    pooled.push_back(global_avg_pool(h));
  }
  const std::size_t width = pooled.size() * c.block1d_channels;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < c.n_classes; ++k) {
      double acc = ref.classifier_bias[k];
      for (std::size_t j = 0; j < width; ++j) {
        const auto& src = pooled[j / c.block1d_channels];
        acc += ref.classifier_weight[k * width + j] * src[b * c.block1d_channels + j % c.block1d_channels];
      }
      EXPECT_NEAR(logits[b * c.n_classes + k], acc, 1e-5);
    }
  }
}

TEST(Model, ParamCountMatchesRegistryWalk) {
  Tensor<float> w(Shape{2, 4}), b(Shape{2});
  std::vector<ParamRef<float>> linear_params{{"w", &w}, {"b", &b}};
  EXPECT_EQ(param_count(std::span<const ParamRef<float>>(linear_params)), 10u);

  // Independent count from the config alone.
  ModelConfig c = tiny_config();
  c.use_parallel = false;
  auto m = build<float>(c, 0);
  auto block = [&](std::size_t k, std::size_t in, std::size_t out) {
    std::size_t n = 2 * in + out * in * k + 2 * out + out * out * k + out;
    const std::size_t h = std::max<std::size_t>(1, out / c.se_ratio);
    n += h * out + h + out * h + out;
    n += out * in;  // projection: every block strides
    return n;
  };
  std::size_t expected = c.stem_channels * c.stem_kernel;
  expected += block(c.stage2_kernel, c.stem_channels, c.stage2_channels);
  expected += block(5, c.stage2_channels, c.branch_channels);
  expected += block(5, c.branch_channels * c.n_leads, c.block1d_channels);
  expected += c.n_classes * c.block1d_channels + c.n_classes;
  EXPECT_EQ(param_count(m), expected);
}

TEST(Weights, RoundTripIsBitwise) {
  ModelConfig c = tiny_config();
  auto m = build<float>(c, 11);
  Rng rng(11);
  auto batch = random_batch<float>(rng, c, 2);
  (void)m.forward(batch);  // move running statistics away from their defaults
  m.set_mode(Mode::Eval);
  const auto before = m.forward(batch);
  const auto path = temp_file("roundtrip.bin");
  save_weights(m, path);

  auto loaded = load_weights<float>(c, path);
  loaded.set_mode(Mode::Eval);
  EXPECT_EQ(loaded.forward(batch).values(), before.values());
  EXPECT_EQ(param_count(loaded), param_count(m));
  auto pa = m.parameters(), pb = loaded.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].tensor->values(), pb[i].tensor->values());
  auto ba = m.buffers(), bb = loaded.buffers();
  for (std::size_t i = 0; i < ba.size(); ++i) EXPECT_EQ(ba[i].tensor->values(), bb[i].tensor->values());

  const auto again = temp_file("roundtrip_again.bin");
  save_weights(loaded, again);
  EXPECT_EQ(slurp(path), slurp(again));
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST(Weights, ConfigMismatchIsStructured) {
  ModelConfig c = tiny_config();
  auto m = build<float>(c, 0);
  const auto path = temp_file("mismatch.bin");
  save_weights(m, path);
  ModelConfig other = c;
  other.n_classes = 4;
  EXPECT_THROW((void)load_weights<float>(other, path), ConfigMismatchError);
  std::filesystem::remove(path);
}

TEST(Weights, DamagedFilesAreRejected) {
  ModelConfig c = tiny_config();
  auto m = build<float>(c, 0);
  const auto path = temp_file("damaged.bin");
  save_weights(m, path);
  const std::string good = slurp(path);

  spit(path, good.substr(0, good.size() - 1));
  try {
    (void)load_weights<float>(c, path);
    FAIL();
  } catch (const ConfigMismatchError&) {
    FAIL() << "truncation reported as config mismatch";
  } catch (const FormatError&) {
  }

  std::string flipped = good;
  flipped[good.size() / 2] = static_cast<char>(flipped[good.size() / 2] ^ 0x10);
  spit(path, flipped);
  EXPECT_THROW((void)load_weights<float>(c, path), FormatError);

  spit(path, good.substr(0, 10));
  EXPECT_THROW((void)load_weights<float>(c, path), FormatError);

  spit(path, "not a weight file at all");
  EXPECT_THROW((void)load_weights<float>(c, path), FormatError);
  std::filesystem::remove(path);
}

TEST(Model, EndToEndGradientCheck) {
  ModelConfig c = tiny_config();
  auto m = build<double>(c, 13);
  Rng rng(13);
  // Move parameters off their zero/one initial values so every path carries signal.
  for (const auto& p : m.parameters())
    for (auto& v : p.tensor->data()) v += 0.2 * rng.uniform(-1.0, 1.0);
  auto batch = random_batch<double>(rng, c, 4);
  const std::size_t labels[] = {0, 2, 1, 2};
  Tensor<double> onehot(Shape{4, 3});
  for (std::size_t i = 0; i < 4; ++i) onehot[i * 3 + labels[i]] = -0.25;
  auto fresh = m;
  const auto params = m.parameters();

  auto report = grad_check<double>(
      [&] {
        // Each evaluation starts from the same running statistics so all passes are identical.
        for (std::size_t i = 0; i < fresh.buffers().size(); ++i)
          *m.buffers()[i].tensor = *fresh.buffers()[i].tensor;
        return sum(mul(log_softmax(m.forward(batch)), onehot));
      },
      params, 1e-4);
  EXPECT_LT(report.max_relative_error, 1e-4) << report.worst_parameter;
}
