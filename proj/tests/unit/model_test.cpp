#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include <unistd.h>

#include <gtest/gtest.h>

#include "ftcn/arch/canonical.hpp"
#include "ftcn/arch/passes.hpp"
#include "ftcn/model/checkpoint.hpp"
#include "ftcn/model/grad_suite.hpp"
#include "ftcn/model/model.hpp"
#include "ftcn/model/transformer.hpp"
#include "ftcn/tensor/gradcheck.hpp"
#include "ftcn/tensor/stn_io.hpp"
#include "test_util.hpp"

namespace ftcn::model {
namespace {

using Leaves = std::map<std::string, Var>;

TensorD zeros(Shape s) { return TensorD(std::move(s), 0.0); }

TEST(Embed, HandExample) {
  Tape<double> t;
  const Var f = t.constant(TensorD({1, 2}, std::vector<double>{3, 4}));
  const Var w = t.constant(TensorD({1, 1}, std::vector<double>{2}));
  const Var cls = t.constant(TensorD({1}, std::vector<double>{1}));
  const Var pos = t.constant(TensorD({3, 1}, std::vector<double>{10, 20, 30}));
  const TensorD& z = t.value(embed_sequence(t, f, w, cls, pos));
  ASSERT_EQ(z.shape(), (Shape{3, 1}));
  EXPECT_EQ(z[0], 11);
  EXPECT_EQ(z[1], 26);
  EXPECT_EQ(z[2], 38);
}

TEST(Embed, ZeroProjectionLeavesOnlyClassRow) {
  std::mt19937_64 rng(1);
  Tape<double> t;
  const TensorD cls = testing::random_tensor<double>({6}, rng);
  const TensorD& z = t.value(embed_sequence(
      t, t.constant(testing::random_tensor<double>({2, 5, 4}, rng)), t.constant(zeros({6, 5})),
      t.constant(cls), t.constant(zeros({5, 6}))));
  ASSERT_EQ(z.shape(), (Shape{2, 5, 6}));
  for (std::int64_t b = 0; b < 2; ++b) {
    for (std::int64_t r = 0; r < 5; ++r) {
      for (std::int64_t d = 0; d < 6; ++d) {
        EXPECT_EQ(z.at({b, r, d}), r == 0 ? cls[d] : 0.0);
      }
    }
  }
}

TEST(Embed, DefaultShape) {
  Tape<float> t;
  const Var z = embed_sequence(t, t.constant(Tensor({1, 2048, 16})), t.constant(Tensor({1024, 2048})),
                               t.constant(Tensor({1024})), t.constant(Tensor({17, 1024})));
  EXPECT_EQ(t.value(z).shape(), (Shape{1, 17, 1024}));
}

TEST(Embed, PositionRowsMustMatchSlices) {
  Tape<double> t;
  try {
    embed_sequence(t, t.constant(zeros({3, 4})), t.constant(zeros({2, 3})),
                   t.constant(zeros({2})), t.constant(zeros({4, 2})));
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("5 rows"), std::string::npos) << e.what();
  }
}

TEST(Embed, AffineInFeatures) {
  std::mt19937_64 rng(2);
  const TensorD w = testing::random_tensor<double>({4, 3}, rng);
  const TensorD cls = testing::random_tensor<double>({4}, rng);
  const TensorD pos = testing::random_tensor<double>({6, 4}, rng);
  auto embed = [&](const TensorD& f) {
    Tape<double> t;
    return t.value(embed_sequence(t, t.constant(f), t.constant(w), t.constant(cls),
                                  t.constant(pos)));
  };
  const TensorD f1 = testing::random_tensor<double>({3, 5}, rng);
  const TensorD f2 = testing::random_tensor<double>({3, 5}, rng);
  const double a = 0.7, b = -1.9;
  TensorD mix(f1.shape());
  for (std::int64_t i = 0; i < mix.size(); ++i) mix[i] = a * f1[i] + b * f2[i];
  const TensorD lhs = embed(mix), e1 = embed(f1), e2 = embed(f2), e0 = embed(zeros({3, 5}));
  for (std::int64_t i = 0; i < lhs.size(); ++i) {
    EXPECT_NEAR(lhs[i], a * e1[i] + b * e2[i] - (a + b - 1) * e0[i], 1e-12);
  }
}

struct BlockFixture {
  std::int64_t dim, heads, head_dim, mlp;
  std::map<std::string, TensorD> tensors;

  BlockFixture(std::int64_t d, std::int64_t h, std::int64_t hd, std::int64_t m, std::mt19937_64& rng)
      : dim(d), heads(h), head_dim(hd), mlp(m) {
    const std::int64_t inner = h * hd;
    auto rand = [&](Shape s) { return testing::random_tensor<double>(std::move(s), rng, -0.5, 0.5); };
    tensors["g1"] = testing::random_tensor<double>({d}, rng, 0.5, 1.5);
    tensors["s1"] = rand({d});
    tensors["qw"] = rand({inner, d});
    tensors["qb"] = rand({inner});
    tensors["kw"] = rand({inner, d});
    tensors["vw"] = rand({inner, d});
    tensors["vb"] = rand({inner});
    tensors["ow"] = rand({d, inner});
    tensors["ob"] = rand({d});
    tensors["g2"] = testing::random_tensor<double>({d}, rng, 0.5, 1.5);
    tensors["s2"] = rand({d});
    tensors["w1"] = rand({m, d});
    tensors["b1"] = rand({m});
    tensors["w2"] = rand({d, m});
    tensors["b2"] = rand({d});
  }

  static EncoderVars vars(const Leaves& v) {
    return {v.at("g1"), v.at("s1"),
            {v.at("qw"), v.at("qb"), v.at("kw"), std::nullopt, v.at("vw"), v.at("vb"), v.at("ow"),
             v.at("ob")},
            v.at("g2"), v.at("s2"), v.at("w1"), v.at("b1"), v.at("w2"), v.at("b2")};
  }

  Leaves constants(Tape<double>& t) const {
    Leaves out;
    for (const auto& [k, v] : tensors) out[k] = t.constant(v);
    return out;
  }

  TensorD run(const TensorD& tokens) const {
    Tape<double> t;
    const Leaves v = constants(t);
    return t.value(encoder_block(t, t.constant(tokens), vars(v), static_cast<int>(heads),
                                 static_cast<int>(head_dim)));
  }
};

TEST(EncoderBlock, ZeroWeightsAreIdentity) {
  std::mt19937_64 rng(3);
  BlockFixture fx(8, 2, 4, 16, rng);
  for (auto& [k, v] : fx.tensors) {
    if (k != "g1" && k != "s1" && k != "g2" && k != "s2") v.fill(0);
  }
  const TensorD z = testing::random_tensor<double>({2, 5, 8}, rng);
  EXPECT_EQ(fx.run(z), z);
}

TEST(EncoderBlock, SingleTokenIsValueThenOutput) {
  std::mt19937_64 rng(4);
  BlockFixture fx(6, 3, 2, 12, rng);
  for (const char* k : {"w1", "b1", "w2", "b2"}) fx.tensors[k].fill(0);
  const TensorD z = testing::random_tensor<double>({1, 6}, rng);

  // LN(z) with the first norm, then v = Wv x + bv, then out = Wo v + bo.
  double mean = 0, var = 0;
  for (std::int64_t i = 0; i < 6; ++i) mean += z[i] / 6;
  for (std::int64_t i = 0; i < 6; ++i) var += (z[i] - mean) * (z[i] - mean) / 6;
  std::vector<double> x(6), v(6);
  for (std::int64_t i = 0; i < 6; ++i) {
    x[i] = (z[i] - mean) / std::sqrt(var + 1e-5) * fx.tensors["g1"][i] + fx.tensors["s1"][i];
  }
  for (std::int64_t o = 0; o < 6; ++o) {
    v[o] = fx.tensors["vb"][o];
    for (std::int64_t i = 0; i < 6; ++i) v[o] += fx.tensors["vw"].at({o, i}) * x[i];
  }
  const TensorD got = fx.run(z);
  for (std::int64_t o = 0; o < 6; ++o) {
    double want = z[o] + fx.tensors["ob"][o];
    for (std::int64_t i = 0; i < 6; ++i) want += fx.tensors["ow"].at({o, i}) * v[i];
    EXPECT_NEAR(got[o], want, 1e-12);
  }
}

TEST(EncoderBlock, ShapePreserved) {
  std::mt19937_64 rng(5);
  BlockFixture fx(8, 2, 4, 16, rng);
  EXPECT_EQ(fx.run(testing::random_tensor<double>({3, 17, 8}, rng)).shape(), (Shape{3, 17, 8}));
}

class EncoderBlockGrad : public ::testing::TestWithParam<int> {};

TEST_P(EncoderBlockGrad, FiniteDifference) {
  std::mt19937_64 rng(100 + GetParam());
  const std::int64_t heads = testing::uniform_int(rng, 1, 3);
  const std::int64_t head_dim = testing::uniform_int(rng, 2, 4);
  const std::int64_t dim = testing::uniform_int(rng, 4, 10);
  const std::int64_t tokens = testing::uniform_int(rng, 2, 17);
  BlockFixture fx(dim, heads, head_dim, 2 * dim, rng);
  std::map<std::string, TensorD> in = fx.tensors;
  in["z"] = testing::random_tensor<double>({tokens, dim}, rng);
  const TensorD proj = testing::random_tensor<double>({tokens, dim}, rng);
  const auto report = finite_diff_check(
      in,
      [&](Tape<double>& t, const Leaves& v) {
        const Var y = encoder_block(t, v.at("z"), BlockFixture::vars(v), static_cast<int>(heads),
                                    static_cast<int>(head_dim));
        return nn::dot(t, y, proj);
      },
      {.max_entries = 12, .seed = static_cast<std::uint64_t>(GetParam())});
  EXPECT_TRUE(report.passed()) << report.max_rel_error();
}

INSTANTIATE_TEST_SUITE_P(RandomShapes, EncoderBlockGrad, ::testing::Range(0, 5));

TEST(EncoderBlock, AttentionEntryAtWideShape) {
  // One query-weight entry of a 17x64 block with 4 heads of 16.
  std::mt19937_64 rng(6);
  BlockFixture fx(64, 4, 16, 128, rng);
  const TensorD z = testing::random_tensor<double>({17, 64}, rng);
  const TensorD proj = testing::random_tensor<double>({17, 64}, rng);
  auto loss = [&](const TensorD& qw, bool grad) {
    Tape<double> t;
    Leaves v = fx.constants(t);
    v["qw"] = grad ? t.parameter("qw", qw) : t.constant(qw);
    const Var l = nn::dot(t, encoder_block(t, t.constant(z), BlockFixture::vars(v), 4, 16), proj);
    return std::make_pair(t.value(l)[0], grad ? t.backward(l).at("qw") : TensorD());
  };
  const TensorD qw = fx.tensors.at("qw");
  const auto [_, grads] = loss(qw, true);
  const std::int64_t entry = 5 * 64 + 17;
  TensorD up = qw, down = qw;
  up[entry] += 1e-4;
  down[entry] -= 1e-4;
  const double numeric = (loss(up, false).first - loss(down, false).first) / 2e-4;
  EXPECT_LT(relative_error(grads[entry], numeric), 1e-4);
}

TEST(Classify, OnlyClassRowMatters) {
  std::mt19937_64 rng(7);
  const TensorD gain = testing::random_tensor<double>({5}, rng);
  const TensorD shift = testing::random_tensor<double>({5}, rng);
  TensorD z = testing::random_tensor<double>({2, 4, 5}, rng);
  auto feature = [&](const TensorD& tokens) {
    Tape<double> t;
    return t.value(class_feature(t, t.constant(tokens), t.constant(gain), t.constant(shift)));
  };
  const TensorD before = feature(z);
  for (std::int64_t b = 0; b < 2; ++b) {
    for (std::int64_t r = 1; r < 4; ++r) {
      for (std::int64_t d = 0; d < 5; ++d) z.at({b, r, d}) += 3.0;
    }
  }
  EXPECT_EQ(feature(z), before);
}

TEST(Classify, HeadProbabilities) {
  Tape<double> t;
  const Var feature = t.constant(TensorD({2, 3}, std::vector<double>{1, 2, 3, -1, 0, 4}));
  const Var zero = head_logit(t, feature, t.constant(zeros({1, 3})), t.constant(zeros({1})));
  const Var two = head_logit(t, feature, t.constant(zeros({1, 3})),
                             t.constant(TensorD({1}, std::vector<double>{2})));
  EXPECT_EQ(t.value(zero).shape(), (Shape{2}));
  EXPECT_EQ(sigmoid_value(t.value(zero)[0]), 0.5);
  EXPECT_NEAR(sigmoid_value(t.value(two)[1]), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(sigmoid_value(t.value(two)[1]), 0.8808, 5e-5);
}

TEST(Shuffle, SeedZeroIsIdentity) {
  std::mt19937_64 rng(8);
  const Tensor clip = testing::random_tensor({3, 4, 5, 6}, rng);
  EXPECT_EQ(spatial_shuffle(clip, 0), clip);
}

TEST(Shuffle, SwapRowsExample) {
  const Tensor clip({1, 2, 2, 2}, std::vector<float>{1, 2, 3, 4, 1, 2, 3, 4});
  const Tensor out = permute_spatial(clip, {2, 3, 0, 1});
  EXPECT_EQ(out.values(), (std::vector<float>{3, 4, 1, 2, 3, 4, 1, 2}));
}

TEST(Shuffle, RejectsNonPermutation) {
  const Tensor clip({1, 1, 2, 2});
  EXPECT_THROW(permute_spatial(clip, {0, 0, 1, 2}), Error);
  EXPECT_THROW(permute_spatial(clip, {0, 1, 2}), ShapeError);
}

TEST(Shuffle, PreservesTimeSeriesAndFrameMultisets) {
  std::mt19937_64 rng(9);
  const Tensor clip = testing::random_tensor({3, 5, 4, 6}, rng);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Tensor out = spatial_shuffle(clip, seed);
    const auto perm = shuffle_permutation(24, seed);
    for (std::int64_t c = 0; c < 3; ++c) {
      for (std::int64_t f = 0; f < 5; ++f) {
        std::vector<float> a, b;
        for (std::int64_t i = 0; i < 24; ++i) {
          a.push_back(clip[(c * 5 + f) * 24 + i]);
          b.push_back(out[(c * 5 + f) * 24 + i]);
          // Output position i carries input position perm[i] in every frame.
          EXPECT_EQ(out[(c * 5 + f) * 24 + i], clip[(c * 5 + f) * 24 + perm[i]]);
        }
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        EXPECT_EQ(a, b);
      }
    }
  }
}

TEST(Shuffle, SameSeedSamePermutation) {
  EXPECT_EQ(shuffle_permutation(100, 42), shuffle_permutation(100, 42));
  EXPECT_NE(shuffle_permutation(100, 42), shuffle_permutation(100, 43));
}

arch::ArchSpec toy(std::string_view name) { return arch::build_canonical(name, arch::toy_options()); }

TEST(Model, ParamCountMatchesPlanner) {
  for (auto name : {"ftcn", "r50", "sp", "fk3"}) {
    const arch::ArchSpec spec = toy(name);
    EXPECT_EQ(Model(spec, 1).param_count(), arch::count_params(spec).total()) << name;
  }
  arch::ArchSpec linear = toy("ftcn");
  linear.head.kind = arch::HeadKind::linear;
  EXPECT_EQ(Model(linear, 1).param_count(), arch::count_params(linear).total());
}

TEST(Model, CanonicalParamShapesMatchCount) {
  std::int64_t n = 0;
  for (const auto& [_, s] : param_shapes(arch::build_canonical("ftcn"))) n += numel(s);
  EXPECT_EQ(n, arch::count_params(arch::build_canonical("ftcn")).total());
}

TEST(Model, InitIsSeeded) {
  const Model a(toy("ftcn"), 5), b(toy("ftcn"), 5), c(toy("ftcn"), 6);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_NE(a.params(), c.params());
  EXPECT_EQ(a.params().at("conv1.bn.gain").values(), std::vector<float>(4, 1.0f));
  EXPECT_TRUE(decays("res2.0.conv_a.weight"));
  EXPECT_FALSE(decays("res2.0.conv_a.bn.gain"));
  EXPECT_FALSE(decays("tt.cls"));
}

TEST(Model, ForwardShapesAndProbabilityRange) {
  std::mt19937_64 rng(10);
  Model m(toy("ftcn"), 3);
  const Tensor clips = testing::random_tensor({2, 3, 16, 32, 32}, rng, 0, 1);
  Tape<float> t;
  const ForwardResult r = m.forward(t, clips, Mode::eval, false);
  EXPECT_EQ(t.value(r.logits).shape(), (Shape{2}));
  EXPECT_EQ(t.value(r.features).shape(), (Shape{2, 32}));
  EXPECT_EQ(t.value(r.sequence).shape(), (Shape{2, 128, 8}));
  const Tensor probs = m.predict(clips);
  for (float p : probs.data()) {
    EXPECT_GT(p, 0.0f);
    EXPECT_LT(p, 1.0f);
  }
  EXPECT_THROW(m.predict(Tensor({3, 8, 32, 32})), ShapeError);
}

TEST(Model, TrainingForwardReachesEveryParameter) {
  std::mt19937_64 rng(11);
  Model m(toy("ftcn"), 3);
  for (auto& [name, p] : m.params()) {
    if (name.ends_with(".gain")) p.fill(1.0f);
  }
  const Tensor before = m.norm_stats().at("conv1.bn").mean;
  Tape<float> t;
  const ForwardResult r =
      m.forward(t, testing::random_tensor({2, 3, 16, 32, 32}, rng, 0, 1), Mode::train, true);
  const auto grads = t.backward(nn::bce_with_logits(t, r.logits, std::vector<float>{0, 1}));
  EXPECT_EQ(grads.size(), m.params().size());
  std::size_t nonzero = 0;
  for (const auto& [name, g] : grads) {
    EXPECT_EQ(g.shape(), m.params().at(name).shape()) << name;
    nonzero += std::any_of(g.data().begin(), g.data().end(), [](float v) { return v != 0; });
  }
  EXPECT_GT(nonzero, grads.size() * 9 / 10);
  EXPECT_NE(m.norm_stats().at("conv1.bn").mean, before);
}

TEST(Model, ResidualBranchesStartSilent) {
  Model m(toy("ftcn"), 3);
  std::size_t silent = 0;
  for (const auto& [name, p] : m.params()) {
    if (!name.ends_with(".gain")) continue;
    const float expected = name.ends_with(".conv_c.bn.gain") ? 0.0f : 1.0f;
    for (float v : p.data()) ASSERT_EQ(v, expected) << name;
    silent += expected == 0.0f;
  }
  EXPECT_GT(silent, 0u);
}

TEST(Model, RecalibrationForgetsEarlierStatistics) {
  std::mt19937_64 rng(21);
  const std::vector<Tensor> batches{testing::random_tensor({2, 3, 16, 32, 32}, rng, 0, 1),
                                    testing::random_tensor({2, 3, 16, 32, 32}, rng, 0, 1)};
  Model fresh(toy("ftcn"), 3);
  Model stale(toy("ftcn"), 3);
  for (int k = 0; k < 3; ++k) {
    Tape<float> t;
    stale.forward(t, testing::random_tensor({2, 3, 16, 32, 32}, rng, 0, 1), Mode::train, false);
  }
  fresh.recalibrate_norms(batches);
  stale.recalibrate_norms(batches);
  for (const auto& [name, s] : fresh.norm_stats()) {
    const auto& other = stale.norm_stats().at(name);
    for (std::int64_t i = 0; i < s.mean.size(); ++i) {
      EXPECT_NEAR(s.mean[i], other.mean[i], 1e-6) << name;
      EXPECT_NEAR(s.var[i], other.var[i], 1e-6) << name;
    }
  }
}

TEST(Model, RecalibrationAveragesBatches) {
  std::mt19937_64 rng(22);
  const Tensor batch = testing::random_tensor({2, 3, 16, 32, 32}, rng, 0, 1);
  Model once(toy("ftcn"), 3);
  Model twice(toy("ftcn"), 3);
  once.recalibrate_norms({batch});
  twice.recalibrate_norms({batch, batch});
  for (const auto& [name, s] : once.norm_stats()) {
    const auto& other = twice.norm_stats().at(name);
    for (std::int64_t i = 0; i < s.mean.size(); ++i) {
      EXPECT_NEAR(s.mean[i], other.mean[i], 1e-5 * (1 + std::abs(s.mean[i]))) << name;
      EXPECT_NEAR(s.var[i], other.var[i], 1e-5 * (1 + s.var[i])) << name;
    }
  }
}

TEST(Model, EvalIsDeterministic) {
  std::mt19937_64 rng(12);
  Model m(toy("ftcn"), 4);
  const Tensor clip = testing::random_tensor({3, 16, 32, 32}, rng, 0, 1);
  EXPECT_EQ(m.predict(clip), m.predict(clip));
  EXPECT_EQ(m.features(clip), m.features(clip));
}

TEST(Model, SpatiallyConstantClipsCollapse) {
  std::mt19937_64 rng(13);
  const arch::ArchSpec spec = toy("ftcn");
  Model full(spec, 7);
  Model small(arch::collapse_spatial(spec), full.params(), full.norm_stats());
  for (int trial = 0; trial < 3; ++trial) {
    const Tensor pixel = testing::random_tensor({3, 16, 1, 1}, rng, 0, 1);
    Tensor clip({3, 16, 32, 32});
    for (std::int64_t i = 0; i < clip.size(); ++i) clip[i] = pixel[i / (32 * 32)];
    EXPECT_NEAR(full.predict(clip)[0], small.predict(pixel)[0], 1e-5);
  }
}

TEST(Model, PoolFreeVariantIsShuffleInvariant) {
  std::mt19937_64 rng(14);
  Model m(arch::without_spatial_pooling(toy("ftcn")), 8);
  const Tensor clip = testing::random_tensor({3, 16, 32, 32}, rng, 0, 1);
  const Tensor base = m.predict(clip);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    EXPECT_EQ(m.predict(spatial_shuffle(clip, seed)), base);
  }
}

TEST(Model, LinearHead) {
  std::mt19937_64 rng(15);
  arch::ArchSpec spec = toy("ftcn");
  spec.head.kind = arch::HeadKind::linear;
  Model m(spec, 2);
  EXPECT_EQ(m.features(testing::random_tensor({3, 16, 32, 32}, rng)).shape(), (Shape{1, 128}));
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("ftcn_ckpt_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::remove_all(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(CheckpointTest, DirectoryRoundTrip) {
  std::mt19937_64 rng(16);
  Model m(toy("ftcn"), 9);
  m.norm_stats().at("conv1.bn").mean.fill(0.25f);
  save_checkpoint(dir_ / "ckpt", m);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "ckpt" / "manifest.txt"));
  EXPECT_TRUE(std::filesystem::exists(dir_ / "ckpt" / "tt.cls.stn"));
  Model back = load_model(dir_ / "ckpt");
  EXPECT_EQ(back.params(), m.params());
  EXPECT_EQ(back.norm_stats().at("conv1.bn").mean, m.norm_stats().at("conv1.bn").mean);
  const Tensor clip = testing::random_tensor({3, 16, 32, 32}, rng, 0, 1);
  EXPECT_EQ(back.predict(clip), m.predict(clip));
}

TEST_F(CheckpointTest, BundleRoundTrip) {
  std::mt19937_64 rng(17);
  Model m(toy("r50"), 10);
  save_bundle(dir_ / "model.stnb", m);
  Model back = load_model(dir_ / "model.stnb");
  EXPECT_EQ(back.spec().layers.size(), m.spec().layers.size());
  const Tensor clip = testing::random_tensor({3, 16, 32, 32}, rng, 0, 1);
  EXPECT_EQ(back.predict(clip), m.predict(clip));
}

TEST_F(CheckpointTest, ShapeMismatchRejected) {
  Model m(toy("ftcn"), 11);
  save_checkpoint(dir_, m);
  write_stn(dir_ / "tt.cls.stn", Tensor({7}));
  EXPECT_THROW(load_checkpoint(dir_), FormatError);
  write_file(dir_ / "manifest.txt", "tt.cls 7\n");
  EXPECT_THROW(load_checkpoint(dir_), Error);
}

TEST_F(CheckpointTest, TruncatedBundleRejected) {
  Model m(toy("ftcn"), 12);
  save_bundle(dir_ / "b", m);
  std::string bytes = read_file(dir_ / "b");
  bytes.resize(bytes.size() / 2);
  write_file(dir_ / "b", bytes);
  EXPECT_THROW(load_bundle(dir_ / "b"), FormatError);
}

TEST(GradSuite, EveryOpPassesOnFiveShapes) {
  const auto rows = gradient_suite();
  ASSERT_EQ(rows.size(), gradient_suite_ops().size() * 5);
  std::set<std::string> shapes;
  for (const auto& r : rows) {
    EXPECT_TRUE(r.passed) << r.op << " " << r.shape << " " << r.max_rel_error;
    EXPECT_GT(r.probed, 0);
    shapes.insert(r.op + ":" + std::to_string(r.trial));
  }
  EXPECT_EQ(shapes.size(), rows.size());
  EXPECT_TRUE(gradient_suite_csv(rows).starts_with("op,trial,shape,max_rel_error,probed,passed\n"));
  EXPECT_THROW(gradient_suite({.trials = 0}), Error);
}

}  // namespace
}  // namespace ftcn::model
