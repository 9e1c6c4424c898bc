#include <random>

#include <gtest/gtest.h>

#include "ftcn/tensor/gradcheck.hpp"
#include "ftcn/tensor/ops.hpp"
#include "test_util.hpp"

namespace ftcn {
namespace {

using Inputs = std::map<std::string, TensorD>;
using Leaves = std::map<std::string, Var>;

// Fixed random projection so every output entry influences the loss differently.
Var project(Tape<double>& tape, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return nn::dot(tape, y, testing::random_tensor<double>(tape.value(y).shape(), rng));
}

TEST(GradCheck, LinearPassesTightTolerance) {
  std::mt19937_64 rng(31);
  const Inputs in{{"x", testing::random_tensor<double>({3, 4}, rng)},
                  {"w", testing::random_tensor<double>({5, 4}, rng)},
                  {"b", testing::random_tensor<double>({5}, rng)}};
  const auto report = finite_diff_check(
      in,
      [](Tape<double>& t, const Leaves& v) {
        return project(t, nn::linear(t, v.at("x"), v.at("w"), v.at("b")), 1);
      },
      {.tolerance = 1e-5});
  EXPECT_EQ(report.entries.size(), 3u);
  EXPECT_TRUE(report.passed()) << report.max_rel_error();
}

TEST(GradCheck, TemporalConvPasses) {
  std::mt19937_64 rng(32);
  const Inputs in{{"x", testing::random_tensor<double>({1, 2, 5, 3, 3}, rng)},
                  {"w", testing::random_tensor<double>({2, 2, 3, 1, 1}, rng)}};
  const auto report = finite_diff_check(in, [](Tape<double>& t, const Leaves& v) {
    return project(t, nn::conv3d(t, v.at("x"), v.at("w"), std::nullopt, {1, 1, 1}, {1, 0, 0}), 2);
  });
  EXPECT_TRUE(report.passed()) << report.max_rel_error();
}

TEST(GradCheck, NoInputsIsVacuous) {
  std::mt19937_64 rng(33);
  const TensorD x = testing::random_tensor<double>({1, 1, 2, 4, 4}, rng);
  const auto report = finite_diff_check({}, [&x](Tape<double>& t, const Leaves&) {
    return nn::sum(t, nn::maxpool3d(t, t.constant(x), {1, 2, 2}, {1, 2, 2}, {0, 0, 0}));
  });
  EXPECT_TRUE(report.entries.empty());
  EXPECT_TRUE(report.passed());
}

TEST(GradCheck, DetectsWrongGradient) {
  // An op whose backward deliberately doubles the true gradient.
  const Inputs in{{"x", TensorD({2}, std::vector<double>{0.3, -0.7})}};
  const auto report = finite_diff_check(in, [](Tape<double>& t, const Leaves& v) {
    const Var x = v.at("x");
    const Var y = t.record(t.value(x), {x}, [x](Tape<double>& tp, const TensorD& g) {
      TensorD twice = g;
      for (auto& e : twice.data()) e *= 2;
      tp.accumulate(x, std::move(twice));
    });
    return nn::sum(t, y);
  });
  EXPECT_FALSE(report.passed());
}

TEST(GradCheck, CompositePipeline) {
  std::mt19937_64 rng(34);
  const Inputs in{{"x", testing::random_tensor<double>({2, 2, 4, 4, 4}, rng)},
                  {"w", testing::random_tensor<double>({3, 2, 3, 3, 3}, rng)},
                  {"g", testing::random_tensor<double>({3}, rng, 0.5, 1.5)},
                  {"s", testing::random_tensor<double>({3}, rng)}};
  const auto report = finite_diff_check(in, [](Tape<double>& t, const Leaves& v) {
    Var y = nn::conv3d(t, v.at("x"), v.at("w"), std::nullopt, {1, 1, 1}, {1, 1, 1});
    y = nn::maxpool3d(t, y, {1, 2, 2}, {1, 2, 2}, {0, 0, 0});
    y = nn::batch_norm<double>(t, y, v.at("g"), v.at("s"), Mode::train, nullptr);
    y = nn::relu(t, y);
    y = nn::spatial_avg_pool(t, y);
    return project(t, nn::mean_last_axis(t, y), 3);
  });
  EXPECT_TRUE(report.passed()) << report.max_rel_error();
}

class RandomShapes : public ::testing::TestWithParam<int> {};

TEST_P(RandomShapes, EveryOpPasses) {
  std::mt19937_64 rng(100 + GetParam());
  auto dim = [&](int lo, int hi) { return testing::uniform_int(rng, lo, hi); };
  const GradCheckOptions opts{.max_entries = 24, .seed = static_cast<std::uint64_t>(GetParam())};

  {
    const int c = dim(1, 3), t = dim(2, 4), h = dim(2, 4), w = dim(2, 4), co = dim(1, 3);
    const Dims3 k{dim(1, 3), dim(1, 3), dim(1, 3)};
    const Dims3 s{dim(1, 2), dim(1, 2), dim(1, 2)};
    const Inputs in{{"x", testing::random_tensor<double>({dim(1, 2), c, t, h, w}, rng)},
                    {"w", testing::random_tensor<double>({co, c, k.t, k.h, k.w}, rng)},
                    {"b", testing::random_tensor<double>({co}, rng)}};
    const auto r = finite_diff_check(
        in,
        [&](Tape<double>& tp, const Leaves& v) {
          return project(tp, nn::conv3d(tp, v.at("x"), v.at("w"), v.at("b"), s, same_padding(k)),
                         4);
        },
        opts);
    EXPECT_TRUE(r.passed()) << "conv " << r.max_rel_error();
  }
  {
    // Distinct values keep the max away from ties under perturbation.
    TensorD x({1, dim(1, 2), dim(2, 4), dim(2, 5), dim(2, 5)});
    std::vector<double> vals(static_cast<std::size_t>(x.size()));
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.1 * static_cast<double>(i);
    std::shuffle(vals.begin(), vals.end(), rng);
    std::copy(vals.begin(), vals.end(), x.data().begin());
    const auto r = finite_diff_check(
        {{"x", x}},
        [&](Tape<double>& tp, const Leaves& v) {
          return project(tp, nn::maxpool3d(tp, v.at("x"), {1, 2, 2}, {1, 1, 1}, {0, 0, 0}), 5);
        },
        opts);
    EXPECT_TRUE(r.passed()) << "maxpool " << r.max_rel_error();
  }
  {
    const int d = dim(2, 8);
    const Inputs in{{"x", testing::random_tensor<double>({dim(1, 4), d}, rng)},
                    {"g", testing::random_tensor<double>({d}, rng)},
                    {"s", testing::random_tensor<double>({d}, rng)}};
    const auto r = finite_diff_check(
        in,
        [&](Tape<double>& tp, const Leaves& v) {
          return project(tp, nn::layer_norm(tp, v.at("x"), v.at("g"), v.at("s")), 6);
        },
        opts);
    EXPECT_TRUE(r.passed()) << "layer_norm " << r.max_rel_error();
  }
  {
    const int c = dim(1, 3);
    const Inputs in{{"x", testing::random_tensor<double>({dim(2, 3), c, dim(1, 3), 2, 2}, rng)},
                    {"g", testing::random_tensor<double>({c}, rng)},
                    {"s", testing::random_tensor<double>({c}, rng)}};
    const auto r = finite_diff_check(
        in,
        [&](Tape<double>& tp, const Leaves& v) {
          return project(tp, nn::batch_norm<double>(tp, v.at("x"), v.at("g"), v.at("s"),
                                                    Mode::train, nullptr),
                         7);
        },
        opts);
    EXPECT_TRUE(r.passed()) << "batch_norm " << r.max_rel_error();
  }
  for (Activation kind : {Activation::gelu, Activation::sigmoid, Activation::relu}) {
    TensorD x = testing::random_tensor<double>({dim(1, 3), dim(2, 6)}, rng, -3, 3);
    for (auto& e : x.data()) {
      if (std::abs(e) < 0.05) e += 0.1;  // keep clear of the relu kink
    }
    const auto r = finite_diff_check(
        {{"x", x}},
        [&](Tape<double>& tp, const Leaves& v) {
          return project(tp, nn::activation(tp, v.at("x"), kind), 8);
        },
        opts);
    EXPECT_TRUE(r.passed()) << "activation " << static_cast<int>(kind) << " "
                            << r.max_rel_error();
  }
  {
    const int axis = dim(0, 2);
    const auto r = finite_diff_check(
        {{"x", testing::random_tensor<double>({dim(1, 3), dim(2, 4), dim(2, 4)}, rng)}},
        [&](Tape<double>& tp, const Leaves& v) {
          return project(tp, nn::softmax(tp, v.at("x"), axis), 9);
        },
        opts);
    EXPECT_TRUE(r.passed()) << "softmax " << r.max_rel_error();
  }
  {
    const int heads = dim(1, 3), head_dim = dim(1, 3), d = dim(2, 5), s = dim(1, 4);
    const int inner = heads * head_dim;
    Inputs in{{"tok", testing::random_tensor<double>({s, d}, rng)}};
    for (const char* n : {"q", "k", "v"}) {
      in[std::string(n) + "w"] = testing::random_tensor<double>({inner, d}, rng);
    }
    in["qb"] = testing::random_tensor<double>({inner}, rng);
    in["vb"] = testing::random_tensor<double>({inner}, rng);
    in["ow"] = testing::random_tensor<double>({d, inner}, rng);
    in["ob"] = testing::random_tensor<double>({d}, rng);
    const auto r = finite_diff_check(
        in,
        [&](Tape<double>& tp, const Leaves& v) {
          const nn::AttentionVars vars{v.at("qw"), v.at("qb"), v.at("kw"), std::nullopt,
                                       v.at("vw"), v.at("vb"), v.at("ow"), v.at("ob")};
          return project(tp, nn::multi_head_attention(tp, v.at("tok"), heads, head_dim, vars),
                         10);
        },
        opts);
    EXPECT_TRUE(r.passed()) << "attention " << r.max_rel_error();
  }
  {
    const int l = dim(1, 4), d = dim(1, 4);
    const Inputs in{{"x", testing::random_tensor<double>({2, l, d}, rng)},
                    {"tok", testing::random_tensor<double>({d}, rng)},
                    {"pos", testing::random_tensor<double>({l + 1, d}, rng)}};
    const auto r = finite_diff_check(
        in,
        [&](Tape<double>& tp, const Leaves& v) {
          Var y = nn::prepend_token(tp, v.at("x"), v.at("tok"));
          y = nn::add_trailing(tp, y, v.at("pos"));
          y = nn::transpose_last2(tp, nn::scale(tp, y, 0.5));
          return project(tp, nn::add(tp, nn::select_token(tp, nn::transpose_last2(tp, y), 0),
                                     nn::mean_last_axis(tp, y)), 11);
        },
        opts);
    EXPECT_TRUE(r.passed()) << "token ops " << r.max_rel_error();
  }
  {
    const auto r = finite_diff_check(
        {{"z", testing::random_tensor<double>({dim(1, 6)}, rng, -4, 4)}},
        [&](Tape<double>& tp, const Leaves& v) {
          std::vector<double> labels;
          const auto n = tp.value(v.at("z")).size();
          for (std::int64_t i = 0; i < n; ++i) labels.push_back(static_cast<double>(i % 2));
          return nn::bce_with_logits(tp, v.at("z"), labels);
        },
        opts);
    EXPECT_TRUE(r.passed()) << "bce " << r.max_rel_error();
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomShapes, ::testing::Range(0, 6));

}  // namespace
}  // namespace ftcn
