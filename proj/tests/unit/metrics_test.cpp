#include <gtest/gtest.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ftcn/arch/spec.hpp"
#include "ftcn/eval/metrics.hpp"
#include "test_util.hpp"

using namespace ftcn;
using namespace ftcn::eval;

namespace {

double pair_count(const std::vector<double>& s, const std::vector<int>& l) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[i] == 1 && l[j] == 0) {
        pairs += 1;
        if (s[i] > s[j]) wins += 1;
        else if (s[i] == s[j]) wins += 0.5;
      }
    }
  }
  return wins / pairs;
}

arch::ArchSpec tiny_spec(std::int64_t frames = 4) {
  return arch::parse_arch("input c=3 t=" + std::to_string(frames) +
                          " h=8 w=8\n"
                          "conv3d name=conv1 out=4 k=3x1x1 s=1x1x1\n"
                          "savgpool name=savgpool\n"
                          "head kind=linear\n");
}

model::Model constant_model(float logit) {
  model::Model m(tiny_spec(), 1);
  for (auto& [name, p] : m.params()) p.fill(0.0f);
  m.params().at("head.bias").fill(logit);
  return m;
}

}  // namespace

TEST(Auc, MatchesPairCountOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = ftcn::testing::uniform_int(rng, 2, 120);
    const int levels = ftcn::testing::uniform_int(rng, 1, 12);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> l(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[i] = ftcn::testing::uniform_int(rng, 0, levels) / static_cast<double>(levels);
      l[i] = ftcn::testing::uniform_int(rng, 0, 1);
    }
    l[0] = 0;
    l[1] = 1;
    EXPECT_EQ(auc(s, l), pair_count(s, l)) << "trial " << trial;
  }
}

TEST(Auc, ClosedCases) {
  EXPECT_EQ(auc(std::vector<double>{0, 0, 1, 1}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3, 0.3}, std::vector<int>{0, 1, 0, 1, 1}), 0.5);
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
  EXPECT_EQ(auc(std::vector<double>{1, 0}, std::vector<int>{0, 1}), 0.0);
}

TEST(Auc, FlippedLabelsSumToOne) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = ftcn::testing::uniform_int(rng, 2, 80);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> l(static_cast<std::size_t>(n)), flipped(static_cast<std::size_t>(n));
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < n; ++i) {
      s[i] = u(rng);
      l[i] = i < 2 ? i : ftcn::testing::uniform_int(rng, 0, 1);
      flipped[i] = 1 - l[i];
    }
    EXPECT_NEAR(auc(s, l) + auc(s, flipped), 1.0, 1e-12);
  }
}

TEST(Auc, InvariantUnderIncreasingTransforms) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = ftcn::testing::uniform_int(rng, 2, 80);
    std::vector<double> s(static_cast<std::size_t>(n)), t(static_cast<std::size_t>(n));
    std::vector<int> l(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[i] = ftcn::testing::uniform_int(rng, 0, 20) * 0.05;
      t[i] = std::exp(3 * s[i]) - 7;
      l[i] = i < 2 ? i : ftcn::testing::uniform_int(rng, 0, 1);
    }
    EXPECT_EQ(auc(s, l), auc(t, l));
  }
}

TEST(Auc, Errors) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), Error);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 2}), Error);
  EXPECT_THROW(auc(std::vector<double>{0.1}, std::vector<int>{0, 1}), Error);
}

TEST(VideoWindows, DropsRemainder) {
  std::mt19937_64 rng(7);
  const Tensor video = ftcn::testing::random_tensor({3, 11, 2, 2}, rng);
  const auto w = video_windows(video, 4);
  ASSERT_EQ(w.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(w[k].shape(), (Shape{3, 4, 2, 2}));
    for (std::int64_t c = 0; c < 3; ++c) {
      for (std::int64_t t = 0; t < 4; ++t) {
        for (std::int64_t i = 0; i < 4; ++i) {
          EXPECT_EQ(w[k][(c * 4 + t) * 4 + i], video[(c * 11 + static_cast<std::int64_t>(k) * 4 + t) * 4 + i]);
        }
      }
    }
  }
  EXPECT_THROW(video_windows(video, 12), ShapeError);
  EXPECT_THROW(video_windows(Tensor({3, 4, 4}), 2), ShapeError);
}

TEST(VideoScore, SingleClipEqualsClipProbability) {
  std::mt19937_64 rng(8);
  model::Model m(tiny_spec(), 3);
  const Tensor clip = ftcn::testing::random_tensor({3, 4, 8, 8}, rng, 0, 1);
  EXPECT_EQ(video_score(m, clip), static_cast<double>(m.predict(clip)[0]));
}

TEST(VideoScore, MeanOfClipProbabilities) {
  std::mt19937_64 rng(9);
  model::Model m(tiny_spec(), 3);
  const Tensor video = ftcn::testing::random_tensor({3, 14, 8, 8}, rng, 0, 1);
  double expected = 0;
  for (const auto& w : video_windows(video, 4)) expected += m.predict(w)[0];
  EXPECT_NEAR(video_score(m, video), expected / 3, 1e-12);
}

TEST(VideoScore, ClipOrderDoesNotMatter) {
  std::mt19937_64 rng(10);
  model::Model m(tiny_spec(), 3);
  const Tensor video = ftcn::testing::random_tensor({3, 12, 8, 8}, rng, 0, 1);
  // Reverse the three windows in time.
  Tensor reversed(video.shape());
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t t = 0; t < 12; ++t) {
      const std::int64_t src = (2 - t / 4) * 4 + t % 4;
      for (std::int64_t i = 0; i < 64; ++i) reversed[(c * 12 + t) * 64 + i] = video[(c * 12 + src) * 64 + i];
    }
  }
  EXPECT_EQ(video_score(m, video), video_score(m, reversed));
}

TEST(VideoScore, ConstantModelScoresEveryVideoTheSame) {
  std::mt19937_64 rng(11);
  model::Model m = constant_model(2.0f);
  for (int k = 0; k < 5; ++k) {
    const Tensor video = ftcn::testing::random_tensor({3, 4 * (k + 1), 8, 8}, rng, 0, 1);
    EXPECT_NEAR(video_score(m, video), 1 / (1 + std::exp(-2.0)), 1e-7);
  }
}

TEST(ScoreVideos, ParallelMatchesSerialAndKeepsOrder) {
  std::mt19937_64 rng(12);
  model::Model m(tiny_spec(), 4);
  std::vector<data::Video> videos;
  for (int k = 0; k < 9; ++k) {
    videos.push_back({ftcn::testing::random_tensor({3, 8, 8, 8}, rng, 0, 1), k % 2, k % 2 ? "flickerA" : "real",
                      "v" + std::to_string(k)});
  }
  omp_set_num_threads(1);
  const auto serial = score_videos(m, videos);
  omp_set_num_threads(4);
  const auto parallel = score_videos(m, videos);
  omp_set_num_threads(1);
  ASSERT_EQ(serial.size(), videos.size());
  for (std::size_t i = 0; i < videos.size(); ++i) {
    EXPECT_EQ(serial[i].video_id, videos[i].video_id);
    EXPECT_EQ(serial[i].label, videos[i].label);
    EXPECT_EQ(serial[i].score, parallel[i].score);
    EXPECT_GE(serial[i].score, 0.0);
    EXPECT_LE(serial[i].score, 1.0);
  }
  const auto flipped = score_videos(m, videos, [](const data::Video& v) {
    Tensor t = v.pixels;
    for (auto& x : t.data()) x = 1 - x;
    return t;
  });
  EXPECT_NE(flipped[0].score, serial[0].score);
  videos[3].pixels = Tensor({3, 2, 8, 8});
  EXPECT_THROW(score_videos(m, videos), ShapeError);
}
