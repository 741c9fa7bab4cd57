// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "nexttensor/error.hpp"
#include "nexttensor/noise.hpp"

using namespace nxt;

namespace {

constexpr ScheduleKind kPaperKinds[] = {ScheduleKind::linear, ScheduleKind::sine, ScheduleKind::sqrt,
                                        ScheduleKind::exponential};

}  // namespace

TEST(Beta, LinearWindowFour) {
  NoiseSchedule s{ScheduleKind::linear, 4};
  EXPECT_EQ(beta(s, 0), 0.0);
  EXPECT_DOUBLE_EQ(beta(s, 1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(beta(s, 2), 2.0 / 3.0);
  EXPECT_EQ(beta(s, 3), 1.0);
}

TEST(Beta, SineWindowFour) {
  // sin(pi/3), evaluated offline to 16 digits.
  EXPECT_NEAR(beta({ScheduleKind::sine, 4}, 2), 0.8660254037844386, 1e-15);
}

TEST(Beta, SqrtAndExponentialShapes) {
  EXPECT_NEAR(beta({ScheduleKind::sqrt, 5}, 1), 0.5, 1e-15);
  EXPECT_NEAR(beta({ScheduleKind::exponential, 4, 2.0}, 1), 1.0 / 9.0, 1e-15);
  // Default exponent 2 / k: k = 4 gives the square root, k = 2 is linear.
  EXPECT_NEAR(beta({ScheduleKind::exponential, 4}, 1), std::sqrt(1.0 / 3.0), 1e-15);
  EXPECT_NEAR(beta({ScheduleKind::exponential, 8}, 3), std::pow(3.0 / 7.0, 0.25), 1e-15);
  EXPECT_THROW(beta({ScheduleKind::exponential, 4, -1.0}, 1), ParameterError);
  EXPECT_NEAR(beta({ScheduleKind::exponential, 4, 3.0}, 2), 8.0 / 27.0, 1e-15);
}

TEST(Beta, SingleSlotWindowNeverNoises) {
  for (auto kind : kPaperKinds) EXPECT_EQ(beta({kind, 1}, 0), 0.0);
}

TEST(Beta, RejectsOutOfRangePosition) {
  EXPECT_THROW(beta({ScheduleKind::linear, 4}, 4), ParameterError);
  EXPECT_THROW(beta({ScheduleKind::linear, 4}, -1), ParameterError);
}

TEST(Beta, EndpointsAndMonotonicityExhaustive) {
  for (auto kind : kPaperKinds) {
    for (int k = 1; k <= 64; ++k) {
      NoiseSchedule s{kind, k};
      ASSERT_EQ(beta(s, 0), 0.0);
      if (k >= 2) ASSERT_EQ(beta(s, k - 1), 1.0);
      for (int j = 0; j + 1 < k; ++j) {
        ASSERT_LE(beta(s, j), beta(s, j + 1)) << to_string(kind) << " k=" << k << " j=" << j;
        ASSERT_GE(beta(s, j), 0.0);
        ASSERT_LE(beta(s, j + 1), 1.0);
      }
    }
  }
}

TEST(Beta, ScheduleNamesRoundTrip) {
  for (auto kind : kPaperKinds) EXPECT_EQ(parse_schedule_kind(to_string(kind)), kind);
  EXPECT_EQ(parse_schedule_kind("none"), ScheduleKind::none);
  EXPECT_THROW(parse_schedule_kind("cosine"), ParameterError);
}

TEST(CorruptWindow, ZeroScheduleIsIdentity) {
  std::vector<TokenId> w{3, 1, 4, 1};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    EXPECT_EQ(corrupt_window(w, {ScheduleKind::none, 4}, 16, seed), w);
  }
  std::vector<TokenId> single{5};
  EXPECT_EQ(corrupt_window(single, {ScheduleKind::linear, 1}, 16, 9), single);
}

TEST(CorruptWindow, PaddingAndFirstSlotUntouched) {
  std::vector<TokenId> w{2, 16};
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    EXPECT_EQ(corrupt_window(w, {ScheduleKind::linear, 2}, 16, seed), w);
  }
  std::vector<TokenId> w4{7, 7, 7, 7};
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    EXPECT_EQ(corrupt_window(w4, {ScheduleKind::sqrt, 4}, 16, seed)[0], 7);
  }
}

TEST(CorruptWindow, SelfTransitionMatchesCategoricalMarginal) {
  const int V = 16;
  const int draws = 100000;
  NoiseSchedule s{ScheduleKind::linear, 4};
  std::vector<TokenId> w{1, 2, 3, 4};
  std::vector<int> same(4, 0);
  for (int i = 0; i < draws; ++i) {
    auto out = corrupt_window(w, s, V, static_cast<std::uint64_t>(i));
    for (int j = 0; j < 4; ++j) same[j] += out[j] == w[j];
  }
  for (int j = 0; j < 4; ++j) {
    const double b = beta(s, j);
    EXPECT_NEAR(same[j] / static_cast<double>(draws), (1 - b) + b / V, 0.01) << "slot " << j;
  }
}

TEST(CorruptWindow, FullMarginalLawPerSourceSymbol) {
  const int V = 8;
  const int draws = 100000;
  NoiseSchedule s{ScheduleKind::sine, 3};
  for (TokenId x = 0; x < V; ++x) {
    std::vector<TokenId> w{0, x, x};
    std::vector<std::vector<double>> hist(3, std::vector<double>(V, 0.0));
    for (int i = 0; i < draws; ++i) {
      auto out = corrupt_window(w, s, V, derive_seed(x, i));
      for (int j = 1; j < 3; ++j) hist[j][out[j]] += 1.0 / draws;
    }
    for (int j = 1; j < 3; ++j) {
      const double b = beta(s, j);
      double l1 = 0;
      for (int v = 0; v < V; ++v) l1 += std::abs(hist[j][v] - ((v == x ? 1 - b : 0.0) + b / V));
      EXPECT_LT(l1, 0.02) << "x=" << x << " j=" << j;
    }
  }
}

TEST(CorruptBatch, ZeroScheduleAndTargetsUntouched) {
  std::vector<TokenId> tokens(64);
  for (int i = 0; i < 64; ++i) tokens[i] = (i * 5) % 16;
  auto ws = to_windows(tokens, 4, 16);
  auto same = corrupt_batch(ws, {ScheduleKind::none, 4}, 1);
  EXPECT_EQ(same.inputs, ws.inputs);
  auto noisy = corrupt_batch(ws, {ScheduleKind::exponential, 4}, 1);
  EXPECT_NE(noisy.inputs, ws.inputs);
  EXPECT_EQ(noisy.targets, ws.targets);
  EXPECT_EQ(noisy.loss_mask, ws.loss_mask);
  for (int t = 0; t < 64; ++t) EXPECT_EQ(noisy.input_window(t)[0], ws.input_window(t)[0]);
  // Different seeds give different corruption; the same seed is reproducible.
  EXPECT_EQ(corrupt_batch(ws, {ScheduleKind::exponential, 4}, 1).inputs, noisy.inputs);
  EXPECT_NE(corrupt_batch(ws, {ScheduleKind::exponential, 4}, 2).inputs, noisy.inputs);
}

TEST(CorruptBatch, ChangedFractionMatchesExpectation) {
  const int V = 16, k = 8, T = 64;
  NoiseSchedule s{ScheduleKind::sqrt, k};
  std::vector<TokenId> tokens(T);
  for (int i = 0; i < T; ++i) tokens[i] = (i * 3) % V;
  auto ws = to_windows(tokens, k, V);
  double changed = 0, eligible = 0, expected = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    auto noisy = corrupt_batch(ws, s, seed);
    for (int t = 0; t < T; ++t) {
      for (int j = 1; j < k; ++j) {
        if (ws.input_window(t)[j] == ws.pad()) continue;
        eligible += 1;
        expected += beta(s, j) * (1.0 - 1.0 / V);
        changed += noisy.input_window(t)[j] != ws.input_window(t)[j];
      }
    }
  }
  double mean_beta = 0;
  for (int j = 1; j < k; ++j) mean_beta += beta(s, j) / (k - 1);
  EXPECT_NEAR(changed / eligible, expected / eligible, 0.01);
  EXPECT_NEAR(changed / eligible, mean_beta * (1.0 - 1.0 / V), 0.03);
}
