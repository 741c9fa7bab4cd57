// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "nexttensor/error.hpp"
#include "nexttensor/rng.hpp"
#include "nexttensor/tensorize.hpp"

using namespace nxt;

namespace {

using Grid = std::vector<std::vector<TokenId>>;

Grid rows(const std::vector<TokenId>& flat, int k) {
  Grid g;
  for (std::size_t i = 0; i < flat.size(); i += k) g.emplace_back(flat.begin() + i, flat.begin() + i + k);
  return g;
}

void check_invariants(const WindowedSequence& ws) {
  const int T = ws.length, k = ws.k;
  const TokenId pad = ws.pad();
  for (int t = 0; t < T; ++t) {
    auto in = ws.input_window(t);
    // Padding forms a suffix, and its count is max(0, t + k - T).
    int pads = 0;
    bool seen_pad = false;
    for (int j = 0; j < k; ++j) {
      if (in[j] == pad) {
        seen_pad = true;
        ++pads;
      } else {
        ASSERT_FALSE(seen_pad) << "pad not a suffix at window " << t;
      }
    }
    ASSERT_EQ(pads, std::max(0, t + k - T));
    if (t + k <= T && t + 1 < T) {
      auto next = ws.input_window(t + 1);
      for (int j = 1; j < k; ++j) ASSERT_EQ(in[j], next[j - 1]);
    }
    if (t < T - 1) {
      auto tg = ws.target_window(t);
      auto next = ws.input_window(t + 1);
      ASSERT_TRUE(std::equal(tg.begin(), tg.end(), next.begin()));
    }
    for (int j = 0; j < k; ++j) ASSERT_EQ(ws.mask_row(t)[j] != 0, ws.target_window(t)[j] != pad);
  }
}

}  // namespace

TEST(ToWindows, FourTokensWindowTwo) {
  const TokenId a = 0, b = 1, c = 2, d = 3, P = 4;
  auto ws = to_windows(std::vector<TokenId>{a, b, c, d}, 2, 4);
  EXPECT_EQ(rows(ws.inputs, 2), (Grid{{a, b}, {b, c}, {c, d}, {d, P}}));
  EXPECT_EQ(rows(ws.targets, 2), (Grid{{b, c}, {c, d}, {d, P}, {P, P}}));
  EXPECT_EQ(ws.loss_mask, (std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0, 0, 0}));
}

TEST(ToWindows, WindowOneIsNextTokenShift) {
  auto ws = to_windows(std::vector<TokenId>{0, 1, 2, 3}, 1, 4);
  EXPECT_EQ(ws.inputs, (std::vector<TokenId>{0, 1, 2, 3}));
  EXPECT_EQ(ws.targets, (std::vector<TokenId>{1, 2, 3, 4}));
  EXPECT_EQ(ws.loss_mask, (std::vector<std::uint8_t>{1, 1, 1, 0}));
}

TEST(ToWindows, MaskedTargetCountForLongSequence) {
  std::vector<TokenId> tokens(64);
  for (int i = 0; i < 64; ++i) tokens[i] = i % 16;
  auto ws = to_windows(tokens, 8, 16);
  int masked_brute = 0;
  for (int t = 0; t < 64; ++t)
    for (int j = 0; j < 8; ++j) masked_brute += t + 1 + j >= 64;
  const auto masked = std::count(ws.loss_mask.begin(), ws.loss_mask.end(), 0);
  EXPECT_EQ(masked, masked_brute);
  EXPECT_EQ(masked, 36);
}

TEST(ToWindows, RejectsBadArguments) {
  std::vector<TokenId> tokens{0, 1, 2};
  EXPECT_THROW(to_windows(tokens, 0, 4), ParameterError);
  EXPECT_THROW(to_windows(tokens, 4, 4), ParameterError);
  std::vector<TokenId> bad{0, 4, 1};
  EXPECT_THROW(to_windows(bad, 2, 4), ParameterError);
}

TEST(ToWindows, InvariantsExhaustiveSmall) {
  for (int T = 1; T <= 8; ++T) {
    for (int k = 1; k <= T; ++k) {
      std::vector<TokenId> tokens(T);
      for (int i = 0; i < T; ++i) tokens[i] = (i * 7 + 3) % 5;
      check_invariants(to_windows(tokens, k, 5));
    }
  }
}

TEST(ToWindows, InvariantsRandomized) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = 1 + static_cast<int>(rng.uniform_int(256));
    const int k = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(T)));
    std::vector<TokenId> tokens(T);
    for (auto& t : tokens) t = static_cast<TokenId>(rng.uniform_int(16));
    auto ws = to_windows(tokens, k, 16);
    check_invariants(ws);
    // True mask cells counted two ways.
    const auto on = std::count(ws.loss_mask.begin(), ws.loss_mask.end(), 1);
    std::int64_t closed = 0;
    for (int t = 0; t < T; ++t) closed += std::max(0, std::min(k, T - 1 - t));
    ASSERT_EQ(on, closed);
  }
}

TEST(PredictionTargets, AreTheCleanWindowGrid) {
  auto ws = to_windows(std::vector<TokenId>{0, 1, 2, 3, 1}, 3, 4);
  auto pt = prediction_targets(ws);
  EXPECT_EQ(pt.tokens, ws.inputs);
  // Row 0 is window 0; rows t >= 1 equal target window t - 1.
  for (int t = 1; t < 5; ++t)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(pt.tokens[t * 3 + j], ws.target_window(t - 1)[j]);
  const auto on = std::count(pt.mask.begin(), pt.mask.end(), 1);
  EXPECT_EQ(on, covered_cells(5, 3));
}

TEST(CoveredCells, MatchesClosedForm) {
  for (int T = 1; T <= 64; ++T)
    for (int k = 1; k <= T; ++k) ASSERT_EQ(covered_cells(T, k), static_cast<std::int64_t>(T) * k - k * (k - 1) / 2);
}

TEST(FromCommitted, IdentityWithoutPadding) {
  std::vector<TokenId> c{0, 1, 2, 3};
  EXPECT_EQ(from_committed(c, 4, 4), c);
}

TEST(FromCommitted, RejectsPaddingInsideSequence) {
  std::vector<TokenId> c{0, 1, 4, 3};
  EXPECT_THROW(from_committed(c, 4, 4), ConsistencyError);
  // Padding beyond the first T entries is stripped.
  std::vector<TokenId> tail{0, 1, 2, 3, 4, 4};
  EXPECT_EQ(from_committed(tail, 4, 4), (std::vector<TokenId>{0, 1, 2, 3}));
}

TEST(FromCommitted, RoundTripThroughCopyingDecoder) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int T = 2 + static_cast<int>(rng.uniform_int(40));
    const int k = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(T)));
    std::vector<TokenId> tokens(T);
    for (auto& t : tokens) t = static_cast<TokenId>(rng.uniform_int(9));
    auto ws = to_windows(tokens, k, 9);
    auto targets = prediction_targets(ws);
    // A "model" that emits the true window at every step; commit slot 0.
    std::vector<TokenId> committed;
    for (int step = 0; step < T; ++step) committed.push_back(targets.tokens[static_cast<std::size_t>(step) * k]);
    ASSERT_EQ(from_committed(committed, T, 9), tokens);
  }
}
