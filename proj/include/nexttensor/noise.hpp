// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0
//
// Position-wise categorical corruption of input windows.
//
// Slot j of a window is resampled uniformly over the vocabulary with
// probability beta(j); the resample may return the original symbol, so the
// marginal is exactly (1 - beta) * onehot(x) + beta / V. Slot 0 is never
// touched and padding is never corrupted.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nexttensor/rng.hpp"
#include "nexttensor/tensorize.hpp"

namespace nxt {

enum class ScheduleKind {
  linear,
  sine,
  sqrt,
  exponential,
  none,  // beta == 0 everywhere; the leakage baseline
};

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::exponential;
  int k = 1;
  double exponent = 0.0;  // exponential kind only; 0 selects 2 / k, i.e. u^(1 / (k/2))
};

struct LossWeights {
  std::vector<double> w;  // length k

  static LossWeights uniform(int k) { return {std::vector<double>(static_cast<std::size_t>(k), 1.0)}; }
};

/// Noise level of window slot j, using the normalized position u = j / (k - 1).
double beta(const NoiseSchedule& schedule, int j);

/// beta(schedule, j) for j = 0..k-1.
std::vector<double> beta_table(const NoiseSchedule& schedule);

/// Corrupts `window` in place with per-slot levels `betas` (slot 0 is skipped).
void corrupt_window_inplace(std::span<TokenId> window, std::span<const double> betas, int vocab_size, Rng& rng);

std::vector<TokenId> corrupt_window(std::span<const TokenId> window, const NoiseSchedule& schedule,
                                    int vocab_size, std::uint64_t seed);

/// Corrupts every input window with its own stream derive_seed(seed, t).
/// Targets and mask are copied through untouched.
WindowedSequence corrupt_batch(const WindowedSequence& windowed, const NoiseSchedule& schedule,
                               std::uint64_t seed);

}  // namespace nxt
