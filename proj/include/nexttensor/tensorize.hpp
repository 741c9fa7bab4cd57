// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nexttensor/toydata.hpp"

namespace nxt {

/// The reserved padding symbol for a vocabulary of size V is V itself.
constexpr TokenId pad_token(int vocab_size) { return static_cast<TokenId>(vocab_size); }

/// Overlapping k-token windows over a length-T sequence, stored flat (T x k).
///
/// Window t of `inputs` starts at token t; window t of `targets` starts at
/// token t + 1. Positions past the end of the sequence hold the pad symbol.
/// `loss_mask` is false exactly where the target is padding.
struct WindowedSequence {
  int length = 0;  // T
  int k = 0;
  int vocab_size = 0;
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
  std::vector<std::uint8_t> loss_mask;

  TokenId pad() const { return pad_token(vocab_size); }

  std::span<const TokenId> input_window(int t) const {
    return {inputs.data() + static_cast<std::size_t>(t) * k, static_cast<std::size_t>(k)};
  }
  std::span<TokenId> input_window(int t) {
    return {inputs.data() + static_cast<std::size_t>(t) * k, static_cast<std::size_t>(k)};
  }
  std::span<const TokenId> target_window(int t) const {
    return {targets.data() + static_cast<std::size_t>(t) * k, static_cast<std::size_t>(k)};
  }
  std::span<const std::uint8_t> mask_row(int t) const {
    return {loss_mask.data() + static_cast<std::size_t>(t) * k, static_cast<std::size_t>(k)};
  }
};

WindowedSequence to_windows(std::span<const TokenId> tokens, int k, int vocab_size);

/// Windows the model is trained to emit, one per output position.
///
/// The class position emits window 0 and the position fed input window t
/// emits window t + 1, so for T output positions the targets are
/// [window 0] followed by target windows 0..T-2. Since target window t equals
/// input window t + 1, this is the clean input-window grid itself. The last
/// target window (all padding) has no output position.
struct PredictionTargets {
  int length = 0;
  int k = 0;
  std::vector<TokenId> tokens;       // T x k
  std::vector<std::uint8_t> mask;    // T x k, false on padding
};

PredictionTargets prediction_targets(const WindowedSequence& ws);

/// Returns the first `length` committed tokens, rejecting padding or any
/// out-of-vocabulary symbol among them (ConsistencyError).
std::vector<TokenId> from_committed(std::span<const TokenId> committed, int length, int vocab_size);

/// Number of non-padding cells among T windows of size k: sum_t min(k, T - t).
std::int64_t covered_cells(int length, int k);

}  // namespace nxt
