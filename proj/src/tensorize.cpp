// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include "nexttensor/tensorize.hpp"

#include <algorithm>
#include <string>

#include "nexttensor/error.hpp"

namespace nxt {

WindowedSequence to_windows(std::span<const TokenId> tokens, int k, int vocab_size) {
  const int T = static_cast<int>(tokens.size());
  NXT_REQUIRE(vocab_size >= 1, "vocab_size must be positive");
  NXT_REQUIRE(k >= 1 && k <= T, "window size must satisfy 1 <= k <= T");
  for (TokenId t : tokens) NXT_REQUIRE(t >= 0 && t < vocab_size, "token out of vocabulary");

  WindowedSequence ws;
  ws.length = T;
  ws.k = k;
  ws.vocab_size = vocab_size;
  const auto cells = static_cast<std::size_t>(T) * k;
  ws.inputs.resize(cells);
  ws.targets.resize(cells);
  ws.loss_mask.resize(cells);
  const TokenId pad = pad_token(vocab_size);
  auto at = [&](int i) { return i < T ? tokens[i] : pad; };
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < k; ++j) {
      const auto c = static_cast<std::size_t>(t) * k + j;
      ws.inputs[c] = at(t + j);
      ws.targets[c] = at(t + 1 + j);
      ws.loss_mask[c] = ws.targets[c] != pad;
    }
  }
  return ws;
}

PredictionTargets prediction_targets(const WindowedSequence& ws) {
  PredictionTargets out;
  out.length = ws.length;
  out.k = ws.k;
  out.tokens = ws.inputs;
  out.mask.resize(out.tokens.size());
  const TokenId pad = ws.pad();
  std::transform(out.tokens.begin(), out.tokens.end(), out.mask.begin(),
                 [pad](TokenId t) { return static_cast<std::uint8_t>(t != pad); });
  return out;
}

std::vector<TokenId> from_committed(std::span<const TokenId> committed, int length, int vocab_size) {
  NXT_REQUIRE(length >= 0 && committed.size() >= static_cast<std::size_t>(length),
              "committed sequence shorter than the target length");
  std::vector<TokenId> out(committed.begin(), committed.begin() + length);
  for (int i = 0; i < length; ++i) {
    if (out[i] == pad_token(vocab_size))
      throw ConsistencyError("padding symbol committed at position " + std::to_string(i));
    if (out[i] < 0 || out[i] > vocab_size)
      throw ConsistencyError("out-of-vocabulary symbol committed at position " + std::to_string(i));
  }
  return out;
}

std::int64_t covered_cells(int length, int k) {
  std::int64_t n = 0;
  for (int t = 0; t < length; ++t) n += std::min(k, length - t);
  return n;
}

}  // namespace nxt
