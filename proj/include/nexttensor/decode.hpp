// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0
//
// Commit-and-refine sampling. Step 0 feeds the class position and samples a
// full window; every later step feeds [last committed token] followed by the
// k - 1 provisional tokens carried from the previous window, samples a new
// window, and commits its first slot.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "nexttensor/model.hpp"
#include "nexttensor/rng.hpp"

namespace nxt {

enum class ProvisionalPolicy { sample, argmax };

std::string_view to_string(ProvisionalPolicy p);
ProvisionalPolicy parse_provisional_policy(std::string_view name);

struct DecodeConfig {
  double temperature = 1.0;
  int top_k = 0;  // 0 or >= V disables truncation
  bool greedy = false;
  ProvisionalPolicy provisional = ProvisionalPolicy::sample;
  std::uint64_t seed = 0;

  void validate(int vocab_size) const;
};

/// Index of the largest logit (first on ties).
TokenId argmax(std::span<const float> logits);

/// Temperature-scaled, top-k truncated categorical draw; argmax when greedy.
/// Consumes exactly one uniform draw unless greedy.
TokenId sample_categorical(std::span<const float> logits, const DecodeConfig& config, Rng& rng);

struct DecodeTrace {
  int length = 0;
  int k = 0;
  int vocab_size = 0;
  std::vector<std::vector<TokenId>> windows;  // per step, k tokens (pad past the end)
  std::vector<std::vector<std::pair<int, TokenId>>> history;  // per position: (step, prediction)
};

struct DecodeResult {
  int class_label = 0;
  std::vector<TokenId> tokens;
  DecodeTrace trace;
};

/// Number of predictions position `position` received before commitment.
int refine_count(const DecodeTrace& trace, int position);

/// Generates one sequence. Reuse one Decoder per thread.
class Decoder {
 public:
  explicit Decoder(const StepModel& model);

  DecodeResult generate(int class_label, const DecodeConfig& config);

 private:
  const StepModel* model_;
  KvCache cache_;
  RowMat<float> logits_;
};

DecodeResult generate(const ModelParams<float>& params, int class_label, const DecodeConfig& config);

/// `position<TAB>step<TAB>predicted_token`, ordered by step then slot.
void write_trace(std::ostream& os, const DecodeTrace& trace);
/// H rows of W space-separated ids.
void write_grid(std::ostream& os, std::span<const TokenId> tokens, int height, int width);
/// Binary P5 graymap with token ids scaled to 0..255.
void write_pgm(std::ostream& os, std::span<const TokenId> tokens, int height, int width, int vocab_size);

struct BenchRow {
  int k = 0;
  std::size_t parameters = 0;
  int batch = 0;
  int repetitions = 0;
  double samples_per_sec_mean = 0;
  double samples_per_sec_sd = 0;
  double step_ms_mean = 0;  // per decode step, per sequence
  double step_ms_sd = 0;
};

/// Times `repetitions` rounds of `batch` generations per model after one
/// warm-up round. Models are timed interleaved, round by round, so slow
/// drifts in machine load hit every row alike.
std::vector<BenchRow> throughput_bench(std::span<const ModelParams<float>* const> models, int batch, int repetitions,
                                       std::uint64_t seed);

void write_bench_table(std::ostream& os, std::span<const BenchRow> rows);

}  // namespace nxt
