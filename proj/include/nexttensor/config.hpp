// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a flat `section.key = value` text format. Every field
// has a default, unknown keys are rejected, and command-line flags
// `--section.key value` override file values.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nexttensor/decode.hpp"
#include "nexttensor/model.hpp"
#include "nexttensor/noise.hpp"
#include "nexttensor/toydata.hpp"
#include "nexttensor/train.hpp"

namespace nxt {

struct DataSection {
  int vocab_size = 16;
  int height = 8;
  int width = 8;
  int num_classes = 4;
  double mix_weight = 0.5;
  std::uint64_t spec_seed = 0;
  std::size_t train_records = 10000;
  std::size_t heldout_records = 1000;
  // Record i of a split is drawn from derive_seed(split seed, i), so distinct
  // split seeds give disjoint streams.
  std::uint64_t train_seed = 1;
  std::uint64_t heldout_seed = 2;
};

struct ModelSection {
  int k = 4;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int q_depth = 1;
  int mlp_ratio = 4;
  int q_mlp_ratio = 1;
};

struct TrainSection {
  int batch_size = 16;
  int steps = 3000;
  double learning_rate = 1e-3;
  int warmup_steps = 500;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-8;
  double grad_clip_norm = 1.0;
  int eval_every = 500;       // 0 disables the held-out curve
  int eval_records = 200;     // held-out records scored by the curve
  int checkpoint_every = 1000;
};

struct NoiseSection {
  ScheduleKind kind = ScheduleKind::exponential;
  double exponent = 0.0;  // 0 selects 2 / k
  std::vector<double> loss_weights;  // empty: uniform
};

struct DecodeSection {
  double temperature = 1.0;
  int top_k = 0;
  bool greedy = false;
  ProvisionalPolicy provisional = ProvisionalPolicy::sample;
  int samples = 8;  // sequences written by sample / trace
};

struct EvalSection {
  std::size_t records = 1000;          // held-out records scored (0 = all)
  std::size_t samples_per_class = 2500;
  int bench_batch = 8;                 // 0 skips the throughput rows
  int bench_repetitions = 3;
};

struct BenchSection {
  std::vector<int> ks{1, 2, 4, 8};
  int batch = 8;
  int repetitions = 5;
};

struct Config {
  std::string run_name = "run";
  std::string output_dir = "runs";
  std::uint64_t seed = 0;

  DataSection data;
  ModelSection model;
  TrainSection train;
  NoiseSection noise;
  DecodeSection decode;
  EvalSection eval;
  BenchSection bench;

  /// Checks every section and the cross-section constraints. Throws ParameterError.
  void validate() const;

  SyntheticSpec spec() const;
  ModelConfig model_config() const;
  TrainConfig train_config() const;
  DecodeConfig decode_config() const;
  NoiseSchedule schedule() const;
};

/// Component seeds derived from Config::seed.
enum class SeedStream : std::uint64_t { model_init = 1, train = 2, decode = 3, eval = 4, bench = 5 };
std::uint64_t stream_seed(const Config& config, SeedStream stream);

/// All keys in canonical order.
std::vector<std::string> config_keys();

std::string get_value(const Config& config, std::string_view key);
/// Resolves `key` (see resolve_key) and assigns it. Throws ParameterError on
/// unknown keys or unparsable values.
void set_value(Config& config, std::string_view key, std::string_view value);

/// Full dotted keys pass through; a bare name resolves when exactly one key
/// ends in `.name` (so `k` means `model.k`).
std::string resolve_key(std::string_view key);

/// Every key, one `key = value` line each, in canonical order.
std::string to_text(const Config& config);
std::vector<std::pair<std::string, std::string>> to_pairs(const Config& config);

/// Applies `key = value` lines on top of `base`. Blank lines and `#` comments
/// are skipped. Throws ParameterError naming the line on any problem.
Config parse_config(std::string_view text, Config base = {});
Config load_config(const std::string& path, Config base = {});

}  // namespace nxt
