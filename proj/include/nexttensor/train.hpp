// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0
//
// Masked, weighted window cross-entropy and the AdamW training loop.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "nexttensor/model.hpp"
#include "nexttensor/noise.hpp"

namespace nxt {

struct TrainConfig {
  int batch_size = 16;
  int steps = 3000;
  double learning_rate = 1e-3;
  int warmup_steps = 500;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-8;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  NoiseSchedule schedule;
  LossWeights weights;

  void validate(int k) const;
};

template <typename S>
struct LossResult {
  double loss = 0;                 // mean over unmasked cells of w_j * CE
  std::vector<double> slot_loss;   // unweighted mean CE per slot
  std::vector<std::int64_t> slot_cells;
  std::int64_t cells = 0;
};

/// `logits` has one row per (position, slot) cell, row p * k + j. When
/// `dlogits` is given it receives d loss / d logits (masked rows are zero).
/// Throws ParameterError when every cell is masked.
template <typename S>
LossResult<S> masked_cross_entropy(const RowMat<S>& logits, std::span<const TokenId> targets,
                                   std::span<const std::uint8_t> mask, int k, std::span<const double> weights,
                                   std::type_identity_t<RowMat<S>>* dlogits);

/// Model inputs plus flat prediction targets for a batch of samples.
struct TrainBatch {
  WindowBatch inputs;
  std::vector<TokenId> targets;       // B x T x k
  std::vector<std::uint8_t> mask;     // B x T x k
};

/// Windows every sample, corrupts sample b's inputs with derive_seed(noise_seed, b)
/// and keeps the first T - 1 input windows (the last one only predicts padding).
TrainBatch make_train_batch(std::span<const Sample> samples, int k, int vocab_size, const NoiseSchedule& schedule,
                            std::uint64_t noise_seed);

/// Seeds that fully determine one optimizer step.
std::vector<std::size_t> batch_indices(const TrainConfig& config, std::size_t dataset_size, std::int64_t step);
std::uint64_t batch_noise_seed(const TrainConfig& config, std::int64_t step);

struct OptimizerState {
  std::int64_t step = 0;
  ModelParams<float> m;
  ModelParams<float> v;
};

OptimizerState make_optimizer_state(const ModelConfig& config);

/// Learning rate for 0-based step index: linear warmup then constant.
double learning_rate_at(const TrainConfig& config, std::int64_t step);

/// Whether AdamW weight decay applies to the named array.
bool decays(const std::string& name, const Tensor<float>& t);

struct StepMetrics {
  std::int64_t step = 0;  // 1-based index of the completed step
  double loss = 0;
  std::vector<double> slot_loss;
  double grad_norm = 0;
  double ms = 0;
  std::optional<double> heldout_nll;
};

/// One metrics record: step, loss, comma-separated slot losses, held-out NLL
/// (empty when not evaluated at this step), milliseconds per step.
std::string format_metrics(const StepMetrics& m);

/// Reusable buffers for train_step.
struct TrainWorkspace {
  Forward<float> forward;
  ModelParams<float> grads;
  RowMat<float> dlogits;
};

TrainWorkspace make_train_workspace(const ModelConfig& config);

/// One AdamW step on `opt.step` using the batch that step selects from `data`.
/// Throws NumericError (naming the batch seed) on a non-finite loss.
StepMetrics train_step(ModelParams<float>& params, OptimizerState& opt, std::span<const Sample> data,
                       const TrainConfig& config, TrainWorkspace& ws);

struct TrainReport {
  std::vector<StepMetrics> steps;
  std::vector<std::pair<std::int64_t, double>> heldout_curve;
};

struct TrainHooks {
  int eval_every = 0;  // 0 disables
  std::function<double(const ModelParams<float>&)> heldout;
  std::function<void(const StepMetrics&)> on_step;
  int checkpoint_every = 0;
  std::function<void(const ModelParams<float>&, const OptimizerState&)> checkpoint;
};

/// Runs steps opt.step .. config.steps - 1.
TrainReport train(ModelParams<float>& params, OptimizerState& opt, std::span<const Sample> data,
                  const TrainConfig& config, const TrainHooks& hooks = {});

struct GradcheckConfig {
  ModelConfig model;
  NoiseSchedule schedule{ScheduleKind::linear, 2};
  int batch = 2;
  int samples = 200;
  double step = 1e-4;
  std::uint64_t seed = 0;

  /// The two-layer, width-16, T = 6, k = 2, V = 5 reference problem.
  static GradcheckConfig tiny(int k = 2);
};

struct GradcheckResult {
  double max_rel_error = 0;
  std::string worst;
  int checked = 0;
  int tensors_covered = 0;
};

/// Compares analytic gradients of the training loss against central
/// differences in double precision. Gates are randomized so every path
/// carries gradient. `tamper` may edit the analytic gradients before the
/// comparison, which is how the harness's own sensitivity is tested.
GradcheckResult gradcheck(const GradcheckConfig& config,
                          const std::function<void(ModelParams<double>&)>& tamper = {});

}  // namespace nxt
