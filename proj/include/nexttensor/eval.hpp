// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation against the synthetic oracle.
//
// Held-out likelihood is computed through a sequential scorer that consumes
// one input window per step, so the trained model and the oracle itself plug
// into the same harness. Three input regimes are supported:
//
//   clean    true windows (teacher forcing). For k > 1 slot 0 of output p
//            predicts the token sitting in slot 1 of its input, so this regime
//            measures copying as much as modeling.
//   noised   true windows corrupted by the training schedule.
//   rollout  slot 0 is the true previous token, slots 1..k-1 are sampled from
//            the model's own previous window, exactly as during decoding.
//
// The headline per-token NLL is the rollout slot-0 cross-entropy: the
// likelihood the commit-and-refine sampler assigns to held-out data given one
// draw of provisional tokens. It coincides with ordinary teacher-forced NLL
// when k = 1.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nexttensor/decode.hpp"
#include "nexttensor/model.hpp"
#include "nexttensor/noise.hpp"
#include "nexttensor/toydata.hpp"

namespace nxt {

/// Sequential k x V logit source.
class WindowScorer {
 public:
  virtual ~WindowScorer() = default;
  virtual int k() const = 0;
  virtual int vocab_size() const = 0;
  virtual int length() const = 0;
  virtual int num_classes() const = 0;
  /// Resets state and writes the logits of output position 0.
  virtual void start(int class_label, RowMat<double>& logits) = 0;
  /// Feeds the next input window and writes the logits of the next position.
  virtual void advance(std::span<const TokenId> window, RowMat<double>& logits) = 0;
};

/// Incremental model scorer.
class ModelScorer final : public WindowScorer {
 public:
  explicit ModelScorer(const ModelParams<float>& params);

  int k() const override { return model_.config().k; }
  int vocab_size() const override { return model_.config().vocab_size; }
  int length() const override { return model_.config().seq_len; }
  int num_classes() const override { return model_.config().num_classes; }
  void start(int class_label, RowMat<double>& logits) override;
  void advance(std::span<const TokenId> window, RowMat<double>& logits) override;

 private:
  StepModel model_;
  KvCache cache_;
  RowMat<float> buf_;
};

/// k = 1 scorer whose logits are the oracle's log conditionals.
class OracleScorer final : public WindowScorer {
 public:
  explicit OracleScorer(const SyntheticSpec& spec);

  int k() const override { return 1; }
  int vocab_size() const override { return spec_->vocab_size; }
  int length() const override { return spec_->seq_len(); }
  int num_classes() const override { return spec_->num_classes; }
  void start(int class_label, RowMat<double>& logits) override;
  void advance(std::span<const TokenId> window, RowMat<double>& logits) override;

 private:
  void emit(RowMat<double>& logits);

  const SyntheticSpec* spec_;
  int class_label_ = 0;
  std::vector<TokenId> prefix_;
  std::vector<double> probs_;
};

enum class EvalMode { clean, noised, rollout };

std::string_view to_string(EvalMode m);
EvalMode parse_eval_mode(std::string_view name);

struct EvalOptions {
  EvalMode mode = EvalMode::rollout;
  NoiseSchedule schedule;  // noised mode only
  std::uint64_t seed = 0;
};

struct NllResult {
  double per_token = 0;             // mean slot-0 cross-entropy, nats
  std::vector<double> slot_nll;     // mean cross-entropy per slot over non-padding targets
  std::vector<std::int64_t> slot_cells;
  std::int64_t tokens = 0;
  // Cells where argmax(slot j) equals the aligned symbol in slot j + 1 of the
  // input window (j <= k - 2, non-padding). Empty for k = 1.
  std::int64_t copy_hits = 0;
  std::int64_t copy_cells = 0;
  std::vector<std::int64_t> copy_slot_hits;   // length k - 1
  std::vector<std::int64_t> copy_slot_cells;

  double copy_rate() const { return copy_cells ? static_cast<double>(copy_hits) / copy_cells : 0.0; }
  std::vector<double> copy_rate_by_slot() const;
};

/// Throws ParameterError on an empty dataset or records that do not fit the scorer.
NllResult heldout_nll(WindowScorer& scorer, std::span<const Sample> data, const EvalOptions& options);
NllResult heldout_nll(const ModelParams<float>& params, std::span<const Sample> data, const EvalOptions& options);

struct LeakageReport {
  int k = 0;
  double copy_rate = 0;                  // clean inputs, all overlapping slots
  std::vector<double> copy_rate_by_slot; // slot j copies input slot j + 1; empty for k = 1
  double new_slot_nll = 0;               // slot k - 1, rollout inputs
  double new_slot_nll_clean = 0;
  double new_slot_nll_noised = 0;        // inputs corrupted by `schedule`
  double per_token_nll = 0;              // rollout
};

LeakageReport leakage_probe(const ModelParams<float>& params, std::span<const Sample> data,
                            const NoiseSchedule& schedule, std::uint64_t seed);

/// Normalized histogram of horizontally adjacent pairs (row-major V x V).
std::vector<double> bigram_histogram(std::span<const Sample> samples, int vocab_size, int height, int width);

/// L1 distance between the bigram histograms of two sample sets, in [0, 2].
double bigram_l1(std::span<const Sample> a, std::span<const Sample> b, int vocab_size, int height, int width);

struct DivergenceResult {
  std::int64_t samples = 0;
  double bigram_l1 = 0;
  double model_nll = 0;   // mean oracle NLL of the candidate samples, nats per sequence
  double oracle_nll = 0;  // same for the reference samples
  double exact_nll_gap = 0;
  double exact_nll_gap_stderr = 0;
};

inline constexpr std::size_t kMinDivergenceSamples = 1000;

/// Candidate vs reference statistics. Both sets need >= kMinDivergenceSamples
/// records; all must carry the same class label.
DivergenceResult compare_samples(const SyntheticSpec& spec, std::span<const Sample> candidate,
                                 std::span<const Sample> reference);

std::vector<Sample> oracle_samples(const SyntheticSpec& spec, int class_label, std::size_t n, std::uint64_t seed);
std::vector<Sample> model_samples(const ModelParams<float>& params, int class_label, std::size_t n,
                                  std::uint64_t seed, DecodeConfig decode = {});

/// One class: n model samples against n oracle samples.
DivergenceResult divergence(const ModelParams<float>& params, const SyntheticSpec& spec, int class_label,
                            std::size_t n_samples, std::uint64_t seed, const DecodeConfig& decode = {});

/// Per-class divergence averaged over every class. The gap stderr combines
/// the per-class errors.
DivergenceResult divergence_all_classes(const ModelParams<float>& params, const SyntheticSpec& spec,
                                        std::size_t n_per_class, std::uint64_t seed,
                                        const DecodeConfig& decode = {});

/// Identifies the data-generating spec; reports compare only within one.
std::string spec_fingerprint(const SyntheticSpec& spec);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string config_hash(std::string_view text);

struct EvalReport {
  std::string run_name;
  std::uint64_t seed = 0;
  std::string spec_fingerprint;
  int k = 0;
  std::vector<std::pair<std::string, std::string>> config;  // echo, in order

  double heldout_nll_per_token = 0;  // rollout
  std::vector<double> slot_nll;      // rollout
  double clean_nll_per_token = 0;
  double noised_nll_per_token = 0;
  double copy_rate = 0;
  std::int64_t heldout_records = 0;

  std::int64_t samples_per_class = 0;
  double sample_bigram_l1 = 0;
  double sample_exact_nll_gap = 0;
  double sample_exact_nll_gap_stderr = 0;

  std::vector<BenchRow> throughput;

  /// Throws ConsistencyError when a metric is non-finite or out of range.
  void validate() const;
};

/// Nested key-value text, one `dotted.key = value` per line. Doubles are
/// written in shortest round-trip form, so read(write(r)) == r.
void write_report(std::ostream& os, const EvalReport& report);
EvalReport read_report(std::istream& is);

/// One header row plus one row per report.
void write_report_tsv(std::ostream& os, std::span<const EvalReport> reports);

/// `eval-<config hash>-s<seed>`.
std::string report_stem(std::string_view config_text, std::uint64_t seed);

struct ComparisonRow {
  std::string run_name;
  int k = 0;
  double heldout_nll = 0;
  double bigram_l1 = 0;
  double exact_nll_gap = 0;
  double samples_per_sec = 0;  // throughput row matching k, 0 if absent
  double step_ms = 0;
  double delta_nll = 0;        // vs the first report
  double delta_l1_rel = 0;     // (l1 - l1_first) / l1_first
  int rank_nll = 0;            // 1 = best
  int rank_l1 = 0;
};

/// Rows in input order; the first report is the baseline. Throws
/// ParameterError on fewer than two reports or mixed spec fingerprints.
std::vector<ComparisonRow> compare_runs(std::span<const EvalReport> reports);
void write_comparison(std::ostream& os, std::span<const ComparisonRow> rows);

}  // namespace nxt
