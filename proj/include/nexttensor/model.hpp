// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0
//
// Causal transformer over overlapping token windows.
//
//   input encoder   x_t = embed(w_t[0]) + gate_in * Qin(w_t)          (+ position)
//   backbone        pre-norm causal self-attention blocks, final RMSNorm -> h_t
//   output decoder  logits_{t,j} = head(h_t + gate_out * Qout(slot_query_j; h_t))
//
// Qin and Qout are small query transformers (cross-attention layers followed
// by one MLP). Both gates start at zero, so a freshly initialized model is
// exactly a plain next-token transformer over the first symbol of each window.
//
// Sequence layout: position 0 holds the class embedding, position p >= 1
// holds input window p - 1. Output position p predicts window p, i.e. the k
// tokens starting at token p.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nexttensor/tensor.hpp"
#include "nexttensor/toydata.hpp"

namespace nxt {

struct ModelConfig {
  int vocab_size = 16;
  int k = 4;
  int seq_len = 64;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int q_depth = 1;
  int num_classes = 4;
  int mlp_ratio = 4;
  int q_mlp_ratio = 1;
  std::uint64_t seed = 0;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
};

template <typename S>
struct BlockWeights {
  Tensor<S> attn_norm, wqkv, wo, mlp_norm, w1, w2;
};

template <typename S>
struct CrossLayerWeights {
  Tensor<S> q_norm, kv_norm, wq, wk, wv, wo;
};

/// Learned queries, cross-attention stack, one MLP, zero-initialized gate.
template <typename S>
struct QueryTransformerWeights {
  Tensor<S> queries;  // nq x d
  std::vector<CrossLayerWeights<S>> layers;
  Tensor<S> mlp_norm, w1, w2;
  Tensor<S> gate;  // d x d
};

template <typename S>
struct ModelParams {
  ModelConfig config;
  Tensor<S> tok_emb;  // (V+1) x d, row V embeds the pad symbol
  Tensor<S> cls_emb;  // C x d
  Tensor<S> pos_emb;  // (T+1) x d
  std::vector<BlockWeights<S>> blocks;
  Tensor<S> final_norm;
  Tensor<S> head;  // d x V
  Tensor<S> q_in_slot_pos;  // k x d, added to window symbol embeddings before Qin
  QueryTransformerWeights<S> q_in;   // 1 query
  QueryTransformerWeights<S> q_out;  // k slot queries
};

/// Allocates zero-filled arrays with the shapes implied by `config`.
template <typename S>
ModelParams<S> allocate_params(const ModelConfig& config);

/// Deterministic initialization; both gates are exactly zero.
ModelParams<float> init_params(const ModelConfig& config);

/// Visits every array in a fixed canonical order with its checkpoint name.
template <typename P, typename F>
void for_each_tensor(P& params, F&& f) {
  f("tok_emb", params.tok_emb);
  f("cls_emb", params.cls_emb);
  f("pos_emb", params.pos_emb);
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    auto& b = params.blocks[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    f(p + "attn_norm", b.attn_norm);
    f(p + "wqkv", b.wqkv);
    f(p + "wo", b.wo);
    f(p + "mlp_norm", b.mlp_norm);
    f(p + "w1", b.w1);
    f(p + "w2", b.w2);
  }
  f("final_norm", params.final_norm);
  f("head", params.head);
  f("q_in.slot_pos", params.q_in_slot_pos);
  auto visit_qt = [&f](const std::string& prefix, auto& qt) {
    f(prefix + "queries", qt.queries);
    for (std::size_t l = 0; l < qt.layers.size(); ++l) {
      auto& c = qt.layers[l];
      const std::string p = prefix + "layers." + std::to_string(l) + ".";
      f(p + "q_norm", c.q_norm);
      f(p + "kv_norm", c.kv_norm);
      f(p + "wq", c.wq);
      f(p + "wk", c.wk);
      f(p + "wv", c.wv);
      f(p + "wo", c.wo);
    }
    f(prefix + "mlp_norm", qt.mlp_norm);
    f(prefix + "w1", qt.w1);
    f(prefix + "w2", qt.w2);
    f(prefix + "gate", qt.gate);
  };
  visit_qt("q_in.", params.q_in);
  visit_qt("q_out.", params.q_out);
}

template <typename S>
std::size_t parameter_count(const ModelParams<S>& params) {
  std::size_t n = 0;
  for_each_tensor(params, [&n](const std::string&, const Tensor<S>& t) { n += t.size(); });
  return n;
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& src) {
  auto out = allocate_params<To>(src.config);
  std::vector<const Tensor<From>*> in;
  for_each_tensor(src, [&in](const std::string&, const Tensor<From>& t) { in.push_back(&t); });
  std::size_t i = 0;
  for_each_tensor(out, [&](const std::string&, Tensor<To>& t) {
    const auto& s = *in[i++];
    for (std::size_t e = 0; e < t.size(); ++e) t.data[e] = static_cast<To>(s.data[e]);
  });
  return out;
}

/// Teacher-forced batch: B sequences, each a class label plus `num_windows`
/// input windows (flat, B x num_windows x k). Sequence length is num_windows + 1.
struct WindowBatch {
  int batch = 0;
  int num_windows = 0;
  int k = 0;
  std::vector<int> classes;
  std::vector<TokenId> windows;

  int positions() const { return num_windows + 1; }
  std::span<const TokenId> window(int b, int w) const {
    return {windows.data() + (static_cast<std::size_t>(b) * num_windows + w) * k, static_cast<std::size_t>(k)};
  }
};

/// Everything the backward pass needs. Opaque outside model.cpp.
template <typename S>
struct ForwardCache;

template <typename S>
struct ForwardResult {
  RowMat<S> logits;  // (B * P * k) x V, row ((b * P + p) * k + j)
  RowMat<S> hidden;  // (B * P) x d, final-normalized backbone output
};

template <typename S>
class Forward {
 public:
  Forward();
  ~Forward();
  Forward(Forward&&) noexcept;
  Forward& operator=(Forward&&) noexcept;

  /// Runs the model; keeps activations for backward().
  const ForwardResult<S>& run(const ModelParams<S>& params, const WindowBatch& batch);

  /// Accumulates parameter gradients for the given logit gradient into `grads`.
  void backward(const ModelParams<S>& params, const RowMat<S>& dlogits, ModelParams<S>& grads);

  const ForwardResult<S>& result() const { return result_; }

 private:
  std::unique_ptr<ForwardCache<S>> cache_;
  ForwardResult<S> result_;
};

/// Output of a single-sequence forward.
struct ForwardOutput {
  RowMat<float> logits;  // (T * k) x V, row t * k + j
  RowMat<float> hidden;  // T x d

  std::span<const float> slot_logits(int t, int j, int k) const {
    return {logits.data() + (static_cast<std::size_t>(t) * k + j) * logits.cols(),
            static_cast<std::size_t>(logits.cols())};
  }
};

/// Single sequence. `input_windows` is T x k (the full windowed input); the
/// last window is not consumed because everything it would predict is padding.
ForwardOutput forward(const ModelParams<float>& params, int class_label, std::span<const TokenId> input_windows);

/// Same as forward() on the first `num_windows` windows only (T' = num_windows + 1 outputs).
ForwardOutput forward_prefix(const ModelParams<float>& params, int class_label,
                             std::span<const TokenId> input_windows, int num_windows);

/// Input-encoder output (before the position embedding) for one window.
RowVec<float> encode_window(const ModelParams<float>& params, std::span<const TokenId> window);

/// k x V slot logits for one final hidden state.
RowMat<float> decode_hidden(const ModelParams<float>& params, const RowVec<float>& hidden);

/// Per-layer self-attention keys/values for incremental decoding.
struct KvCache {
  int capacity = 0;
  int length = 0;
  int class_label = -1;
  std::vector<RowMat<float>> keys;    // per layer, capacity x d
  std::vector<RowMat<float>> values;  // per layer, capacity x d
};

KvCache make_kv_cache(const ModelConfig& config);

/// Precomputed per-model tables that make forward_step cheap. Immutable once
/// built; share freely across concurrent decoders.
class StepModel {
 public:
  explicit StepModel(const ModelParams<float>& params);

  const ModelParams<float>& params() const { return *params_; }
  const ModelConfig& config() const { return params_->config; }

  /// First step: feeds the class position. Returns k x V logits for window 0.
  void step_class(KvCache& cache, int class_label, RowMat<float>& logits) const;
  /// Later steps: feeds one input window, returns k x V logits for the next window.
  void step_window(KvCache& cache, std::span<const TokenId> window, RowMat<float>& logits) const;

 private:
  void run_position(KvCache& cache, RowVec<float>& x, RowMat<float>& logits) const;
  void encode(std::span<const TokenId> window, RowVec<float>& out) const;

  const ModelParams<float>* params_;
  // Qin keys/values per layer for every (slot, symbol) pair:
  // row (j * (V+1) + s) of the projected, normalized slot-embedding table.
  std::vector<RowMat<float>> qin_keys_;
  std::vector<RowMat<float>> qin_values_;
  RowVec<float> qin_first_query_;  // projected, normalized learned query of layer 0
  RowMat<float> gate_head_;        // q_out.gate * head
};

/// forward_step(params, cache, window) from the model contract, built on a
/// temporary StepModel. Prefer StepModel directly in loops.
RowMat<float> forward_step(const ModelParams<float>& params, KvCache& cache, int class_label,
                           std::span<const TokenId> window);

}  // namespace nxt
