// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include "nexttensor/model.hpp"

#include <cmath>
#include <memory>

#include "nexttensor/error.hpp"
#include "nexttensor/rng.hpp"
#include "nexttensor/tensorize.hpp"
#include "nn.hpp"

namespace nxt {

using nn::ColVec;

void ModelConfig::validate() const {
  NXT_REQUIRE(vocab_size >= 2, "model vocab_size must be >= 2");
  NXT_REQUIRE(k >= 1, "window size k must be >= 1");
  NXT_REQUIRE(seq_len >= 1 && k <= seq_len, "window size must not exceed sequence length");
  NXT_REQUIRE(d_model >= 1 && n_heads >= 1 && d_model % n_heads == 0, "d_model must be divisible by n_heads");
  NXT_REQUIRE(n_layers >= 0, "n_layers must be nonnegative");
  NXT_REQUIRE(q_depth >= 1, "q_depth must be >= 1");
  NXT_REQUIRE(num_classes >= 1, "num_classes must be >= 1");
  NXT_REQUIRE(mlp_ratio >= 1 && q_mlp_ratio >= 1, "mlp ratios must be >= 1");
}

namespace {

template <typename S>
QueryTransformerWeights<S> allocate_qt(const ModelConfig& c, int nq) {
  const int d = c.d_model;
  QueryTransformerWeights<S> qt;
  qt.queries = Tensor<S>::mat(nq, d);
  for (int l = 0; l < c.q_depth; ++l) {
    CrossLayerWeights<S> cl;
    cl.q_norm = Tensor<S>::vec(d);
    cl.kv_norm = Tensor<S>::vec(d);
    cl.wq = Tensor<S>::mat(d, d);
    cl.wk = Tensor<S>::mat(d, d);
    cl.wv = Tensor<S>::mat(d, d);
    cl.wo = Tensor<S>::mat(d, d);
    qt.layers.push_back(std::move(cl));
  }
  qt.mlp_norm = Tensor<S>::vec(d);
  qt.w1 = Tensor<S>::mat(d, d * c.q_mlp_ratio);
  qt.w2 = Tensor<S>::mat(d * c.q_mlp_ratio, d);
  qt.gate = Tensor<S>::mat(d, d);
  return qt;
}

bool is_norm_gain(const std::string& name) { return name.ends_with("norm"); }

bool is_residual_output(const std::string& name) {
  return name.ends_with(".wo") || name.ends_with(".w2");
}

}  // namespace

template <typename S>
ModelParams<S> allocate_params(const ModelConfig& c) {
  c.validate();
  const int d = c.d_model;
  ModelParams<S> p;
  p.config = c;
  p.tok_emb = Tensor<S>::mat(c.vocab_size + 1, d);
  p.cls_emb = Tensor<S>::mat(c.num_classes, d);
  p.pos_emb = Tensor<S>::mat(c.seq_len + 1, d);
  for (int l = 0; l < c.n_layers; ++l) {
    BlockWeights<S> b;
    b.attn_norm = Tensor<S>::vec(d);
    b.wqkv = Tensor<S>::mat(d, 3 * d);
    b.wo = Tensor<S>::mat(d, d);
    b.mlp_norm = Tensor<S>::vec(d);
    b.w1 = Tensor<S>::mat(d, d * c.mlp_ratio);
    b.w2 = Tensor<S>::mat(d * c.mlp_ratio, d);
    p.blocks.push_back(std::move(b));
  }
  p.final_norm = Tensor<S>::vec(d);
  p.head = Tensor<S>::mat(d, c.vocab_size);
  p.q_in_slot_pos = Tensor<S>::mat(c.k, d);
  p.q_in = allocate_qt<S>(c, 1);
  p.q_out = allocate_qt<S>(c, c.k);
  return p;
}

template ModelParams<float> allocate_params<float>(const ModelConfig&);
template ModelParams<double> allocate_params<double>(const ModelConfig&);

ModelParams<float> init_params(const ModelConfig& config) {
  auto p = allocate_params<float>(config);
  constexpr double kStd = 0.02;
  const double residual_std = kStd / std::sqrt(2.0 * std::max(1, config.n_layers));
  std::uint64_t index = 0;
  for_each_tensor(p, [&](const std::string& name, Tensor<float>& t) {
    Rng rng(derive_seed(config.seed, index++));
    if (is_norm_gain(name)) {
      std::fill(t.data.begin(), t.data.end(), 1.0f);
    } else if (name.ends_with("gate")) {
      t.zero();
    } else {
      const double std = is_residual_output(name) ? residual_std : kStd;
      for (auto& x : t.data) x = static_cast<float>(rng.normal() * std);
    }
  });
  return p;
}

// ======================================================= query transformer

namespace {

template <typename S>
struct CrossLayerCache {
  RowMat<S> z_in, nz, nx, qp, kp, vp, attn, o;
  ColVec<S> inv_q, inv_kv;
};

template <typename S>
struct QtCache {
  Eigen::Index groups = 0, nq = 0, nk = 0;
  std::vector<CrossLayerCache<S>> layers;
  RowMat<S> z_mlp, nm, pre, act, th, z_out;
  ColVec<S> inv_m;
};

template <typename S>
void qt_forward(const QueryTransformerWeights<S>& qt, const RowMat<S>& x, Eigen::Index groups, Eigen::Index nk,
                int heads, QtCache<S>& cache, RowMat<S>& out) {
  const Eigen::Index nq = qt.queries.rows();
  const Eigen::Index d = qt.queries.cols();
  cache.groups = groups;
  cache.nq = nq;
  cache.nk = nk;
  cache.layers.resize(qt.layers.size());

  RowMat<S> z(groups * nq, d);
  for (Eigen::Index g = 0; g < groups; ++g) z.middleRows(g * nq, nq) = qt.queries.m();

  for (std::size_t l = 0; l < qt.layers.size(); ++l) {
    const auto& w = qt.layers[l];
    auto& c = cache.layers[l];
    c.z_in = z;
    nn::rms_forward(x, w.kv_norm, c.nx, c.inv_kv);
    c.vp.noalias() = c.nx * w.wv.m();
    if (nk == 1) {
      // A single key gets attention weight exactly one, so every query reads
      // its group's value and the query/key projections carry no gradient.
      c.o.resize(groups * nq, d);
      for (Eigen::Index g = 0; g < groups; ++g) c.o.middleRows(g * nq, nq).rowwise() = c.vp.row(g);
    } else {
      nn::rms_forward(z, w.q_norm, c.nz, c.inv_q);
      c.qp.noalias() = c.nz * w.wq.m();
      c.kp.noalias() = c.nx * w.wk.m();
      nn::cross_attention_forward(c.qp, c.kp, c.vp, groups, nq, nk, heads, c.attn, c.o);
    }
    z.noalias() += c.o * w.wo.m();
  }
  cache.z_mlp = z;
  nn::rms_forward(z, qt.mlp_norm, cache.nm, cache.inv_m);
  cache.pre.noalias() = cache.nm * qt.w1.m();
  nn::gelu_forward(cache.pre, cache.act, cache.th);
  z.noalias() += cache.act * qt.w2.m();
  cache.z_out = z;
  out.noalias() = z * qt.gate.m();
}

/// Accumulates weight gradients into `g` and input gradients into `dx`.
template <typename S>
void qt_backward(const QueryTransformerWeights<S>& qt, const RowMat<S>& x, int heads, const QtCache<S>& cache,
                 const RowMat<S>& dout, QueryTransformerWeights<S>& g, RowMat<S>& dx) {
  const Eigen::Index nq = cache.nq;
  g.gate.m().noalias() += cache.z_out.transpose() * dout;
  RowMat<S> dz = dout * qt.gate.m().transpose();

  g.w2.m().noalias() += cache.act.transpose() * dz;
  RowMat<S> dpre = dz * qt.w2.m().transpose();
  nn::gelu_backward_inplace(cache.pre, cache.th, dpre);
  g.w1.m().noalias() += cache.nm.transpose() * dpre;
  RowMat<S> dnm = dpre * qt.w1.m().transpose();
  nn::rms_backward(cache.z_mlp, cache.inv_m, qt.mlp_norm, dnm, dz, g.mlp_norm);

  for (std::size_t li = qt.layers.size(); li-- > 0;) {
    const auto& w = qt.layers[li];
    auto& gw = g.layers[li];
    const auto& c = cache.layers[li];
    gw.wo.m().noalias() += c.o.transpose() * dz;
    RowMat<S> d_o = dz * w.wo.m().transpose();
    RowMat<S> dvp = RowMat<S>::Zero(c.vp.rows(), c.vp.cols());
    RowMat<S> dnx;
    if (cache.nk == 1) {
      for (Eigen::Index grp = 0; grp < cache.groups; ++grp) dvp.row(grp) = d_o.middleRows(grp * nq, nq).colwise().sum();
      dnx.noalias() = dvp * w.wv.m().transpose();
    } else {
      RowMat<S> dqp = RowMat<S>::Zero(c.qp.rows(), c.qp.cols());
      RowMat<S> dkp = RowMat<S>::Zero(c.kp.rows(), c.kp.cols());
      nn::cross_attention_backward(c.qp, c.kp, c.vp, c.attn, d_o, cache.groups, nq, cache.nk, heads, dqp, dkp, dvp);
      gw.wq.m().noalias() += c.nz.transpose() * dqp;
      gw.wk.m().noalias() += c.nx.transpose() * dkp;
      RowMat<S> dnz = dqp * w.wq.m().transpose();
      nn::rms_backward(c.z_in, c.inv_q, w.q_norm, dnz, dz, gw.q_norm);
      dnx.noalias() = dkp * w.wk.m().transpose();
      dnx.noalias() += dvp * w.wv.m().transpose();
    }
    gw.wv.m().noalias() += c.nx.transpose() * dvp;
    nn::rms_backward(x, c.inv_kv, w.kv_norm, dnx, dx, gw.kv_norm);
  }
  auto dq = g.queries.m();
  for (Eigen::Index grp = 0; grp < cache.groups; ++grp) dq += dz.middleRows(grp * nq, nq);
}

template <typename S>
struct BlockCache {
  RowMat<S> x_in, n1, qkv, attn, o, x_mid, n2, pre, act, th;
  ColVec<S> inv1, inv2;
};

}  // namespace

// ========================================================= batched forward

template <typename S>
struct ForwardCache {
  Eigen::Index batch = 0, positions = 0, windows = 0;
  int k = 0;
  std::vector<int> classes;
  std::vector<TokenId> window_tokens;  // copy of batch windows
  RowMat<S> qin_x;                     // (M*k) x d slot embeddings
  QtCache<S> qin;
  std::vector<BlockCache<S>> blocks;
  RowMat<S> x_final;
  ColVec<S> inv_final;
  QtCache<S> qout;
  RowMat<S> u;  // (N*k) x d head inputs
};

template <typename S>
Forward<S>::Forward() : cache_(std::make_unique<ForwardCache<S>>()) {}
template <typename S>
Forward<S>::~Forward() = default;
template <typename S>
Forward<S>::Forward(Forward&&) noexcept = default;
template <typename S>
Forward<S>& Forward<S>::operator=(Forward&&) noexcept = default;

template <typename S>
const ForwardResult<S>& Forward<S>::run(const ModelParams<S>& params, const WindowBatch& batch) {
  const auto& cfg = params.config;
  const int k = cfg.k;
  const Eigen::Index d = cfg.d_model;
  const int V = cfg.vocab_size;
  NXT_REQUIRE(batch.k == k, "batch window size differs from model k");
  NXT_REQUIRE(batch.num_windows >= 0 && batch.num_windows < cfg.seq_len, "too many windows for model sequence length");
  NXT_REQUIRE(batch.classes.size() == static_cast<std::size_t>(batch.batch), "class labels missing");
  NXT_REQUIRE(batch.windows.size() == static_cast<std::size_t>(batch.batch) * batch.num_windows * k,
              "window buffer has wrong size");
  for (int c : batch.classes) NXT_REQUIRE(c >= 0 && c < cfg.num_classes, "class label out of range");
  for (TokenId t : batch.windows) NXT_REQUIRE(t >= 0 && t <= V, "window symbol out of range");

  auto& c = *cache_;
  const Eigen::Index B = batch.batch;
  const Eigen::Index P = batch.positions();
  const Eigen::Index W = batch.num_windows;
  const Eigen::Index N = B * P;
  const Eigen::Index M = B * W;
  c.batch = B;
  c.positions = P;
  c.windows = W;
  c.k = k;
  c.classes = batch.classes;
  c.window_tokens = batch.windows;

  // Input encoder.
  c.qin_x.resize(M * k, d);
  for (Eigen::Index m = 0; m < M; ++m) {
    for (int j = 0; j < k; ++j) {
      const TokenId s = batch.windows[m * k + j];
      c.qin_x.row(m * k + j) = params.tok_emb.row(s) + params.q_in_slot_pos.row(j);
    }
  }
  RowMat<S> qin_out;
  if (M > 0) qt_forward(params.q_in, c.qin_x, M, k, cfg.n_heads, c.qin, qin_out);

  RowMat<S> x(N, d);
  for (Eigen::Index b = 0; b < B; ++b) {
    x.row(b * P) = params.cls_emb.row(batch.classes[b]) + params.pos_emb.row(0);
    for (Eigen::Index w = 0; w < W; ++w) {
      const Eigen::Index m = b * W + w;
      x.row(b * P + w + 1) =
          params.tok_emb.row(batch.windows[m * k]) + qin_out.row(m) + params.pos_emb.row(w + 1);
    }
  }

  // Backbone.
  c.blocks.resize(params.blocks.size());
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    const auto& w = params.blocks[l];
    auto& bc = c.blocks[l];
    bc.x_in = x;
    nn::rms_forward(x, w.attn_norm, bc.n1, bc.inv1);
    bc.qkv.noalias() = bc.n1 * w.wqkv.m();
    nn::causal_attention_forward(bc.qkv, B, P, cfg.n_heads, bc.attn, bc.o);
    x.noalias() += bc.o * w.wo.m();
    bc.x_mid = x;
    nn::rms_forward(x, w.mlp_norm, bc.n2, bc.inv2);
    bc.pre.noalias() = bc.n2 * w.w1.m();
    nn::gelu_forward(bc.pre, bc.act, bc.th);
    x.noalias() += bc.act * w.w2.m();
  }
  c.x_final = x;
  nn::rms_forward(x, params.final_norm, result_.hidden, c.inv_final);

  // Output decoder.
  RowMat<S> qout_out;
  qt_forward(params.q_out, result_.hidden, N, 1, cfg.n_heads, c.qout, qout_out);
  c.u = std::move(qout_out);
  for (Eigen::Index r = 0; r < N; ++r) c.u.middleRows(r * k, k).rowwise() += result_.hidden.row(r);
  result_.logits.noalias() = c.u * params.head.m();
  return result_;
}

template <typename S>
void Forward<S>::backward(const ModelParams<S>& params, const RowMat<S>& dlogits, ModelParams<S>& grads) {
  const auto& cfg = params.config;
  auto& c = *cache_;
  const int k = c.k;
  const Eigen::Index d = cfg.d_model;
  const Eigen::Index B = c.batch, P = c.positions, W = c.windows;
  const Eigen::Index N = B * P, M = B * W;
  NXT_REQUIRE(dlogits.rows() == N * k && dlogits.cols() == cfg.vocab_size, "dlogits has wrong shape");

  grads.head.m().noalias() += c.u.transpose() * dlogits;
  RowMat<S> du = dlogits * params.head.m().transpose();

  RowMat<S> dh = RowMat<S>::Zero(N, d);
  for (Eigen::Index r = 0; r < N; ++r) dh.row(r) = du.middleRows(r * k, k).colwise().sum();
  qt_backward(params.q_out, result_.hidden, cfg.n_heads, c.qout, du, grads.q_out, dh);

  RowMat<S> dx = RowMat<S>::Zero(N, d);
  nn::rms_backward(c.x_final, c.inv_final, params.final_norm, dh, dx, grads.final_norm);

  for (std::size_t l = params.blocks.size(); l-- > 0;) {
    const auto& w = params.blocks[l];
    auto& g = grads.blocks[l];
    const auto& bc = c.blocks[l];
    // MLP branch.
    g.w2.m().noalias() += bc.act.transpose() * dx;
    RowMat<S> dpre = dx * w.w2.m().transpose();
    nn::gelu_backward_inplace(bc.pre, bc.th, dpre);
    g.w1.m().noalias() += bc.n2.transpose() * dpre;
    RowMat<S> dn2 = dpre * w.w1.m().transpose();
    nn::rms_backward(bc.x_mid, bc.inv2, w.mlp_norm, dn2, dx, g.mlp_norm);
    // Attention branch.
    g.wo.m().noalias() += bc.o.transpose() * dx;
    RowMat<S> d_o = dx * w.wo.m().transpose();
    RowMat<S> dqkv = RowMat<S>::Zero(N, 3 * d);
    nn::causal_attention_backward(bc.qkv, bc.attn, d_o, B, P, cfg.n_heads, dqkv);
    g.wqkv.m().noalias() += bc.n1.transpose() * dqkv;
    RowMat<S> dn1 = dqkv * w.wqkv.m().transpose();
    nn::rms_backward(bc.x_in, bc.inv1, w.attn_norm, dn1, dx, g.attn_norm);
  }

  RowMat<S> dqin = RowMat<S>::Zero(M, d);
  for (Eigen::Index b = 0; b < B; ++b) {
    grads.cls_emb.row(c.classes[b]) += dx.row(b * P);
    grads.pos_emb.row(0) += dx.row(b * P);
    for (Eigen::Index w = 0; w < W; ++w) {
      const Eigen::Index m = b * W + w;
      const auto r = dx.row(b * P + w + 1);
      grads.pos_emb.row(w + 1) += r;
      grads.tok_emb.row(c.window_tokens[m * k]) += r;
      dqin.row(m) = r;
    }
  }
  if (M > 0) {
    RowMat<S> dslots = RowMat<S>::Zero(M * k, d);
    qt_backward(params.q_in, c.qin_x, cfg.n_heads, c.qin, dqin, grads.q_in, dslots);
    for (Eigen::Index m = 0; m < M; ++m) {
      for (int j = 0; j < k; ++j) {
        grads.tok_emb.row(c.window_tokens[m * k + j]) += dslots.row(m * k + j);
        grads.q_in_slot_pos.row(j) += dslots.row(m * k + j);
      }
    }
  }
}

template class Forward<float>;
template class Forward<double>;

// ================================================== single-sequence API

ForwardOutput forward_prefix(const ModelParams<float>& params, int class_label,
                             std::span<const TokenId> input_windows, int num_windows) {
  const int k = params.config.k;
  NXT_REQUIRE(num_windows >= 0 && num_windows < params.config.seq_len, "window count out of range");
  NXT_REQUIRE(input_windows.size() >= static_cast<std::size_t>(num_windows) * k, "not enough input windows");
  WindowBatch batch;
  batch.batch = 1;
  batch.num_windows = num_windows;
  batch.k = k;
  batch.classes = {class_label};
  batch.windows.assign(input_windows.begin(), input_windows.begin() + static_cast<std::ptrdiff_t>(num_windows) * k);
  Forward<float> fwd;
  const auto& r = fwd.run(params, batch);
  return ForwardOutput{r.logits, r.hidden};
}

ForwardOutput forward(const ModelParams<float>& params, int class_label, std::span<const TokenId> input_windows) {
  const auto& cfg = params.config;
  NXT_REQUIRE(input_windows.size() == static_cast<std::size_t>(cfg.seq_len) * cfg.k,
              "forward expects exactly T input windows");
  return forward_prefix(params, class_label, input_windows, cfg.seq_len - 1);
}

RowVec<float> encode_window(const ModelParams<float>& params, std::span<const TokenId> window) {
  const auto& cfg = params.config;
  NXT_REQUIRE(window.size() == static_cast<std::size_t>(cfg.k), "window length differs from model k");
  for (TokenId t : window) NXT_REQUIRE(t >= 0 && t <= cfg.vocab_size, "window symbol out of range");
  RowMat<float> x(cfg.k, cfg.d_model);
  for (int j = 0; j < cfg.k; ++j) x.row(j) = params.tok_emb.row(window[j]) + params.q_in_slot_pos.row(j);
  QtCache<float> cache;
  RowMat<float> out;
  qt_forward(params.q_in, x, 1, cfg.k, cfg.n_heads, cache, out);
  return params.tok_emb.row(window[0]) + out.row(0);
}

RowMat<float> decode_hidden(const ModelParams<float>& params, const RowVec<float>& hidden) {
  const auto& cfg = params.config;
  NXT_REQUIRE(hidden.size() == cfg.d_model, "hidden state has wrong width");
  RowMat<float> h = hidden;
  QtCache<float> cache;
  RowMat<float> out;
  qt_forward(params.q_out, h, 1, 1, cfg.n_heads, cache, out);
  out.rowwise() += hidden;
  return out * params.head.m();
}

// ================================================== incremental decoding

KvCache make_kv_cache(const ModelConfig& config) {
  KvCache c;
  c.capacity = config.seq_len;
  c.keys.assign(static_cast<std::size_t>(config.n_layers), RowMat<float>(config.seq_len, config.d_model));
  c.values.assign(static_cast<std::size_t>(config.n_layers), RowMat<float>(config.seq_len, config.d_model));
  return c;
}

StepModel::StepModel(const ModelParams<float>& params) : params_(&params) {
  const auto& cfg = params.config;
  const int k = cfg.k;
  const int S = cfg.vocab_size + 1;
  RowMat<float> slots(static_cast<Eigen::Index>(k) * S, cfg.d_model);
  for (int j = 0; j < k; ++j)
    for (int s = 0; s < S; ++s) slots.row(j * S + s) = params.tok_emb.row(s) + params.q_in_slot_pos.row(j);
  for (const auto& layer : params.q_in.layers) {
    RowMat<float> nx;
    ColVec<float> inv;
    nn::rms_forward(slots, layer.kv_norm, nx, inv);
    qin_keys_.push_back(nx * layer.wk.m());
    qin_values_.push_back(nx * layer.wv.m());
  }
  RowMat<float> q0 = params.q_in.queries.m();
  RowMat<float> nq;
  ColVec<float> inv;
  nn::rms_forward(q0, params.q_in.layers[0].q_norm, nq, inv);
  qin_first_query_ = nq * params.q_in.layers[0].wq.m();
  gate_head_ = params.q_out.gate.m() * params.head.m();
}

void StepModel::encode(std::span<const TokenId> window, RowVec<float>& out) const {
  const auto& p = *params_;
  const auto& cfg = p.config;
  const int k = cfg.k;
  const int S = cfg.vocab_size + 1;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  RowMat<float> z = p.q_in.queries.m();
  RowMat<float> q(1, cfg.d_model), o(1, cfg.d_model);
  std::vector<float> a(static_cast<std::size_t>(k));
  for (std::size_t l = 0; l < p.q_in.layers.size(); ++l) {
    const auto& w = p.q_in.layers[l];
    if (l == 0) {
      q = qin_first_query_;
    } else {
      RowMat<float> nz;
      ColVec<float> inv;
      nn::rms_forward(z, w.q_norm, nz, inv);
      q.noalias() = nz * w.wq.m();
    }
    const auto& K = qin_keys_[l];
    const auto& V = qin_values_[l];
    o.setZero();
    for (int h = 0; h < H; ++h) {
      for (int j = 0; j < k; ++j) {
        const float* kr = K.data() + static_cast<Eigen::Index>(j * S + window[j]) * cfg.d_model + h * dh;
        float s = 0;
        for (int c = 0; c < dh; ++c) s += q(0, h * dh + c) * kr[c];
        a[j] = s * scale;
      }
      nn::softmax_inplace(a.data(), k);
      for (int j = 0; j < k; ++j) {
        const float* vr = V.data() + static_cast<Eigen::Index>(j * S + window[j]) * cfg.d_model + h * dh;
        for (int c = 0; c < dh; ++c) o(0, h * dh + c) += a[j] * vr[c];
      }
    }
    z.noalias() += o * w.wo.m();
  }
  RowMat<float> nm, pre, act;
  ColVec<float> inv;
  nn::rms_forward(z, p.q_in.mlp_norm, nm, inv);
  pre.noalias() = nm * p.q_in.w1.m();
  nn::gelu_forward(pre, act);
  z.noalias() += act * p.q_in.w2.m();
  out.noalias() = z * p.q_in.gate.m();
  out += p.tok_emb.row(window[0]);
}

void StepModel::run_position(KvCache& cache, RowVec<float>& xv, RowMat<float>& logits) const {
  const auto& p = *params_;
  const auto& cfg = p.config;
  const int d = cfg.d_model;
  const int H = cfg.n_heads;
  const int dh = cfg.head_dim();
  const int pos = cache.length;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  RowMat<float> x = xv + p.pos_emb.row(pos);
  RowMat<float> n, qkv, o(1, d), pre, act;
  ColVec<float> inv;
  std::vector<float> a(static_cast<std::size_t>(pos + 1));
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    const auto& w = p.blocks[l];
    nn::rms_forward(x, w.attn_norm, n, inv);
    qkv.noalias() = n * w.wqkv.m();
    cache.keys[l].row(pos) = qkv.block(0, d, 1, d);
    cache.values[l].row(pos) = qkv.block(0, 2 * d, 1, d);
    o.setZero();
    for (int h = 0; h < H; ++h) {
      const float* q = qkv.data() + h * dh;
      for (int t = 0; t <= pos; ++t) {
        const float* kr = cache.keys[l].data() + static_cast<Eigen::Index>(t) * d + h * dh;
        float s = 0;
        for (int c = 0; c < dh; ++c) s += q[c] * kr[c];
        a[t] = s * scale;
      }
      nn::softmax_inplace(a.data(), pos + 1);
      for (int t = 0; t <= pos; ++t) {
        const float* vr = cache.values[l].data() + static_cast<Eigen::Index>(t) * d + h * dh;
        for (int c = 0; c < dh; ++c) o(0, h * dh + c) += a[t] * vr[c];
      }
    }
    x.noalias() += o * w.wo.m();
    nn::rms_forward(x, w.mlp_norm, n, inv);
    pre.noalias() = n * w.w1.m();
    nn::gelu_forward(pre, act);
    x.noalias() += act * w.w2.m();
  }
  RowMat<float> h;
  nn::rms_forward(x, p.final_norm, h, inv);
  ++cache.length;

  // Output decoder. With a single key every cross-attention weight is exactly
  // one, so each layer adds the same value projection to all slot queries.
  const int k = cfg.k;
  RowMat<float> shift = RowMat<float>::Zero(1, d);
  for (const auto& w : p.q_out.layers) {
    RowMat<float> nh;
    nn::rms_forward(h, w.kv_norm, nh, inv);
    shift.noalias() += (nh * w.wv.m()) * w.wo.m();
  }
  RowMat<float> z = p.q_out.queries.m();
  z.rowwise() += shift.row(0);
  RowMat<float> nm;
  nn::rms_forward(z, p.q_out.mlp_norm, nm, inv);
  pre.noalias() = nm * p.q_out.w1.m();
  nn::gelu_forward(pre, act);
  z.noalias() += act * p.q_out.w2.m();
  const RowVec<float> base = h * p.head.m();
  logits.noalias() = z * gate_head_;
  for (int j = 0; j < k; ++j) logits.row(j) += base;
}

void StepModel::step_class(KvCache& cache, int class_label, RowMat<float>& logits) const {
  const auto& cfg = config();
  if (cache.length != 0) throw StateError("class position must be the first decode step");
  NXT_REQUIRE(class_label >= 0 && class_label < cfg.num_classes, "class label out of range");
  cache.class_label = class_label;
  RowVec<float> x = params_->cls_emb.row(class_label);
  run_position(cache, x, logits);
}

void StepModel::step_window(KvCache& cache, std::span<const TokenId> window, RowMat<float>& logits) const {
  const auto& cfg = config();
  if (cache.length == 0) throw StateError("decode must start with the class position");
  if (cache.length >= cache.capacity) throw StateError("decode cache is full");
  NXT_REQUIRE(window.size() == static_cast<std::size_t>(cfg.k), "window length differs from model k");
  for (TokenId t : window) NXT_REQUIRE(t >= 0 && t <= cfg.vocab_size, "window symbol out of range");
  RowVec<float> x(cfg.d_model);
  encode(window, x);
  run_position(cache, x, logits);
}

RowMat<float> forward_step(const ModelParams<float>& params, KvCache& cache, int class_label,
                           std::span<const TokenId> window) {
  StepModel step(params);
  RowMat<float> logits;
  if (cache.length == 0) {
    step.step_class(cache, class_label, logits);
  } else {
    step.step_window(cache, window, logits);
  }
  return logits;
}

}  // namespace nxt
