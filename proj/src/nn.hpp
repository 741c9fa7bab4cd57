// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0
//
// Forward/backward primitives shared by the batched model and the
// incremental decoder. Backward functions accumulate into their outputs.

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "nexttensor/tensor.hpp"

namespace nxt::nn {

template <typename S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

inline constexpr double kNormEps = 1e-5;

// ---------------------------------------------------------------- RMSNorm

template <typename S>
void rms_forward(const RowMat<S>& x, const Tensor<S>& gain, RowMat<S>& y, ColVec<S>& inv) {
  const auto d = x.cols();
  y.resize(x.rows(), d);
  inv.resize(x.rows());
  const auto g = gain.v();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S ms = x.row(r).squaredNorm() / static_cast<S>(d);
    inv[r] = S(1) / std::sqrt(ms + static_cast<S>(kNormEps));
    y.row(r) = x.row(r).cwiseProduct(g) * inv[r];
  }
}

template <typename S>
void rms_backward(const RowMat<S>& x, const ColVec<S>& inv, const Tensor<S>& gain, const RowMat<S>& dy,
                  RowMat<S>& dx, Tensor<S>& dgain) {
  const auto d = static_cast<S>(x.cols());
  const auto g = gain.v();
  auto dg = dgain.v();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S iv = inv[r];
    dg += dy.row(r).cwiseProduct(x.row(r)) * iv;
    const RowVec<S> gy = dy.row(r).cwiseProduct(g);
    const S dot = gy.dot(x.row(r));
    dx.row(r) += iv * gy - (iv * iv * iv * dot / d) * x.row(r);
  }
}

// ------------------------------------------------------------------ GELU
//
// tanh approximation. The forward keeps the tanh term for the backward.

template <typename S>
void gelu_forward(const RowMat<S>& pre, RowMat<S>& act, RowMat<S>& th) {
  constexpr S k0 = static_cast<S>(0.7978845608028654);  // sqrt(2 / pi)
  constexpr S k1 = static_cast<S>(0.044715);
  th = ((pre.array() + k1 * pre.array().cube()) * k0).tanh();
  act = S(0.5) * pre.array() * (S(1) + th.array());
}

template <typename S>
void gelu_forward(const RowMat<S>& pre, RowMat<S>& act) {
  RowMat<S> th;
  gelu_forward(pre, act, th);
}

/// Multiplies `d` by GELU'(pre) in place.
template <typename S>
void gelu_backward_inplace(const RowMat<S>& pre, const RowMat<S>& th, RowMat<S>& d) {
  constexpr S k0 = static_cast<S>(0.7978845608028654);
  constexpr S k1 = static_cast<S>(0.044715);
  const auto x = pre.array();
  const auto t = th.array();
  d.array() *= S(0.5) * (S(1) + t) + S(0.5) * x * (S(1) - t * t) * k0 * (S(1) + S(3) * k1 * x * x);
}

// -------------------------------------------------------------- softmax

/// In-place softmax over `n` contiguous scores.
template <typename S>
inline void softmax_inplace(S* s, Eigen::Index n) {
  S mx = -std::numeric_limits<S>::infinity();
  for (Eigen::Index j = 0; j < n; ++j) mx = std::max(mx, s[j]);
  S sum = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    s[j] = std::exp(s[j] - mx);
    sum += s[j];
  }
  const S inv = S(1) / sum;
  for (Eigen::Index j = 0; j < n; ++j) s[j] *= inv;
}

// ------------------------------------------------------ cross attention
//
// G independent groups. Group g has nq query rows (rows g*nq .. g*nq+nq-1 of
// q) and nk key/value rows (rows g*nk .. of k and v). Heads split columns.

template <typename S>
void cross_attention_forward(const RowMat<S>& q, const RowMat<S>& k, const RowMat<S>& v, Eigen::Index groups,
                             Eigen::Index nq, Eigen::Index nk, int heads, RowMat<S>& attn, RowMat<S>& out) {
  const Eigen::Index d = q.cols();
  const Eigen::Index dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  attn.resize(groups * heads * nq, nk);
  out.setZero(groups * nq, d);
  for (Eigen::Index g = 0; g < groups; ++g) {
    for (int h = 0; h < heads; ++h) {
      for (Eigen::Index i = 0; i < nq; ++i) {
        const S* qi = q.data() + (g * nq + i) * d + h * dh;
        S* a = attn.data() + ((g * heads + h) * nq + i) * nk;
        for (Eigen::Index j = 0; j < nk; ++j) {
          const S* kj = k.data() + (g * nk + j) * d + h * dh;
          S s = 0;
          for (Eigen::Index c = 0; c < dh; ++c) s += qi[c] * kj[c];
          a[j] = s * scale;
        }
        softmax_inplace(a, nk);
        S* o = out.data() + (g * nq + i) * d + h * dh;
        for (Eigen::Index j = 0; j < nk; ++j) {
          const S* vj = v.data() + (g * nk + j) * d + h * dh;
          for (Eigen::Index c = 0; c < dh; ++c) o[c] += a[j] * vj[c];
        }
      }
    }
  }
}

template <typename S>
void cross_attention_backward(const RowMat<S>& q, const RowMat<S>& k, const RowMat<S>& v, const RowMat<S>& attn,
                              const RowMat<S>& dout, Eigen::Index groups, Eigen::Index nq, Eigen::Index nk,
                              int heads, RowMat<S>& dq, RowMat<S>& dk, RowMat<S>& dv) {
  const Eigen::Index d = q.cols();
  const Eigen::Index dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  std::vector<S> da(static_cast<std::size_t>(nk));
  for (Eigen::Index g = 0; g < groups; ++g) {
    for (int h = 0; h < heads; ++h) {
      for (Eigen::Index i = 0; i < nq; ++i) {
        const S* a = attn.data() + ((g * heads + h) * nq + i) * nk;
        const S* doi = dout.data() + (g * nq + i) * d + h * dh;
        S weighted = 0;
        for (Eigen::Index j = 0; j < nk; ++j) {
          const S* vj = v.data() + (g * nk + j) * d + h * dh;
          S* dvj = dv.data() + (g * nk + j) * d + h * dh;
          S s = 0;
          for (Eigen::Index c = 0; c < dh; ++c) {
            s += doi[c] * vj[c];
            dvj[c] += a[j] * doi[c];
          }
          da[j] = s;
          weighted += a[j] * s;
        }
        const S* qi = q.data() + (g * nq + i) * d + h * dh;
        S* dqi = dq.data() + (g * nq + i) * d + h * dh;
        for (Eigen::Index j = 0; j < nk; ++j) {
          const S ds = a[j] * (da[j] - weighted) * scale;
          const S* kj = k.data() + (g * nk + j) * d + h * dh;
          S* dkj = dk.data() + (g * nk + j) * d + h * dh;
          for (Eigen::Index c = 0; c < dh; ++c) {
            dqi[c] += ds * kj[c];
            dkj[c] += ds * qi[c];
          }
        }
      }
    }
  }
}

// ------------------------------------------------ causal self attention
//
// qkv: (B*P) x 3d with [q | k | v] column blocks. attn: (B*H*P) x P.

template <typename S>
void causal_attention_forward(const RowMat<S>& qkv, Eigen::Index batch, Eigen::Index positions, int heads,
                              RowMat<S>& attn, RowMat<S>& out) {
  const Eigen::Index d = qkv.cols() / 3;
  const Eigen::Index dh = d / heads;
  const Eigen::Index P = positions;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  attn.setZero(batch * heads * P, P);
  out.resize(batch * P, d);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto Q = qkv.block(b * P, h * dh, P, dh);
      auto K = qkv.block(b * P, d + h * dh, P, dh);
      auto V = qkv.block(b * P, 2 * d + h * dh, P, dh);
      auto A = attn.block((b * heads + h) * P, 0, P, P);
      A.noalias() = (Q * K.transpose()) * scale;
      for (Eigen::Index i = 0; i < P; ++i) {
        S* row = A.row(i).data();
        softmax_inplace(row, i + 1);
        for (Eigen::Index j = i + 1; j < P; ++j) row[j] = 0;
      }
      out.block(b * P, h * dh, P, dh).noalias() = A * V;
    }
  }
}

template <typename S>
void causal_attention_backward(const RowMat<S>& qkv, const RowMat<S>& attn, const RowMat<S>& dout,
                               Eigen::Index batch, Eigen::Index positions, int heads, RowMat<S>& dqkv) {
  const Eigen::Index d = qkv.cols() / 3;
  const Eigen::Index dh = d / heads;
  const Eigen::Index P = positions;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  RowMat<S> dA(P, P);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto Q = qkv.block(b * P, h * dh, P, dh);
      auto K = qkv.block(b * P, d + h * dh, P, dh);
      auto V = qkv.block(b * P, 2 * d + h * dh, P, dh);
      auto A = attn.block((b * heads + h) * P, 0, P, P);
      auto dO = dout.block(b * P, h * dh, P, dh);
      dA.noalias() = dO * V.transpose();
      dqkv.block(b * P, 2 * d + h * dh, P, dh).noalias() += A.transpose() * dO;
      for (Eigen::Index i = 0; i < P; ++i) {
        S dot = 0;
        for (Eigen::Index j = 0; j <= i; ++j) dot += A(i, j) * dA(i, j);
        for (Eigen::Index j = 0; j <= i; ++j) dA(i, j) = A(i, j) * (dA(i, j) - dot) * scale;
        for (Eigen::Index j = i + 1; j < P; ++j) dA(i, j) = 0;
      }
      dqkv.block(b * P, h * dh, P, dh).noalias() += dA * K;
      dqkv.block(b * P, d + h * dh, P, dh).noalias() += dA.transpose() * Q;
    }
  }
}

}  // namespace nxt::nn
