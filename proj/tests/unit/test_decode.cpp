// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nexttensor/decode.hpp"
#include "nexttensor/error.hpp"
#include "nexttensor/tensorize.hpp"

using namespace nxt;

namespace {

ModelConfig tiny(int k, int T = 12) {
  ModelConfig c;
  c.vocab_size = 6;
  c.k = k;
  c.seq_len = T;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.num_classes = 3;
  c.seed = 2;
  return c;
}

ModelParams<float> opened(int k, int T = 12) {
  auto p = init_params(tiny(k, T));
  Rng rng(k);
  for (auto* g : {&p.q_in.gate, &p.q_out.gate})
    for (auto& x : g->data) x = static_cast<float>(rng.normal() * 0.5);
  // Sharper logits make sampling less uniform.
  for (auto& x : p.head.data) x *= 50.0f;
  return p;
}

}  // namespace

TEST(Sampling, GreedyAndTopOneAreArgmax) {
  std::vector<float> l{0.1f, 2.0f, -1.0f, 1.9f};
  Rng rng(1);
  DecodeConfig g;
  g.greedy = true;
  EXPECT_EQ(sample_categorical(l, g, rng), 1);
  DecodeConfig top1;
  top1.top_k = 1;
  for (int i = 0; i < 200; ++i) EXPECT_EQ(sample_categorical(l, top1, rng), 1);
}

TEST(Sampling, TopKNeverEmitsTruncatedSymbols) {
  std::vector<float> l{0.0f, 0.5f, 0.4f, -3.0f, 0.45f};
  DecodeConfig c;
  c.top_k = 2;
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    auto s = sample_categorical(l, c, rng);
    ASSERT_TRUE(s == 1 || s == 4) << s;
  }
}

TEST(Sampling, FrequenciesFollowTemperedSoftmax) {
  std::vector<float> l{1.0f, 0.0f, -0.5f, 2.0f};
  for (double tau : {0.5, 1.0, 2.0}) {
    DecodeConfig c;
    c.temperature = tau;
    Rng rng(5);
    std::vector<double> freq(4, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) freq[sample_categorical(l, c, rng)] += 1.0 / n;
    double z = 0;
    for (float x : l) z += std::exp(x / tau);
    for (int v = 0; v < 4; ++v) EXPECT_NEAR(freq[v], std::exp(l[v] / tau) / z, 0.01) << "tau=" << tau;
  }
}

TEST(Sampling, RejectsBadConfig) {
  DecodeConfig c;
  c.temperature = 0;
  EXPECT_THROW(c.validate(6), ParameterError);
  c.temperature = 1;
  c.top_k = -1;
  EXPECT_THROW(c.validate(6), ParameterError);
  EXPECT_THROW(parse_provisional_policy("mean"), ParameterError);
}

TEST(Generate, SingleSlotMatchesPlainAncestralSampler) {
  auto p = init_params(tiny(1));
  for (auto& x : p.head.data) x *= 50.0f;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DecodeConfig dc;
    dc.seed = seed;
    auto got = generate(p, static_cast<int>(seed % 3), dc);
    // Reference: full recompute at every step, same draws.
    Rng rng(seed);
    std::vector<TokenId> ref;
    for (int t = 0; t < 12; ++t) {
      auto out = forward_prefix(p, static_cast<int>(seed % 3), ref, t);
      ref.push_back(sample_categorical(out.slot_logits(t, 0, 1), dc, rng));
    }
    ASSERT_EQ(got.tokens, ref) << "seed " << seed;
  }
}

TEST(Generate, GreedyIsDeterministicAndSeededSamplingReproduces) {
  auto p = opened(4);
  DecodeConfig g;
  g.greedy = true;
  EXPECT_EQ(generate(p, 1, g).tokens, generate(p, 1, g).tokens);
  DecodeConfig s;
  s.seed = 77;
  auto a = generate(p, 2, s), b = generate(p, 2, s);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.trace.windows, b.trace.windows);
  EXPECT_EQ(a.trace.history, b.trace.history);
}

TEST(Generate, TraceStructure) {
  for (int k : {1, 2, 4, 8}) {
    auto p = opened(k, 16);
    StepModel sm(p);
    Decoder dec(sm);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      DecodeConfig dc;
      dc.seed = seed;
      auto r = dec.generate(static_cast<int>(seed % 3), dc);
      ASSERT_EQ(r.tokens.size(), 16u);
      std::int64_t total = 0;
      for (int i = 0; i < 16; ++i) {
        const int n = refine_count(r.trace, i);
        ASSERT_EQ(n, std::min(i + 1, k)) << "k=" << k << " i=" << i;
        ASSERT_EQ(r.trace.history[i].back().second, r.tokens[i]);
        ASSERT_EQ(r.trace.history[i].back().first, i);
        ASSERT_LT(r.tokens[i], 6);
        total += n;
      }
      ASSERT_EQ(total, covered_cells(16, k));
      // Steps near the end carry padding past the sequence.
      ASSERT_EQ(r.trace.windows.back()[0], r.tokens.back());
      for (int j = 1; j < k; ++j) ASSERT_EQ(r.trace.windows.back()[j], pad_token(6));
    }
  }
}

TEST(Generate, RefineCountExamples) {
  auto r = generate(opened(4), 0, DecodeConfig{});
  EXPECT_EQ(refine_count(r.trace, 0), 1);
  EXPECT_EQ(refine_count(r.trace, 3), 4);
  EXPECT_EQ(refine_count(r.trace, 11), 4);
  EXPECT_THROW(refine_count(r.trace, 12), ParameterError);
  EXPECT_THROW(refine_count(r.trace, -1), ParameterError);
  auto one = generate(opened(1), 0, DecodeConfig{});
  for (int i = 0; i < 12; ++i) EXPECT_EQ(refine_count(one.trace, i), 1);
}

TEST(Generate, RejectsInvalidClass) {
  EXPECT_THROW(generate(opened(2), 3, DecodeConfig{}), ParameterError);
}

TEST(Generate, ArgmaxProvisionalsDifferFromSampled) {
  auto p = opened(4);
  DecodeConfig a, s;
  a.provisional = ProvisionalPolicy::argmax;
  a.seed = s.seed = 11;
  auto ra = generate(p, 0, a);
  for (std::size_t t = 0; t < ra.trace.windows.size(); ++t) {
    // Provisional slots equal the argmax of the logits that produced them,
    // which we can only check indirectly: they are reproducible.
    EXPECT_EQ(ra.trace.windows[t], generate(p, 0, a).trace.windows[t]);
  }
  EXPECT_NE(ra.trace.windows, generate(p, 0, s).trace.windows);
}

TEST(Export, TraceGridAndGraymapFormats) {
  auto r = generate(opened(2, 4), 0, DecodeConfig{});
  std::ostringstream tr;
  write_trace(tr, r.trace);
  std::istringstream in(tr.str());
  int pos, step, tok, lines = 0;
  while (in >> pos >> step >> tok) {
    EXPECT_TRUE(pos == step || pos == step + 1);
    ++lines;
  }
  EXPECT_EQ(lines, covered_cells(4, 2));
  EXPECT_NE(tr.str().find('\t'), std::string::npos);

  std::vector<TokenId> grid{0, 1, 2, 3, 4, 5};
  std::ostringstream g;
  write_grid(g, grid, 2, 3);
  EXPECT_EQ(g.str(), "0 1 2\n3 4 5\n");
  std::ostringstream pgm;
  write_pgm(pgm, grid, 2, 3, 6);
  const auto img = pgm.str();
  EXPECT_EQ(img.substr(0, 11), "P5\n3 2\n255\n");
  ASSERT_EQ(img.size(), 17u);
  EXPECT_EQ(static_cast<unsigned char>(img[11]), 0);
  EXPECT_EQ(static_cast<unsigned char>(img[16]), 255);
  EXPECT_THROW(write_grid(g, grid, 2, 2), ParameterError);
}

TEST(Bench, ReportsOneRowPerModel) {
  auto p1 = opened(1), p4 = opened(4);
  std::vector<const ModelParams<float>*> models{&p1, &p4};
  auto rows = throughput_bench(models, 2, 2, 0);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].k, 1);
  EXPECT_EQ(rows[1].k, 4);
  for (const auto& r : rows) {
    EXPECT_GT(r.samples_per_sec_mean, 0);
    EXPECT_GT(r.step_ms_mean, 0);
    EXPECT_GE(r.step_ms_sd, 0);
  }
  EXPECT_THROW(throughput_bench(models, 2, 0, 0), ParameterError);
  std::ostringstream os;
  write_bench_table(os, rows);
  const auto table = os.str();
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
}
