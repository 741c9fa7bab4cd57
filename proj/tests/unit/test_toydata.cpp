// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "nexttensor/error.hpp"
#include "nexttensor/rng.hpp"
#include "nexttensor/toydata.hpp"

using namespace nxt;

namespace {

double row_sum(std::span<const double> r) { return std::accumulate(r.begin(), r.end(), 0.0); }

// Second, independent implementation of the lattice conditional used as an oracle.
std::vector<double> brute_conditional(const SyntheticSpec& s, int cls, const std::vector<TokenId>& prefix) {
  const std::size_t i = prefix.size();
  std::size_t r = 0, c = i;
  while (c >= static_cast<std::size_t>(s.width)) {
    c -= s.width;
    ++r;
  }
  const int V = s.vocab_size;
  std::vector<double> out(V);
  for (int v = 0; v < V; ++v) {
    if (i == 0) {
      out[v] = s.init_dist[v];
    } else {
      const double h = r == 0 || c > 0 ? s.horiz[cls][prefix[i - 1] * V + v] : 0.0;
      const double u = r > 0 ? s.vert[cls][prefix[i - s.width] * V + v] : 0.0;
      if (r == 0) out[v] = h;
      else if (c == 0) out[v] = u;
      else out[v] = s.mix_weight * h + (1 - s.mix_weight) * u;
    }
  }
  return out;
}

SyntheticSpec uniform_spec(int V, int H, int W) {
  auto s = make_spec(V, H, W, 1, 0);
  std::fill(s.init_dist.begin(), s.init_dist.end(), 1.0 / V);
  std::fill(s.horiz[0].begin(), s.horiz[0].end(), 1.0 / V);
  std::fill(s.vert[0].begin(), s.vert[0].end(), 1.0 / V);
  return s;
}

}  // namespace

TEST(MakeSpec, TinySpecIsRowStochastic) {
  auto s = make_spec(2, 2, 2, 1, 7);
  EXPECT_EQ(s.seq_len(), 4);
  ASSERT_EQ(s.horiz.size(), 1u);
  for (TokenId v = 0; v < 2; ++v) {
    EXPECT_NEAR(row_sum(s.horiz_row(0, v)), 1.0, 1e-12);
    EXPECT_NEAR(row_sum(s.vert_row(0, v)), 1.0, 1e-12);
  }
  EXPECT_NO_THROW(s.validate());
}

TEST(MakeSpec, DefaultSpecHasDistinctClasses) {
  auto s = make_spec(16, 8, 8, 4, 0);
  EXPECT_EQ(s.seq_len(), 64);
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      double l1 = 0;
      for (std::size_t e = 0; e < s.horiz[a].size(); ++e) l1 += std::abs(s.horiz[a][e] - s.horiz[b][e]);
      EXPECT_GT(l1, 0.0) << a << " vs " << b;
    }
  }
  for (const auto& m : s.horiz)
    for (double p : m) EXPECT_GE(p, kTransitionFloor / 16.0 / 2);
}

TEST(MakeSpec, DeterministicAndSeedSensitive) {
  auto a = make_spec(16, 8, 8, 4, 3);
  auto b = make_spec(16, 8, 8, 4, 3);
  auto c = make_spec(16, 8, 8, 4, 4);
  EXPECT_EQ(a.horiz, b.horiz);
  EXPECT_EQ(a.vert, b.vert);
  EXPECT_NE(a.horiz, c.horiz);
}

TEST(MakeSpec, RejectsDegenerateDimensions) {
  EXPECT_THROW(make_spec(1, 8, 8, 1, 0), ParameterError);
  EXPECT_THROW(make_spec(4, 1, 3, 1, 0), ParameterError);
  EXPECT_THROW(make_spec(4, 2, 2, 0, 0), ParameterError);
}

TEST(OracleConditional, OriginIsInitDist) {
  auto s = make_spec(16, 8, 8, 4, 0);
  EXPECT_EQ(oracle_conditional(s, 2, {}, 0), s.init_dist);
}

TEST(OracleConditional, FullHorizontalWeightUsesLeftNeighbour) {
  auto s = make_spec(2, 2, 2, 1, 7, /*mix_weight=*/1.0);
  std::vector<TokenId> prefix{1};
  auto p = oracle_conditional(s, 0, prefix, 1);
  auto row = s.horiz_row(0, 1);
  EXPECT_EQ(p, std::vector<double>(row.begin(), row.end()));
  // Interior cell (1,1): lambda = 1 drops the vertical term entirely.
  std::vector<TokenId> prefix3{0, 1, 0};
  auto q = oracle_conditional(s, 0, prefix3, 3);
  auto row0 = s.horiz_row(0, 0);
  EXPECT_EQ(q, std::vector<double>(row0.begin(), row0.end()));
}

TEST(OracleConditional, MatchesBruteForceMixture) {
  auto s = make_spec(16, 8, 8, 4, 0);
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int len = static_cast<int>(rng.uniform_int(64));
    std::vector<TokenId> prefix(len);
    for (auto& t : prefix) t = static_cast<TokenId>(rng.uniform_int(16));
    const int cls = static_cast<int>(rng.uniform_int(4));
    auto got = oracle_conditional(s, cls, prefix, len);
    auto want = brute_conditional(s, cls, prefix);
    for (int v = 0; v < 16; ++v) EXPECT_NEAR(got[v], want[v], 1e-15);
    EXPECT_NEAR(row_sum(got), 1.0, 1e-9);
  }
}

TEST(OracleConditional, RejectsPositionMismatch) {
  auto s = make_spec(4, 2, 2, 1, 0);
  std::vector<TokenId> prefix{1, 2};
  EXPECT_THROW(oracle_conditional(s, 0, prefix, 1), ParameterError);
  EXPECT_THROW(oracle_conditional(s, 1, prefix, 2), ParameterError);
}

TEST(SampleGrid, DeterministicForFixedSeed) {
  auto s = make_spec(2, 2, 2, 1, 7);
  auto a = sample_grid(s, 0, 3);
  auto b = sample_grid(s, 0, 3);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.tokens.size(), 4u);
}

TEST(SampleGrid, DifferentSeedsDiffer) {
  auto s = make_spec(16, 8, 8, 4, 0);
  int differ = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    differ += sample_grid(s, 0, 2 * i).tokens != sample_grid(s, 0, 2 * i + 1).tokens;
  }
  EXPECT_GE(differ, 95);
}

TEST(SampleGrid, ClassesProduceDifferentBigrams) {
  auto s = make_spec(16, 8, 8, 4, 0);
  auto hist = [&](int cls) {
    std::vector<double> h(256, 0.0);
    double n = 0;
    for (std::uint64_t i = 0; i < 1000; ++i) {
      auto g = sample_grid(s, cls, derive_seed(99, i));
      for (int r = 0; r < 8; ++r)
        for (int c = 0; c + 1 < 8; ++c) {
          h[g.tokens[r * 8 + c] * 16 + g.tokens[r * 8 + c + 1]] += 1;
          n += 1;
        }
    }
    for (auto& x : h) x /= n;
    return h;
  };
  auto h0 = hist(0), h1 = hist(1);
  double l1 = 0;
  for (int i = 0; i < 256; ++i) l1 += std::abs(h0[i] - h1[i]);
  EXPECT_GT(l1, 0.05);
}

TEST(SampleGrid, FirstTokenFollowsInitDist) {
  auto s = make_spec(16, 8, 8, 4, 0);
  std::vector<double> freq(16, 0.0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) freq[sample_grid(s, i % 4, derive_seed(5, i)).tokens[0]] += 1.0 / n;
  double l1 = 0;
  for (int v = 0; v < 16; ++v) l1 += std::abs(freq[v] - s.init_dist[v]);
  EXPECT_LT(l1, 0.02);
}

TEST(ExactNll, DeterministicChainIsZero) {
  auto s = make_spec(3, 2, 3, 1, 0);
  // All mass on symbol 2 everywhere.
  std::fill(s.init_dist.begin(), s.init_dist.end(), 0.0);
  s.init_dist[2] = 1.0;
  for (auto* m : {&s.horiz[0], &s.vert[0]}) {
    std::fill(m->begin(), m->end(), 0.0);
    for (int r = 0; r < 3; ++r) (*m)[r * 3 + 2] = 1.0;
  }
  s.validate();
  std::vector<TokenId> seq(6, 2);
  EXPECT_EQ(exact_nll(s, 0, seq), 0.0);
  seq[4] = 1;
  EXPECT_TRUE(std::isinf(exact_nll(s, 0, seq)));
}

TEST(ExactNll, UniformSpecGivesTLogV) {
  auto s = uniform_spec(16, 8, 8);
  auto g = sample_grid(s, 0, 1);
  EXPECT_NEAR(exact_nll(s, 0, g.tokens), 64 * std::log(16.0), 1e-9);
}

TEST(ExactNll, MatchesPerPositionSum) {
  auto s = make_spec(16, 8, 8, 4, 0);
  for (std::uint64_t i = 0; i < 20; ++i) {
    auto g = sample_grid(s, static_cast<int>(i % 4), i);
    double want = 0;
    std::vector<TokenId> prefix;
    for (int p = 0; p < 64; ++p) {
      want -= std::log(brute_conditional(s, g.class_label, prefix)[g.tokens[p]]);
      prefix.push_back(g.tokens[p]);
    }
    EXPECT_NEAR(exact_nll(s, g.class_label, g.tokens), want, 1e-9);
  }
}

TEST(ExactNll, MeanApproachesEntropyRate) {
  auto s = make_spec(16, 8, 8, 4, 0);
  double nll = 0, entropy = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto g = sample_grid(s, i % 4, derive_seed(17, i));
    nll += exact_nll(s, g.class_label, g.tokens) / n;
    std::vector<TokenId> prefix;
    for (int p = 0; p < 64; ++p) {
      for (double q : oracle_conditional(s, g.class_label, prefix, p))
        if (q > 0) entropy -= q * std::log(q) / n;
      prefix.push_back(g.tokens[p]);
    }
  }
  EXPECT_NEAR(nll / entropy, 1.0, 0.02);
}

TEST(Dataset, ExportRoundTripAndClassCycle) {
  auto s = make_spec(16, 8, 8, 4, 0);
  auto data = make_dataset(s, 9, 42);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(data[i].class_label, static_cast<int>(i % 4));
  std::stringstream ss;
  write_dataset(ss, data);
  const auto text = ss.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 9);
  EXPECT_NE(text.find('\t'), std::string::npos);
  EXPECT_EQ(read_dataset(ss), data);
}

TEST(Dataset, RejectsMalformedLines) {
  std::stringstream ss("0 1 2 3\n");
  EXPECT_THROW(read_dataset(ss), FileError);
  std::stringstream bad("1\t1 x 3\n");
  EXPECT_THROW(read_dataset(bad), FileError);
}
