// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include "nexttensor/toydata.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "nexttensor/error.hpp"
#include "nexttensor/rng.hpp"

namespace nxt {
namespace {

// Raw entries are u^kRowSharpness for uniform u, which concentrates each row
// on a handful of successors.
constexpr double kRowSharpness = 6.0;

std::vector<double> draw_stochastic_rows(Rng& rng, int rows, int cols) {
  std::vector<double> m(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      double v = std::pow(rng.uniform_open0(), kRowSharpness);
      v = std::max(v, kTransitionFloor);
      m[static_cast<std::size_t>(r) * cols + c] = v;
      sum += v;
    }
    for (int c = 0; c < cols; ++c) m[static_cast<std::size_t>(r) * cols + c] /= sum;
  }
  return m;
}

void check_distribution(std::span<const double> row, const char* what) {
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0)) throw ParameterError(std::string(what) + ": negative or NaN probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ParameterError(std::string(what) + ": row does not sum to 1");
}

}  // namespace

void SyntheticSpec::validate() const {
  NXT_REQUIRE(vocab_size >= 2, "vocab_size must be >= 2");
  NXT_REQUIRE(height >= 1 && width >= 1 && height * width >= 4, "grid must hold at least 4 tokens");
  NXT_REQUIRE(num_classes >= 1, "num_classes must be >= 1");
  NXT_REQUIRE(mix_weight >= 0.0 && mix_weight <= 1.0, "mix_weight must lie in [0,1]");
  NXT_REQUIRE(init_dist.size() == static_cast<std::size_t>(vocab_size), "init_dist has wrong length");
  NXT_REQUIRE(horiz.size() == static_cast<std::size_t>(num_classes) &&
                  vert.size() == static_cast<std::size_t>(num_classes),
              "transition matrices missing for some class");
  check_distribution(init_dist, "init_dist");
  const auto vv = static_cast<std::size_t>(vocab_size) * vocab_size;
  for (int c = 0; c < num_classes; ++c) {
    NXT_REQUIRE(horiz[c].size() == vv && vert[c].size() == vv, "transition matrix has wrong size");
    for (TokenId v = 0; v < vocab_size; ++v) {
      check_distribution(horiz_row(c, v), "horiz_transition");
      check_distribution(vert_row(c, v), "vert_transition");
    }
  }
}

SyntheticSpec make_spec(int vocab_size, int height, int width, int num_classes, std::uint64_t seed,
                        double mix_weight) {
  NXT_REQUIRE(vocab_size >= 2, "vocab_size must be >= 2");
  NXT_REQUIRE(height >= 1 && width >= 1 && height * width >= 4, "grid must hold at least 4 tokens");
  NXT_REQUIRE(num_classes >= 1, "num_classes must be >= 1");
  NXT_REQUIRE(mix_weight >= 0.0 && mix_weight <= 1.0, "mix_weight must lie in [0,1]");

  SyntheticSpec spec;
  spec.vocab_size = vocab_size;
  spec.height = height;
  spec.width = width;
  spec.num_classes = num_classes;
  spec.mix_weight = mix_weight;
  spec.seed = seed;

  Rng init_rng(derive_seed(seed, 0));
  spec.init_dist = draw_stochastic_rows(init_rng, 1, vocab_size);

  for (int c = 0; c < num_classes; ++c) {
    const std::uint64_t cs = derive_seed(seed, 1, static_cast<std::uint64_t>(c));
    spec.class_seeds.push_back(cs);
    Rng rng(cs);
    spec.horiz.push_back(draw_stochastic_rows(rng, vocab_size, vocab_size));
    spec.vert.push_back(draw_stochastic_rows(rng, vocab_size, vocab_size));
  }
  return spec;
}

void oracle_conditional_into(const SyntheticSpec& spec, int class_label, std::span<const TokenId> prefix,
                             int position, std::span<double> out) {
  NXT_REQUIRE(class_label >= 0 && class_label < spec.num_classes, "class label out of range");
  NXT_REQUIRE(position >= 0 && static_cast<std::size_t>(position) == prefix.size(),
              "oracle position must equal prefix length");
  NXT_REQUIRE(position < spec.seq_len(), "oracle position beyond grid");
  NXT_REQUIRE(out.size() == static_cast<std::size_t>(spec.vocab_size), "output buffer has wrong size");

  const int row = position / spec.width;
  const int col = position % spec.width;
  auto check_token = [&](TokenId t) {
    NXT_REQUIRE(t >= 0 && t < spec.vocab_size, "prefix token out of vocabulary");
    return t;
  };

  if (position == 0) {
    std::copy(spec.init_dist.begin(), spec.init_dist.end(), out.begin());
  } else if (row == 0) {
    auto h = spec.horiz_row(class_label, check_token(prefix[position - 1]));
    std::copy(h.begin(), h.end(), out.begin());
  } else if (col == 0) {
    auto v = spec.vert_row(class_label, check_token(prefix[position - spec.width]));
    std::copy(v.begin(), v.end(), out.begin());
  } else {
    auto h = spec.horiz_row(class_label, check_token(prefix[position - 1]));
    auto v = spec.vert_row(class_label, check_token(prefix[position - spec.width]));
    const double lam = spec.mix_weight;
    for (int i = 0; i < spec.vocab_size; ++i) out[i] = lam * h[i] + (1.0 - lam) * v[i];
  }
}

std::vector<double> oracle_conditional(const SyntheticSpec& spec, int class_label,
                                       std::span<const TokenId> prefix, int position) {
  std::vector<double> out(static_cast<std::size_t>(spec.vocab_size));
  oracle_conditional_into(spec, class_label, prefix, position, out);
  return out;
}

Sample sample_grid(const SyntheticSpec& spec, int class_label, std::uint64_t seed) {
  NXT_REQUIRE(class_label >= 0 && class_label < spec.num_classes, "class label out of range");
  Rng rng(seed);
  Sample s;
  s.class_label = class_label;
  const int T = spec.seq_len();
  s.tokens.reserve(static_cast<std::size_t>(T));
  std::vector<double> probs(static_cast<std::size_t>(spec.vocab_size));
  for (int i = 0; i < T; ++i) {
    oracle_conditional_into(spec, class_label, s.tokens, i, probs);
    const double u = rng.uniform();
    double acc = 0.0;
    TokenId pick = spec.vocab_size - 1;
    for (int v = 0; v < spec.vocab_size; ++v) {
      acc += probs[v];
      if (u < acc) {
        pick = v;
        break;
      }
    }
    // Rounding can leave acc slightly below 1; fall back to the last nonzero entry.
    while (probs[pick] == 0.0 && pick > 0) --pick;
    s.tokens.push_back(pick);
  }
  return s;
}

double exact_nll(const SyntheticSpec& spec, int class_label, std::span<const TokenId> tokens) {
  NXT_REQUIRE(tokens.size() == static_cast<std::size_t>(spec.seq_len()), "token sequence has wrong length");
  std::vector<double> probs(static_cast<std::size_t>(spec.vocab_size));
  double nll = 0.0;
  for (int i = 0; i < spec.seq_len(); ++i) {
    oracle_conditional_into(spec, class_label, tokens.first(static_cast<std::size_t>(i)), i, probs);
    NXT_REQUIRE(tokens[i] >= 0 && tokens[i] < spec.vocab_size, "token out of vocabulary");
    const double p = probs[tokens[i]];
    if (p <= 0.0) return std::numeric_limits<double>::infinity();
    nll -= std::log(p);
  }
  return nll;
}

std::vector<Sample> make_dataset(const SyntheticSpec& spec, std::size_t count, std::uint64_t seed) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int cls = static_cast<int>(i % static_cast<std::size_t>(spec.num_classes));
    out.push_back(sample_grid(spec, cls, derive_seed(seed, i)));
  }
  return out;
}

void write_dataset(std::ostream& os, std::span<const Sample> samples) {
  for (const auto& s : samples) {
    os << s.class_label << '\t';
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (i) os << ' ';
      os << s.tokens[i];
    }
    os << '\n';
  }
}

std::vector<Sample> read_dataset(std::istream& is) {
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FileError("dataset line " + std::to_string(lineno) + ": missing tab");
    Sample s;
    try {
      s.class_label = std::stoi(line.substr(0, tab));
    } catch (const std::exception&) {
      throw FileError("dataset line " + std::to_string(lineno) + ": bad class label");
    }
    std::istringstream ts(line.substr(tab + 1));
    TokenId t;
    while (ts >> t) s.tokens.push_back(t);
    if (!ts.eof()) throw FileError("dataset line " + std::to_string(lineno) + ": bad token");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace nxt
