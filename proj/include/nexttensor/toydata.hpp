// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic lattice Markov token grids with exact raster-order conditionals.
//
// A grid of H x W tokens is generated in raster order. Token i at (r, c)
// depends on its left neighbour (horizontal transition), its upper neighbour
// (vertical transition), or a lambda-mixture of both when both exist. Every
// class owns its own pair of transition matrices, so the class label carries
// real information. Because the generator is the model's own factorization,
// its conditionals double as a ground-truth oracle for likelihood scoring.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace nxt {

using TokenId = std::int32_t;

struct SyntheticSpec {
  int vocab_size = 16;
  int height = 8;
  int width = 8;
  int num_classes = 4;
  double mix_weight = 0.5;
  std::uint64_t seed = 0;

  std::vector<double> init_dist;                 // V
  std::vector<std::uint64_t> class_seeds;        // C
  std::vector<std::vector<double>> horiz;        // C x (V*V), row-major, rows sum to 1
  std::vector<std::vector<double>> vert;         // C x (V*V)

  int seq_len() const { return height * width; }

  std::span<const double> horiz_row(int cls, TokenId from) const {
    return {horiz[cls].data() + static_cast<std::size_t>(from) * vocab_size,
            static_cast<std::size_t>(vocab_size)};
  }
  std::span<const double> vert_row(int cls, TokenId from) const {
    return {vert[cls].data() + static_cast<std::size_t>(from) * vocab_size,
            static_cast<std::size_t>(vocab_size)};
  }

  /// Checks shapes, nonnegativity and row sums (1e-9). Throws ParameterError.
  void validate() const;
};

struct Sample {
  int class_label = 0;
  std::vector<TokenId> tokens;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Floor applied to every drawn transition entry before normalization.
inline constexpr double kTransitionFloor = 1e-3;

SyntheticSpec make_spec(int vocab_size, int height, int width, int num_classes,
                        std::uint64_t seed, double mix_weight = 0.5);

/// p(x_position | prefix, class). Requires position == prefix.size().
std::vector<double> oracle_conditional(const SyntheticSpec& spec, int class_label,
                                       std::span<const TokenId> prefix, int position);

/// Writes the conditional into `out` (size V) without allocating.
void oracle_conditional_into(const SyntheticSpec& spec, int class_label,
                             std::span<const TokenId> prefix, int position,
                             std::span<double> out);

Sample sample_grid(const SyntheticSpec& spec, int class_label, std::uint64_t seed);

/// Negative log-likelihood in nats; +infinity when a token has zero probability.
double exact_nll(const SyntheticSpec& spec, int class_label, std::span<const TokenId> tokens);

/// Record i has class i % C and is drawn with seed derive_seed(seed, i).
std::vector<Sample> make_dataset(const SyntheticSpec& spec, std::size_t count, std::uint64_t seed);

/// `class_label<TAB>space-separated token ids`, one record per line.
void write_dataset(std::ostream& os, std::span<const Sample> samples);
std::vector<Sample> read_dataset(std::istream& is);

}  // namespace nxt
