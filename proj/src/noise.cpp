// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include "nexttensor/noise.hpp"

#include <cmath>

#include "nexttensor/error.hpp"

namespace nxt {

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::sine: return "sine";
    case ScheduleKind::sqrt: return "sqrt";
    case ScheduleKind::exponential: return "exponential";
    case ScheduleKind::none: return "none";
  }
  return "?";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  for (auto k : {ScheduleKind::linear, ScheduleKind::sine, ScheduleKind::sqrt, ScheduleKind::exponential,
                 ScheduleKind::none}) {
    if (to_string(k) == name) return k;
  }
  throw ParameterError("unknown noise schedule '" + std::string(name) + "'");
}

double beta(const NoiseSchedule& schedule, int j) {
  NXT_REQUIRE(schedule.k >= 1, "schedule window size must be positive");
  NXT_REQUIRE(j >= 0 && j < schedule.k, "schedule position out of range");
  if (schedule.kind == ScheduleKind::none || j == 0) return 0.0;
  if (j == schedule.k - 1) return 1.0;
  const double u = static_cast<double>(j) / static_cast<double>(schedule.k - 1);
  switch (schedule.kind) {
    case ScheduleKind::linear: return u;
    case ScheduleKind::sine: return std::sin(M_PI * u / 2.0);
    case ScheduleKind::sqrt: return std::sqrt(u);
    case ScheduleKind::exponential:
      NXT_REQUIRE(schedule.exponent >= 0.0, "exponential schedule exponent must be >= 0");
      return std::pow(u, schedule.exponent > 0.0 ? schedule.exponent : 2.0 / schedule.k);
    case ScheduleKind::none: break;
  }
  return 0.0;
}

std::vector<double> beta_table(const NoiseSchedule& schedule) {
  std::vector<double> out(static_cast<std::size_t>(schedule.k));
  for (int j = 0; j < schedule.k; ++j) out[j] = beta(schedule, j);
  return out;
}

void corrupt_window_inplace(std::span<TokenId> window, std::span<const double> betas, int vocab_size, Rng& rng) {
  const TokenId pad = pad_token(vocab_size);
  const auto n = std::min(window.size(), betas.size());
  for (std::size_t j = 1; j < n; ++j) {
    if (window[j] == pad) continue;
    // Always consume the same number of draws per slot so neighbouring slots
    // keep their streams when a beta changes.
    const double u = rng.uniform();
    const auto pick = static_cast<TokenId>(rng.uniform_int(static_cast<std::uint64_t>(vocab_size)));
    if (u < betas[j]) window[j] = pick;
  }
}

std::vector<TokenId> corrupt_window(std::span<const TokenId> window, const NoiseSchedule& schedule, int vocab_size,
                                    std::uint64_t seed) {
  NXT_REQUIRE(window.size() == static_cast<std::size_t>(schedule.k), "window length differs from schedule k");
  std::vector<TokenId> out(window.begin(), window.end());
  const auto betas = beta_table(schedule);
  Rng rng(seed);
  corrupt_window_inplace(out, betas, vocab_size, rng);
  return out;
}

WindowedSequence corrupt_batch(const WindowedSequence& windowed, const NoiseSchedule& schedule, std::uint64_t seed) {
  NXT_REQUIRE(windowed.k == schedule.k, "window size differs from schedule k");
  WindowedSequence out = windowed;
  const auto betas = beta_table(schedule);
  for (int t = 0; t < out.length; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    corrupt_window_inplace(out.input_window(t), betas, out.vocab_size, rng);
  }
  return out;
}

}  // namespace nxt
