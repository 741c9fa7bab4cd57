// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include "nexttensor/decode.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "nexttensor/error.hpp"
#include "nexttensor/tensorize.hpp"

namespace nxt {

std::string_view to_string(ProvisionalPolicy p) { return p == ProvisionalPolicy::sample ? "sample" : "argmax"; }

ProvisionalPolicy parse_provisional_policy(std::string_view name) {
  if (name == "sample") return ProvisionalPolicy::sample;
  if (name == "argmax") return ProvisionalPolicy::argmax;
  throw ParameterError("unknown provisional policy '" + std::string(name) + "' (expected sample or argmax)");
}

void DecodeConfig::validate(int vocab_size) const {
  NXT_REQUIRE(std::isfinite(temperature) && temperature > 0, "decode.temperature must be finite and > 0");
  NXT_REQUIRE(top_k >= 0, "decode.top_k must be >= 0 (0 disables)");
  (void)vocab_size;
}

TokenId argmax(std::span<const float> logits) {
  return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

TokenId sample_categorical(std::span<const float> logits, const DecodeConfig& config, Rng& rng) {
  if (config.greedy) return argmax(logits);
  const std::size_t V = logits.size();
  float cut = -INFINITY;
  if (config.top_k > 0 && static_cast<std::size_t>(config.top_k) < V) {
    std::vector<float> sorted(logits.begin(), logits.end());
    std::nth_element(sorted.begin(), sorted.begin() + (config.top_k - 1), sorted.end(), std::greater<>());
    cut = sorted[config.top_k - 1];
  }
  // Ties at the cut are kept in index order until top_k entries are used.
  int tie_budget = config.top_k;
  for (float l : logits) tie_budget -= l > cut;
  const float mx = *std::max_element(logits.begin(), logits.end());
  const double inv_t = 1.0 / config.temperature;
  std::vector<double> w(V);
  double z = 0;
  for (std::size_t v = 0; v < V; ++v) {
    const bool keep = cut == -INFINITY || logits[v] > cut || (logits[v] == cut && tie_budget-- > 0);
    w[v] = keep ? std::exp((static_cast<double>(logits[v]) - mx) * inv_t) : 0.0;
    z += w[v];
  }
  const double u = rng.uniform() * z;
  double acc = 0;
  std::size_t last = 0;
  for (std::size_t v = 0; v < V; ++v) {
    if (w[v] <= 0) continue;
    acc += w[v];
    last = v;
    if (u < acc) return static_cast<TokenId>(v);
  }
  return static_cast<TokenId>(last);
}

int refine_count(const DecodeTrace& trace, int position) {
  NXT_REQUIRE(position >= 0 && position < trace.length, "trace position out of range");
  return static_cast<int>(trace.history[position].size());
}

Decoder::Decoder(const StepModel& model) : model_(&model), cache_(make_kv_cache(model.config())) {}

DecodeResult Decoder::generate(int class_label, const DecodeConfig& config) {
  const auto& cfg = model_->config();
  const int T = cfg.seq_len, k = cfg.k, V = cfg.vocab_size;
  const TokenId pad = pad_token(V);
  config.validate(V);
  NXT_REQUIRE(class_label >= 0 && class_label < cfg.num_classes, "class label out of range");

  Rng rng(config.seed);
  cache_.length = 0;
  DecodeResult out;
  out.class_label = class_label;
  out.trace.length = T;
  out.trace.k = k;
  out.trace.vocab_size = V;
  out.trace.history.resize(static_cast<std::size_t>(T));
  out.tokens.reserve(static_cast<std::size_t>(T));

  std::vector<TokenId> window(static_cast<std::size_t>(k), pad);
  std::vector<TokenId> input(static_cast<std::size_t>(k), pad);
  for (int t = 0; t < T; ++t) {
    if (t == 0) {
      model_->step_class(cache_, class_label, logits_);
    } else {
      input[0] = out.tokens.back();
      for (int j = 1; j < k; ++j) input[j] = window[j];
      model_->step_window(cache_, input, logits_);
    }
    for (int j = 0; j < k; ++j) {
      if (t + j >= T) {
        window[j] = pad;
        continue;
      }
      std::span<const float> row(logits_.data() + static_cast<std::size_t>(j) * V, static_cast<std::size_t>(V));
      if (j > 0 && config.provisional == ProvisionalPolicy::argmax) {
        window[j] = argmax(row);
      } else {
        window[j] = sample_categorical(row, config, rng);
      }
      out.trace.history[t + j].emplace_back(t, window[j]);
    }
    out.trace.windows.push_back(window);
    out.tokens.push_back(window[0]);
  }
  out.tokens = from_committed(out.tokens, T, V);
  return out;
}

DecodeResult generate(const ModelParams<float>& params, int class_label, const DecodeConfig& config) {
  StepModel model(params);
  Decoder dec(model);
  return dec.generate(class_label, config);
}

void write_trace(std::ostream& os, const DecodeTrace& trace) {
  for (std::size_t t = 0; t < trace.windows.size(); ++t)
    for (int j = 0; j < trace.k; ++j)
      if (static_cast<int>(t) + j < trace.length) os << t + j << '\t' << t << '\t' << trace.windows[t][j] << '\n';
}

void write_grid(std::ostream& os, std::span<const TokenId> tokens, int height, int width) {
  NXT_REQUIRE(tokens.size() == static_cast<std::size_t>(height) * width, "grid size differs from token count");
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) os << (c ? " " : "") << tokens[static_cast<std::size_t>(r) * width + c];
    os << '\n';
  }
}

void write_pgm(std::ostream& os, std::span<const TokenId> tokens, int height, int width, int vocab_size) {
  NXT_REQUIRE(tokens.size() == static_cast<std::size_t>(height) * width, "grid size differs from token count");
  os << "P5\n" << width << ' ' << height << "\n255\n";
  const int denom = std::max(1, vocab_size - 1);
  for (TokenId t : tokens) os.put(static_cast<char>(static_cast<unsigned char>(t * 255 / denom)));
}

std::vector<BenchRow> throughput_bench(std::span<const ModelParams<float>* const> models, int batch, int repetitions,
                                       std::uint64_t seed) {
  NXT_REQUIRE(repetitions >= 1, "bench repetitions must be >= 1");
  NXT_REQUIRE(batch >= 1, "bench batch must be >= 1");
  NXT_REQUIRE(!models.empty(), "bench needs at least one model");
  std::vector<StepModel> steps;
  steps.reserve(models.size());
  for (const auto* m : models) steps.emplace_back(*m);
  std::vector<Decoder> decoders;
  decoders.reserve(models.size());
  for (const auto& s : steps) decoders.emplace_back(s);

  std::vector<std::vector<double>> secs(models.size());
  for (int rep = -1; rep < repetitions; ++rep) {
    for (std::size_t m = 0; m < models.size(); ++m) {
      const int C = models[m]->config.num_classes;
      const auto t0 = std::chrono::steady_clock::now();
      for (int b = 0; b < batch; ++b) {
        DecodeConfig dc;
        dc.seed = derive_seed(seed, static_cast<std::uint64_t>(rep + 1), static_cast<std::uint64_t>(b));
        decoders[m].generate(b % C, dc);
      }
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (rep >= 0) secs[m].push_back(s);
    }
  }

  std::vector<BenchRow> rows;
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto& cfg = models[m]->config;
    std::vector<double> sps, step_ms;
    for (double s : secs[m]) {
      sps.push_back(batch / s);
      step_ms.push_back(1e3 * s / (static_cast<double>(batch) * cfg.seq_len));
    }
    auto mean_sd = [](const std::vector<double>& x) {
      const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
      double ss = 0;
      for (double v : x) ss += (v - mean) * (v - mean);
      return std::pair{mean, x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0};
    };
    BenchRow r;
    r.k = cfg.k;
    r.parameters = parameter_count(*models[m]);
    r.batch = batch;
    r.repetitions = repetitions;
    std::tie(r.samples_per_sec_mean, r.samples_per_sec_sd) = mean_sd(sps);
    std::tie(r.step_ms_mean, r.step_ms_sd) = mean_sd(step_ms);
    rows.push_back(r);
  }
  return rows;
}

void write_bench_table(std::ostream& os, std::span<const BenchRow> rows) {
  os << "k\tparameters\tbatch\trepetitions\tsamples_per_sec\tsamples_per_sec_sd\tstep_ms\tstep_ms_sd\n";
  for (const auto& r : rows)
    os << r.k << '\t' << r.parameters << '\t' << r.batch << '\t' << r.repetitions << '\t' << r.samples_per_sec_mean
       << '\t' << r.samples_per_sec_sd << '\t' << r.step_ms_mean << '\t' << r.step_ms_sd << '\n';
}

}  // namespace nxt
