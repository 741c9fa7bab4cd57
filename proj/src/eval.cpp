// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include "nexttensor/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "nexttensor/error.hpp"
#include "nexttensor/rng.hpp"
#include "nexttensor/tensorize.hpp"

namespace nxt {

namespace {

// -log softmax(row)[y] in double.
double cross_entropy(const RowMat<double>& logits, Eigen::Index row, TokenId y) {
  const auto r = logits.row(row);
  const double mx = r.maxCoeff();
  return mx + std::log((r.array() - mx).exp().sum()) - r(y);
}

TokenId row_argmax(const RowMat<double>& logits, Eigen::Index row) {
  Eigen::Index i = 0;
  logits.row(row).maxCoeff(&i);
  return static_cast<TokenId>(i);
}

TokenId sample_row(const RowMat<double>& logits, Eigen::Index row, Rng& rng) {
  const auto r = logits.row(row);
  const double mx = r.maxCoeff();
  const Eigen::RowVectorXd w = (r.array() - mx).exp();
  const double u = rng.uniform() * w.sum();
  double acc = 0;
  for (Eigen::Index v = 0; v < w.size(); ++v) {
    acc += w(v);
    if (u < acc) return static_cast<TokenId>(v);
  }
  return static_cast<TokenId>(w.size() - 1);
}

void check_records(const WindowScorer& s, std::span<const Sample> data) {
  NXT_REQUIRE(!data.empty(), "evaluation dataset is empty");
  for (const auto& rec : data) {
    NXT_REQUIRE(static_cast<int>(rec.tokens.size()) == s.length(), "record length differs from the model's T");
    NXT_REQUIRE(rec.class_label >= 0 && rec.class_label < s.num_classes(), "record class label out of range");
    for (TokenId t : rec.tokens) NXT_REQUIRE(t >= 0 && t < s.vocab_size(), "record token out of vocabulary");
  }
}

std::string fmt_double(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s, const std::string& key) {
  double x = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    // from_chars rejects "inf"/"nan" spellings on some libraries.
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    if (s == "nan") return NAN;
    throw FileError("report key '" + key + "': bad number '" + s + "'");
  }
  return x;
}

std::int64_t parse_int(const std::string& s, const std::string& key) {
  std::int64_t x = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw FileError("report key '" + key + "': bad integer '" + s + "'");
  return x;
}

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  std::uint64_t x = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw FileError("report key '" + key + "': bad integer '" + s + "'");
  return x;
}

double mean_of(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance_of(const std::vector<double>& x) {
  if (x.size() < 2) return 0;
  const double m = mean_of(x);
  double ss = 0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

}  // namespace

// ---------------------------------------------------------------- scorers

ModelScorer::ModelScorer(const ModelParams<float>& params)
    : model_(params), cache_(make_kv_cache(params.config)) {}

void ModelScorer::start(int class_label, RowMat<double>& logits) {
  cache_.length = 0;
  model_.step_class(cache_, class_label, buf_);
  logits = buf_.cast<double>();
}

void ModelScorer::advance(std::span<const TokenId> window, RowMat<double>& logits) {
  model_.step_window(cache_, window, buf_);
  logits = buf_.cast<double>();
}

OracleScorer::OracleScorer(const SyntheticSpec& spec) : spec_(&spec), probs_(static_cast<std::size_t>(spec.vocab_size)) {
  spec.validate();
}

void OracleScorer::start(int class_label, RowMat<double>& logits) {
  NXT_REQUIRE(class_label >= 0 && class_label < spec_->num_classes, "class label out of range");
  class_label_ = class_label;
  prefix_.clear();
  emit(logits);
}

void OracleScorer::advance(std::span<const TokenId> window, RowMat<double>& logits) {
  NXT_REQUIRE(window.size() == 1, "oracle scorer takes one-token windows");
  prefix_.push_back(window[0]);
  emit(logits);
}

void OracleScorer::emit(RowMat<double>& logits) {
  const int pos = static_cast<int>(prefix_.size());
  if (pos >= spec_->seq_len()) throw StateError("oracle scorer advanced past the sequence end");
  oracle_conditional_into(*spec_, class_label_, prefix_, pos, probs_);
  logits.resize(1, spec_->vocab_size);
  for (int v = 0; v < spec_->vocab_size; ++v) logits(0, v) = std::log(probs_[v]);
}

// ---------------------------------------------------------------- likelihood

std::string_view to_string(EvalMode m) {
  switch (m) {
    case EvalMode::clean: return "clean";
    case EvalMode::noised: return "noised";
    case EvalMode::rollout: return "rollout";
  }
  return "?";
}

EvalMode parse_eval_mode(std::string_view name) {
  if (name == "clean") return EvalMode::clean;
  if (name == "noised") return EvalMode::noised;
  if (name == "rollout") return EvalMode::rollout;
  throw ParameterError("unknown eval mode '" + std::string(name) + "' (expected clean, noised or rollout)");
}

NllResult heldout_nll(WindowScorer& scorer, std::span<const Sample> data, const EvalOptions& options) {
  check_records(scorer, data);
  const int T = scorer.length(), k = scorer.k(), V = scorer.vocab_size();
  const TokenId pad = pad_token(V);
  if (options.mode == EvalMode::noised) NXT_REQUIRE(options.schedule.k == k, "noise schedule k differs from the model's k");

  std::vector<double> slot_sum(static_cast<std::size_t>(k), 0.0);
  NllResult out;
  out.slot_cells.assign(static_cast<std::size_t>(k), 0);
  out.copy_slot_hits.assign(static_cast<std::size_t>(k - 1), 0);
  out.copy_slot_cells.assign(static_cast<std::size_t>(k - 1), 0);
  RowMat<double> logits, prev;
  std::vector<TokenId> input(static_cast<std::size_t>(k));

  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& rec = data[i];
    const auto ws = to_windows(rec.tokens, k, V);
    Rng rng(derive_seed(options.seed, i));
    for (int p = 0; p < T; ++p) {
      if (p == 0) {
        scorer.start(rec.class_label, logits);
      } else {
        const auto w = ws.input_window(p - 1);
        switch (options.mode) {
          case EvalMode::clean:
            std::copy(w.begin(), w.end(), input.begin());
            break;
          case EvalMode::noised:
            input = corrupt_window(w, options.schedule, V, derive_seed(options.seed, i, static_cast<std::uint64_t>(p - 1)));
            break;
          case EvalMode::rollout:
            input[0] = w[0];
            for (int j = 1; j < k; ++j) input[j] = p - 1 + j < T ? sample_row(prev, j, rng) : pad;
            break;
        }
        scorer.advance(input, logits);
        for (int j = 0; j + 1 < k; ++j) {
          if (input[j + 1] == pad) continue;
          const bool hit = row_argmax(logits, j) == input[j + 1];
          out.copy_hits += hit;
          out.copy_slot_hits[j] += hit;
          ++out.copy_cells;
          ++out.copy_slot_cells[j];
        }
      }
      for (int j = 0; j < k && p + j < T; ++j) {
        slot_sum[j] += cross_entropy(logits, j, rec.tokens[p + j]);
        ++out.slot_cells[j];
      }
      if (options.mode == EvalMode::rollout) std::swap(prev, logits);
    }
  }
  out.slot_nll.resize(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) out.slot_nll[j] = slot_sum[j] / static_cast<double>(out.slot_cells[j]);
  out.per_token = out.slot_nll[0];
  out.tokens = out.slot_cells[0];
  return out;
}

NllResult heldout_nll(const ModelParams<float>& params, std::span<const Sample> data, const EvalOptions& options) {
  ModelScorer scorer(params);
  return heldout_nll(scorer, data, options);
}

std::vector<double> NllResult::copy_rate_by_slot() const {
  std::vector<double> out;
  for (std::size_t j = 0; j < copy_slot_cells.size(); ++j)
    out.push_back(copy_slot_cells[j] ? static_cast<double>(copy_slot_hits[j]) / copy_slot_cells[j] : 0.0);
  return out;
}

LeakageReport leakage_probe(const ModelParams<float>& params, std::span<const Sample> data,
                            const NoiseSchedule& schedule, std::uint64_t seed) {
  ModelScorer scorer(params);
  LeakageReport r;
  r.k = params.config.k;
  const auto clean = heldout_nll(scorer, data, {EvalMode::clean, {}, seed});
  r.copy_rate = clean.copy_rate();
  r.copy_rate_by_slot = clean.copy_rate_by_slot();
  r.new_slot_nll_clean = clean.slot_nll.back();
  r.new_slot_nll_noised = heldout_nll(scorer, data, {EvalMode::noised, schedule, seed}).slot_nll.back();
  const auto rolled = heldout_nll(scorer, data, {EvalMode::rollout, {}, seed});
  r.new_slot_nll = rolled.slot_nll.back();
  r.per_token_nll = rolled.per_token;
  return r;
}

// ---------------------------------------------------------------- samples

std::vector<double> bigram_histogram(std::span<const Sample> samples, int vocab_size, int height, int width) {
  NXT_REQUIRE(!samples.empty(), "bigram histogram of an empty sample set");
  NXT_REQUIRE(width >= 2, "bigram histogram needs width >= 2");
  std::vector<double> h(static_cast<std::size_t>(vocab_size) * vocab_size, 0.0);
  std::int64_t n = 0;
  for (const auto& s : samples) {
    NXT_REQUIRE(s.tokens.size() == static_cast<std::size_t>(height) * width, "sample size differs from H x W");
    for (int r = 0; r < height; ++r)
      for (int c = 0; c + 1 < width; ++c) {
        const TokenId a = s.tokens[r * width + c], b = s.tokens[r * width + c + 1];
        NXT_REQUIRE(a >= 0 && a < vocab_size && b >= 0 && b < vocab_size, "sample token out of vocabulary");
        h[static_cast<std::size_t>(a) * vocab_size + b] += 1;
        ++n;
      }
  }
  for (double& x : h) x /= static_cast<double>(n);
  return h;
}

double bigram_l1(std::span<const Sample> a, std::span<const Sample> b, int vocab_size, int height, int width) {
  const auto ha = bigram_histogram(a, vocab_size, height, width);
  const auto hb = bigram_histogram(b, vocab_size, height, width);
  double l1 = 0;
  for (std::size_t i = 0; i < ha.size(); ++i) l1 += std::abs(ha[i] - hb[i]);
  return l1;
}

DivergenceResult compare_samples(const SyntheticSpec& spec, std::span<const Sample> candidate,
                                 std::span<const Sample> reference) {
  NXT_REQUIRE(candidate.size() >= kMinDivergenceSamples && reference.size() >= kMinDivergenceSamples,
              "divergence needs at least " + std::to_string(kMinDivergenceSamples) + " samples per set");
  const int cls = reference.front().class_label;
  for (auto set : {candidate, reference})
    for (const auto& s : set) NXT_REQUIRE(s.class_label == cls, "divergence sample sets mix class labels");

  DivergenceResult r;
  r.samples = static_cast<std::int64_t>(candidate.size());
  r.bigram_l1 = bigram_l1(candidate, reference, spec.vocab_size, spec.height, spec.width);
  std::vector<double> a, b;
  a.reserve(candidate.size());
  b.reserve(reference.size());
  for (const auto& s : candidate) a.push_back(exact_nll(spec, cls, s.tokens));
  for (const auto& s : reference) b.push_back(exact_nll(spec, cls, s.tokens));
  r.model_nll = mean_of(a);
  r.oracle_nll = mean_of(b);
  r.exact_nll_gap = r.model_nll - r.oracle_nll;
  r.exact_nll_gap_stderr =
      std::sqrt(variance_of(a) / static_cast<double>(a.size()) + variance_of(b) / static_cast<double>(b.size()));
  return r;
}

std::vector<Sample> oracle_samples(const SyntheticSpec& spec, int class_label, std::size_t n, std::uint64_t seed) {
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_grid(spec, class_label, derive_seed(seed, i)));
  return out;
}

std::vector<Sample> model_samples(const ModelParams<float>& params, int class_label, std::size_t n,
                                  std::uint64_t seed, DecodeConfig decode) {
  StepModel sm(params);
  Decoder dec(sm);
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    decode.seed = derive_seed(seed, i);
    out.push_back({class_label, dec.generate(class_label, decode).tokens});
  }
  return out;
}

DivergenceResult divergence(const ModelParams<float>& params, const SyntheticSpec& spec, int class_label,
                            std::size_t n_samples, std::uint64_t seed, const DecodeConfig& decode) {
  NXT_REQUIRE(params.config.vocab_size == spec.vocab_size && params.config.seq_len == spec.seq_len(),
              "model and synthetic spec disagree on V or T");
  NXT_REQUIRE(n_samples >= kMinDivergenceSamples,
              "divergence needs n_samples >= " + std::to_string(kMinDivergenceSamples));
  const auto model = model_samples(params, class_label, n_samples, derive_seed(seed, 1), decode);
  const auto oracle = oracle_samples(spec, class_label, n_samples, derive_seed(seed, 2));
  return compare_samples(spec, model, oracle);
}

DivergenceResult divergence_all_classes(const ModelParams<float>& params, const SyntheticSpec& spec,
                                        std::size_t n_per_class, std::uint64_t seed, const DecodeConfig& decode) {
  DivergenceResult sum;
  double var = 0;
  const int C = spec.num_classes;
  for (int c = 0; c < C; ++c) {
    const auto r = divergence(params, spec, c, n_per_class, derive_seed(seed, static_cast<std::uint64_t>(c)), decode);
    sum.samples += r.samples;
    sum.bigram_l1 += r.bigram_l1 / C;
    sum.model_nll += r.model_nll / C;
    sum.oracle_nll += r.oracle_nll / C;
    sum.exact_nll_gap += r.exact_nll_gap / C;
    var += r.exact_nll_gap_stderr * r.exact_nll_gap_stderr;
  }
  sum.exact_nll_gap_stderr = std::sqrt(var) / C;
  return sum;
}

// ---------------------------------------------------------------- reports

std::string spec_fingerprint(const SyntheticSpec& spec) {
  std::ostringstream os;
  os << "V" << spec.vocab_size << "-H" << spec.height << "-W" << spec.width << "-C" << spec.num_classes << "-mix"
     << fmt_double(spec.mix_weight) << "-seed" << spec.seed;
  return os.str();
}

std::string config_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string report_stem(std::string_view config_text, std::uint64_t seed) {
  return "eval-" + config_hash(config_text) + "-s" + std::to_string(seed);
}

void EvalReport::validate() const {
  auto finite = [](double x, const char* what) {
    if (!std::isfinite(x)) throw ConsistencyError(std::string("eval report: non-finite ") + what);
  };
  finite(heldout_nll_per_token, "heldout_nll_per_token");
  finite(clean_nll_per_token, "clean_nll_per_token");
  finite(noised_nll_per_token, "noised_nll_per_token");
  finite(sample_exact_nll_gap, "sample_exact_nll_gap");
  finite(sample_exact_nll_gap_stderr, "sample_exact_nll_gap_stderr");
  for (double x : slot_nll) finite(x, "slot_nll");
  if (!(sample_bigram_l1 >= 0 && sample_bigram_l1 <= 2)) throw ConsistencyError("eval report: bigram_l1 outside [0, 2]");
  if (!(copy_rate >= 0 && copy_rate <= 1)) throw ConsistencyError("eval report: copy_rate outside [0, 1]");
  if (static_cast<int>(slot_nll.size()) != k) throw ConsistencyError("eval report: slot_nll length differs from k");
}

void write_report(std::ostream& os, const EvalReport& r) {
  os << "run.name = " << r.run_name << '\n';
  os << "run.seed = " << r.seed << '\n';
  os << "spec.fingerprint = " << r.spec_fingerprint << '\n';
  os << "model.k = " << r.k << '\n';
  for (const auto& [key, value] : r.config) os << "config." << key << " = " << value << '\n';
  os << "heldout.records = " << r.heldout_records << '\n';
  os << "heldout.nll_per_token = " << fmt_double(r.heldout_nll_per_token) << '\n';
  for (std::size_t j = 0; j < r.slot_nll.size(); ++j)
    os << "heldout.slot_nll." << j << " = " << fmt_double(r.slot_nll[j]) << '\n';
  os << "heldout.clean_nll_per_token = " << fmt_double(r.clean_nll_per_token) << '\n';
  os << "heldout.noised_nll_per_token = " << fmt_double(r.noised_nll_per_token) << '\n';
  os << "heldout.copy_rate = " << fmt_double(r.copy_rate) << '\n';
  os << "samples.per_class = " << r.samples_per_class << '\n';
  os << "samples.bigram_l1 = " << fmt_double(r.sample_bigram_l1) << '\n';
  os << "samples.exact_nll_gap = " << fmt_double(r.sample_exact_nll_gap) << '\n';
  os << "samples.exact_nll_gap_stderr = " << fmt_double(r.sample_exact_nll_gap_stderr) << '\n';
  for (std::size_t i = 0; i < r.throughput.size(); ++i) {
    const auto& t = r.throughput[i];
    const std::string p = "throughput." + std::to_string(i) + ".";
    os << p << "k = " << t.k << '\n';
    os << p << "parameters = " << t.parameters << '\n';
    os << p << "batch = " << t.batch << '\n';
    os << p << "repetitions = " << t.repetitions << '\n';
    os << p << "samples_per_sec = " << fmt_double(t.samples_per_sec_mean) << '\n';
    os << p << "samples_per_sec_sd = " << fmt_double(t.samples_per_sec_sd) << '\n';
    os << p << "step_ms = " << fmt_double(t.step_ms_mean) << '\n';
    os << p << "step_ms_sd = " << fmt_double(t.step_ms_sd) << '\n';
  }
}

EvalReport read_report(std::istream& is) {
  EvalReport r;
  std::map<std::size_t, double> slots;
  std::map<std::size_t, BenchRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw FileError("report line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
    auto starts = [&key](std::string_view p) { return key.compare(0, p.size(), p) == 0; };
    if (key == "run.name") r.run_name = value;
    else if (key == "run.seed") r.seed = parse_u64(value, key);
    else if (key == "spec.fingerprint") r.spec_fingerprint = value;
    else if (key == "model.k") r.k = static_cast<int>(parse_int(value, key));
    else if (starts("config.")) r.config.emplace_back(key.substr(7), value);
    else if (key == "heldout.records") r.heldout_records = parse_int(value, key);
    else if (key == "heldout.nll_per_token") r.heldout_nll_per_token = parse_double(value, key);
    else if (starts("heldout.slot_nll.")) slots[static_cast<std::size_t>(parse_int(key.substr(17), key))] = parse_double(value, key);
    else if (key == "heldout.clean_nll_per_token") r.clean_nll_per_token = parse_double(value, key);
    else if (key == "heldout.noised_nll_per_token") r.noised_nll_per_token = parse_double(value, key);
    else if (key == "heldout.copy_rate") r.copy_rate = parse_double(value, key);
    else if (key == "samples.per_class") r.samples_per_class = parse_int(value, key);
    else if (key == "samples.bigram_l1") r.sample_bigram_l1 = parse_double(value, key);
    else if (key == "samples.exact_nll_gap") r.sample_exact_nll_gap = parse_double(value, key);
    else if (key == "samples.exact_nll_gap_stderr") r.sample_exact_nll_gap_stderr = parse_double(value, key);
    else if (starts("throughput.")) {
      const auto dot = key.find('.', 11);
      if (dot == std::string::npos) throw FileError("report key '" + key + "' is malformed");
      auto& row = rows[static_cast<std::size_t>(parse_int(key.substr(11, dot - 11), key))];
      const std::string field = key.substr(dot + 1);
      if (field == "k") row.k = static_cast<int>(parse_int(value, key));
      else if (field == "parameters") row.parameters = static_cast<std::size_t>(parse_u64(value, key));
      else if (field == "batch") row.batch = static_cast<int>(parse_int(value, key));
      else if (field == "repetitions") row.repetitions = static_cast<int>(parse_int(value, key));
      else if (field == "samples_per_sec") row.samples_per_sec_mean = parse_double(value, key);
      else if (field == "samples_per_sec_sd") row.samples_per_sec_sd = parse_double(value, key);
      else if (field == "step_ms") row.step_ms_mean = parse_double(value, key);
      else if (field == "step_ms_sd") row.step_ms_sd = parse_double(value, key);
      else throw FileError("unknown report key '" + key + "'");
    } else {
      throw FileError("unknown report key '" + key + "'");
    }
  }
  for (std::size_t j = 0; j < slots.size(); ++j) {
    if (!slots.count(j)) throw FileError("report is missing heldout.slot_nll." + std::to_string(j));
    r.slot_nll.push_back(slots[j]);
  }
  for (auto& [i, row] : rows) r.throughput.push_back(row);
  return r;
}

void write_report_tsv(std::ostream& os, std::span<const EvalReport> reports) {
  os << "run\tseed\tk\theldout_nll\tclean_nll\tnoised_nll\tcopy_rate\tbigram_l1\texact_nll_gap\texact_nll_gap_"
        "stderr\n";
  for (const auto& r : reports)
    os << r.run_name << '\t' << r.seed << '\t' << r.k << '\t' << fmt_double(r.heldout_nll_per_token) << '\t'
       << fmt_double(r.clean_nll_per_token) << '\t' << fmt_double(r.noised_nll_per_token) << '\t'
       << fmt_double(r.copy_rate) << '\t' << fmt_double(r.sample_bigram_l1) << '\t'
       << fmt_double(r.sample_exact_nll_gap) << '\t' << fmt_double(r.sample_exact_nll_gap_stderr) << '\n';
}

std::vector<ComparisonRow> compare_runs(std::span<const EvalReport> reports) {
  NXT_REQUIRE(reports.size() >= 2, "compare_runs needs at least two reports");
  for (const auto& r : reports)
    NXT_REQUIRE(r.spec_fingerprint == reports.front().spec_fingerprint,
                "compare_runs refuses reports from different synthetic specs ('" + r.spec_fingerprint + "' vs '" +
                    reports.front().spec_fingerprint + "')");
  std::vector<ComparisonRow> rows;
  const auto& base = reports.front();
  for (const auto& r : reports) {
    ComparisonRow row;
    row.run_name = r.run_name;
    row.k = r.k;
    row.heldout_nll = r.heldout_nll_per_token;
    row.bigram_l1 = r.sample_bigram_l1;
    row.exact_nll_gap = r.sample_exact_nll_gap;
    for (const auto& t : r.throughput)
      if (t.k == r.k) {
        row.samples_per_sec = t.samples_per_sec_mean;
        row.step_ms = t.step_ms_mean;
        break;
      }
    row.delta_nll = r.heldout_nll_per_token - base.heldout_nll_per_token;
    row.delta_l1_rel = base.sample_bigram_l1 > 0 ? (r.sample_bigram_l1 - base.sample_bigram_l1) / base.sample_bigram_l1 : 0.0;
    rows.push_back(row);
  }
  auto rank = [&rows](auto metric, int ComparisonRow::*field) {
    std::vector<std::size_t> idx(rows.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return metric(rows[a]) < metric(rows[b]); });
    for (std::size_t i = 0; i < idx.size(); ++i) rows[idx[i]].*field = static_cast<int>(i + 1);
  };
  rank([](const ComparisonRow& r) { return r.heldout_nll; }, &ComparisonRow::rank_nll);
  rank([](const ComparisonRow& r) { return r.bigram_l1; }, &ComparisonRow::rank_l1);
  return rows;
}

void write_comparison(std::ostream& os, std::span<const ComparisonRow> rows) {
  os << "run\tk\theldout_nll\tdelta_nll\trank_nll\tbigram_l1\tdelta_l1_rel\trank_l1\texact_nll_gap\tsamples_per_"
        "sec\tstep_ms\n";
  for (const auto& r : rows)
    os << r.run_name << '\t' << r.k << '\t' << fmt_double(r.heldout_nll) << '\t' << fmt_double(r.delta_nll) << '\t'
       << r.rank_nll << '\t' << fmt_double(r.bigram_l1) << '\t' << fmt_double(r.delta_l1_rel) << '\t' << r.rank_l1
       << '\t' << fmt_double(r.exact_nll_gap) << '\t' << fmt_double(r.samples_per_sec) << '\t'
       << fmt_double(r.step_ms) << '\n';
}

}  // namespace nxt
