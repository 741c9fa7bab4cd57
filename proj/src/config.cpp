// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include "nexttensor/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "nexttensor/error.hpp"
#include "nexttensor/eval.hpp"
#include "nexttensor/rng.hpp"

namespace nxt {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view s) {
  T x{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty())
    throw ParameterError("'" + std::string(s) + "' is not a valid number");
  return x;
}

std::string fmt(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string fmt(T x) requires std::is_integral_v<T> {
  return std::to_string(x);
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ParameterError("'" + std::string(s) + "' is not a boolean (true/false)");
}

template <typename T>
std::vector<T> parse_list(std::string_view s) {
  std::vector<T> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(parse_number<T>(trim(s.substr(start, comma - start))));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, std::string_view)> set;
};

// Binds a field through an accessor returning a reference into Config.
template <typename Acc>
Field num(std::string key, Acc acc) {
  using T = std::remove_reference_t<decltype(acc(std::declval<Config&>()))>;
  return {std::move(key), [acc](const Config& c) { return fmt(acc(c)); },
          [acc](Config& c, std::string_view v) { acc(c) = parse_number<T>(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back({"run.name", [](const Config& c) { return c.run_name; },
                 [](Config& c, std::string_view s) { c.run_name = std::string(s); }});
    v.push_back({"run.output_dir", [](const Config& c) { return c.output_dir; },
                 [](Config& c, std::string_view s) { c.output_dir = std::string(s); }});
    v.push_back(num("run.seed", [](auto& c) -> auto& { return c.seed; }));

    v.push_back(num("data.vocab_size", [](auto& c) -> auto& { return c.data.vocab_size; }));
    v.push_back(num("data.height", [](auto& c) -> auto& { return c.data.height; }));
    v.push_back(num("data.width", [](auto& c) -> auto& { return c.data.width; }));
    v.push_back(num("data.num_classes", [](auto& c) -> auto& { return c.data.num_classes; }));
    v.push_back(num("data.mix_weight", [](auto& c) -> auto& { return c.data.mix_weight; }));
    v.push_back(num("data.spec_seed", [](auto& c) -> auto& { return c.data.spec_seed; }));
    v.push_back(num("data.train_records", [](auto& c) -> auto& { return c.data.train_records; }));
    v.push_back(num("data.heldout_records", [](auto& c) -> auto& { return c.data.heldout_records; }));
    v.push_back(num("data.train_seed", [](auto& c) -> auto& { return c.data.train_seed; }));
    v.push_back(num("data.heldout_seed", [](auto& c) -> auto& { return c.data.heldout_seed; }));

    v.push_back(num("model.k", [](auto& c) -> auto& { return c.model.k; }));
    v.push_back(num("model.d_model", [](auto& c) -> auto& { return c.model.d_model; }));
    v.push_back(num("model.n_layers", [](auto& c) -> auto& { return c.model.n_layers; }));
    v.push_back(num("model.n_heads", [](auto& c) -> auto& { return c.model.n_heads; }));
    v.push_back(num("model.q_depth", [](auto& c) -> auto& { return c.model.q_depth; }));
    v.push_back(num("model.mlp_ratio", [](auto& c) -> auto& { return c.model.mlp_ratio; }));
    v.push_back(num("model.q_mlp_ratio", [](auto& c) -> auto& { return c.model.q_mlp_ratio; }));

    v.push_back(num("train.batch_size", [](auto& c) -> auto& { return c.train.batch_size; }));
    v.push_back(num("train.steps", [](auto& c) -> auto& { return c.train.steps; }));
    v.push_back(num("train.learning_rate", [](auto& c) -> auto& { return c.train.learning_rate; }));
    v.push_back(num("train.warmup_steps", [](auto& c) -> auto& { return c.train.warmup_steps; }));
    v.push_back(num("train.weight_decay", [](auto& c) -> auto& { return c.train.weight_decay; }));
    v.push_back(num("train.beta1", [](auto& c) -> auto& { return c.train.beta1; }));
    v.push_back(num("train.beta2", [](auto& c) -> auto& { return c.train.beta2; }));
    v.push_back(num("train.epsilon", [](auto& c) -> auto& { return c.train.epsilon; }));
    v.push_back(num("train.grad_clip_norm", [](auto& c) -> auto& { return c.train.grad_clip_norm; }));
    v.push_back(num("train.eval_every", [](auto& c) -> auto& { return c.train.eval_every; }));
    v.push_back(num("train.eval_records", [](auto& c) -> auto& { return c.train.eval_records; }));
    v.push_back(num("train.checkpoint_every", [](auto& c) -> auto& { return c.train.checkpoint_every; }));

    v.push_back({"noise.kind", [](const Config& c) { return std::string(to_string(c.noise.kind)); },
                 [](Config& c, std::string_view s) { c.noise.kind = parse_schedule_kind(s); }});
    v.push_back(num("noise.exponent", [](auto& c) -> auto& { return c.noise.exponent; }));
    v.push_back({"noise.loss_weights", [](const Config& c) { return fmt_list(c.noise.loss_weights); },
                 [](Config& c, std::string_view s) { c.noise.loss_weights = parse_list<double>(s); }});

    v.push_back(num("decode.temperature", [](auto& c) -> auto& { return c.decode.temperature; }));
    v.push_back(num("decode.top_k", [](auto& c) -> auto& { return c.decode.top_k; }));
    v.push_back({"decode.greedy", [](const Config& c) { return std::string(c.decode.greedy ? "true" : "false"); },
                 [](Config& c, std::string_view s) { c.decode.greedy = parse_bool(s); }});
    v.push_back({"decode.provisional", [](const Config& c) { return std::string(to_string(c.decode.provisional)); },
                 [](Config& c, std::string_view s) { c.decode.provisional = parse_provisional_policy(s); }});
    v.push_back(num("decode.samples", [](auto& c) -> auto& { return c.decode.samples; }));

    v.push_back(num("eval.records", [](auto& c) -> auto& { return c.eval.records; }));
    v.push_back(num("eval.samples_per_class", [](auto& c) -> auto& { return c.eval.samples_per_class; }));
    v.push_back(num("eval.bench_batch", [](auto& c) -> auto& { return c.eval.bench_batch; }));
    v.push_back(num("eval.bench_repetitions", [](auto& c) -> auto& { return c.eval.bench_repetitions; }));

    v.push_back({"bench.ks", [](const Config& c) { return fmt_list(c.bench.ks); },
                 [](Config& c, std::string_view s) { c.bench.ks = parse_list<int>(s); }});
    v.push_back(num("bench.batch", [](auto& c) -> auto& { return c.bench.batch; }));
    v.push_back(num("bench.repetitions", [](auto& c) -> auto& { return c.bench.repetitions; }));
    return v;
  }();
  return f;
}

const Field& field(std::string_view key) {
  const auto resolved = resolve_key(key);
  for (const auto& f : fields())
    if (f.key == resolved) return f;
  throw ParameterError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

std::string resolve_key(std::string_view key) {
  for (const auto& f : fields())
    if (f.key == key) return f.key;
  if (key.find('.') == std::string_view::npos) {
    const std::string suffix = "." + std::string(key);
    std::vector<std::string> hits;
    for (const auto& f : fields())
      if (f.key.ends_with(suffix)) hits.push_back(f.key);
    if (hits.size() == 1) return hits.front();
    if (hits.size() > 1) {
      std::string all;
      for (const auto& h : hits) all += (all.empty() ? "" : ", ") + h;
      throw ParameterError("ambiguous config key '" + std::string(key) + "' (could be " + all + ")");
    }
  }
  throw ParameterError("unknown config key '" + std::string(key) + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

std::string get_value(const Config& config, std::string_view key) { return field(key).get(config); }

void set_value(Config& config, std::string_view key, std::string_view value) {
  const auto& f = field(key);
  try {
    f.set(config, trim(value));
  } catch (const ParameterError& e) {
    throw ParameterError(f.key + ": " + e.what());
  }
}

std::vector<std::pair<std::string, std::string>> to_pairs(const Config& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(config));
  return out;
}

std::string to_text(const Config& config) {
  std::string s;
  for (const auto& [k, v] : to_pairs(config)) s += k + " = " + v + "\n";
  return s;
}

Config parse_config(std::string_view text, Config base) {
  int lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    ++lineno;
    start = end + 1;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParameterError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    try {
      set_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ParameterError& e) {
      throw ParameterError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

Config load_config(const std::string& path, Config base) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::uint64_t stream_seed(const Config& config, SeedStream stream) {
  return derive_seed(config.seed, static_cast<std::uint64_t>(stream));
}

SyntheticSpec Config::spec() const {
  return make_spec(data.vocab_size, data.height, data.width, data.num_classes, data.spec_seed, data.mix_weight);
}

ModelConfig Config::model_config() const {
  ModelConfig m;
  m.vocab_size = data.vocab_size;
  m.k = model.k;
  m.seq_len = data.height * data.width;
  m.d_model = model.d_model;
  m.n_layers = model.n_layers;
  m.n_heads = model.n_heads;
  m.q_depth = model.q_depth;
  m.num_classes = data.num_classes;
  m.mlp_ratio = model.mlp_ratio;
  m.q_mlp_ratio = model.q_mlp_ratio;
  m.seed = stream_seed(*this, SeedStream::model_init);
  return m;
}

NoiseSchedule Config::schedule() const { return NoiseSchedule{noise.kind, model.k, noise.exponent}; }

TrainConfig Config::train_config() const {
  TrainConfig t;
  t.batch_size = train.batch_size;
  t.steps = train.steps;
  t.learning_rate = train.learning_rate;
  t.warmup_steps = train.warmup_steps;
  t.weight_decay = train.weight_decay;
  t.beta1 = train.beta1;
  t.beta2 = train.beta2;
  t.epsilon = train.epsilon;
  t.grad_clip_norm = train.grad_clip_norm;
  t.seed = stream_seed(*this, SeedStream::train);
  t.schedule = schedule();
  t.weights = noise.loss_weights.empty() ? LossWeights::uniform(model.k) : LossWeights{noise.loss_weights};
  return t;
}

DecodeConfig Config::decode_config() const {
  DecodeConfig d;
  d.temperature = decode.temperature;
  d.top_k = decode.top_k;
  d.greedy = decode.greedy;
  d.provisional = decode.provisional;
  d.seed = stream_seed(*this, SeedStream::decode);
  return d;
}

void Config::validate() const {
  NXT_REQUIRE(!run_name.empty() && run_name.find('/') == std::string::npos, "run.name must be a non-empty file name");
  NXT_REQUIRE(!output_dir.empty(), "run.output_dir must not be empty");
  NXT_REQUIRE(data.train_records >= 1 && data.heldout_records >= 1, "data splits must hold at least one record");
  NXT_REQUIRE(data.train_seed != data.heldout_seed, "data.train_seed and data.heldout_seed must differ");
  spec().validate();
  model_config().validate();
  train_config().validate(model.k);
  NXT_REQUIRE(noise.exponent >= 0.0, "noise.exponent must be >= 0 (0 selects 2 / k)");
  NXT_REQUIRE(train.eval_every >= 0 && train.checkpoint_every >= 0, "train.eval_every/checkpoint_every must be >= 0");
  NXT_REQUIRE(train.eval_records >= 1, "train.eval_records must be >= 1");
  decode_config().validate(data.vocab_size);
  NXT_REQUIRE(decode.samples >= 1, "decode.samples must be >= 1");
  NXT_REQUIRE(eval.samples_per_class >= kMinDivergenceSamples, "eval.samples_per_class must be >= 1000");
  NXT_REQUIRE(eval.bench_batch >= 0 && eval.bench_repetitions >= 1, "eval bench settings out of range");
  NXT_REQUIRE(!bench.ks.empty(), "bench.ks must list at least one k");
  for (int k : bench.ks) NXT_REQUIRE(k >= 1 && k <= data.height * data.width, "bench.ks entries must lie in [1, T]");
  NXT_REQUIRE(bench.batch >= 1 && bench.repetitions >= 1, "bench.batch and bench.repetitions must be >= 1");
}

}  // namespace nxt
