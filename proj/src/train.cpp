// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include "nexttensor/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "nexttensor/error.hpp"
#include "nexttensor/rng.hpp"
#include "nexttensor/tensorize.hpp"

namespace nxt {

namespace {

// Stream tags for derive_seed(config.seed, tag, step).
constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kNoiseStream = 2;

bool is_embedding(const std::string& name) {
  return name == "tok_emb" || name == "cls_emb" || name == "pos_emb" || name == "q_in.slot_pos" ||
         name.ends_with("queries");
}

}  // namespace

void TrainConfig::validate(int k) const {
  NXT_REQUIRE(batch_size >= 1, "train.batch_size must be >= 1");
  NXT_REQUIRE(steps >= 1, "train.steps must be >= 1");
  NXT_REQUIRE(learning_rate >= 0 && std::isfinite(learning_rate), "train.learning_rate must be finite and >= 0");
  NXT_REQUIRE(warmup_steps >= 0, "train.warmup_steps must be >= 0");
  NXT_REQUIRE(weight_decay >= 0, "train.weight_decay must be >= 0");
  NXT_REQUIRE(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "adam betas must lie in [0, 1)");
  NXT_REQUIRE(epsilon > 0, "train.epsilon must be > 0");
  NXT_REQUIRE(grad_clip_norm >= 0, "train.grad_clip_norm must be >= 0 (0 disables)");
  NXT_REQUIRE(schedule.k == k, "noise schedule window differs from model k");
  NXT_REQUIRE(weights.w.size() == static_cast<std::size_t>(k), "loss weights must have k entries");
  for (double w : weights.w) NXT_REQUIRE(std::isfinite(w) && w >= 0, "loss weights must be finite and >= 0");
}

template <typename S>
LossResult<S> masked_cross_entropy(const RowMat<S>& logits, std::span<const TokenId> targets,
                                   std::span<const std::uint8_t> mask, int k, std::span<const double> weights,
                                   std::type_identity_t<RowMat<S>>* dlogits) {
  const Eigen::Index rows = logits.rows();
  const Eigen::Index V = logits.cols();
  NXT_REQUIRE(targets.size() == static_cast<std::size_t>(rows) && mask.size() == targets.size(),
              "targets and mask must have one entry per logit row");
  NXT_REQUIRE(k >= 1 && rows % k == 0, "logit rows must be a multiple of k");
  NXT_REQUIRE(weights.size() == static_cast<std::size_t>(k), "loss weights must have k entries");

  LossResult<S> r;
  r.slot_loss.assign(static_cast<std::size_t>(k), 0.0);
  r.slot_cells.assign(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < rows; ++i) r.cells += mask[i] != 0;
  if (r.cells == 0) throw ParameterError("loss over an all-masked batch is undefined");
  if (dlogits) dlogits->setZero(rows, V);

  const double inv_cells = 1.0 / static_cast<double>(r.cells);
  double total = 0;
  std::vector<double> p(static_cast<std::size_t>(V));
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!mask[i]) continue;
    const int j = static_cast<int>(i % k);
    const TokenId y = targets[i];
    NXT_REQUIRE(y >= 0 && y < V, "unmasked target outside the vocabulary");
    double mx = -INFINITY;
    for (Eigen::Index v = 0; v < V; ++v) mx = std::max(mx, static_cast<double>(logits(i, v)));
    double z = 0;
    for (Eigen::Index v = 0; v < V; ++v) z += p[v] = std::exp(static_cast<double>(logits(i, v)) - mx);
    const double ce = std::log(z) + mx - static_cast<double>(logits(i, y));
    total += weights[j] * ce;
    r.slot_loss[j] += ce;
    ++r.slot_cells[j];
    if (dlogits) {
      const double scale = weights[j] * inv_cells;
      for (Eigen::Index v = 0; v < V; ++v) (*dlogits)(i, v) = static_cast<S>(scale * (p[v] / z - (v == y)));
    }
  }
  r.loss = total * inv_cells;
  for (int j = 0; j < k; ++j)
    r.slot_loss[j] = r.slot_cells[j] ? r.slot_loss[j] / static_cast<double>(r.slot_cells[j]) : NAN;
  return r;
}

template LossResult<float> masked_cross_entropy(const RowMat<float>&, std::span<const TokenId>,
                                                std::span<const std::uint8_t>, int, std::span<const double>,
                                                RowMat<float>*);
template LossResult<double> masked_cross_entropy(const RowMat<double>&, std::span<const TokenId>,
                                                 std::span<const std::uint8_t>, int, std::span<const double>,
                                                 RowMat<double>*);

TrainBatch make_train_batch(std::span<const Sample> samples, int k, int vocab_size, const NoiseSchedule& schedule,
                            std::uint64_t noise_seed) {
  NXT_REQUIRE(!samples.empty(), "empty training batch");
  const int T = static_cast<int>(samples[0].tokens.size());
  TrainBatch tb;
  tb.inputs.batch = static_cast<int>(samples.size());
  tb.inputs.num_windows = T - 1;
  tb.inputs.k = k;
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto& s = samples[b];
    NXT_REQUIRE(static_cast<int>(s.tokens.size()) == T, "samples in a batch must share one length");
    auto ws = to_windows(s.tokens, k, vocab_size);
    auto targets = prediction_targets(ws);
    auto noisy = corrupt_batch(ws, schedule, derive_seed(noise_seed, b));
    tb.inputs.classes.push_back(s.class_label);
    tb.inputs.windows.insert(tb.inputs.windows.end(), noisy.inputs.begin(),
                             noisy.inputs.begin() + static_cast<std::ptrdiff_t>(T - 1) * k);
    tb.targets.insert(tb.targets.end(), targets.tokens.begin(), targets.tokens.end());
    tb.mask.insert(tb.mask.end(), targets.mask.begin(), targets.mask.end());
  }
  return tb;
}

std::vector<std::size_t> batch_indices(const TrainConfig& config, std::size_t dataset_size, std::int64_t step) {
  NXT_REQUIRE(dataset_size > 0, "empty training set");
  Rng rng(derive_seed(config.seed, kBatchStream, static_cast<std::uint64_t>(step)));
  std::vector<std::size_t> idx(static_cast<std::size_t>(config.batch_size));
  for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(dataset_size));
  return idx;
}

std::uint64_t batch_noise_seed(const TrainConfig& config, std::int64_t step) {
  return derive_seed(config.seed, kNoiseStream, static_cast<std::uint64_t>(step));
}

OptimizerState make_optimizer_state(const ModelConfig& config) {
  return OptimizerState{0, allocate_params<float>(config), allocate_params<float>(config)};
}

double learning_rate_at(const TrainConfig& config, std::int64_t step) {
  if (config.warmup_steps <= 0) return config.learning_rate;
  const double f = std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(config.warmup_steps));
  return config.learning_rate * f;
}

bool decays(const std::string& name, const Tensor<float>& t) { return t.rank() == 2 && !is_embedding(name); }

std::string format_metrics(const StepMetrics& m) {
  std::ostringstream os;
  os.precision(6);
  os << m.step << '\t' << m.loss << '\t';
  for (std::size_t j = 0; j < m.slot_loss.size(); ++j) os << (j ? "," : "") << m.slot_loss[j];
  os << '\t';
  if (m.heldout_nll) os << *m.heldout_nll;
  os.precision(4);
  os << '\t' << m.ms;
  return os.str();
}

TrainWorkspace make_train_workspace(const ModelConfig& config) {
  TrainWorkspace ws;
  ws.grads = allocate_params<float>(config);
  return ws;
}

StepMetrics train_step(ModelParams<float>& params, OptimizerState& opt, std::span<const Sample> data,
                       const TrainConfig& config, TrainWorkspace& ws) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& mc = params.config;
  config.validate(mc.k);
  const std::int64_t step = opt.step;

  std::vector<Sample> batch;
  for (std::size_t i : batch_indices(config, data.size(), step)) batch.push_back(data[i]);
  const std::uint64_t noise_seed = batch_noise_seed(config, step);
  const auto tb = make_train_batch(batch, mc.k, mc.vocab_size, config.schedule, noise_seed);

  const auto& fr = ws.forward.run(params, tb.inputs);
  const auto loss = masked_cross_entropy(fr.logits, tb.targets, tb.mask, mc.k, config.weights.w, &ws.dlogits);
  if (!std::isfinite(loss.loss)) {
    std::ostringstream os;
    os << "non-finite loss at step " << step << " (batch seed " << noise_seed << ", train.seed " << config.seed
       << ")";
    throw NumericError(os.str());
  }

  for_each_tensor(ws.grads, [](const std::string&, Tensor<float>& g) { g.zero(); });
  ws.forward.backward(params, ws.dlogits, ws.grads);

  double sq = 0;
  for_each_tensor(ws.grads, [&sq](const std::string&, const Tensor<float>& g) {
    for (float x : g.data) sq += static_cast<double>(x) * x;
  });
  const double gnorm = std::sqrt(sq);
  if (!std::isfinite(gnorm)) {
    std::ostringstream os;
    os << "non-finite gradient at step " << step << " (batch seed " << noise_seed << ")";
    throw NumericError(os.str());
  }
  const double clip = config.grad_clip_norm > 0 && gnorm > config.grad_clip_norm ? config.grad_clip_norm / gnorm : 1.0;

  const double lr = learning_rate_at(config, step);
  const double t = static_cast<double>(step + 1);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  std::vector<Tensor<float>*> ms, vs, gs;
  for_each_tensor(opt.m, [&ms](const std::string&, Tensor<float>& x) { ms.push_back(&x); });
  for_each_tensor(opt.v, [&vs](const std::string&, Tensor<float>& x) { vs.push_back(&x); });
  for_each_tensor(ws.grads, [&gs](const std::string&, Tensor<float>& x) { gs.push_back(&x); });
  std::size_t ti = 0;
  const float b1 = static_cast<float>(config.beta1), b2 = static_cast<float>(config.beta2);
  for_each_tensor(params, [&](const std::string& name, Tensor<float>& p) {
    auto& m = ms[ti]->data;
    auto& v = vs[ti]->data;
    const auto& g = gs[ti]->data;
    ++ti;
    const double wd = decays(name, p) ? config.weight_decay : 0.0;
    for (std::size_t e = 0; e < p.data.size(); ++e) {
      const float ge = static_cast<float>(g[e] * clip);
      m[e] = b1 * m[e] + (1 - b1) * ge;
      v[e] = b2 * v[e] + (1 - b2) * ge * ge;
      const double mhat = m[e] / bc1;
      const double vhat = v[e] / bc2;
      const double update = mhat / (std::sqrt(vhat) + config.epsilon) + wd * p.data[e];
      p.data[e] = static_cast<float>(p.data[e] - lr * update);
    }
  });
  ++opt.step;

  StepMetrics out;
  out.step = opt.step;
  out.loss = loss.loss;
  out.slot_loss = loss.slot_loss;
  out.grad_norm = gnorm;
  out.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

TrainReport train(ModelParams<float>& params, OptimizerState& opt, std::span<const Sample> data,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate(params.config.k);
  auto ws = make_train_workspace(params.config);
  TrainReport report;
  while (opt.step < config.steps) {
    auto m = train_step(params, opt, data, config, ws);
    const bool last = opt.step == config.steps;
    if (hooks.heldout && hooks.eval_every > 0 && (opt.step % hooks.eval_every == 0 || last)) {
      m.heldout_nll = hooks.heldout(params);
      report.heldout_curve.emplace_back(opt.step, *m.heldout_nll);
    }
    if (hooks.on_step) hooks.on_step(m);
    if (hooks.checkpoint && hooks.checkpoint_every > 0 && opt.step % hooks.checkpoint_every == 0 && !last)
      hooks.checkpoint(params, opt);
    report.steps.push_back(std::move(m));
  }
  if (hooks.checkpoint) hooks.checkpoint(params, opt);
  return report;
}

// =============================================================== gradcheck

GradcheckConfig GradcheckConfig::tiny(int k) {
  GradcheckConfig g;
  g.model.vocab_size = 5;
  g.model.k = k;
  g.model.seq_len = 6;
  g.model.d_model = 16;
  g.model.n_layers = 2;
  g.model.n_heads = 2;
  g.model.q_depth = 1;
  g.model.num_classes = 2;
  g.model.mlp_ratio = 2;
  g.model.q_mlp_ratio = 1;
  g.model.seed = 3;
  g.schedule = NoiseSchedule{ScheduleKind::linear, k};
  return g;
}

namespace {

double loss_of(const ModelParams<double>& p, const TrainBatch& tb, std::span<const double> w, RowMat<double>* dl,
               Forward<double>& fwd) {
  const auto& r = fwd.run(p, tb.inputs);
  return masked_cross_entropy(r.logits, tb.targets, tb.mask, p.config.k, w, dl).loss;
}

}  // namespace

GradcheckResult gradcheck(const GradcheckConfig& config, const std::function<void(ModelParams<double>&)>& tamper) {
  const auto& mc = config.model;
  NXT_REQUIRE(config.samples >= 1 && config.step > 0 && config.batch >= 1, "invalid gradcheck settings");
  auto pf = init_params(mc);
  auto p = cast_params<double>(pf);
  // Spread every weight so no path is numerically silent, and open both gates.
  Rng rng(derive_seed(config.seed, 7));
  for_each_tensor(p, [&rng](const std::string& name, Tensor<double>& t) {
    const bool gain = name.ends_with("norm");
    for (auto& x : t.data) x = gain ? 1.0 + 0.2 * rng.normal() : 0.3 * rng.normal();
  });

  std::vector<Sample> samples;
  for (int b = 0; b < config.batch; ++b) {
    Sample s;
    s.class_label = b % mc.num_classes;
    for (int t = 0; t < mc.seq_len; ++t) s.tokens.push_back(static_cast<TokenId>(rng.uniform_int(mc.vocab_size)));
    samples.push_back(std::move(s));
  }
  const auto tb = make_train_batch(samples, mc.k, mc.vocab_size, config.schedule, derive_seed(config.seed, 8));
  const auto w = LossWeights::uniform(mc.k).w;

  Forward<double> fwd;
  RowMat<double> dlogits;
  loss_of(p, tb, w, &dlogits, fwd);
  auto grads = allocate_params<double>(mc);
  fwd.backward(p, dlogits, grads);
  if (tamper) tamper(grads);

  std::vector<std::pair<std::string, Tensor<double>*>> params, gtensors;
  for_each_tensor(p, [&params](const std::string& n, Tensor<double>& t) { params.emplace_back(n, &t); });
  for_each_tensor(grads, [&gtensors](const std::string& n, Tensor<double>& t) { gtensors.emplace_back(n, &t); });
  std::size_t total = 0;
  for (auto& [n, t] : params) total += t->size();

  // One draw inside every array first, then uniform over all scalars.
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  for (std::size_t a = 0; a < params.size() && static_cast<int>(picks.size()) < config.samples; ++a)
    picks.emplace_back(a, static_cast<std::size_t>(rng.uniform_int(params[a].second->size())));
  while (static_cast<int>(picks.size()) < config.samples) {
    std::size_t flat = static_cast<std::size_t>(rng.uniform_int(total));
    std::size_t a = 0;
    while (flat >= params[a].second->size()) flat -= params[a++].second->size();
    picks.emplace_back(a, flat);
  }

  GradcheckResult res;
  std::vector<bool> covered(params.size(), false);
  for (auto [a, e] : picks) {
    double& x = params[a].second->data[e];
    const double orig = x;
    x = orig + config.step;
    const double fp = loss_of(p, tb, w, nullptr, fwd);
    x = orig - config.step;
    const double fm = loss_of(p, tb, w, nullptr, fwd);
    x = orig;
    const double numeric = (fp - fm) / (2 * config.step);
    const double analytic = gtensors[a].second->data[e];
    const double rel =
        std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    if (rel >= res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst = params[a].first + "[" + std::to_string(e) + "]";
    }
    covered[a] = true;
    ++res.checked;
  }
  res.tensors_covered = static_cast<int>(std::count(covered.begin(), covered.end(), true));
  return res;
}

}  // namespace nxt
