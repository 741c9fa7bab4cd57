// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "nexttensor/error.hpp"
#include "nexttensor/rng.hpp"
#include "nexttensor/tensorize.hpp"
#include "nexttensor/train.hpp"

using namespace nxt;

namespace {

// Scalar cross-entropy written out longhand.
double scalar_ce(std::span<const double> logits, int y) {
  double z = 0;
  for (double l : logits) z += std::exp(l);
  return -(logits[y] - std::log(z));
}

ModelConfig default_model(int k) {
  ModelConfig c;
  c.k = k;
  c.seed = 1;
  return c;
}

TrainConfig quick_train(int k, int steps) {
  TrainConfig t;
  t.steps = steps;
  t.warmup_steps = 20;
  t.batch_size = 8;
  t.seed = 4;
  t.schedule = NoiseSchedule{ScheduleKind::exponential, k};
  t.weights = LossWeights::uniform(k);
  return t;
}

}  // namespace

TEST(Loss, PerfectLogitsGiveZero) {
  RowMat<double> logits = RowMat<double>::Constant(4, 3, -1000.0);
  std::vector<TokenId> y{0, 2, 1, 1};
  for (int i = 0; i < 4; ++i) logits(i, y[i]) = 1000.0;
  std::vector<std::uint8_t> mask{1, 1, 1, 0};
  std::vector<double> w{1, 1};
  EXPECT_EQ(masked_cross_entropy(logits, y, mask, 2, w, nullptr).loss, 0.0);
}

TEST(Loss, UniformLogitsGiveLogV) {
  RowMat<float> logits = RowMat<float>::Zero(8, 16);
  std::vector<TokenId> y{0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 1, 0, 0};
  std::vector<double> w{1, 1};
  auto r = masked_cross_entropy(logits, y, mask, 2, w, nullptr);
  EXPECT_NEAR(r.loss, 2.7725887222397811, 1e-12);
  EXPECT_EQ(r.cells, 6);
  EXPECT_EQ(r.slot_cells, (std::vector<std::int64_t>{3, 3}));
}

TEST(Loss, MatchesScalarOracleOnSmallCase) {
  // T = 3, k = 2, V = 4.
  Rng rng(3);
  RowMat<double> logits(6, 4);
  for (auto& v : logits.reshaped()) v = rng.normal() * 2;
  std::vector<TokenId> y{1, 3, 0, 2, 2, 4};
  std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 0};
  std::vector<double> w{0.5, 2.0};
  double num = 0;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> row(logits.row(i).begin(), logits.row(i).end());
    num += w[i % 2] * scalar_ce(row, y[i]);
  }
  RowMat<double> d;
  auto r = masked_cross_entropy(logits, y, mask, 2, w, &d);
  EXPECT_NEAR(r.loss, num / 5, 1e-9);
  EXPECT_EQ(d.row(5).norm(), 0.0);
  // Finite-difference check of d loss / d logits.
  for (int i = 0; i < 5; ++i) {
    for (int v = 0; v < 4; ++v) {
      auto lp = logits, lm = logits;
      lp(i, v) += 1e-6;
      lm(i, v) -= 1e-6;
      const double fd = (masked_cross_entropy(lp, y, mask, 2, w, nullptr).loss -
                         masked_cross_entropy(lm, y, mask, 2, w, nullptr).loss) /
                        2e-6;
      EXPECT_NEAR(d(i, v), fd, 1e-7);
    }
  }
}

TEST(Loss, AllMaskedIsAnError) {
  RowMat<float> logits = RowMat<float>::Zero(2, 3);
  std::vector<TokenId> y{3, 3};
  std::vector<std::uint8_t> mask{0, 0};
  std::vector<double> w{1, 1};
  EXPECT_THROW(masked_cross_entropy(logits, y, mask, 2, w, nullptr), ParameterError);
}

TEST(Loss, MaskedCellsNeverReachGradients) {
  const auto g = GradcheckConfig::tiny(3);
  auto p = cast_params<double>(init_params(g.model));
  Rng rng(2);
  for (auto& x : p.q_out.gate.data) x = rng.normal() * 0.3;
  std::vector<Sample> samples{{0, {0, 1, 2, 3, 4, 0}}, {1, {4, 4, 3, 1, 0, 2}}};
  auto tb = make_train_batch(samples, 3, 5, g.schedule, 9);
  Forward<double> fwd;
  auto logits = fwd.run(p, tb.inputs).logits;
  std::vector<double> w{1, 1, 1};
  RowMat<double> d1, d2;
  auto r1 = masked_cross_entropy(logits, tb.targets, tb.mask, 3, w, &d1);
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    if (!tb.mask[i]) logits.row(i).setConstant(1e3 * (i % 7));
  auto r2 = masked_cross_entropy(logits, tb.targets, tb.mask, 3, w, &d2);
  EXPECT_EQ(r1.loss, r2.loss);
  auto g1 = allocate_params<double>(g.model), g2 = allocate_params<double>(g.model);
  fwd.backward(p, d1, g1);
  fwd.backward(p, d2, g2);
  std::vector<const Tensor<double>*> a;
  for_each_tensor(g1, [&a](const std::string&, const Tensor<double>& t) { a.push_back(&t); });
  std::size_t i = 0;
  for_each_tensor(g2, [&](const std::string& name, const Tensor<double>& t) {
    for (std::size_t e = 0; e < t.size(); ++e) ASSERT_LT(std::abs(t.data[e] - a[i]->data[e]), 1e-12) << name;
    ++i;
  });
}

TEST(Loss, SingleSlotNoiselessEqualsNextTokenLoss) {
  auto c = GradcheckConfig::tiny(1).model;
  auto p = cast_params<double>(init_params(c));
  std::vector<Sample> samples{{0, {0, 1, 2, 3, 4, 0}}, {1, {4, 4, 3, 1, 0, 2}}};
  auto tb = make_train_batch(samples, 1, 5, NoiseSchedule{ScheduleKind::linear, 1}, 1);
  Forward<double> fwd;
  const auto& r = fwd.run(p, tb.inputs);
  std::vector<double> w{1};
  const double loss = masked_cross_entropy(r.logits, tb.targets, tb.mask, 1, w, nullptr).loss;
  double ref = 0;
  for (int b = 0; b < 2; ++b)
    for (int t = 0; t < 6; ++t) {
      std::vector<double> row(r.logits.row(b * 6 + t).begin(), r.logits.row(b * 6 + t).end());
      ref += scalar_ce(row, samples[b].tokens[t]) / 12;
    }
  EXPECT_NEAR(loss, ref, 1e-9);
}

TEST(Gradcheck, TinyModelWindowTwo) {
  auto r = gradcheck(GradcheckConfig::tiny(2));
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
  EXPECT_EQ(r.checked, 200);
  EXPECT_GE(r.tensors_covered, 40);
}

TEST(Gradcheck, TinyModelWindowOne) {
  auto r = gradcheck(GradcheckConfig::tiny(1));
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}

TEST(Gradcheck, DetectsBrokenGradient) {
  auto r = gradcheck(GradcheckConfig::tiny(2), [](ModelParams<double>& g) {
    for (auto& x : g.q_in.layers[0].wv.data) x *= 1.5;
  });
  EXPECT_GT(r.max_rel_error, 1e-1);
  EXPECT_NE(r.worst.find("q_in.layers.0.wv"), std::string::npos);
}

TEST(Train, ZeroLearningRateLeavesParametersUntouched) {
  auto c = default_model(4);
  auto spec = make_spec(16, 8, 8, 4, 0);
  auto data = make_dataset(spec, 64, 1);
  auto p = init_params(c);
  const auto before = p;
  auto opt = make_optimizer_state(c);
  auto cfg = quick_train(4, 5);
  cfg.learning_rate = 0;
  train(p, opt, data, cfg);
  for_each_tensor(p, [&](const std::string& name, const Tensor<float>& t) {
    const Tensor<float>* orig = nullptr;
    for_each_tensor(before, [&](const std::string& n, const Tensor<float>& b) {
      if (n == name) orig = &b;
    });
    ASSERT_EQ(t.data, orig->data) << name;
  });
  EXPECT_EQ(opt.step, 5);
}

TEST(Train, StepsAreReproducible) {
  auto c = default_model(2);
  auto data = make_dataset(make_spec(16, 8, 8, 4, 0), 64, 1);
  auto cfg = quick_train(2, 3);
  auto run = [&] {
    auto p = init_params(c);
    auto opt = make_optimizer_state(c);
    train(p, opt, data, cfg);
    return p;
  };
  auto a = run(), b = run();
  EXPECT_EQ(a.head.data, b.head.data);
  EXPECT_EQ(a.q_out.gate.data, b.q_out.gate.data);
  EXPECT_EQ(a.blocks[0].wqkv.data, b.blocks[0].wqkv.data);
}

TEST(Train, LossFallsOnDefaultSpec) {
  auto c = default_model(4);
  auto data = make_dataset(make_spec(16, 8, 8, 4, 0), 2000, 1);
  auto p = init_params(c);
  auto opt = make_optimizer_state(c);
  auto cfg = quick_train(4, 200);
  cfg.batch_size = 16;
  cfg.warmup_steps = 50;
  auto report = train(p, opt, data, cfg);
  ASSERT_EQ(report.steps.size(), 200u);
  double first = report.steps.front().loss, last = 0, slot0_first = report.steps.front().slot_loss[0], slot0_last = 0;
  for (int i = 190; i < 200; ++i) {
    last += report.steps[i].loss / 10;
    slot0_last += report.steps[i].slot_loss[0] / 10;
  }
  EXPECT_LT(last, first);
  EXPECT_LT(slot0_last, slot0_first);
  for (const auto& m : report.steps) ASSERT_TRUE(std::isfinite(m.loss));
}

TEST(Train, NonFiniteLossNamesTheBatchSeed) {
  auto c = default_model(2);
  auto data = make_dataset(make_spec(16, 8, 8, 4, 0), 16, 1);
  auto p = init_params(c);
  p.head.data[0] = NAN;
  auto opt = make_optimizer_state(c);
  auto ws = make_train_workspace(c);
  try {
    train_step(p, opt, data, quick_train(2, 1), ws);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch seed"), std::string::npos);
  }
}

TEST(Train, WarmupIsLinearThenConstant) {
  TrainConfig t;
  t.learning_rate = 1e-3;
  t.warmup_steps = 4;
  EXPECT_DOUBLE_EQ(learning_rate_at(t, 0), 2.5e-4);
  EXPECT_DOUBLE_EQ(learning_rate_at(t, 3), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate_at(t, 100), 1e-3);
}

TEST(Train, MetricsLineLayout) {
  StepMetrics m;
  m.step = 12;
  m.loss = 1.5;
  m.slot_loss = {1.25, 1.75};
  m.ms = 3.5;
  EXPECT_EQ(format_metrics(m), "12\t1.5\t1.25,1.75\t\t3.5");
  m.heldout_nll = 2.0;
  EXPECT_EQ(format_metrics(m), "12\t1.5\t1.25,1.75\t2\t3.5");
}
