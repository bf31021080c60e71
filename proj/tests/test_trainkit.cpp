#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <variant>

#include "a2q/bounds.hpp"
#include "a2q/dataio.hpp"
#include "a2q/trainkit.hpp"
#include "oracles/oracles.hpp"

using namespace a2q;
using namespace a2q::train;

namespace {

ModelConfig linear(int k, int classes, std::optional<int> p = std::nullopt) {
  ModelConfig c;
  c.architecture = Architecture::Linear;
  c.num_features = k;
  c.num_classes = classes;
  c.input_bits = 1;
  c.acc_bits = p;
  return c;
}

ModelConfig mlp(int k, int classes, std::optional<int> p, ActivationKind kind) {
  ModelConfig c = linear(k, classes, p);
  c.architecture = Architecture::MLP;
  c.hidden_sizes = {6, 5};
  c.activation_bits = 4;
  c.activation_kind = kind;
  return c;
}

TrainConfig quick(int epochs = 3, std::uint64_t seed = 1) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 16;
  t.learning_rate = 0.05;
  t.seed = seed;
  return t;
}

Dataset synth(int k, int classes, std::size_t n, std::uint64_t seed = 3, int noise = 1) {
  return io::synth_dataset(k, 1, false, n, classes, seed, noise);
}

void calibrate(Model& m, const Dataset& d) {
  forward(m, to_real(d.inputs), {false, true});
}

}  // namespace

TEST(Forward, ZeroInputZeroBiasGivesZeroLogits) {
  for (const auto& cfg : {linear(10, 3), linear(10, 3, 12), mlp(10, 3, 14, ActivationKind::ReluUnsigned),
                          mlp(10, 3, std::nullopt, ActivationKind::IdentitySigned)}) {
    Model m = make_model(cfg, 5);
    calibrate(m, synth(10, 3, 32));
    const auto cache = forward(m, RealMatrix(4, 10));
    for (double v : cache.logits.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Forward, IntegerWeightsMatchAccumulatorSimulation) {
  Model m = make_model(linear(20, 4), 1);
  auto& b = std::get<BaselineWeights>(m.layers[0].weights);
  std::mt19937_64 rng(2);
  for (auto& w : b.w.data()) w = static_cast<double>(std::uniform_int_distribution<int>(-128, 127)(rng));
  for (auto& d : b.d) d = 0.0;
  const auto data = synth(20, 4, 50);
  const auto cache = forward(m, to_real(data.inputs));
  IntMatrix W(4, 20);
  for (std::size_t i = 0; i < W.size(); ++i) W.data()[i] = static_cast<std::int64_t>(b.w.data()[i]);
  const auto sim = accsim::matvec_accumulate(data.inputs, W, 32, accsim::AccMode::Exact);
  for (std::size_t i = 0; i < sim.y.size(); ++i) {
    EXPECT_EQ(cache.logits.data()[i], static_cast<double>(sim.y.data()[i]));
  }
}

TEST(Forward, ReluActivationsAreNonNegative) {
  Model m = make_model(mlp(16, 3, std::nullopt, ActivationKind::ReluUnsigned), 9);
  const auto data = synth(16, 3, 64);
  calibrate(m, data);
  const auto cache = forward(m, to_real(data.inputs));
  for (std::size_t l = 1; l < cache.inputs.size(); ++l) {
    for (double v : cache.inputs[l].data()) EXPECT_GE(v, 0.0);
  }
}

TEST(Forward, UncalibratedActivationsRejected) {
  const Model m = make_model(mlp(8, 2, std::nullopt, ActivationKind::ReluUnsigned), 1);
  EXPECT_THROW(forward(m, RealMatrix(1, 8)), std::logic_error);
  EXPECT_THROW(forward(m, RealMatrix(1, 9)), std::invalid_argument);
}

TEST(Loss, UniformLogitsGiveLogTwo) {
  const RealMatrix logits(3, 2, 0.7);
  const std::vector<int> labels{0, 1, 1};
  EXPECT_NEAR(softmax_cross_entropy(logits, labels), std::numbers::ln2, 1e-15);
}

TEST(Loss, InactiveRegularizerLeavesTaskLoss) {
  const auto data = synth(12, 2, 40);
  const Model m = make_model(linear(12, 2, 16), 1);
  const auto a2q = a2q_layers(m);
  ASSERT_EQ(op::regularization_penalty(a2q), 0.0);
  const auto cache = forward(m, to_real(data.inputs));
  const auto lg = loss_and_backward(m, cache, data.labels, 0.0);
  EXPECT_EQ(lg.total, lg.task);
  const auto lg2 = loss_and_backward(m, cache, data.labels, 1e-3);
  EXPECT_EQ(lg2.total, lg2.task);
}

TEST(Loss, PenaltyEntersTotal) {
  ModelConfig cfg = linear(30, 2, 6);
  cfg.init_cap = op::InitCap::Keep;
  const Model m = make_model(cfg, 1);
  const auto data = synth(30, 2, 20);
  const auto lg = loss_and_backward(m, forward(m, to_real(data.inputs)), data.labels, 0.5);
  EXPECT_GT(lg.reg, 0.0);
  EXPECT_NEAR(lg.total, lg.task + 0.5 * lg.reg, 1e-12);
}

namespace {

// Central differences of the surrogate loss against the analytic gradient.
// A parameter is skipped when two step sizes disagree, which only happens
// next to a clip edge, a ReLU kink or the min in the norm cap.
struct GradCheck {
  int checked = 0;
  int skipped = 0;
  int failed = 0;
};

GradCheck check_gradients(Model m, const Dataset& data, double lambda, std::mt19937_64& rng) {
  std::normal_distribution<double> jitter(0.0, 1.0);
  calibrate(m, data);
  // additive term moves zero biases off the ReLU kink
  for (auto& p : parameters(m)) *p.value = *p.value * (1.0 + 0.05 * jitter(rng)) + 0.01 * jitter(rng);

  const RealMatrix X = to_real(data.inputs);
  const auto loss = [&] {
    const auto cache = forward(std::as_const(m), X, true);
    return loss_and_backward(m, cache, data.labels, lambda).total;
  };
  const auto lg = loss_and_backward(m, forward(std::as_const(m), X, true), data.labels, lambda);
  const auto analytic = gradient_values(m, lg);
  auto params = parameters(m);
  EXPECT_EQ(analytic.size(), params.size());

  GradCheck r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& x = *params[i].value;
    const double scale = std::max(1.0, std::fabs(x));
    const double fd_coarse = oracle::central_difference(loss, x, 1e-5 * scale);
    const double fd = oracle::central_difference(loss, x, 1e-6 * scale);
    const double tol = std::max(1e-6, 1e-3 * std::fabs(fd));
    if (std::fabs(fd - fd_coarse) > tol) {
      ++r.skipped;
      continue;
    }
    ++r.checked;
    if (std::fabs(analytic[i] - fd) > tol) {
      ++r.failed;
      ADD_FAILURE() << "parameter " << i << " kind " << static_cast<int>(params[i].kind) << " layer "
                    << params[i].layer << ": analytic " << analytic[i] << " fd " << fd;
    }
  }
  return r;
}

}  // namespace

TEST(Gradients, MatchFiniteDifferencesOfSurrogate) {
  std::mt19937_64 rng(77);
  const auto data = synth(12, 3, 24, 5, 3);
  std::vector<ModelConfig> configs{
      linear(12, 3), linear(12, 3, 9), linear(12, 3, 16),
      mlp(12, 3, std::nullopt, ActivationKind::ReluUnsigned),
      mlp(12, 3, 12, ActivationKind::ReluUnsigned),
      mlp(12, 3, 12, ActivationKind::IdentitySigned)};
  ModelConfig keep = linear(12, 3, 7);
  keep.init_cap = op::InitCap::Keep;  // t above the cap, penalty active
  configs.push_back(keep);
  int total_checked = 0, total_skipped = 0;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    for (int point = 0; point < 3; ++point) {
      const auto r = check_gradients(make_model(configs[c], 10 + point), data, 1e-2, rng);
      total_checked += r.checked;
      total_skipped += r.skipped;
      EXPECT_EQ(r.failed, 0) << "config " << c;
    }
  }
  EXPECT_GT(total_checked, 10 * total_skipped);
}

TEST(Training, DeterministicHistories) {
  const auto data = synth(20, 3, 120);
  for (const auto& cfg : {linear(20, 3), linear(20, 3, 10), mlp(20, 3, 12, ActivationKind::ReluUnsigned)}) {
    const auto a = train::train(cfg, quick(), data);
    const auto b = train::train(cfg, quick(), data);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
      EXPECT_EQ(a.history[i].top1_accuracy, b.history[i].top1_accuracy);
      EXPECT_EQ(a.history[i].task_loss, b.history[i].task_loss);
      EXPECT_EQ(a.history[i].reg_loss, b.history[i].reg_loss);
      EXPECT_EQ(a.history[i].sparsity, b.history[i].sparsity);
    }
    EXPECT_EQ(std::get_if<BaselineWeights>(&a.model.layers[0].weights) != nullptr, !cfg.is_a2q());
  }
}

TEST(Training, SeparableTaskIsLearned) {
  const auto train_set = synth(128, 2, 400, 11, 1);
  const auto test_set = io::synth_dataset(128, 1, false, 200, 2, 11, 1, Split::Test);
  const auto r = train::train(linear(128, 2), quick(5), train_set, &test_set);
  EXPECT_GE(r.history.back().top1_accuracy, 0.95);
}

TEST(Training, GuaranteeHoldsAfterEveryStep) {
  const auto data = synth(40, 3, 96, 4, 2);
  for (const auto cap : {op::InitCap::Keep, op::InitCap::RaiseScale}) {
    for (const auto& base : {linear(40, 3, 8), mlp(40, 3, 10, ActivationKind::ReluUnsigned)}) {
      ModelConfig cfg = base;
      cfg.init_cap = cap;
      TrainConfig tc = quick(2);
      tc.lambda = 0.0;
      int steps = 0;
      const auto after = [&](const Model& m) {
        ++steps;
        for (const auto& layer : m.layers) {
          const auto* p = std::get_if<op::A2QLayerParams>(&layer.weights);
          if (!p) continue;
          const auto q = quantize_layer(layer).int_codes();
          for (std::size_t c = 0; c < q.rows(); ++c) {
            ASSERT_TRUE(bounds::worst_case_fits(q.row(c), p->input_bits, p->input_signed, p->acc_bits));
          }
        }
      };
      train::train(make_model(cfg, 1), tc, data, nullptr, {}, after);
      EXPECT_EQ(steps, 12);
    }
  }
}

TEST(Training, FakeAndIntegerInferenceAgree) {
  const auto data = synth(24, 3, 150, 8, 2);
  for (const auto& cfg : {linear(24, 3), linear(24, 3, 11), mlp(24, 3, 12, ActivationKind::ReluUnsigned),
                          mlp(24, 3, std::nullopt, ActivationKind::IdentitySigned)}) {
    const auto r = train::train(cfg, quick(2), data);
    const auto fake = forward(r.model, to_real(data.inputs));
    const auto exact = integer_forward(r.model, data.inputs, 32, accsim::AccMode::Exact);
    EXPECT_EQ(fake.logits, exact.logits);
    const auto ev = evaluate(r.model, data, std::nullopt, accsim::AccMode::Exact);
    EXPECT_EQ(ev.metrics.top1_accuracy, accuracy(fake.logits, data.labels));
    EXPECT_EQ(ev.report.logit_mae, 0.0);
  }
}

TEST(Training, A2QModelNeverOverflowsAtTarget) {
  const auto data = synth(48, 2, 120, 6, 2);
  const auto r = train::train(linear(48, 2, 9), quick(3), data);
  for (auto mode : {accsim::AccMode::Exact, accsim::AccMode::Wraparound, accsim::AccMode::Saturate}) {
    const auto ev = evaluate(r.model, data, 9, mode);
    EXPECT_EQ(ev.report.overflow_events, 0u);
    EXPECT_EQ(ev.report.logit_mae, 0.0);
  }
}

TEST(Training, LargerLambdaNeverRaisesPenalty) {
  const auto data = synth(40, 2, 100, 2, 2);
  ModelConfig cfg = linear(40, 2, 8);
  cfg.init_cap = op::InitCap::Keep;
  double prev = INFINITY;
  for (double lambda : {1e-4, 1e-3, 1e-2}) {
    TrainConfig tc = quick(4);
    tc.lambda = lambda;
    const auto r = train::train(cfg, tc, data);
    const double reg = r.history.back().reg_loss;
    EXPECT_LE(reg, prev) << lambda;
    prev = reg;
  }
}

TEST(Training, DivergenceIsReported) {
  const auto data = synth(16, 2, 64);
  TrainConfig tc = quick(3);
  tc.learning_rate = 1e300;
  EXPECT_THROW(train::train(linear(16, 2), tc, data), TrainingDiverged);
}

TEST(Training, RejectsBadInput) {
  const auto data = synth(16, 2, 64);
  EXPECT_THROW(train::train(linear(17, 2), quick(), data), std::invalid_argument);
  TrainConfig tc = quick();
  tc.batch_size = 0;
  EXPECT_THROW(train::train(linear(16, 2), tc, data), std::invalid_argument);
  ModelConfig bad = linear(16, 2, 1);
  EXPECT_THROW(make_model(bad, 0), std::invalid_argument);
}

TEST(Sparsity, Examples) {
  Model m = make_model(linear(5, 2), 1);
  auto& b = std::get<BaselineWeights>(m.layers[0].weights);
  for (auto& d : b.d) d = 0.0;
  for (auto& w : b.w.data()) w = 0.0;
  EXPECT_EQ(sparsity(m), 1.0);
  for (auto& w : b.w.data()) w = 3.0;
  EXPECT_EQ(sparsity(m), 0.0);
  b.w(0, 0) = b.w(1, 2) = b.w(1, 4) = 0.0;
  EXPECT_DOUBLE_EQ(sparsity(m), 0.3);
}

TEST(Sparsity, PinnedLayersExcluded) {
  ModelConfig cfg = mlp(8, 2, 12, ActivationKind::ReluUnsigned);
  cfg.pin_io_layers = true;
  const auto specs = layer_specs(cfg);
  ASSERT_EQ(specs.size(), 3u);
  EXPECT_TRUE(specs[0].pinned);
  EXPECT_FALSE(specs[1].pinned);
  EXPECT_TRUE(specs[2].pinned);
  EXPECT_EQ(specs[0].weight_bits, 8);
  EXPECT_FALSE(specs[0].acc_bits.has_value());
  EXPECT_EQ(specs[1].acc_bits, 12);

  Model m = make_model(cfg, 2);
  auto& first = std::get<BaselineWeights>(m.layers[0].weights);
  for (auto& w : first.w.data()) w = 0.0;
  auto& mid = std::get<op::A2QLayerParams>(m.layers[1].weights);
  for (auto& t : mid.t) t = -60.0;  // every code truncates to zero
  EXPECT_EQ(sparsity(m), 1.0);
}

TEST(Schedule, StepDecay) {
  LrSchedule s;
  EXPECT_EQ(s.rate(0.1, 7), 0.1);
  s.kind = LrSchedule::Kind::StepDecay;
  s.factor = 0.5;
  s.period = 2;
  EXPECT_EQ(s.rate(0.1, 0), 0.1);
  EXPECT_EQ(s.rate(0.1, 1), 0.1);
  EXPECT_EQ(s.rate(0.1, 2), 0.05);
  EXPECT_EQ(s.rate(0.1, 5), 0.025);
}

TEST(ActQuant, PowerOfTwoScaleFromRunningMax) {
  ActQuant a;
  a.bits = 4;
  a.observe(3.0);
  ASSERT_TRUE(a.calibrated);
  // 3 / 15 = 0.2 -> 2^-2
  EXPECT_EQ(a.scale(), 0.25);
  EXPECT_GE(a.scale() * a.range().max(), a.running_max);
}
