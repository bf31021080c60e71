// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is nonzero when any criterion fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "a2q/a2q_op.hpp"
#include "a2q/accsim.hpp"
#include "a2q/bounds.hpp"
#include "a2q/dataio.hpp"
#include "a2q/experiments.hpp"
#include "a2q/trainkit.hpp"
#include "oracles/oracles.hpp"

using namespace a2q;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::optional<fs::path> mnist_dir() {
  if (const char* env = std::getenv("A2Q_MNIST_DIR"); env && *env) return fs::path(env);
  const fs::path fallback = A2Q_DEFAULT_MNIST_DIR;
  if (!fallback.empty() && fs::exists(fallback / "train-images-idx3-ubyte")) return fallback;
  return std::nullopt;
}

constexpr std::uint64_t kSeed = 1;
constexpr int kTargets[] = {10, 12, 14, 16, 19};
constexpr accsim::AccMode kModes[] = {accsim::AccMode::Exact, accsim::AccMode::Wraparound,
                                      accsim::AccMode::Saturate};

struct Shared {
  experiments::TaskData task;
  std::optional<train::Model> baseline;
  std::map<int, train::Model> a2q;  // by target P
};

// 1: the CLI reports 19 bits for 784 one-bit unsigned inputs and 8-bit weights.
Outcome bound_golden() {
  const auto t0 = Clock::now();
  const std::string cmd = std::string("'") + A2Q_CLI_PATH + "' bound --k 784 --input-bits 1 --weight-bits 8";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {false, "could not start the CLI"};
  std::string out;
  std::array<char, 256> buf{};
  while (fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = pclose(pipe);
  const double secs = seconds_since(t0);
  const bool found = out.find("min_bits=19 ") != std::string::npos;
  std::ostringstream d;
  d << "exit=" << status << " found_min_bits_19=" << found << " time=" << secs << "s";
  return {status == 0 && found && secs < 1.0, d.str()};
}

// 2: baseline QAT accuracy.
Outcome baseline_accuracy(Shared& s) {
  const auto t0 = Clock::now();
  const auto cfg = experiments::linear_config(s.task.train, std::nullopt);
  s.baseline = train::train(cfg, experiments::default_train_config(kSeed), s.task.train).model;
  const auto ev = train::evaluate(*s.baseline, s.task.test, std::nullopt, accsim::AccMode::Exact);
  const double need = s.task.synthetic ? 0.99 : 0.895;
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << (s.task.synthetic ? "synthetic" : "mnist") << " top1=" << ev.metrics.top1_accuracy << " need>=" << need
    << " time=" << secs << "s";
  return {ev.metrics.top1_accuracy >= need && secs < 300.0, d.str()};
}

// 3: A2Q checkpoints certify and never overflow at their own P.
Outcome overflow_guarantee(Shared& s) {
  const auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream d;
  for (int p : kTargets) {
    const auto cfg = experiments::linear_config(s.task.train, p);
    auto model = train::train(cfg, experiments::default_train_config(kSeed), s.task.train).model;
    const bool certified = experiments::all_fit(experiments::verify_model(model, p));
    std::uint64_t overflows = 0;
    bool identical = true;
    std::optional<RealMatrix> first;
    for (auto mode : kModes) {
      const auto ev = train::evaluate(model, s.task.test, p, mode);
      overflows += ev.report.overflow_events;
      if (!first) first = ev.logits;
      else identical = identical && ev.logits == *first;
    }
    ok = ok && certified && overflows == 0 && identical;
    d << "P=" << p << "(verify=" << certified << ",overflows=" << overflows << ",identical=" << identical
      << ") ";
    s.a2q.emplace(p, std::move(model));
  }
  const double secs = seconds_since(t0);
  d << "time=" << secs << "s";
  return {ok && secs < 120.0, d.str()};
}

// 4: accuracy ordering wherever wraparound overflows, and a falling overflow rate.
Outcome fig2_ordering(const Shared& s) {
  const auto t0 = Clock::now();
  experiments::Fig2Options opt;
  opt.train = experiments::default_train_config(kSeed);
  const auto r = experiments::run_fig2(s.task, opt);
  bool ok = true;
  int checked = 0;
  std::ostringstream d;
  double prev_rate = INFINITY;
  for (const auto& pt : r.points) {
    const double rate = pt.wraparound.sim.overflow_rate_per_mac();
    if (rate > prev_rate) {
      ok = false;
      d << "rate rises at P=" << pt.acc_bits << " ";
    }
    prev_rate = rate;
    if (pt.wraparound.sim.overflow_events == 0) continue;
    ++checked;
    const double a = pt.a2q.top1_accuracy, sat = pt.saturate.top1_accuracy, wrap = pt.wraparound.top1_accuracy;
    if (!(a >= sat && sat >= wrap)) {
      ok = false;
      d << "P=" << pt.acc_bits << " a2q=" << a << " sat=" << sat << " wrap=" << wrap << " ";
    }
  }
  const double secs = seconds_since(t0);
  d << "overflowing_points=" << checked << " time=" << secs << "s";
  return {ok && checked > 0 && secs < 900.0, d.str()};
}

// 5: exhaustive brute force over small instances.
Outcome certificate_soundness() {
  const auto t0 = Clock::now();
  std::uint64_t certified = 0, violations = 0;
  for (int k = 1; k <= 4; ++k) {
    for (int m = 1; m <= 3; ++m) {
      const std::int64_t wlo = -(std::int64_t{1} << (m - 1)), whi = (std::int64_t{1} << (m - 1)) - 1;
      const std::int64_t wn = whi - wlo + 1;
      std::int64_t wcount = 1;
      for (int i = 0; i < k; ++i) wcount *= wn;
      for (int n = 1; n <= 2; ++n) {
        for (bool sgn : {false, true}) {
          const quant::IntRange xr(n, sgn);
          const std::int64_t xn = xr.max() - xr.min() + 1;
          std::int64_t xcount = 1;
          for (int i = 0; i < k; ++i) xcount *= xn;
          std::vector<std::int64_t> w(k), x(k);
          for (std::int64_t wi = 0; wi < wcount; ++wi) {
            for (std::int64_t r = wi, i = 0; i < k; ++i, r /= wn) w[i] = wlo + r % wn;
            for (int p = 2; p <= 12; ++p) {
              if (!bounds::worst_case_fits(w, n, sgn, p)) continue;
              ++certified;
              for (std::int64_t xi = 0; xi < xcount; ++xi) {
                for (std::int64_t r = xi, i = 0; i < k; ++i, r /= xn) x[i] = xr.min() + r % xn;
                if (!oracle::prefix_sums_fit(x, w, p)) ++violations;
                if (accsim::dot_accumulate(x, w, p, accsim::AccMode::Wraparound).overflows != 0) ++violations;
              }
            }
          }
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "certified_cases=" << certified << " violations=" << violations << " time=" << secs << "s";
  return {violations == 0 && certified > 0 && secs < 60.0, d.str()};
}

// 6: the weight bound never exceeds the data-type bound.
Outcome bound_ordering() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(6);
  int bad = 0;
  const int samples = 10000;
  for (int i = 0; i < samples; ++i) {
    const auto k = std::uniform_int_distribution<std::int64_t>(1, 2048)(rng);
    const int n = std::uniform_int_distribution<int>(1, 16)(rng);
    const int m = std::uniform_int_distribution<int>(1, 16)(rng);
    const bool sgn = rng() & 1;
    const quant::IntRange wr(m, true);
    std::uniform_int_distribution<std::int64_t> wd(wr.min(), wr.max());
    std::vector<std::int64_t> w(static_cast<std::size_t>(k));
    const int style = i % 3;  // uniform, sparse, or saturated at the extreme code
    for (auto& v : w) {
      if (style == 0) v = wd(rng);
      else if (style == 1) v = (rng() % 8 == 0) ? wd(rng) : 0;
      else v = wr.min();
    }
    const auto wb = bounds::weight_bound(w, n, sgn);
    const auto db = bounds::datatype_bound({k, n, sgn, m});
    if (wb.min_bits > db.min_bits) ++bad;
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "samples=" << samples << " violations=" << bad << " time=" << secs << "s";
  return {bad == 0 && secs < 10.0, d.str()};
}

// 7: analytic gradients of the surrogate loss against central differences.
// A coordinate is smooth when the h and h/10 estimates agree; the others sit
// on a clip edge, a ReLU kink or the min in the norm cap.
Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  std::normal_distribution<double> jitter(0.0, 1.0);
  const int k = 12, classes = 3;
  const auto data = io::synth_dataset(k, 1, false, 24, classes, 5, 3);
  const RealMatrix X = train::to_real(data.inputs);
  std::uint64_t checked = 0, kinks = 0, failed = 0;
  std::array<std::uint64_t, 5> per_kind{};
  const int points = 100;
  for (int point = 0; point < points; ++point) {
    train::ModelConfig cfg;
    cfg.num_features = k;
    cfg.num_classes = classes;
    cfg.input_bits = 1;
    switch (point % 5) {
      case 0: break;
      case 1: cfg.acc_bits = 9; break;
      case 2: cfg.acc_bits = 7; cfg.init_cap = op::InitCap::Keep; break;
      case 3:
        cfg.architecture = train::Architecture::MLP;
        cfg.hidden_sizes = {6, 5};
        cfg.activation_bits = 4;
        cfg.acc_bits = 12;
        break;
      default:
        cfg.architecture = train::Architecture::MLP;
        cfg.hidden_sizes = {6};
        cfg.activation_bits = 4;
        cfg.activation_kind = train::ActivationKind::IdentitySigned;
        break;
    }
    auto m = train::make_model(cfg, 100 + point);
    train::forward(m, X, {false, true});
    for (auto& p : train::parameters(m)) *p.value = *p.value * (1.0 + 0.05 * jitter(rng)) + 0.01 * jitter(rng);
    const double lambda = 1e-2;
    const auto loss = [&] {
      return train::loss_and_backward(m, train::forward(std::as_const(m), X, true), data.labels, lambda).total;
    };
    const auto lg = train::loss_and_backward(m, train::forward(std::as_const(m), X, true), data.labels, lambda);
    const auto analytic = train::gradient_values(m, lg);
    auto params = train::parameters(m);
    for (std::size_t i = 0; i < params.size(); ++i) {
      double& x = *params[i].value;
      const double scale = std::max(1.0, std::fabs(x));
      const double fd_coarse = oracle::central_difference(loss, x, 1e-5 * scale);
      const double fd = oracle::central_difference(loss, x, 1e-6 * scale);
      const double tol = std::max(1e-6, 1e-3 * std::fabs(fd));
      if (std::fabs(fd - fd_coarse) > tol) {
        ++kinks;
        continue;
      }
      ++checked;
      ++per_kind[static_cast<std::size_t>(params[i].kind)];
      if (std::fabs(analytic[i] - fd) > tol) ++failed;
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "points=" << points << " checked=" << checked << " kinks_skipped=" << kinks << " failed=" << failed
    << " (w=" << per_kind[0] << " v=" << per_kind[1] << " t=" << per_kind[2] << " d=" << per_kind[3]
    << " b=" << per_kind[4] << ") time=" << secs << "s";
  bool all_kinds = true;
  for (auto c : per_kind) all_kinds = all_kinds && c > 0;
  return {failed == 0 && all_kinds && checked > 10 * kinks && secs < 60.0, d.str()};
}

// 8: truncation keeps s*|q|_1 <= 2^min(T, t); half-way rounding does not.
op::A2QLayerParams random_a2q(std::mt19937_64& rng, std::size_t c, std::size_t k) {
  std::uniform_int_distribution<int> bits(2, 8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  op::A2QLayerParams p;
  p.weight_bits = bits(rng);
  p.input_bits = bits(rng);
  p.input_signed = rng() & 1;
  p.acc_bits = std::uniform_int_distribution<int>(p.input_bits + 1, 24)(rng);
  p.v = RealMatrix(c, k);
  for (auto& x : p.v.data()) x = u(rng);
  p.d.assign(c, 0.0);
  p.t.assign(c, 0.0);
  const auto T0 = op::norm_cap(p).T;
  for (std::size_t i = 0; i < c; ++i) {
    p.d[i] = std::uniform_real_distribution<double>(-6.0, 2.0)(rng);
    p.t[i] = T0[i] + p.d[i] + std::uniform_real_distribution<double>(-4.0, 4.0)(rng);
  }
  return p;
}

bool cap_holds(const op::A2QForward& f, std::size_t i) {
  std::int64_t l1 = 0;
  const IntMatrix q = f.int_codes();
  for (auto c : q.row(i)) l1 += std::llabs(c);
  return oracle::from_double(f.s[i]) * oracle::Rational(l1) <= oracle::from_double(f.g[i]);
}

Outcome rounding_constraint() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(8);
  std::uint64_t channels = 0, above_cap = 0, bad = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    const auto k = std::uniform_int_distribution<std::size_t>(1, 32)(rng);
    const auto p = random_a2q(rng, 4, k);
    const auto T = op::norm_cap(p).T;
    const auto f = op::quantize_weights(p);
    for (std::size_t i = 0; i < 4; ++i) {
      ++channels;
      above_cap += p.t[i] > T[i];
      bad += !cap_holds(f, i);
    }
  }
  std::mt19937_64 rng2(88);
  int halfway_trials = 0, halfway_violations = 0;
  for (; halfway_trials < 10000 && halfway_violations == 0; ++halfway_trials) {
    const auto p = random_a2q(rng2, 1, std::uniform_int_distribution<std::size_t>(2, 16)(rng2));
    halfway_violations += !cap_holds(op::quantize_weights(p, {quant::Rounding::HalfWay, true}), 0);
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "trunc_channels=" << channels << " above_cap=" << above_cap << " trunc_violations=" << bad
    << " halfway_first_violation_trial=" << (halfway_violations ? halfway_trials : -1) << " time=" << secs << "s";
  return {bad == 0 && above_cap > 0 && halfway_violations > 0 && secs < 30.0, d.str()};
}

// 9: sparsity grows as the target accumulator shrinks.
Outcome sparsity_trend(const Shared& s) {
  const double s10 = train::sparsity(s.a2q.at(10));
  const double s16 = train::sparsity(s.a2q.at(16));
  const double s19 = train::sparsity(s.a2q.at(19));
  std::ostringstream d;
  d << "sparsity P=10:" << s10 << " P=16:" << s16 << " P=19:" << s19;
  return {s10 > s16 && s16 >= s19, d.str()};
}

// 10: accumulation-order study on the baseline.
Outcome associativity(const Shared& s) {
  const auto t0 = Clock::now();
  experiments::AssocOptions opt;
  opt.trials = 1000;
  opt.seed = kSeed;
  const auto r = experiments::run_associativity(*s.baseline, s.task.test, opt);
  double exact_var = -1.0, sat_var = -1.0;
  bool placement_differs = false;
  std::map<accsim::AccMode, double> inner_mae;
  for (const auto& row : r.rows) {
    if (row.placement == accsim::Placement::InnerLoop) {
      inner_mae[row.mode] = row.mae_mean;
      if (row.mode == accsim::AccMode::Exact) exact_var = row.mae_var + row.acc_var;
      if (row.mode == accsim::AccMode::Saturate) sat_var = row.mae_var;
    }
  }
  for (const auto& row : r.rows) {
    if (row.placement == accsim::Placement::OuterLoop && row.mae_mean != inner_mae[row.mode]) {
      placement_differs = true;
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "P=" << r.acc_bits << " (weight bound " << r.weight_min_bits << ") exact_var=" << exact_var
    << " saturate_mae_var=" << sat_var << " outer_differs=" << placement_differs << " time=" << secs << "s";
  const bool sub_bound = r.acc_bits < r.weight_min_bits;
  return {exact_var == 0.0 && sat_var > 0.0 && placement_differs && sub_bound && secs < 300.0, d.str()};
}

}  // namespace

int main() {
  Shared shared;
  const auto dir = mnist_dir();
  try {
    shared.task = experiments::load_task(dir, kSeed);
  } catch (const std::exception& e) {
    std::cerr << "could not load " << (dir ? dir->string() : "synthetic task") << ": " << e.what() << "\n";
    return 1;
  }
  std::cout << "task: " << (shared.task.synthetic ? "synthetic" : "mnist " + dir->string()) << " train="
            << shared.task.train.size() << " test=" << shared.task.test.size() << "\n";

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"bound golden value", bound_golden},
      {"baseline accuracy", [&] { return baseline_accuracy(shared); }},
      {"overflow-avoidance guarantee", [&] { return overflow_guarantee(shared); }},
      {"overflow sweep ordering", [&] { return fig2_ordering(shared); }},
      {"certificate soundness", certificate_soundness},
      {"bound ordering", bound_ordering},
      {"gradient correctness", gradient_correctness},
      {"truncation preserves the norm cap", rounding_constraint},
      {"sparsity trend", [&] { return sparsity_trend(shared); }},
      {"associativity study", [&] { return associativity(shared); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
