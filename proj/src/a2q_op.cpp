#include "a2q/a2q_op.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace a2q::op {

namespace {

constexpr double kLn2 = std::numbers::ln2;

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

// Largest integer code budget Q with Q * s <= g and 2^(N - signed) * Q <=
// 2^(P-1) - 1. Both comparisons are exact: fma rounds once, so the sign of
// Q*s - g survives.
std::int64_t code_budget(double g, double s, const A2QLayerParams& p) {
  const int shift = p.input_bits - (p.input_signed ? 1 : 0);
  const std::int64_t reg_max =
      p.acc_bits >= 64 ? INT64_MAX : (std::int64_t{1} << (p.acc_bits - 1)) - 1;
  const std::int64_t int_budget = shift >= 63 ? 0 : (reg_max >> shift);
  const double ratio = std::floor(g / s) + 1.0;
  std::int64_t q = ratio >= 9.0e18 ? int_budget
                                   : std::min<std::int64_t>(int_budget, static_cast<std::int64_t>(ratio));
  while (q > 0 && std::fma(static_cast<double>(q), s, -g) > 0.0) --q;
  return std::max<std::int64_t>(q, 0);
}

// Floating-point guard: shrinks the largest codes toward zero until the row's
// l1 norm fits the budget. Truncation already guarantees this in exact
// arithmetic; this only catches last-ulp rounding in g/s.
void trim_row(std::span<double> codes, std::int64_t budget) {
  double l1 = 0.0;
  for (double c : codes) l1 += std::fabs(c);
  while (l1 > static_cast<double>(budget)) {
    auto it = std::max_element(codes.begin(), codes.end(),
                               [](double a, double b) { return std::fabs(a) < std::fabs(b); });
    *it -= sign_of(*it);
    l1 -= 1.0;
  }
}

}  // namespace

void A2QLayerParams::validate() const {
  const std::size_t c = v.rows();
  if (c == 0 || v.cols() == 0) throw std::invalid_argument("A2QLayerParams: empty weight matrix");
  if (t.size() != c || d.size() != c) {
    throw std::invalid_argument("A2QLayerParams: t and d need one entry per output channel");
  }
  if (weight_bits < 1 || weight_bits > 32) {
    throw std::invalid_argument("A2QLayerParams: weight bits outside [1, 32]");
  }
  if (input_bits < 1 || input_bits > 32) {
    throw std::invalid_argument("A2QLayerParams: input bits outside [1, 32]");
  }
  if (acc_bits < 2 || acc_bits > 64) {
    throw std::invalid_argument("A2QLayerParams: accumulator width " + std::to_string(acc_bits) +
                                " outside [2, 64]; a 1-bit accumulator only admits zero weights");
  }
}

NormCap norm_cap(const A2QLayerParams& params) {
  params.validate();
  const double log_reg = std::log2(std::exp2(params.acc_bits - 1) - 1.0);
  const double offset = (params.input_signed ? 1.0 : 0.0) + log_reg - params.input_bits;
  NormCap cap;
  cap.T.resize(params.channels());
  for (std::size_t i = 0; i < params.channels(); ++i) cap.T[i] = offset + params.d[i];
  return cap;
}

IntMatrix A2QForward::int_codes() const {
  IntMatrix out(codes.rows(), codes.cols());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const double c = codes.data()[i];
    if (c != std::trunc(c)) throw std::logic_error("A2QForward::int_codes: non-integral code");
    out.data()[i] = static_cast<std::int64_t>(c);
  }
  return out;
}

A2QForward quantize_weights(const A2QLayerParams& params, const QuantizeOptions& options) {
  params.validate();
  const std::size_t C = params.channels();
  const std::size_t K = params.fan_in();
  const double lo = -std::exp2(params.weight_bits - 1);
  const double hi = std::exp2(params.weight_bits - 1) - 1.0;
  const bool integral = options.rounding != quant::Rounding::None;

  A2QForward f;
  f.codes = RealMatrix(C, K);
  f.w_fake = RealMatrix(C, K);
  f.g.resize(C);
  f.s.resize(C);
  f.l1.resize(C);
  f.in_range.assign(C * K, 0);
  f.t_active.assign(C, 0);
  f.T = norm_cap(params).T;

  for (std::size_t i = 0; i < C; ++i) {
    const auto v = params.v.row(i);
    double l1 = 0.0;
    for (double x : v) l1 += std::fabs(x);
    if (!options.training && l1 == 0.0) {
      throw std::domain_error("quantize_weights: channel " + std::to_string(i) +
                              " has an all-zero direction vector");
    }
    if (options.training) l1 += kTrainingEpsilon;
    f.l1[i] = l1;
    f.t_active[i] = params.t[i] <= f.T[i];
    const double m = f.t_active[i] ? params.t[i] : f.T[i];
    f.g[i] = std::exp2(m);
    f.s[i] = std::exp2(params.d[i]);
  }

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(C); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto v = params.v.row(i);
    auto codes = f.codes.row(i);
    const double ratio = f.g[i] / f.s[i];
    for (std::size_t j = 0; j < K; ++j) {
      const double z = ratio * (v[j] / f.l1[i]);
      double r = z;
      if (options.rounding == quant::Rounding::TowardZero) {
        r = std::trunc(z);
      } else if (options.rounding == quant::Rounding::HalfWay) {
        r = static_cast<double>(quant::round_value(z, quant::Rounding::HalfWay));
      }
      f.in_range[i * K + j] = r >= lo && r <= hi;
      codes[j] = std::clamp(r, lo, hi);
    }
    if (integral && options.rounding == quant::Rounding::TowardZero) {
      trim_row(codes, code_budget(f.g[i], f.s[i], params));
    }
    auto w = f.w_fake.row(i);
    for (std::size_t j = 0; j < K; ++j) w[j] = codes[j] * f.s[i];
  }
  return f;
}

A2QGrads a2q_backward(const RealMatrix& upstream, const A2QLayerParams& params,
                      const A2QForward& fwd) {
  const std::size_t C = params.channels();
  const std::size_t K = params.fan_in();
  if (upstream.rows() != C || upstream.cols() != K) {
    throw std::invalid_argument("a2q_backward: upstream gradient shape mismatch");
  }
  A2QGrads grads{RealMatrix(C, K), std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(C); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto v = params.v.row(i);
    const auto G = upstream.row(i);
    const auto w = fwd.w_fake.row(i);
    const double n = fwd.l1[i];
    const double g = fwd.g[i];

    double d_log_norm = 0.0;  // dL/d min(T, t)
    double d_scale = 0.0;
    double du_dot_v = 0.0;
    std::vector<double> du(K, 0.0);
    for (std::size_t j = 0; j < K; ++j) {
      if (fwd.in_range[i * K + j]) {
        // surrogate w_j = g * u_j
        const double u = v[j] / n;
        d_log_norm += G[j] * u * g * kLn2;
        du[j] = G[j] * g;
        du_dot_v += du[j] * v[j];
      } else {
        // clipped w_j = s * bound
        d_scale += G[j] * w[j] * kLn2;
      }
    }
    if (fwd.t_active[i]) {
      grads.dt[i] = d_log_norm;
    } else {
      d_scale += d_log_norm;  // dT/dd = 1
    }
    grads.dd[i] = d_scale;

    auto dv = grads.dv.row(i);
    const double inv_n2 = 1.0 / (n * n);
    for (std::size_t j = 0; j < K; ++j) {
      dv[j] = du[j] / n - sign_of(v[j]) * du_dot_v * inv_n2;
    }
  }
  return grads;
}

double regularization_penalty(std::span<const A2QLayerParams> layers) {
  double total = 0.0;
  for (const auto& layer : layers) {
    const auto cap = norm_cap(layer);
    for (std::size_t i = 0; i < layer.channels(); ++i) {
      total += std::max(layer.t[i] - cap.T[i], 0.0);
    }
  }
  return total;
}

void accumulate_penalty_gradient(const A2QLayerParams& params, double scale, A2QGrads& grads) {
  const auto cap = norm_cap(params);
  for (std::size_t i = 0; i < params.channels(); ++i) {
    if (params.t[i] > cap.T[i]) {
      grads.dt[i] += scale;
      grads.dd[i] -= scale;
    }
  }
}

A2QLayerParams init_from_weights(const RealMatrix& W, int weight_bits, int acc_bits,
                                 int input_bits, bool input_signed, InitCap init_cap) {
  constexpr double kEps = 1e-8;
  A2QLayerParams p;
  p.v = W;
  p.weight_bits = weight_bits;
  p.acc_bits = acc_bits;
  p.input_bits = input_bits;
  p.input_signed = input_signed;
  p.t.resize(W.rows());
  p.d.resize(W.rows());
  const double qmax = std::exp2(weight_bits - 1) - 1.0;
  for (std::size_t i = 0; i < W.rows(); ++i) {
    double l1 = 0.0;
    double mx = 0.0;
    for (double x : W.row(i)) {
      l1 += std::fabs(x);
      mx = std::max(mx, std::fabs(x));
    }
    p.t[i] = std::log2(std::max(l1, kEps));
    p.d[i] = std::log2(std::max(mx, kEps) / std::max(qmax, 1.0));
  }
  if (init_cap != InitCap::Keep) {
    const auto cap = norm_cap(p);
    for (std::size_t i = 0; i < W.rows(); ++i) {
      if (p.t[i] <= cap.T[i]) continue;
      if (init_cap == InitCap::ClampNorm) {
        p.t[i] = cap.T[i];
      } else {
        p.d[i] += p.t[i] - cap.T[i];
      }
    }
  }
  return p;
}

}  // namespace a2q::op
