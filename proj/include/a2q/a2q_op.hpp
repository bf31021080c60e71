#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "a2q/quantcore.hpp"
#include "a2q/tensor.hpp"

// Accumulator-aware weight quantizer.
//
// Each output channel i is parameterized by a direction v_i, a log2 norm t_i
// and a log2 scale d_i:
//
//   w_i = clip(trunc((g_i / s_i) * v_i / |v_i|_1); n, p) * s_i
//   s_i = 2^d_i,  g_i = 2^min(T_i, t_i)
//   T_i = signed(x) + log2(2^(P-1) - 1) + d_i - N
//
// Truncation never rounds a magnitude up, so |q_i|_1 <= g_i / s_i and the
// worst-case partial sum of a dot product with N-bit inputs fits a P-bit
// signed accumulator for every parameter value, not just converged ones.
namespace a2q::op {

inline constexpr double kTrainingEpsilon = 1e-10;

struct A2QLayerParams {
  RealMatrix v;           // [C x K] direction parameters
  std::vector<double> t;  // [C] log2 of the per-channel l1 norm
  std::vector<double> d;  // [C] log2 of the per-channel scale
  int weight_bits = 8;    // M
  int acc_bits = 32;      // P
  int input_bits = 8;     // N
  bool input_signed = false;

  std::size_t channels() const { return v.rows(); }
  std::size_t fan_in() const { return v.cols(); }

  // Throws std::invalid_argument on inconsistent sizes, P < 2 or bit widths
  // outside the supported ranges.
  void validate() const;
};

struct NormCap {
  std::vector<double> T;
};

NormCap norm_cap(const A2QLayerParams& params);

struct QuantizeOptions {
  quant::Rounding rounding = quant::Rounding::TowardZero;
  // Training adds kTrainingEpsilon to |v_i|_1. Inference uses the exact norm
  // and rejects an all-zero direction.
  bool training = true;
};

// Forward state, kept for the backward pass.
struct A2QForward {
  RealMatrix codes;   // integral unless rounding is None
  RealMatrix w_fake;  // codes * s, row-wise
  std::vector<double> g, s, T, l1;
  std::vector<std::uint8_t> in_range;  // [C x K] clipped-STE mask
  std::vector<std::uint8_t> t_active;  // min(T, t) picked t (ties go to t)

  IntMatrix int_codes() const;
};

A2QForward quantize_weights(const A2QLayerParams& params, const QuantizeOptions& options = {});

struct A2QGrads {
  RealMatrix dv;
  std::vector<double> dt, dd;
};

// Chain rule through the straight-through surrogate of quantize_weights given
// dL/dw_fake.
A2QGrads a2q_backward(const RealMatrix& upstream, const A2QLayerParams& params,
                      const A2QForward& fwd);

// L_reg = sum over layers and channels of max(t_i - T_i, 0).
double regularization_penalty(std::span<const A2QLayerParams> layers);

// Adds scale * dL_reg/d{t,d} for one layer into grads.
void accumulate_penalty_gradient(const A2QLayerParams& params, double scale, A2QGrads& grads);

// What init_from_weights does with a channel whose norm starts above its cap.
enum class InitCap {
  Keep,        // leave t > T; the penalty pulls it back during training
  ClampNorm,   // t = min(t, T)
  RaiseScale,  // d += t - T, keeping the norm of W
};

// Parameters whose fake-quantized weights approximate W:
//   v = W, t = log2 max(|W_i|_1, eps), d = log2(max|W_i| / (2^(M-1) - 1)),
// then adjusted per `cap`.
A2QLayerParams init_from_weights(const RealMatrix& W, int weight_bits, int acc_bits,
                                 int input_bits, bool input_signed,
                                 InitCap cap = InitCap::RaiseScale);

}  // namespace a2q::op
