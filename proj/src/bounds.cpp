#include "a2q/bounds.hpp"

#include <bit>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace a2q::bounds {

namespace {

using u128 = unsigned __int128;

constexpr int kMaxAccBits = 64;
constexpr u128 kSaturated = ~u128{0} >> 1;

int bit_length(u128 x) {
  const auto hi = static_cast<std::uint64_t>(x >> 64);
  if (hi != 0) return 64 + std::bit_width(hi);
  return std::bit_width(static_cast<std::uint64_t>(x));
}

u128 shift_saturating(u128 x, int shift) {
  if (x == 0) return 0;
  if (bit_length(x) + shift > 127) return kSaturated;
  return x << shift;
}

// Smallest P with x <= 2^(P-1) - 1.
int min_bits_for(u128 magnitude) { return bit_length(magnitude) + 1; }

// log2(1 + 2^-a) + a + 1, i.e. log2(2^a + 1) + 1 written as the sum of the
// exponent and its correction term.
double bound_from_log(double alpha) { return alpha + std::log2(1.0 + std::exp2(-alpha)) + 1.0; }

// The real bound equals an integer only when 2^alpha + 1 is a power of two;
// rounding in the log terms can push it a hair above, so snap it back.
double snap(double real_bound, int min_bits) {
  if (std::ceil(real_bound) > min_bits &&
      std::fabs(real_bound - min_bits) < 1e-9 * std::max(1.0, real_bound)) {
    return static_cast<double>(min_bits);
  }
  return real_bound;
}

int input_shift(int input_bits, bool input_signed) {
  if (input_bits < 1 || input_bits > 62) {
    throw std::invalid_argument("input bit width " + std::to_string(input_bits) +
                                " outside [1, 62]");
  }
  return input_bits - (input_signed ? 1 : 0);
}

}  // namespace

const char* to_string(BoundSource s) {
  return s == BoundSource::DataType ? "datatype" : "weight";
}

void DotShape::validate() const {
  if (k < 1) throw std::invalid_argument("DotShape: k must be >= 1");
  if (input_bits < 1 || input_bits > 62) throw std::invalid_argument("DotShape: bad input_bits");
  if (weight_bits < 1 || weight_bits > 62) throw std::invalid_argument("DotShape: bad weight_bits");
}

AccBoundResult datatype_bound(const DotShape& shape) {
  shape.validate();
  const int s = shape.input_signed ? 1 : 0;
  const double alpha = std::log2(static_cast<double>(shape.k)) + shape.input_bits +
                       shape.weight_bits - 1 - s;
  // K * 2^(N + M - 1 - signed), the worst-case sum of product magnitudes
  const int shift = shape.input_bits + shape.weight_bits - 1 - s;
  const u128 worst = shift_saturating(static_cast<u128>(shape.k), shift);
  if (worst == kSaturated) throw std::overflow_error("datatype_bound: shape too large");
  AccBoundResult r;
  r.source = BoundSource::DataType;
  r.min_bits = min_bits_for(worst);
  r.real_bound = snap(bound_from_log(alpha), r.min_bits);
  return r;
}

unsigned __int128 worst_case_magnitude(std::span<const std::int64_t> q_weights, int input_bits,
                                       bool input_signed) {
  const int shift = input_shift(input_bits, input_signed);
  u128 l1 = 0;
  for (auto w : q_weights) {
    // |INT64_MIN| is representable in 128 bits
    l1 += w < 0 ? static_cast<u128>(-static_cast<__int128>(w)) : static_cast<u128>(w);
  }
  return shift_saturating(l1, shift);
}

AccBoundResult weight_bound(std::span<const std::int64_t> q_weights, int input_bits,
                            bool input_signed) {
  const u128 worst = worst_case_magnitude(q_weights, input_bits, input_signed);
  AccBoundResult r;
  r.source = BoundSource::Weight;
  if (worst == 0) {
    r.degenerate = true;
    r.min_bits = 1;
    r.real_bound = 1.0;
    return r;
  }
  if (worst == kSaturated) throw std::overflow_error("weight_bound: l1 norm too large");
  double l1 = 0.0;
  for (auto w : q_weights) l1 += std::fabs(static_cast<double>(w));
  const double beta = std::log2(l1) + input_bits - (input_signed ? 1 : 0);
  r.min_bits = min_bits_for(worst);
  r.real_bound = snap(bound_from_log(beta), r.min_bits);
  return r;
}

LayerBound layer_weight_bound(const IntMatrix& q_weights, int input_bits, bool input_signed) {
  LayerBound out;
  out.channels.reserve(q_weights.rows());
  for (std::size_t c = 0; c < q_weights.rows(); ++c) {
    out.channels.push_back(weight_bound(q_weights.row(c), input_bits, input_signed));
    out.max_bits = std::max(out.max_bits, out.channels.back().min_bits);
  }
  return out;
}

double l1_budget(int acc_bits, int input_bits, bool input_signed) {
  if (acc_bits < 1 || acc_bits > kMaxAccBits) {
    throw std::invalid_argument("l1_budget: accumulator width outside [1, 64]");
  }
  const int shift = input_shift(input_bits, input_signed);
  const double reg_max = std::exp2(acc_bits - 1) - 1.0;
  return std::ldexp(reg_max, -shift);
}

bool worst_case_fits(std::span<const std::int64_t> q_weights, int input_bits, bool input_signed,
                     int acc_bits) {
  if (acc_bits < 1 || acc_bits > kMaxAccBits) {
    throw std::invalid_argument("worst_case_fits: accumulator width outside [1, 64]");
  }
  const u128 worst = worst_case_magnitude(q_weights, input_bits, input_signed);
  const u128 reg_max = (u128{1} << (acc_bits - 1)) - 1;
  return worst <= reg_max;
}

}  // namespace a2q::bounds
