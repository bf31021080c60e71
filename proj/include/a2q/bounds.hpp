#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "a2q/tensor.hpp"

namespace a2q::bounds {

// Shape of one integer dot product: K elements of N-bit inputs against
// M-bit signed weights.
struct DotShape {
  std::int64_t k = 1;
  int input_bits = 1;
  bool input_signed = false;
  int weight_bits = 1;

  void validate() const;
};

enum class BoundSource { DataType, Weight };

const char* to_string(BoundSource s);

struct AccBoundResult {
  double real_bound = 1.0;  // alpha + phi(alpha) + 1, in bits
  int min_bits = 1;         // smallest P that holds every partial sum
  BoundSource source = BoundSource::DataType;
  bool degenerate = false;  // all-zero weight channel
};

// Lower bound on the accumulator width from the data types alone.
AccBoundResult datatype_bound(const DotShape& shape);

// Tighter lower bound from the l1 norm of one output channel's integer codes.
// An all-zero channel yields min_bits = 1 with degenerate = true.
AccBoundResult weight_bound(std::span<const std::int64_t> q_weights, int input_bits,
                            bool input_signed);

struct LayerBound {
  std::vector<AccBoundResult> channels;
  int max_bits = 1;  // each output neuron has its own accumulator
};

// Per-channel weight bounds over the rows of a [C x K] code matrix.
LayerBound layer_weight_bound(const IntMatrix& q_weights, int input_bits, bool input_signed);

// Largest l1 norm of integer codes that a P-bit signed accumulator admits:
// (2^(P-1) - 1) * 2^(signed - N).
double l1_budget(int acc_bits, int input_bits, bool input_signed);

// Exact-integer overflow certificate:
//   2^(N - signed) * sum |w_i| <= 2^(P-1) - 1.
bool worst_case_fits(std::span<const std::int64_t> q_weights, int input_bits, bool input_signed,
                     int acc_bits);

// The worst-case partial-sum magnitude 2^(N - signed) * sum |w_i|, saturated
// at the largest representable value when it would not fit 127 bits.
unsigned __int128 worst_case_magnitude(std::span<const std::int64_t> q_weights, int input_bits,
                                       bool input_signed);

}  // namespace a2q::bounds
