#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "a2q/tensor.hpp"

// Bit-exact simulation of integer dot products accumulated into a P-bit
// signed register. Products are formed exactly; only the running sum is
// narrowed.
namespace a2q::accsim {

enum class AccMode { Exact, Wraparound, Saturate };

std::string_view to_string(AccMode mode);
AccMode parse_mode(std::string_view name);

inline constexpr int kMaxAccBits = 64;

using Wide = __int128;

// Lowest and highest value of a P-bit signed register.
Wide acc_min(int acc_bits);
Wide acc_max(int acc_bits);

// Value stored after an addition produced `value`: identity for Exact,
// two's-complement wrap for Wraparound, clamp for Saturate.
Wide reduce(Wide value, int acc_bits, AccMode mode);

struct DotResult {
  std::int64_t result = 0;
  std::uint64_t overflows = 0;
};

// Accumulates x_i * w_i left to right (or in `order` when given), reducing
// after every addition. Throws std::invalid_argument on length mismatch.
DotResult dot_accumulate(std::span<const std::int64_t> x, std::span<const std::int64_t> w,
                         int acc_bits, AccMode mode);
DotResult dot_accumulate(std::span<const std::int64_t> x, std::span<const std::int64_t> w,
                         int acc_bits, AccMode mode, std::span<const std::size_t> order);

// Overflow modeled at the outer-most loop: the exact sum is reduced once.
DotResult dot_accumulate_outer(std::span<const std::int64_t> x, std::span<const std::int64_t> w,
                               int acc_bits, AccMode mode);

struct SimReport {
  std::uint64_t overflow_events = 0;
  std::uint64_t dot_products_with_overflow = 0;
  std::uint64_t total_dot_products = 0;
  std::uint64_t total_macs = 0;
  double logit_mae = 0.0;  // integer units, against Exact
  AccMode mode = AccMode::Exact;
  int acc_bits = 32;

  double overflow_rate_per_mac() const;
  double overflow_fraction_of_dot_products() const;
};

struct MatvecResult {
  IntMatrix y;      // [B x C] results under the requested mode
  IntMatrix exact;  // [B x C] unbounded reference
  SimReport report;
};

enum class Placement { InnerLoop, OuterLoop };

// Y[b, c] = sum_k X[b, k] * W[c, k] for every sample b and channel c, with the
// accumulator reduced per `placement`. Rows are distributed across OpenMP
// threads; per-row tallies are merged in row order, so results do not depend
// on the thread count.
MatvecResult matvec_accumulate(const IntMatrix& X, const IntMatrix& W, int acc_bits, AccMode mode,
                               std::span<const std::size_t> order = {},
                               Placement placement = Placement::InnerLoop);

namespace reference {
// Serial nested-loop implementation kept as the oracle for the parallel
// kernel and as the benchmark baseline.
MatvecResult matvec_accumulate(const IntMatrix& X, const IntMatrix& W, int acc_bits, AccMode mode,
                               std::span<const std::size_t> order = {},
                               Placement placement = Placement::InnerLoop);
}  // namespace reference

struct PermutationSummary {
  std::int64_t exact = 0;
  std::vector<std::int64_t> results;  // one per trial
  double mean_abs_dev = 0.0;
  double min_abs_dev = 0.0;
  double max_abs_dev = 0.0;
  double variance = 0.0;
  std::int64_t outer_result = 0;  // reduction applied to the final sum only
  double outer_abs_dev = 0.0;
};

// Random accumulation orders for one dot product; trial i uses a generator
// seeded from (seed, i) so the result is independent of scheduling.
PermutationSummary permutation_study(std::span<const std::int64_t> x,
                                     std::span<const std::int64_t> w, int acc_bits, AccMode mode,
                                     std::size_t trials, std::uint64_t seed);

// Uniformly random permutation of [0, n) for trial `trial`.
std::vector<std::size_t> trial_permutation(std::size_t n, std::uint64_t seed, std::uint64_t trial);

// One row of an accumulator sweep.
struct SweepRow {
  SimReport sim;
  double top1_accuracy = std::numeric_limits<double>::quiet_NaN();
  double sparsity = std::numeric_limits<double>::quiet_NaN();
};

using SweepEvaluator = std::function<SweepRow(int acc_bits, AccMode mode)>;

// Evaluates every (P, mode) pair for P in [p_lo, p_hi], ascending.
std::vector<SweepRow> overflow_sweep(const SweepEvaluator& evaluate, int p_lo, int p_hi,
                                     std::span<const AccMode> modes);

}  // namespace a2q::accsim
