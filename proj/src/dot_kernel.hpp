#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>

#include "a2q/accsim.hpp"

namespace a2q::accsim::detail {

struct Register {
  Wide lo;
  Wide hi;
  unsigned __int128 mask;  // 2^P - 1
  Wide half;               // 2^(P-1)
};

inline Register make_register(int acc_bits) {
  if (acc_bits < 1 || acc_bits > kMaxAccBits) {
    throw std::invalid_argument("accumulator width outside [1, 64]");
  }
  Register r;
  r.half = Wide{1} << (acc_bits - 1);
  r.lo = -r.half;
  r.hi = r.half - 1;
  r.mask = (static_cast<unsigned __int128>(1) << acc_bits) - 1;
  return r;
}

template <AccMode Mode>
inline Wide reduce_into(Wide v, const Register& reg) {
  if constexpr (Mode == AccMode::Wraparound) {
    const auto u = static_cast<unsigned __int128>(v + reg.half) & reg.mask;
    return static_cast<Wide>(u) - reg.half;
  } else if constexpr (Mode == AccMode::Saturate) {
    return v < reg.lo ? reg.lo : (v > reg.hi ? reg.hi : v);
  } else {
    return v;
  }
}

inline std::int64_t narrow(Wide v) {
  if (v < std::numeric_limits<std::int64_t>::min() || v > std::numeric_limits<std::int64_t>::max()) {
    throw std::overflow_error("accumulated value does not fit 64 bits");
  }
  return static_cast<std::int64_t>(v);
}

// Running-sum loop; `order` empty means ascending index order. Also returns
// the exact sum so callers get the reference for free.
template <AccMode Mode>
inline DotResult accumulate(const std::int64_t* x, const std::int64_t* w, std::size_t k,
                            const Register& reg, std::span<const std::size_t> order, Wide& exact) {
  Wide acc = 0;
  Wide sum = 0;
  std::uint64_t overflows = 0;
  for (std::size_t n = 0; n < k; ++n) {
    const std::size_t i = order.empty() ? n : order[n];
    const Wide prod = static_cast<Wide>(x[i]) * w[i];
    sum += prod;
    if constexpr (Mode == AccMode::Exact) {
      acc += prod;
    } else {
      const Wide next = acc + prod;
      overflows += (next < reg.lo) | (next > reg.hi);
      acc = reduce_into<Mode>(next, reg);
    }
  }
  exact = sum;
  return {narrow(acc), overflows};
}

inline DotResult accumulate_any(AccMode mode, const std::int64_t* x, const std::int64_t* w,
                                std::size_t k, const Register& reg,
                                std::span<const std::size_t> order, Wide& exact) {
  switch (mode) {
    case AccMode::Wraparound:
      return accumulate<AccMode::Wraparound>(x, w, k, reg, order, exact);
    case AccMode::Saturate:
      return accumulate<AccMode::Saturate>(x, w, k, reg, order, exact);
    case AccMode::Exact:
      break;
  }
  return accumulate<AccMode::Exact>(x, w, k, reg, order, exact);
}

inline DotResult outer_reduce(AccMode mode, Wide exact, const Register& reg) {
  if (mode == AccMode::Exact) return {narrow(exact), 0};
  const std::uint64_t overflowed = (exact < reg.lo) | (exact > reg.hi);
  const Wide r = mode == AccMode::Wraparound ? reduce_into<AccMode::Wraparound>(exact, reg)
                                             : reduce_into<AccMode::Saturate>(exact, reg);
  return {narrow(r), overflowed};
}

inline DotResult dot_one(AccMode mode, Placement placement, const std::int64_t* x,
                         const std::int64_t* w, std::size_t k, const Register& reg,
                         std::span<const std::size_t> order, Wide& exact) {
  if (placement == Placement::OuterLoop) {
    accumulate<AccMode::Exact>(x, w, k, reg, order, exact);
    return outer_reduce(mode, exact, reg);
  }
  return accumulate_any(mode, x, w, k, reg, order, exact);
}

inline void check_shapes(const IntMatrix& X, const IntMatrix& W, std::span<const std::size_t> order) {
  if (X.cols() != W.cols()) {
    throw std::invalid_argument("matvec_accumulate: input width " + std::to_string(X.cols()) +
                                " does not match weight width " + std::to_string(W.cols()));
  }
  if (!order.empty() && order.size() != X.cols()) {
    throw std::invalid_argument("matvec_accumulate: order length does not match K");
  }
}

inline SimReport base_report(const IntMatrix& X, const IntMatrix& W, int acc_bits, AccMode mode) {
  SimReport r;
  r.mode = mode;
  r.acc_bits = acc_bits;
  r.total_dot_products = static_cast<std::uint64_t>(X.rows()) * W.rows();
  r.total_macs = r.total_dot_products * X.cols();
  return r;
}

}  // namespace a2q::accsim::detail
