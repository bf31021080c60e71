#include "a2q/quantcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace a2q::quant {

const char* to_string(Rounding r) {
  switch (r) {
    case Rounding::HalfWay:
      return "half_way";
    case Rounding::TowardZero:
      return "toward_zero";
    case Rounding::None:
      return "none";
  }
  return "?";
}

IntRange::IntRange(int bit_width, bool is_signed) : bits_(bit_width), signed_(is_signed) {
  if (bit_width < 1 || bit_width > kMaxBits) {
    throw std::invalid_argument("IntRange: bit width " + std::to_string(bit_width) +
                                " outside [1, " + std::to_string(kMaxBits) + "]");
  }
}

std::int64_t IntRange::min() const {
  return signed_ ? -(std::int64_t{1} << (bits_ - 1)) : 0;
}

std::int64_t IntRange::max() const {
  return signed_ ? (std::int64_t{1} << (bits_ - 1)) - 1 : (std::int64_t{1} << bits_) - 1;
}

void QuantSpec::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument("QuantSpec: scale must be finite and > 0, got " +
                                std::to_string(scale));
  }
  if (!range.contains(zero_point)) {
    throw std::invalid_argument("QuantSpec: zero point " + std::to_string(zero_point) +
                                " outside the integer range");
  }
}

IntTensor::IntTensor(std::vector<std::int64_t> values, std::vector<std::size_t> shape,
                     QuantSpec spec)
    : values_(std::move(values)), shape_(std::move(shape)), spec_(spec) {
  spec_.validate();
  const std::size_t n =
      std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (n != values_.size()) {
    throw std::invalid_argument("IntTensor: shape does not match element count");
  }
  for (auto v : values_) {
    if (!spec_.range.contains(v)) {
      throw std::out_of_range("IntTensor: element " + std::to_string(v) + " outside [" +
                              std::to_string(spec_.range.min()) + ", " +
                              std::to_string(spec_.range.max()) + "]");
    }
  }
}

IntMatrix IntTensor::as_matrix() const {
  if (shape_.size() == 1) return IntMatrix(1, shape_[0], values_);
  if (shape_.size() == 2) return IntMatrix(shape_[0], shape_[1], values_);
  throw std::invalid_argument("IntTensor::as_matrix: rank must be 1 or 2");
}

namespace {

double round_real(double x, Rounding mode) {
  switch (mode) {
    case Rounding::TowardZero:
      return std::trunc(x);
    case Rounding::None:
      return x;
    case Rounding::HalfWay: {
      const double r = std::round(x);  // ties away from zero
      if (std::fabs(x - std::trunc(x)) == 0.5) {
        // tie: pick the even neighbour
        return 2.0 * std::round(x / 2.0);
      }
      return r;
    }
  }
  return x;
}

// Clamp in the real domain first so the int64 conversion is always defined.
std::int64_t clip_to_range(double v, const IntRange& range) {
  const double lo = static_cast<double>(range.min());
  const double hi = static_cast<double>(range.max());
  if (v <= lo) return range.min();
  if (v >= hi) return range.max();
  return static_cast<std::int64_t>(v);
}

void require_finite(std::span<const double> x) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw std::domain_error("quantize: non-finite input at index " + std::to_string(i));
    }
  }
}

}  // namespace

std::int64_t round_value(double x, Rounding mode) {
  if (!std::isfinite(x)) throw std::domain_error("round_value: non-finite input");
  if (mode == Rounding::None) {
    throw std::invalid_argument("round_value: Rounding::None does not produce an integer");
  }
  return static_cast<std::int64_t>(round_real(x, mode));
}

double scaled_rounded(double x, const QuantSpec& spec) {
  return round_real(x / spec.scale, spec.rounding) + static_cast<double>(spec.zero_point);
}

IntTensor quantize(std::span<const double> x, std::vector<std::size_t> shape,
                   const QuantSpec& spec) {
  spec.validate();
  if (spec.rounding == Rounding::None) {
    throw std::invalid_argument("quantize: integer codes need a real rounding mode");
  }
  require_finite(x);
  std::vector<std::int64_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = clip_to_range(scaled_rounded(x[i], spec), spec.range);
  }
  return IntTensor(std::move(out), std::move(shape), spec);
}

IntTensor quantize(std::span<const double> x, const QuantSpec& spec) {
  return quantize(x, {x.size()}, spec);
}

std::vector<double> dequantize(const IntTensor& q) {
  const auto& spec = q.spec();
  std::vector<double> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[i] = spec.scale * static_cast<double>(q.values()[i] - spec.zero_point);
  }
  return out;
}

std::vector<double> fake_quantize(std::span<const double> x, const QuantSpec& spec) {
  spec.validate();
  require_finite(x);
  const double lo = static_cast<double>(spec.range.min());
  const double hi = static_cast<double>(spec.range.max());
  const double z = static_cast<double>(spec.zero_point);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = spec.scale * (std::clamp(scaled_rounded(x[i], spec), lo, hi) - z);
  }
  return out;
}

std::vector<double> ste_backward(std::span<const double> upstream, std::span<const double> x,
                                 const QuantSpec& spec) {
  if (upstream.size() != x.size()) {
    throw std::invalid_argument("ste_backward: gradient and input sizes differ");
  }
  const double lo = static_cast<double>(spec.range.min());
  const double hi = static_cast<double>(spec.range.max());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double pre = scaled_rounded(x[i], spec);
    out[i] = (pre >= lo && pre <= hi) ? upstream[i] : 0.0;
  }
  return out;
}

}  // namespace a2q::quant
