#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "a2q/tensor.hpp"

namespace a2q::quant {

enum class Rounding {
  HalfWay,     // nearest integer, ties to even
  TowardZero,  // truncation; never increases magnitude
  None,        // no rounding: the straight-through surrogate of either mode
};

const char* to_string(Rounding r);

// Integer range of a b-bit two's-complement (signed) or unsigned type.
class IntRange {
 public:
  static constexpr int kMaxBits = 62;

  IntRange(int bit_width, bool is_signed);

  int bit_width() const { return bits_; }
  bool is_signed() const { return signed_; }
  std::int64_t min() const;
  std::int64_t max() const;
  bool contains(std::int64_t v) const { return v >= min() && v <= max(); }

  bool operator==(const IntRange&) const = default;

 private:
  int bits_;
  bool signed_;
};

struct QuantSpec {
  IntRange range;
  double scale = 1.0;
  std::int64_t zero_point = 0;
  Rounding rounding = Rounding::HalfWay;

  // Throws std::invalid_argument on scale <= 0, non-finite scale, or a zero
  // point outside the range.
  void validate() const;
};

// Integer codes plus the spec that produced them. Every element lies in
// [spec.range.min(), spec.range.max()]; the constructor enforces it.
class IntTensor {
 public:
  IntTensor(std::vector<std::int64_t> values, std::vector<std::size_t> shape, QuantSpec spec);

  const std::vector<std::int64_t>& values() const { return values_; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  const QuantSpec& spec() const { return spec_; }
  std::size_t size() const { return values_.size(); }

  // View as a 2-D matrix; rank-1 tensors become a single row.
  IntMatrix as_matrix() const;

 private:
  std::vector<std::int64_t> values_;
  std::vector<std::size_t> shape_;
  QuantSpec spec_;
};

std::int64_t round_value(double x, Rounding mode);

// Rounded but unclipped value round(x / s) + z, as a real. With
// Rounding::None this is x / s + z.
double scaled_rounded(double x, const QuantSpec& spec);

// clip(round(x/s) + z, n, p). Rounding::None is rejected since the result
// must be integral.
IntTensor quantize(std::span<const double> x, std::vector<std::size_t> shape, const QuantSpec& spec);
IntTensor quantize(std::span<const double> x, const QuantSpec& spec);

std::vector<double> dequantize(const IntTensor& q);

// s * (clip(round(x/s) + z, n, p) - z) elementwise, accepting every rounding
// mode including Rounding::None.
std::vector<double> fake_quantize(std::span<const double> x, const QuantSpec& spec);

// Clipped straight-through estimator: the upstream gradient passes where the
// rounded pre-clip value lies in [n, p] and is zeroed elsewhere.
std::vector<double> ste_backward(std::span<const double> upstream, std::span<const double> x,
                                 const QuantSpec& spec);

}  // namespace a2q::quant
