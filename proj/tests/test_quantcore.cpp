#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "a2q/quantcore.hpp"
#include "oracles/oracles.hpp"

using namespace a2q::quant;

namespace {

QuantSpec signed4(double scale, Rounding r = Rounding::HalfWay) {
  return {IntRange(4, true), scale, 0, r};
}

std::int64_t q1(double x, const QuantSpec& spec) {
  const double v[] = {x};
  return quantize(v, spec).values()[0];
}

}  // namespace

TEST(IntRange, SignedAndUnsignedLimits) {
  EXPECT_EQ(IntRange(4, true).min(), -8);
  EXPECT_EQ(IntRange(4, true).max(), 7);
  EXPECT_EQ(IntRange(4, false).min(), 0);
  EXPECT_EQ(IntRange(4, false).max(), 15);
  EXPECT_EQ(IntRange(1, true).min(), -1);
  EXPECT_EQ(IntRange(1, true).max(), 0);
  EXPECT_EQ(IntRange(1, false).max(), 1);
  for (int b = 1; b <= IntRange::kMaxBits; ++b) {
    for (bool s : {false, true}) {
      const IntRange r(b, s);
      EXPECT_LE(r.min(), 0);
      EXPECT_GE(r.max(), 0);
    }
  }
  EXPECT_THROW(IntRange(0, true), std::invalid_argument);
  EXPECT_THROW(IntRange(IntRange::kMaxBits + 1, false), std::invalid_argument);
}

TEST(QuantSpec, Validation) {
  EXPECT_NO_THROW(signed4(0.5).validate());
  EXPECT_THROW(signed4(0.0).validate(), std::invalid_argument);
  EXPECT_THROW(signed4(-1.0).validate(), std::invalid_argument);
  EXPECT_THROW(signed4(std::numeric_limits<double>::infinity()).validate(), std::invalid_argument);
  QuantSpec bad = signed4(1.0);
  bad.zero_point = 8;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Quantize, Examples) {
  EXPECT_EQ(q1(0.0, signed4(0.5)), 0);
  EXPECT_EQ(q1(1.7, signed4(0.5)), 3);
  EXPECT_EQ(q1(100.0, signed4(0.5)), 7);
  EXPECT_EQ(q1(-100.0, signed4(0.5)), -8);
}

TEST(Quantize, MatchesRationalOracle) {
  // 1.7 / 0.5 evaluated exactly from the stored doubles.
  const auto r = oracle::from_double(1.7) / oracle::from_double(0.5);
  EXPECT_EQ(static_cast<std::int64_t>(oracle::round_half_even(r)), 3);
}

TEST(Quantize, RejectsNonFinite) {
  EXPECT_THROW(q1(std::nan(""), signed4(0.5)), std::domain_error);
  EXPECT_THROW(q1(std::numeric_limits<double>::infinity(), signed4(0.5)), std::domain_error);
}

TEST(Quantize, RejectsSurrogateRounding) {
  EXPECT_THROW(q1(1.0, signed4(0.5, Rounding::None)), std::invalid_argument);
}

TEST(Quantize, ZeroPointShiftsCodes) {
  QuantSpec s{IntRange(8, false), 0.25, 10, Rounding::HalfWay};
  EXPECT_EQ(q1(1.0, s), 14);
  EXPECT_EQ(q1(-10.0, s), 0);
}

TEST(Dequantize, Examples) {
  EXPECT_DOUBLE_EQ(dequantize(IntTensor({3}, {1}, signed4(0.5)))[0], 1.5);
  EXPECT_DOUBLE_EQ(dequantize(IntTensor({-8}, {1}, signed4(0.25)))[0], -2.0);
  QuantSpec s{IntRange(8, false), 0.1, 17, Rounding::HalfWay};
  EXPECT_EQ(dequantize(IntTensor({17}, {1}, s))[0], 0.0);
}

TEST(IntTensor, EnforcesRangeAndShape) {
  EXPECT_THROW(IntTensor({8}, {1}, signed4(1.0)), std::out_of_range);
  EXPECT_THROW(IntTensor({1, 2, 3}, {2, 2}, signed4(1.0)), std::invalid_argument);
  const IntTensor t({1, 2, 3, 4, 5, 6}, {2, 3}, signed4(1.0));
  const auto m = t.as_matrix();
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m(1, 2), 6);
}

TEST(RoundValue, Examples) {
  EXPECT_EQ(round_value(-1.7, Rounding::TowardZero), -1);
  EXPECT_EQ(round_value(1.7, Rounding::TowardZero), 1);
  EXPECT_EQ(round_value(2.5, Rounding::HalfWay), 2);
  EXPECT_EQ(round_value(3.5, Rounding::HalfWay), 4);
  EXPECT_EQ(round_value(-2.5, Rounding::HalfWay), -2);
  EXPECT_EQ(round_value(-0.5, Rounding::HalfWay), 0);
  EXPECT_EQ(round_value(3.0, Rounding::HalfWay), 3);
  EXPECT_EQ(round_value(3.0, Rounding::TowardZero), 3);
  EXPECT_THROW(round_value(1.0, Rounding::None), std::invalid_argument);
}

TEST(RoundValue, AgreesWithRationalOracle) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> num(-4000, 4000);
  for (int i = 0; i < 20000; ++i) {
    // halves, quarters and eighths hit exact ties often
    const double x = num(rng) / static_cast<double>(1 << (i % 4));
    const auto r = oracle::from_double(x);
    EXPECT_EQ(round_value(x, Rounding::HalfWay), static_cast<std::int64_t>(oracle::round_half_even(r)))
        << x;
    EXPECT_EQ(round_value(x, Rounding::TowardZero),
              static_cast<std::int64_t>(oracle::trunc_toward_zero(r)))
        << x;
  }
}

TEST(RoundValue, TowardZeroNeverGrowsMagnitude) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 100000; ++i) {
    const double x = u(rng);
    EXPECT_LE(std::fabs(static_cast<double>(round_value(x, Rounding::TowardZero))), std::fabs(x));
  }
}

TEST(QuantizeProperties, ReconstructionErrorAndIdempotence) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::uniform_real_distribution<double> scale(0.01, 3.0);
  for (int trial = 0; trial < 2000; ++trial) {
    for (Rounding mode : {Rounding::HalfWay, Rounding::TowardZero}) {
      const bool sgn = trial % 2 == 0;
      // Truncation is only idempotent when q * s / s is exact, so TowardZero
      // gets power-of-two scales.
      const double s = mode == Rounding::HalfWay ? scale(rng) : std::ldexp(1.0, trial % 8 - 6);
      QuantSpec spec{IntRange(2 + trial % 7, sgn), s, 0, mode};
      std::vector<double> x(16);
      for (auto& v : x) v = u(rng);
      const auto q = quantize(x, spec);
      const auto deq = dequantize(q);
      const double lo = spec.scale * static_cast<double>(spec.range.min());
      const double hi = spec.scale * static_cast<double>(spec.range.max());
      const double tol = (mode == Rounding::HalfWay ? 0.5 : 1.0) * spec.scale * (1 + 1e-12);
      for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_LE(std::fabs(deq[i] - std::clamp(x[i], lo, hi)), tol);
        EXPECT_TRUE(spec.range.contains(q.values()[i]));
      }
      EXPECT_EQ(quantize(deq, spec).values(), q.values());
    }
  }
}

TEST(FakeQuantize, SurrogateIsClippedIdentity) {
  const QuantSpec spec = signed4(0.5, Rounding::None);
  const double x[] = {0.3, 1.2, 10.0, -10.0};
  const auto y = fake_quantize(x, spec);
  EXPECT_DOUBLE_EQ(y[0], 0.3);
  EXPECT_DOUBLE_EQ(y[1], 1.2);
  EXPECT_DOUBLE_EQ(y[2], 3.5);
  EXPECT_DOUBLE_EQ(y[3], -4.0);
}

TEST(SteBackward, Examples) {
  const QuantSpec spec = signed4(0.5);
  const double x[] = {1.0, 100.0, -100.0, 3.4};
  const double ones[] = {1.0, 1.0, 1.0, 1.0};
  const double zeros[] = {0.0, 0.0, 0.0, 0.0};
  const auto g = ste_backward(ones, x, spec);
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 0.0);
  EXPECT_EQ(g[3], 1.0);  // rounds to 7 = p
  for (double v : ste_backward(zeros, x, spec)) EXPECT_EQ(v, 0.0);
}

TEST(SteBackward, MatchesClipSlopeAwayFromBoundary) {
  const QuantSpec spec = signed4(0.5, Rounding::None);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 5000; ++i) {
    double x = u(rng);
    if (std::fabs(x - 3.5) < 1e-3 || std::fabs(x + 4.0) < 1e-3) continue;
    const double h = 1e-6;
    const auto f = [&] {
      const double v[] = {x};
      return fake_quantize(v, spec)[0];
    };
    const double fd = oracle::central_difference(f, x, h);
    const double up[] = {1.0};
    const double xs[] = {x};
    EXPECT_NEAR(ste_backward(up, xs, spec)[0], fd, 1e-6) << x;
  }
}
