#include "a2q/accsim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "dot_kernel.hpp"

namespace a2q::accsim {

std::string_view to_string(AccMode mode) {
  switch (mode) {
    case AccMode::Exact:
      return "exact";
    case AccMode::Wraparound:
      return "wraparound";
    case AccMode::Saturate:
      return "saturate";
  }
  return "?";
}

AccMode parse_mode(std::string_view name) {
  if (name == "exact") return AccMode::Exact;
  if (name == "wraparound" || name == "wrap") return AccMode::Wraparound;
  if (name == "saturate" || name == "sat" || name == "clip") return AccMode::Saturate;
  throw std::invalid_argument("unknown accumulator mode '" + std::string(name) + "'");
}

Wide acc_min(int acc_bits) { return detail::make_register(acc_bits).lo; }
Wide acc_max(int acc_bits) { return detail::make_register(acc_bits).hi; }

Wide reduce(Wide value, int acc_bits, AccMode mode) {
  const auto reg = detail::make_register(acc_bits);
  switch (mode) {
    case AccMode::Wraparound:
      return detail::reduce_into<AccMode::Wraparound>(value, reg);
    case AccMode::Saturate:
      return detail::reduce_into<AccMode::Saturate>(value, reg);
    case AccMode::Exact:
      break;
  }
  return value;
}

DotResult dot_accumulate(std::span<const std::int64_t> x, std::span<const std::int64_t> w,
                         int acc_bits, AccMode mode) {
  return dot_accumulate(x, w, acc_bits, mode, {});
}

DotResult dot_accumulate(std::span<const std::int64_t> x, std::span<const std::int64_t> w,
                         int acc_bits, AccMode mode, std::span<const std::size_t> order) {
  if (x.size() != w.size()) {
    throw std::invalid_argument("dot_accumulate: length mismatch (" + std::to_string(x.size()) +
                                " vs " + std::to_string(w.size()) + ")");
  }
  if (!order.empty() && order.size() != x.size()) {
    throw std::invalid_argument("dot_accumulate: order length mismatch");
  }
  const auto reg = detail::make_register(acc_bits);
  Wide exact = 0;
  return detail::accumulate_any(mode, x.data(), w.data(), x.size(), reg, order, exact);
}

DotResult dot_accumulate_outer(std::span<const std::int64_t> x, std::span<const std::int64_t> w,
                               int acc_bits, AccMode mode) {
  if (x.size() != w.size()) throw std::invalid_argument("dot_accumulate_outer: length mismatch");
  const auto reg = detail::make_register(acc_bits);
  Wide exact = 0;
  return detail::dot_one(mode, Placement::OuterLoop, x.data(), w.data(), x.size(), reg, {}, exact);
}

double SimReport::overflow_rate_per_mac() const {
  return total_macs == 0 ? 0.0 : static_cast<double>(overflow_events) / static_cast<double>(total_macs);
}

double SimReport::overflow_fraction_of_dot_products() const {
  return total_dot_products == 0 ? 0.0
                                 : static_cast<double>(dot_products_with_overflow) /
                                       static_cast<double>(total_dot_products);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<std::size_t> trial_permutation(std::size_t n, std::uint64_t seed, std::uint64_t trial) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(trial + 1)));
  // Fisher-Yates with an explicit bounded draw so the order does not depend on
  // the standard library's shuffle.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

PermutationSummary permutation_study(std::span<const std::int64_t> x,
                                     std::span<const std::int64_t> w, int acc_bits, AccMode mode,
                                     std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw std::invalid_argument("permutation_study: trials must be >= 1");
  if (x.size() != w.size()) throw std::invalid_argument("permutation_study: length mismatch");
  PermutationSummary s;
  s.exact = dot_accumulate(x, w, acc_bits, AccMode::Exact).result;
  s.results.resize(trials);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(trials); ++t) {
    const auto order = trial_permutation(x.size(), seed, static_cast<std::uint64_t>(t));
    s.results[static_cast<std::size_t>(t)] = dot_accumulate(x, w, acc_bits, mode, order).result;
  }

  double sum_dev = 0.0;
  double sum = 0.0;
  s.min_abs_dev = INFINITY;
  s.max_abs_dev = 0.0;
  for (auto r : s.results) {
    const double dev = std::fabs(static_cast<double>(r - s.exact));
    sum_dev += dev;
    sum += static_cast<double>(r);
    s.min_abs_dev = std::min(s.min_abs_dev, dev);
    s.max_abs_dev = std::max(s.max_abs_dev, dev);
  }
  const double n = static_cast<double>(trials);
  s.mean_abs_dev = sum_dev / n;
  const double mean = sum / n;
  double ss = 0.0;
  for (auto r : s.results) ss += (static_cast<double>(r) - mean) * (static_cast<double>(r) - mean);
  s.variance = ss / n;
  s.outer_result = dot_accumulate_outer(x, w, acc_bits, mode).result;
  s.outer_abs_dev = std::fabs(static_cast<double>(s.outer_result - s.exact));
  return s;
}

std::vector<SweepRow> overflow_sweep(const SweepEvaluator& evaluate, int p_lo, int p_hi,
                                     std::span<const AccMode> modes) {
  if (p_lo > p_hi) throw std::invalid_argument("overflow_sweep: empty accumulator range");
  if (modes.empty()) throw std::invalid_argument("overflow_sweep: no modes given");
  std::vector<SweepRow> rows;
  for (int p = p_lo; p <= p_hi; ++p) {
    for (auto mode : modes) rows.push_back(evaluate(p, mode));
  }
  return rows;
}

}  // namespace a2q::accsim
