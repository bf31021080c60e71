#include <cmath>
#include <vector>

#include "a2q/accsim.hpp"
#include "dot_kernel.hpp"

namespace a2q::accsim {

MatvecResult matvec_accumulate(const IntMatrix& X, const IntMatrix& W, int acc_bits, AccMode mode,
                               std::span<const std::size_t> order, Placement placement) {
  detail::check_shapes(X, W, order);
  const auto reg = detail::make_register(acc_bits);
  const std::size_t B = X.rows();
  const std::size_t C = W.rows();
  const std::size_t K = X.cols();

  MatvecResult out{IntMatrix(B, C), IntMatrix(B, C), detail::base_report(X, W, acc_bits, mode)};
  std::vector<std::uint64_t> row_events(B, 0);
  std::vector<std::uint64_t> row_dots(B, 0);
  std::vector<double> row_abs_err(B, 0.0);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bb = 0; bb < static_cast<std::ptrdiff_t>(B); ++bb) {
    const auto b = static_cast<std::size_t>(bb);
    const std::int64_t* x = X.row(b).data();
    std::uint64_t events = 0;
    std::uint64_t dots = 0;
    double abs_err = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      Wide exact = 0;
      const auto r = detail::dot_one(mode, placement, x, W.row(c).data(), K, reg, order, exact);
      out.y(b, c) = r.result;
      out.exact(b, c) = detail::narrow(exact);
      events += r.overflows;
      dots += r.overflows > 0;
      abs_err += std::fabs(static_cast<double>(static_cast<Wide>(r.result) - exact));
    }
    row_events[b] = events;
    row_dots[b] = dots;
    row_abs_err[b] = abs_err;
  }

  double err = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    out.report.overflow_events += row_events[b];
    out.report.dot_products_with_overflow += row_dots[b];
    err += row_abs_err[b];
  }
  const auto n = out.report.total_dot_products;
  out.report.logit_mae = n == 0 ? 0.0 : err / static_cast<double>(n);
  return out;
}

}  // namespace a2q::accsim

#include <stdexcept>

#include "a2q/linalg.hpp"

namespace a2q::linalg {

RealMatrix gemm_nt(const RealMatrix& A, const RealMatrix& B) {
  if (A.cols() != B.cols()) throw std::invalid_argument("gemm_nt: inner dimensions differ");
  const std::size_t m = A.rows(), n = B.rows(), k = A.cols();
  RealMatrix C(m, n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* a = A.row(i).data();
    for (std::size_t j = 0; j < n; ++j) {
      const double* b = B.row(j).data();
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p] * b[p];
      C(i, j) = s;
    }
  }
  return C;
}

RealMatrix gemm_nn(const RealMatrix& A, const RealMatrix& B) {
  if (A.cols() != B.rows()) throw std::invalid_argument("gemm_nn: inner dimensions differ");
  const std::size_t m = A.rows(), n = B.cols(), k = A.cols();
  RealMatrix C(m, n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* c = C.row(i).data();
    // p-outer keeps B row-contiguous; each c[j] still sums p in order
    for (std::size_t p = 0; p < k; ++p) {
      const double a = A(i, p);
      const double* b = B.row(p).data();
      for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
  return C;
}

RealMatrix gemm_tn(const RealMatrix& A, const RealMatrix& B) {
  if (A.rows() != B.rows()) throw std::invalid_argument("gemm_tn: inner dimensions differ");
  const std::size_t m = A.cols(), n = B.cols(), k = A.rows();
  RealMatrix C(m, n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* c = C.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double a = A(p, i);
      if (a == 0.0) continue;
      const double* b = B.row(p).data();
      for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
  return C;
}

}  // namespace a2q::linalg
