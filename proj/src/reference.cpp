#include <cmath>

#include "a2q/accsim.hpp"
#include "dot_kernel.hpp"

namespace a2q::accsim::reference {

MatvecResult matvec_accumulate(const IntMatrix& X, const IntMatrix& W, int acc_bits, AccMode mode,
                               std::span<const std::size_t> order, Placement placement) {
  detail::check_shapes(X, W, order);
  const auto reg = detail::make_register(acc_bits);
  MatvecResult out{IntMatrix(X.rows(), W.rows()), IntMatrix(X.rows(), W.rows()),
                   detail::base_report(X, W, acc_bits, mode)};
  double err = 0.0;
  for (std::size_t b = 0; b < X.rows(); ++b) {
    for (std::size_t c = 0; c < W.rows(); ++c) {
      Wide exact = 0;
      const auto r =
          detail::dot_one(mode, placement, X.row(b).data(), W.row(c).data(), X.cols(), reg, order, exact);
      out.y(b, c) = r.result;
      out.exact(b, c) = detail::narrow(exact);
      out.report.overflow_events += r.overflows;
      out.report.dot_products_with_overflow += r.overflows > 0;
      err += std::fabs(static_cast<double>(static_cast<Wide>(r.result) - exact));
    }
  }
  const auto n = out.report.total_dot_products;
  out.report.logit_mae = n == 0 ? 0.0 : err / static_cast<double>(n);
  return out;
}

}  // namespace a2q::accsim::reference

#include <stdexcept>

#include "a2q/linalg.hpp"

namespace a2q::linalg::reference {

RealMatrix gemm_nt(const RealMatrix& A, const RealMatrix& B) {
  if (A.cols() != B.cols()) throw std::invalid_argument("gemm_nt: inner dimensions differ");
  RealMatrix C(A.rows(), B.rows());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < B.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < A.cols(); ++p) s += A(i, p) * B(j, p);
      C(i, j) = s;
    }
  return C;
}

RealMatrix gemm_nn(const RealMatrix& A, const RealMatrix& B) {
  if (A.cols() != B.rows()) throw std::invalid_argument("gemm_nn: inner dimensions differ");
  RealMatrix C(A.rows(), B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < B.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < A.cols(); ++p) s += A(i, p) * B(p, j);
      C(i, j) = s;
    }
  return C;
}

RealMatrix gemm_tn(const RealMatrix& A, const RealMatrix& B) {
  if (A.rows() != B.rows()) throw std::invalid_argument("gemm_tn: inner dimensions differ");
  RealMatrix C(A.cols(), B.cols());
  for (std::size_t i = 0; i < A.cols(); ++i)
    for (std::size_t j = 0; j < B.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < A.rows(); ++p) s += A(p, i) * B(p, j);
      C(i, j) = s;
    }
  return C;
}

}  // namespace a2q::linalg::reference
