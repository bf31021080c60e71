#pragma once

#include "a2q/tensor.hpp"

// Dense real kernels used by the fake-quantized training path. The default
// versions split output rows across OpenMP threads; each output element is
// summed serially in index order, so results are bitwise identical to the
// serial reference regardless of thread count.
namespace a2q::linalg {

// A [m x k] times B^T where B is [n x k]  ->  [m x n]
RealMatrix gemm_nt(const RealMatrix& A, const RealMatrix& B);
// A [m x k] times B [k x n]  ->  [m x n]
RealMatrix gemm_nn(const RealMatrix& A, const RealMatrix& B);
// A^T times B where A is [k x m] and B is [k x n]  ->  [m x n]
RealMatrix gemm_tn(const RealMatrix& A, const RealMatrix& B);

namespace reference {
RealMatrix gemm_nt(const RealMatrix& A, const RealMatrix& B);
RealMatrix gemm_nn(const RealMatrix& A, const RealMatrix& B);
RealMatrix gemm_tn(const RealMatrix& A, const RealMatrix& B);
}  // namespace reference

}  // namespace a2q::linalg
