#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace rsnmt::detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// c[m x n] = (or +=) op(a) * op(b), all row-major contiguous.
template <class T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const T* a, const T* b,
          T* c, bool accumulate) {
  ConstMatMap<T> A(a, trans_a ? k : m, trans_a ? m : k);
  ConstMatMap<T> B(b, trans_b ? n : k, trans_b ? k : n);
  MatMap<T> C(c, m, n);
  if (!trans_a && !trans_b) {
    if (accumulate) C.noalias() += A * B;
    else C.noalias() = A * B;
  } else if (!trans_a && trans_b) {
    if (accumulate) C.noalias() += A * B.transpose();
    else C.noalias() = A * B.transpose();
  } else if (trans_a && !trans_b) {
    if (accumulate) C.noalias() += A.transpose() * B;
    else C.noalias() = A.transpose() * B;
  } else {
    if (accumulate) C.noalias() += A.transpose() * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
}

}  // namespace rsnmt::detail
