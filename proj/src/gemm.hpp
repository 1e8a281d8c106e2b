#pragma once

// Row-major dense products on raw buffers, backed by Eigen. Single-threaded,
// so results are bitwise reproducible for a given build.

#include <cstddef>

#include <Eigen/Core>

namespace vmamba::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

inline auto as_mat(const double* p, std::size_t rows, std::size_t cols) {
  return MapConstMat(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline auto as_mat(double* p, std::size_t rows, std::size_t cols) {
  return MapMat(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// c[m,n] (+)= a[m,k] * b[k,n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  if (m == 0 || n == 0) return;
  auto cm = as_mat(c, m, n);
  if (!accumulate) cm.setZero();
  if (k == 0) return;
  cm.noalias() += as_mat(a, m, k) * as_mat(b, k, n);
}

// c[m,n] += a[k,m]^T * b[k,n]
inline void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                        std::size_t n) {
  if (m == 0 || n == 0 || k == 0) return;
  as_mat(c, m, n).noalias() += as_mat(a, k, m).transpose() * as_mat(b, k, n);
}

// c[m,n] += a[m,k] * b[n,k]^T
inline void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                        std::size_t n) {
  if (m == 0 || n == 0 || k == 0) return;
  as_mat(c, m, n).noalias() += as_mat(a, m, k) * as_mat(b, n, k).transpose();
}

}  // namespace vmamba::detail
