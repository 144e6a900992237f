#pragma once

#include <Eigen/Core>

namespace sandesc {

// Thin row-major GEMM wrappers over Eigen. All buffers are dense and
// contiguous; `acc` selects C += A*B versus C = A*B.

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C (M x N) = A (M x K) * B (K x N)
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, int M, int K, int N, bool acc = false) {
    Eigen::Map<const RowMat<T>> a(A, M, K), b(B, K, N);
    Eigen::Map<RowMat<T>> c(C, M, N);
    if (acc)
        c.noalias() += a * b;
    else
        c.noalias() = a * b;
}

// C (M x N) = A (M x K) * B (N x K)^T
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, int M, int K, int N, bool acc = false) {
    Eigen::Map<const RowMat<T>> a(A, M, K), b(B, N, K);
    Eigen::Map<RowMat<T>> c(C, M, N);
    if (acc)
        c.noalias() += a * b.transpose();
    else
        c.noalias() = a * b.transpose();
}

// C (M x N) = A (K x M)^T * B (K x N)
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, int M, int K, int N, bool acc = false) {
    Eigen::Map<const RowMat<T>> a(A, K, M), b(B, K, N);
    Eigen::Map<RowMat<T>> c(C, M, N);
    if (acc)
        c.noalias() += a.transpose() * b;
    else
        c.noalias() = a.transpose() * b;
}

}  // namespace sandesc
