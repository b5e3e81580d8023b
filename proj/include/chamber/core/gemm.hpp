#pragma once

#include <cstdint>

#include "chamber/core/parallel.hpp"

namespace chamber::nn {

/// C (+)= A[M,K] * B[K,N], row-major. Each C row is owned by one thread and
/// accumulated in a fixed k order, so results do not depend on thread count.
template <class T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
    parallel_for(m, [=](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            T* crow = c + i * n;
            if (!accumulate)
                for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
            const T* arow = a + i * k;
            for (int64_t p = 0; p < k; ++p) {
                const T av = arow[p];
                if (av == T(0)) continue;
                const T* brow = b + p * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

/// C (+)= A[M,K] * B^T with B stored [N,K].
template <class T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
    parallel_for(m, [=](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const T* arow = a + i * k;
            T* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) {
                const T* brow = b + j * k;
                T acc = T(0);
                for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                crow[j] = accumulate ? crow[j] + acc : acc;
            }
        }
    });
}

/// C (+)= A^T * B with A stored [M,K], result [K,N].
template <class T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
    parallel_for(k, [=](int64_t p0, int64_t p1) {
        for (int64_t p = p0; p < p1; ++p) {
            T* crow = c + p * n;
            if (!accumulate)
                for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
            for (int64_t i = 0; i < m; ++i) {
                const T av = a[i * k + p];
                if (av == T(0)) continue;
                const T* brow = b + i * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

} // namespace chamber::nn
