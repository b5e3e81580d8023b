#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>

#include "chamber/core/gemm.hpp"
#include "chamber/core/parallel.hpp"
#include "chamber/core/tensor.hpp"

namespace chamber::nn {

namespace detail {

template <class T>
void accum(Node<T>& p, const T* g, int64_t n) {
    p.ensure_grad();
    T* dst = p.grad.data();
    for (int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
    check(a == b, std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

inline Shape strides_of(const Shape& s) {
    Shape st(s.size());
    int64_t acc = 1;
    for (size_t i = s.size(); i-- > 0;) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

} // namespace detail

// ---- elementwise -----------------------------------------------------------

template <class T>
TensorT<T> add(TensorT<T> a, TensorT<T> b) {
    detail::check_same_shape(a.shape(), b.shape(), "add");
    std::vector<T> v(a.data());
    for (int64_t i = 0; i < a.size(); ++i) v[size_t(i)] += b.data()[size_t(i)];
    return TensorT<T>::op_result(a.shape(), std::move(v), {a, b}, [](Node<T>& n) {
        const int64_t sz = int64_t(n.value.size());
        if (n.parents[0]->requires_grad) detail::accum(*n.parents[0], n.grad.data(), sz);
        if (n.parents[1]->requires_grad) detail::accum(*n.parents[1], n.grad.data(), sz);
    });
}

template <class T>
TensorT<T> sub(TensorT<T> a, TensorT<T> b) {
    detail::check_same_shape(a.shape(), b.shape(), "sub");
    std::vector<T> v(a.data());
    for (int64_t i = 0; i < a.size(); ++i) v[size_t(i)] -= b.data()[size_t(i)];
    return TensorT<T>::op_result(a.shape(), std::move(v), {a, b}, [](Node<T>& n) {
        const int64_t sz = int64_t(n.value.size());
        if (n.parents[0]->requires_grad) detail::accum(*n.parents[0], n.grad.data(), sz);
        if (n.parents[1]->requires_grad) {
            auto& p = *n.parents[1];
            p.ensure_grad();
            for (int64_t i = 0; i < sz; ++i) p.grad[size_t(i)] -= n.grad[size_t(i)];
        }
    });
}

template <class T>
TensorT<T> mul(TensorT<T> a, TensorT<T> b) {
    detail::check_same_shape(a.shape(), b.shape(), "mul");
    std::vector<T> v(a.data());
    for (int64_t i = 0; i < a.size(); ++i) v[size_t(i)] *= b.data()[size_t(i)];
    return TensorT<T>::op_result(a.shape(), std::move(v), {a, b}, [](Node<T>& n) {
        const int64_t sz = int64_t(n.value.size());
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int64_t i = 0; i < sz; ++i)
                pa.grad[size_t(i)] += n.grad[size_t(i)] * pb.value[size_t(i)];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t i = 0; i < sz; ++i)
                pb.grad[size_t(i)] += n.grad[size_t(i)] * pa.value[size_t(i)];
        }
    });
}

template <class T>
TensorT<T> div(TensorT<T> a, TensorT<T> b) {
    detail::check_same_shape(a.shape(), b.shape(), "div");
    std::vector<T> v(a.data());
    for (int64_t i = 0; i < a.size(); ++i) v[size_t(i)] /= b.data()[size_t(i)];
    return TensorT<T>::op_result(a.shape(), std::move(v), {a, b}, [](Node<T>& n) {
        const int64_t sz = int64_t(n.value.size());
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (int64_t i = 0; i < sz; ++i)
                pa.grad[size_t(i)] += n.grad[size_t(i)] / pb.value[size_t(i)];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t i = 0; i < sz; ++i) {
                const T bi = pb.value[size_t(i)];
                pb.grad[size_t(i)] -= n.grad[size_t(i)] * pa.value[size_t(i)] / (bi * bi);
            }
        }
    });
}

template <class T>
TensorT<T> mul_scalar(TensorT<T> a, T c) {
    std::vector<T> v(a.data());
    for (auto& x : v) x *= c;
    return TensorT<T>::op_result(a.shape(), std::move(v), {a}, [c](Node<T>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += c * n.grad[i];
    });
}

template <class T>
TensorT<T> add_scalar(TensorT<T> a, T c) {
    std::vector<T> v(a.data());
    for (auto& x : v) x += c;
    return TensorT<T>::op_result(a.shape(), std::move(v), {a}, [](Node<T>& n) {
        if (n.parents[0]->requires_grad)
            detail::accum(*n.parents[0], n.grad.data(), int64_t(n.grad.size()));
    });
}

/// mat[N,D] + vec[D] broadcast over rows (bias add).
template <class T>
TensorT<T> add_rows(TensorT<T> mat, TensorT<T> vec) {
    check(mat.rank() == 2 && vec.rank() == 1 && mat.dim(1) == vec.dim(0),
          "add_rows: incompatible shapes " + shape_str(mat.shape()) + " vs " +
              shape_str(vec.shape()));
    const int64_t rows = mat.dim(0), d = mat.dim(1);
    std::vector<T> v(mat.data());
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < d; ++j) v[size_t(i * d + j)] += vec.data()[size_t(j)];
    return TensorT<T>::op_result(mat.shape(), std::move(v), {mat, vec}, [rows, d](Node<T>& n) {
        if (n.parents[0]->requires_grad)
            detail::accum(*n.parents[0], n.grad.data(), rows * d);
        if (n.parents[1]->requires_grad) {
            auto& p = *n.parents[1];
            p.ensure_grad();
            for (int64_t i = 0; i < rows; ++i)
                for (int64_t j = 0; j < d; ++j) p.grad[size_t(j)] += n.grad[size_t(i * d + j)];
        }
    });
}

template <class T>
TensorT<T> relu(TensorT<T> a) {
    std::vector<T> v(a.data());
    for (auto& x : v) x = x > T(0) ? x : T(0);
    return TensorT<T>::op_result(a.shape(), std::move(v), {a}, [](Node<T>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (p.value[i] > T(0)) p.grad[i] += n.grad[i];
    });
}

/// Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
template <class T>
TensorT<T> gelu(TensorT<T> a) {
    constexpr double inv_sqrt2 = 0.7071067811865475;
    std::vector<T> v(a.data());
    for (auto& x : v) x = T(0.5) * x * T(1.0 + std::erf(double(x) * inv_sqrt2));
    return TensorT<T>::op_result(a.shape(), std::move(v), {a}, [](Node<T>& n) {
        if (!n.parents[0]->requires_grad) return;
        constexpr double inv_sqrt2pi = 0.3989422804014327;
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            const double x = double(p.value[i]);
            const double d = 0.5 * (1.0 + std::erf(x * 0.7071067811865475)) +
                             x * inv_sqrt2pi * std::exp(-0.5 * x * x);
            p.grad[i] += n.grad[i] * T(d);
        }
    });
}

// ---- shape ops --------------------------------------------------------------

template <class T>
TensorT<T> reshape(TensorT<T> a, Shape shape) {
    check(numel(shape) == a.size(), "reshape: " + shape_str(a.shape()) + " to " +
                                        shape_str(shape) + " changes element count");
    std::vector<T> v(a.data());
    return TensorT<T>::op_result(std::move(shape), std::move(v), {a}, [](Node<T>& n) {
        if (n.parents[0]->requires_grad)
            detail::accum(*n.parents[0], n.grad.data(), int64_t(n.grad.size()));
    });
}

template <class T>
TensorT<T> transpose(TensorT<T> a) {
    check(a.rank() == 2, "transpose expects a matrix, got " + shape_str(a.shape()));
    const int64_t m = a.dim(0), n2 = a.dim(1);
    std::vector<T> v(size_t(m * n2));
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n2; ++j) v[size_t(j * m + i)] = a.data()[size_t(i * n2 + j)];
    return TensorT<T>::op_result({n2, m}, std::move(v), {a}, [m, n2](Node<T>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int64_t j = 0; j < n2; ++j)
            for (int64_t i = 0; i < m; ++i) p.grad[size_t(i * n2 + j)] += n.grad[size_t(j * m + i)];
    });
}

/// Axis permutation for tensors of rank <= 4.
template <class T>
TensorT<T> permute(TensorT<T> a, std::vector<int> axes) {
    const size_t r = a.rank();
    check(axes.size() == r && r <= 4, "permute: bad axes for " + shape_str(a.shape()));
    Shape out_shape(r);
    for (size_t i = 0; i < r; ++i) out_shape[i] = a.dim(size_t(axes[i]));
    const Shape in_strides = detail::strides_of(a.shape());
    const Shape out_strides = detail::strides_of(out_shape);
    const int64_t total = a.size();

    auto map_index = [r, axes, out_strides, in_strides](int64_t o) {
        int64_t rem = o, src = 0;
        for (size_t i = 0; i < r; ++i) {
            const int64_t c = rem / out_strides[i];
            rem -= c * out_strides[i];
            src += c * in_strides[size_t(axes[i])];
        }
        return src;
    };

    std::vector<T> v(static_cast<size_t>(total));
    const T* src = a.data().data();
    parallel_for(total, [&](int64_t b, int64_t e) {
        for (int64_t o = b; o < e; ++o) v[size_t(o)] = src[map_index(o)];
    });
    return TensorT<T>::op_result(std::move(out_shape), std::move(v), {a},
                                 [map_index, total](Node<T>& n) {
                                     if (!n.parents[0]->requires_grad) return;
                                     auto& p = *n.parents[0];
                                     p.ensure_grad();
                                     for (int64_t o = 0; o < total; ++o)
                                         p.grad[size_t(map_index(o))] += n.grad[size_t(o)];
                                 });
}

/// Slice of length `len` starting at `start` along `axis`.
template <class T>
TensorT<T> narrow(TensorT<T> a, int axis, int64_t start, int64_t len) {
    check(axis >= 0 && size_t(axis) < a.rank() && start >= 0 && len > 0 &&
              start + len <= a.dim(size_t(axis)),
          "narrow: invalid slice on " + shape_str(a.shape()));
    Shape out_shape = a.shape();
    out_shape[size_t(axis)] = len;
    const Shape in_strides = detail::strides_of(a.shape());
    int64_t outer = 1;
    for (int i = 0; i < axis; ++i) outer *= a.dim(size_t(i));
    const int64_t block = in_strides[size_t(axis)];
    const int64_t in_axis = a.dim(size_t(axis));

    std::vector<T> v(size_t(numel(out_shape)));
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(v.data() + o * len * block,
                    a.data().data() + (o * in_axis + start) * block,
                    size_t(len * block) * sizeof(T));
    return TensorT<T>::op_result(std::move(out_shape), std::move(v), {a},
                                 [outer, len, block, in_axis, start](Node<T>& n) {
                                     if (!n.parents[0]->requires_grad) return;
                                     auto& p = *n.parents[0];
                                     p.ensure_grad();
                                     for (int64_t o = 0; o < outer; ++o) {
                                         const T* g = n.grad.data() + o * len * block;
                                         T* dst = p.grad.data() + (o * in_axis + start) * block;
                                         for (int64_t i = 0; i < len * block; ++i) dst[i] += g[i];
                                     }
                                 });
}

template <class T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis) {
    check(!parts.empty(), "concat: no inputs");
    const size_t r = parts[0].rank();
    Shape out_shape = parts[0].shape();
    int64_t axis_total = 0;
    for (const auto& p : parts) {
        check(p.rank() == r, "concat: rank mismatch");
        for (size_t i = 0; i < r; ++i)
            check(int(i) == axis || p.dim(i) == out_shape[i],
                  "concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                      shape_str(out_shape));
        axis_total += p.dim(size_t(axis));
    }
    out_shape[size_t(axis)] = axis_total;

    const Shape strides = detail::strides_of(out_shape);
    const int64_t block = strides[size_t(axis)];
    int64_t outer = 1;
    for (int i = 0; i < axis; ++i) outer *= out_shape[size_t(i)];

    std::vector<T> v(size_t(numel(out_shape)));
    std::vector<int64_t> lens;
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t la = p.dim(size_t(axis));
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(v.data() + (o * axis_total + off) * block,
                        p.data().data() + o * la * block, size_t(la * block) * sizeof(T));
        lens.push_back(la);
        off += la;
    }
    return TensorT<T>::op_result(
        std::move(out_shape), std::move(v), parts, [outer, block, axis_total, lens](Node<T>& n) {
            int64_t off2 = 0;
            for (size_t pi = 0; pi < n.parents.size(); ++pi) {
                auto& p = *n.parents[pi];
                const int64_t la = lens[pi];
                if (p.requires_grad) {
                    p.ensure_grad();
                    for (int64_t o = 0; o < outer; ++o) {
                        const T* g = n.grad.data() + (o * axis_total + off2) * block;
                        T* dst = p.grad.data() + o * la * block;
                        for (int64_t i = 0; i < la * block; ++i) dst[i] += g[i];
                    }
                }
                off2 += la;
            }
        });
}

/// Row gather (embedding lookup). Duplicate indices accumulate on backward.
template <class T>
TensorT<T> take_rows(TensorT<T> mat, std::vector<int64_t> idx) {
    check(mat.rank() == 2, "take_rows expects a matrix, got " + shape_str(mat.shape()));
    const int64_t rows = mat.dim(0), d = mat.dim(1);
    for (int64_t i : idx)
        check(i >= 0 && i < rows, "take_rows: index " + std::to_string(i) + " out of range");
    const int64_t out_rows = int64_t(idx.size());
    std::vector<T> v(idx.size() * size_t(d));
    for (size_t k = 0; k < idx.size(); ++k)
        std::memcpy(v.data() + k * size_t(d), mat.data().data() + size_t(idx[k]) * size_t(d),
                    size_t(d) * sizeof(T));
    return TensorT<T>::op_result({out_rows, d}, std::move(v), {mat},
                                 [idx = std::move(idx), d](Node<T>& n) {
                                     if (!n.parents[0]->requires_grad) return;
                                     auto& p = *n.parents[0];
                                     p.ensure_grad();
                                     for (size_t k = 0; k < idx.size(); ++k) {
                                         const T* g = n.grad.data() + k * size_t(d);
                                         T* dst = p.grad.data() + size_t(idx[k]) * size_t(d);
                                         for (int64_t j = 0; j < d; ++j) dst[size_t(j)] += g[size_t(j)];
                                     }
                                 });
}

// ---- matrix products --------------------------------------------------------

template <class T>
TensorT<T> matmul(TensorT<T> a, TensorT<T> b) {
    check(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
    const int64_t m = a.dim(0), k = a.dim(1), n2 = b.dim(1);
    std::vector<T> v(size_t(m * n2));
    gemm_nn(a.data().data(), b.data().data(), v.data(), m, k, n2, false);
    return TensorT<T>::op_result({m, n2}, std::move(v), {a, b}, [m, k, n2](Node<T>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            gemm_nt(n.grad.data(), pb.value.data(), pa.grad.data(), m, n2, k, true);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            gemm_tn(pa.value.data(), n.grad.data(), pb.grad.data(), m, k, n2, true);
        }
    });
}

/// Batched matmul: [B,m,k] x [B,k,n] -> [B,m,n].
template <class T>
TensorT<T> bmm(TensorT<T> a, TensorT<T> b) {
    check(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
          "bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const int64_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n2 = b.dim(2);
    std::vector<T> v(size_t(bs * m * n2));
    {
        const T* pa = a.data().data();
        const T* pb = b.data().data();
        T* pc = v.data();
        parallel_for(bs, [=](int64_t b0, int64_t b1) {
            for (int64_t i = b0; i < b1; ++i)
                gemm_nn(pa + i * m * k, pb + i * k * n2, pc + i * m * n2, m, k, n2, false);
        });
    }
    return TensorT<T>::op_result({bs, m, n2}, std::move(v), {a, b}, [bs, m, k, n2](Node<T>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        const T* g = n.grad.data();
        parallel_for(bs, [&, g](int64_t b0, int64_t b1) {
            for (int64_t i = b0; i < b1; ++i) {
                if (pa.requires_grad)
                    gemm_nt(g + i * m * n2, pb.value.data() + i * k * n2,
                            pa.grad.data() + i * m * k, m, n2, k, true);
                if (pb.requires_grad)
                    gemm_tn(pa.value.data() + i * m * k, g + i * m * n2,
                            pb.grad.data() + i * k * n2, m, k, n2, true);
            }
        });
    });
}

// ---- normalization & softmax -------------------------------------------------

/// Softmax over the last axis, max-subtracted for stability.
template <class T>
TensorT<T> softmax_last(TensorT<T> a) {
    check(a.rank() >= 1, "softmax_last: scalar input");
    const int64_t d = a.dim(a.rank() - 1);
    const int64_t rows = a.size() / d;
    std::vector<T> v(a.data());
    parallel_for(rows, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            T* row = v.data() + r * d;
            T mx = row[0];
            for (int64_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
            T sum = T(0);
            for (int64_t j = 0; j < d; ++j) sum += row[j] = std::exp(row[j] - mx);
            const T inv = T(1) / sum;
            for (int64_t j = 0; j < d; ++j) row[j] *= inv;
        }
    });
    return TensorT<T>::op_result(a.shape(), std::move(v), {a}, [rows, d](Node<T>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& p = *n.parents[0];
        p.ensure_grad();
        parallel_for(rows, [&](int64_t r0, int64_t r1) {
            for (int64_t r = r0; r < r1; ++r) {
                const T* y = n.value.data() + r * d;
                const T* gy = n.grad.data() + r * d;
                T* gx = p.grad.data() + r * d;
                T dot = T(0);
                for (int64_t j = 0; j < d; ++j) dot += y[j] * gy[j];
                for (int64_t j = 0; j < d; ++j) gx[j] += y[j] * (gy[j] - dot);
            }
        });
    });
}

/// Layer norm over the last axis with affine gain/bias.
template <class T>
TensorT<T> layer_norm(TensorT<T> x, TensorT<T> gain, TensorT<T> bias, T eps) {
    check(x.rank() >= 1, "layer_norm: scalar input");
    const int64_t d = x.dim(x.rank() - 1);
    check(gain.rank() == 1 && gain.dim(0) == d && bias.rank() == 1 && bias.dim(0) == d,
          "layer_norm: gain/bias must be length " + std::to_string(d));
    check(eps > T(0), "layer_norm: eps must be positive");
    const int64_t rows = x.size() / d;
    std::vector<T> v(size_t(x.size()));
    const T* px = x.data().data();
    const T* pg = gain.data().data();
    const T* pb = bias.data().data();
    parallel_for(rows, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            const T* row = px + r * d;
            T* out = v.data() + r * d;
            T mean = T(0);
            for (int64_t j = 0; j < d; ++j) mean += row[j];
            mean /= T(d);
            T var = T(0);
            for (int64_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
            var /= T(d);
            const T inv = T(1) / std::sqrt(var + eps);
            for (int64_t j = 0; j < d; ++j) out[j] = (row[j] - mean) * inv * pg[j] + pb[j];
        }
    });
    return TensorT<T>::op_result(x.shape(), std::move(v), {x, gain, bias}, [rows, d, eps](Node<T>& n) {
        auto& px2 = *n.parents[0];
        auto& pg2 = *n.parents[1];
        auto& pb2 = *n.parents[2];
        if (px2.requires_grad) px2.ensure_grad();
        if (pg2.requires_grad) pg2.ensure_grad();
        if (pb2.requires_grad) pb2.ensure_grad();
        std::vector<T> dgain(size_t(d), T(0)), dbias(size_t(d), T(0));
        for (int64_t r = 0; r < rows; ++r) {
            const T* row = px2.value.data() + r * d;
            const T* gy = n.grad.data() + r * d;
            T mean = T(0);
            for (int64_t j = 0; j < d; ++j) mean += row[j];
            mean /= T(d);
            T var = T(0);
            for (int64_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
            var /= T(d);
            const T inv = T(1) / std::sqrt(var + eps);
            T m1 = T(0), m2 = T(0);
            for (int64_t j = 0; j < d; ++j) {
                const T xh = (row[j] - mean) * inv;
                const T dxh = gy[j] * pg2.value[size_t(j)];
                m1 += dxh;
                m2 += dxh * xh;
                dgain[size_t(j)] += gy[j] * xh;
                dbias[size_t(j)] += gy[j];
            }
            m1 /= T(d);
            m2 /= T(d);
            if (px2.requires_grad) {
                T* gx = px2.grad.data() + r * d;
                for (int64_t j = 0; j < d; ++j) {
                    const T xh = (row[j] - mean) * inv;
                    gx[j] += (gy[j] * pg2.value[size_t(j)] - m1 - xh * m2) * inv;
                }
            }
        }
        if (pg2.requires_grad)
            for (int64_t j = 0; j < d; ++j) pg2.grad[size_t(j)] += dgain[size_t(j)];
        if (pb2.requires_grad)
            for (int64_t j = 0; j < d; ++j) pb2.grad[size_t(j)] += dbias[size_t(j)];
    });
}

/// Rows scaled to unit L2 norm; rows with norm below eps are scaled by 1/eps.
template <class T>
TensorT<T> l2_normalize_rows(TensorT<T> x, T eps = T(1e-12)) {
    check(x.rank() == 2, "l2_normalize_rows expects a matrix, got " + shape_str(x.shape()));
    const int64_t rows = x.dim(0), d = x.dim(1);
    std::vector<T> v(x.data());
    for (int64_t r = 0; r < rows; ++r) {
        T* row = v.data() + r * d;
        T nrm = T(0);
        for (int64_t j = 0; j < d; ++j) nrm += row[j] * row[j];
        nrm = std::max(std::sqrt(nrm), eps);
        const T inv = T(1) / nrm;
        for (int64_t j = 0; j < d; ++j) row[j] *= inv;
    }
    return TensorT<T>::op_result(x.shape(), std::move(v), {x}, [rows, d, eps](Node<T>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const T* xr = p.value.data() + r * d;
            const T* y = n.value.data() + r * d;
            const T* gy = n.grad.data() + r * d;
            T* gx = p.grad.data() + r * d;
            T nrm = T(0);
            for (int64_t j = 0; j < d; ++j) nrm += xr[j] * xr[j];
            nrm = std::max(std::sqrt(nrm), eps);
            T dot = T(0);
            for (int64_t j = 0; j < d; ++j) dot += gy[j] * y[j];
            for (int64_t j = 0; j < d; ++j) gx[j] += (gy[j] - y[j] * dot) / nrm;
        }
    });
}

/// Per-row log(sum(exp(x))) restricted to entries with mask != 0.
/// Rows whose mask is empty are a contract violation.
template <class T>
TensorT<T> masked_row_logsumexp(TensorT<T> x, const std::vector<uint8_t>& mask) {
    check(x.rank() == 2, "masked_row_logsumexp expects a matrix");
    const int64_t rows = x.dim(0), d = x.dim(1);
    check(int64_t(mask.size()) == rows * d, "masked_row_logsumexp: mask size mismatch");
    std::vector<T> v(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const T* row = x.data().data() + r * d;
        const uint8_t* m = mask.data() + r * d;
        T mx = -std::numeric_limits<T>::infinity();
        int64_t active = 0;
        for (int64_t j = 0; j < d; ++j)
            if (m[j]) {
                mx = std::max(mx, row[j]);
                ++active;
            }
        check(active > 0, "masked_row_logsumexp: row " + std::to_string(r) + " has empty mask");
        T sum = T(0);
        for (int64_t j = 0; j < d; ++j)
            if (m[j]) sum += std::exp(row[j] - mx);
        v[size_t(r)] = mx + std::log(sum);
    }
    return TensorT<T>::op_result({rows}, std::move(v), {x}, [rows, d, mask](Node<T>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const T lse = n.value[size_t(r)];
            const T g = n.grad[size_t(r)];
            const T* row = p.value.data() + r * d;
            const uint8_t* m = mask.data() + r * d;
            T* gx = p.grad.data() + r * d;
            for (int64_t j = 0; j < d; ++j)
                if (m[j]) gx[j] += g * std::exp(row[j] - lse);
        }
    });
}

// ---- reductions --------------------------------------------------------------

template <class T>
TensorT<T> sum_all(TensorT<T> a) {
    T s = T(0);
    for (T x : a.data()) s += x;
    return TensorT<T>::op_result({}, {s}, {a}, [](Node<T>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& p = *n.parents[0];
        p.ensure_grad();
        const T g = n.grad[0];
        for (auto& x : p.grad) x += g;
    });
}

template <class T>
TensorT<T> mean_all(TensorT<T> a) {
    check(a.size() > 0, "mean_all: empty tensor");
    T s = T(0);
    for (T x : a.data()) s += x;
    const T invn = T(1) / T(a.size());
    return TensorT<T>::op_result({}, {s * invn}, {a}, [invn](Node<T>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& p = *n.parents[0];
        p.ensure_grad();
        const T g = n.grad[0] * invn;
        for (auto& x : p.grad) x += g;
    });
}

/// Mean over the last axis: [..., D] -> [...].
template <class T>
TensorT<T> mean_last(TensorT<T> a) {
    check(a.rank() >= 1, "mean_last: scalar input");
    const int64_t d = a.dim(a.rank() - 1);
    const int64_t rows = a.size() / d;
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    std::vector<T> v(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        T s = T(0);
        const T* row = a.data().data() + r * d;
        for (int64_t j = 0; j < d; ++j) s += row[j];
        v[size_t(r)] = s / T(d);
    }
    return TensorT<T>::op_result(std::move(out_shape), std::move(v), {a}, [rows, d](Node<T>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const T g = n.grad[size_t(r)] / T(d);
            T* gx = p.grad.data() + r * d;
            for (int64_t j = 0; j < d; ++j) gx[j] += g;
        }
    });
}

// ---- losses -------------------------------------------------------------------

/// Mean squared error between two same-shape tensors.
template <class T>
TensorT<T> mse(TensorT<T> a, TensorT<T> b) {
    auto d = sub(a, b);
    return mean_all(mul(d, d));
}

/// Numerically stable mean binary cross-entropy on raw logits.
/// targets is a plain vector in [0,1]; gradients flow to logits only.
template <class T>
TensorT<T> bce_with_logits(TensorT<T> logits, std::vector<T> targets) {
    check(logits.size() == int64_t(targets.size()),
          "bce_with_logits: logits " + shape_str(logits.shape()) + " vs " +
              std::to_string(targets.size()) + " targets");
    const int64_t n2 = logits.size();
    double acc = 0;
    for (int64_t i = 0; i < n2; ++i) {
        const double z = double(logits.data()[size_t(i)]);
        const double y = double(targets[size_t(i)]);
        acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
    }
    return TensorT<T>::op_result({}, {T(acc / double(n2))}, {logits},
                                 [targets = std::move(targets), n2](Node<T>& n) {
                                     if (!n.parents[0]->requires_grad) return;
                                     auto& p = *n.parents[0];
                                     p.ensure_grad();
                                     const T g = n.grad[0] / T(n2);
                                     for (int64_t i = 0; i < n2; ++i) {
                                         const double z = double(p.value[size_t(i)]);
                                         const double s = 1.0 / (1.0 + std::exp(-z));
                                         p.grad[size_t(i)] += g * T(s - double(targets[size_t(i)]));
                                     }
                                 });
}

// ---- convolution ---------------------------------------------------------------

namespace detail {

template <class T>
void im2col(const T* x, int64_t ci, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t ho, int64_t wo, T* col) {
    // col is [ci*kh*kw, ho*wo]
    for (int64_t c = 0; c < ci; ++c)
        for (int64_t u = 0; u < kh; ++u)
            for (int64_t v2 = 0; v2 < kw; ++v2) {
                T* dst = col + ((c * kh + u) * kw + v2) * ho * wo;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t iy = oy * stride + u - pad;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t ix = ox * stride + v2 - pad;
                        dst[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                                ? x[(c * h + iy) * w + ix]
                                                : T(0);
                    }
                }
            }
}

template <class T>
void col2im_add(const T* col, int64_t ci, int64_t h, int64_t w, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t ho, int64_t wo, T* x) {
    for (int64_t c = 0; c < ci; ++c)
        for (int64_t u = 0; u < kh; ++u)
            for (int64_t v2 = 0; v2 < kw; ++v2) {
                const T* src = col + ((c * kh + u) * kw + v2) * ho * wo;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t iy = oy * stride + u - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t ix = ox * stride + v2 - pad;
                        if (ix >= 0 && ix < w) x[(c * h + iy) * w + ix] += src[oy * wo + ox];
                    }
                }
            }
}

} // namespace detail

/// 2D cross-correlation: x[B,Ci,H,W] * w[Co,Ci,kh,kw] (+ bias[Co]) -> [B,Co,Ho,Wo].
template <class T>
TensorT<T> conv2d(TensorT<T> x, TensorT<T> w, TensorT<T> bias, int64_t stride, int64_t pad) {
    check(x.rank() == 4 && w.rank() == 4, "conv2d: x and kernels must be rank 4");
    check(stride >= 1 && pad >= 0, "conv2d: invalid stride/padding (stride=" +
                                       std::to_string(stride) + ", pad=" + std::to_string(pad) + ")");
    const int64_t b = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    check(w.dim(1) == ci, "conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                              shape_str(w.shape()));
    check(kh <= h + 2 * pad && kw <= wd + 2 * pad,
          "conv2d: kernel larger than padded input");
    check(bias.rank() == 1 && bias.dim(0) == co, "conv2d: bias must be length " + std::to_string(co));
    const int64_t ho = (h + 2 * pad - kh) / stride + 1;
    const int64_t wo = (wd + 2 * pad - kw) / stride + 1;
    const int64_t rr = ci * kh * kw, ss = ho * wo;

    std::vector<T> v(size_t(b * co * ss));
    {
        const T* px = x.data().data();
        const T* pw = w.data().data();
        const T* pbias = bias.data().data();
        T* pv = v.data();
        parallel_for(b, [=](int64_t b0, int64_t b1) {
            std::vector<T> col(size_t(rr * ss));
            for (int64_t i = b0; i < b1; ++i) {
                detail::im2col(px + i * ci * h * wd, ci, h, wd, kh, kw, stride, pad, ho, wo,
                               col.data());
                T* out = pv + i * co * ss;
                gemm_nn(pw, col.data(), out, co, rr, ss, false);
                for (int64_t c = 0; c < co; ++c)
                    for (int64_t s = 0; s < ss; ++s) out[c * ss + s] += pbias[c];
            }
        });
    }
    return TensorT<T>::op_result(
        {b, co, ho, wo}, std::move(v), {x, w, bias},
        [b, ci, h, wd, co, kh, kw, stride, pad, ho, wo, rr, ss](Node<T>& n) {
            auto& px = *n.parents[0];
            auto& pw = *n.parents[1];
            auto& pbias = *n.parents[2];
            const T* g = n.grad.data();
            if (pbias.requires_grad) {
                pbias.ensure_grad();
                for (int64_t i = 0; i < b; ++i)
                    for (int64_t c = 0; c < co; ++c) {
                        T acc = T(0);
                        const T* row = g + (i * co + c) * ss;
                        for (int64_t s = 0; s < ss; ++s) acc += row[s];
                        pbias.grad[size_t(c)] += acc;
                    }
            }
            if (pw.requires_grad) {
                pw.ensure_grad();
                std::vector<T> col(size_t(rr * ss));
                for (int64_t i = 0; i < b; ++i) { // batch-serial so dW accumulation is ordered
                    detail::im2col(px.value.data() + i * ci * h * wd, ci, h, wd, kh, kw, stride,
                                   pad, ho, wo, col.data());
                    gemm_nt(g + i * co * ss, col.data(), pw.grad.data(), co, ss, rr, true);
                }
            }
            if (px.requires_grad) {
                px.ensure_grad();
                parallel_for(b, [&, g](int64_t b0, int64_t b1) {
                    std::vector<T> dcol(size_t(rr * ss));
                    for (int64_t i = b0; i < b1; ++i) {
                        gemm_tn(pw.value.data(), g + i * co * ss, dcol.data(), co, rr, ss, false);
                        detail::col2im_add(dcol.data(), ci, h, wd, kh, kw, stride, pad, ho, wo,
                                           px.grad.data() + i * ci * h * wd);
                    }
                });
            }
        });
}

// ---- misc helpers ---------------------------------------------------------------

/// Cosine similarity matrix between rows of a and rows of b.
template <class T>
TensorT<T> cosine_sim_matrix(TensorT<T> a, TensorT<T> b) {
    return matmul(l2_normalize_rows(a), transpose(l2_normalize_rows(b)));
}

template <class T>
bool all_finite(const TensorT<T>& t) {
    for (T x : t.data())
        if (!std::isfinite(double(x))) return false;
    return true;
}

} // namespace chamber::nn
