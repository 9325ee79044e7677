#pragma once

// Reverse-mode autodiff on a flat tape.  Every op appends one node holding
// the forward value, a gradient buffer and a backward closure; backward()
// walks the tape in reverse creation order, which is already a valid
// topological order because ops can only consume earlier nodes.
//
// GEMM-bound ops (matmul, conv via im2col, attention) go through Eigen.

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "crsdiff/core/common.hpp"
#include "crsdiff/core/tensor.hpp"

namespace crsdiff {

template <typename T>
struct Param {
    Tensor<T> value;
    Tensor<T> grad;

    Param() = default;
    explicit Param(Tensor<T> v) : value(std::move(v)), grad(Tensor<T>::zeros(value.shape)) {}

    void zero_grad() { grad.fill(T(0)); }
    int64_t numel() const { return value.numel(); }
};

template <typename T>
class Tape;

template <typename T>
struct Val {
    Tape<T>* tape = nullptr;
    int i = -1;
    bool valid() const { return tape != nullptr && i >= 0; }
};

template <typename T>
class Tape {
public:
    using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MapM = Eigen::Map<EMat>;
    using CMapM = Eigen::Map<const EMat>;

    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        std::function<void(Tape&)> back;  // null for plain inputs
    };

    std::vector<Node> nodes;

    const Tensor<T>& val(Val<T> v) const { return nodes[v.i].val; }
    Tensor<T>& grad(Val<T> v) { return nodes[v.i].grad; }

    // ---- leaves ----------------------------------------------------------

    Val<T> input(Tensor<T> t) { return push(std::move(t), nullptr); }

    // ---- graph mechanics -------------------------------------------------

    void backward(Val<T> loss) {
        require<InputError>(nodes[loss.i].val.numel() == 1, "backward: loss must be scalar");
        nodes[loss.i].grad.fill(T(1));
        for (int i = loss.i; i >= 0; --i)
            if (nodes[i].back) nodes[i].back(*this);
    }

    // ---- elementwise -----------------------------------------------------

    Val<T> add(Val<T> a, Val<T> b) {
        const auto &ta = v_(a), &tb = v_(b);
        require<InputError>(ta.same_shape(tb), "add: shape mismatch");
        Tensor<T> out = ta;
        for (int64_t i = 0; i < out.numel(); ++i) out[i] += tb[i];
        return push(std::move(out), [a, b](Tape& tp) {
            auto& g = tp.g_cur();
            tp.accum(a, g);
            tp.accum(b, g);
        });
    }

    Val<T> sub(Val<T> a, Val<T> b) {
        const auto &ta = v_(a), &tb = v_(b);
        require<InputError>(ta.same_shape(tb), "sub: shape mismatch");
        Tensor<T> out = ta;
        for (int64_t i = 0; i < out.numel(); ++i) out[i] -= tb[i];
        return push(std::move(out), [a, b](Tape& tp) {
            auto& g = tp.g_cur();
            tp.accum(a, g);
            auto& gb = tp.nodes[b.i].grad;
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        });
    }

    Val<T> mul(Val<T> a, Val<T> b) {
        const auto &ta = v_(a), &tb = v_(b);
        require<InputError>(ta.same_shape(tb), "mul: shape mismatch");
        Tensor<T> out = ta;
        for (int64_t i = 0; i < out.numel(); ++i) out[i] *= tb[i];
        return push(std::move(out), [a, b](Tape& tp) {
            auto& g = tp.g_cur();
            const auto &ta2 = tp.nodes[a.i].val, &tb2 = tp.nodes[b.i].val;
            auto &ga = tp.nodes[a.i].grad, &gb = tp.nodes[b.i].grad;
            for (int64_t i = 0; i < g.numel(); ++i) {
                ga[i] += g[i] * tb2[i];
                gb[i] += g[i] * ta2[i];
            }
        });
    }

    Val<T> scale(Val<T> a, T s) {
        Tensor<T> out = v_(a);
        for (auto& x : out.v) x *= s;
        return push(std::move(out), [a, s](Tape& tp) {
            auto& g = tp.g_cur();
            auto& ga = tp.nodes[a.i].grad;
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * s;
        });
    }

    // x scaled by a 1-element node (e.g. a learnable temperature).
    Val<T> scale_by(Val<T> x, Val<T> s) {
        require<InputError>(v_(s).numel() == 1, "scale_by: scalar node required");
        T sv = v_(s)[0];
        Tensor<T> out = v_(x);
        for (auto& e : out.v) e *= sv;
        return push(std::move(out), [x, s, sv](Tape& tp) {
            auto& g = tp.g_cur();
            const auto& xv = tp.nodes[x.i].val;
            auto& gx = tp.nodes[x.i].grad;
            double acc = 0;
            for (int64_t i = 0; i < g.numel(); ++i) {
                gx[i] += g[i] * sv;
                acc += static_cast<double>(g[i]) * xv[i];
            }
            tp.nodes[s.i].grad[0] += static_cast<T>(acc);
        });
    }

    Val<T> add_const(Val<T> a, T c) {
        Tensor<T> out = v_(a);
        for (auto& x : out.v) x += c;
        return push(std::move(out), [a](Tape& tp) { tp.accum(a, tp.g_cur()); });
    }

    Val<T> silu(Val<T> a) {
        Tensor<T> out = v_(a);
        for (auto& x : out.v) x = x / (T(1) + std::exp(-x));
        return push(std::move(out), [a](Tape& tp) {
            auto& g = tp.g_cur();
            const auto& x = tp.nodes[a.i].val;
            auto& ga = tp.nodes[a.i].grad;
            for (int64_t i = 0; i < g.numel(); ++i) {
                T s = T(1) / (T(1) + std::exp(-x[i]));
                ga[i] += g[i] * s * (T(1) + x[i] * (T(1) - s));
            }
        });
    }

    Val<T> relu(Val<T> a) {
        Tensor<T> out = v_(a);
        for (auto& x : out.v) x = x > T(0) ? x : T(0);
        return push(std::move(out), [a](Tape& tp) {
            auto& g = tp.g_cur();
            const auto& x = tp.nodes[a.i].val;
            auto& ga = tp.nodes[a.i].grad;
            for (int64_t i = 0; i < g.numel(); ++i)
                if (x[i] > T(0)) ga[i] += g[i];
        });
    }

    Val<T> sigmoid(Val<T> a) {
        Tensor<T> out = v_(a);
        for (auto& x : out.v) x = T(1) / (T(1) + std::exp(-x));
        return push(std::move(out), [a, self = nodes.size()](Tape& tp) {
            auto& g = tp.g_cur();
            const auto& y = tp.nodes[self].val;
            auto& ga = tp.nodes[a.i].grad;
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
        });
    }

    Val<T> tanh_(Val<T> a) {
        Tensor<T> out = v_(a);
        for (auto& x : out.v) x = std::tanh(x);
        return push(std::move(out), [a, self = nodes.size()](Tape& tp) {
            auto& g = tp.g_cur();
            const auto& y = tp.nodes[self].val;
            auto& ga = tp.nodes[a.i].grad;
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
        });
    }

    Val<T> exp_(Val<T> a) {
        Tensor<T> out = v_(a);
        for (auto& x : out.v) x = std::exp(x);
        return push(std::move(out), [a, self = nodes.size()](Tape& tp) {
            auto& g = tp.g_cur();
            const auto& y = tp.nodes[self].val;
            auto& ga = tp.nodes[a.i].grad;
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i];
        });
    }

    // ---- shape ops -------------------------------------------------------

    Val<T> reshape(Val<T> a, std::vector<int> s) {
        Tensor<T> out = v_(a).reshaped(std::move(s));
        return push(std::move(out), [a](Tape& tp) {
            auto& g = tp.g_cur();
            auto& ga = tp.nodes[a.i].grad;
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        });
    }

    // Concatenate along `axis`; all other dims must match.
    Val<T> concat(const std::vector<Val<T>>& parts, int axis) {
        require<InputError>(!parts.empty(), "concat: no parts");
        auto base = v_(parts[0]).shape;
        int rank = static_cast<int>(base.size());
        require<InputError>(axis >= 0 && axis < rank, "concat: bad axis");
        int64_t outer = 1, inner = 1;
        for (int d = 0; d < axis; ++d) outer *= base[d];
        for (int d = axis + 1; d < rank; ++d) inner *= base[d];
        int total = 0;
        std::vector<int> widths;
        for (auto p : parts) {
            const auto& s = v_(p).shape;
            for (int d = 0; d < rank; ++d)
                if (d != axis)
                    require<InputError>(s[d] == base[d], "concat: shape mismatch off-axis");
            widths.push_back(s[axis]);
            total += s[axis];
        }
        auto shape = base;
        shape[axis] = total;
        Tensor<T> out(shape);
        int64_t off = 0;
        for (size_t pi = 0; pi < parts.size(); ++pi) {
            const auto& src = v_(parts[pi]);
            int64_t w = static_cast<int64_t>(widths[pi]) * inner;
            for (int64_t o = 0; o < outer; ++o)
                std::copy(src.v.begin() + o * w, src.v.begin() + (o + 1) * w,
                          out.v.begin() + o * total * inner + off);
            off += w;
        }
        auto parts_c = parts;
        return push(std::move(out), [parts_c, widths, outer, inner, total](Tape& tp) {
            auto& g = tp.g_cur();
            int64_t off2 = 0;
            for (size_t pi = 0; pi < parts_c.size(); ++pi) {
                auto& gp = tp.nodes[parts_c[pi].i].grad;
                int64_t w = static_cast<int64_t>(widths[pi]) * inner;
                for (int64_t o = 0; o < outer; ++o) {
                    const T* src = g.data() + o * total * inner + off2;
                    T* dst = gp.data() + o * w;
                    for (int64_t i = 0; i < w; ++i) dst[i] += src[i];
                }
                off2 += w;
            }
        });
    }

    Val<T> slice(Val<T> a, int axis, int start, int len) {
        const auto& ta = v_(a);
        int rank = ta.rank();
        require<InputError>(axis >= 0 && axis < rank, "slice: bad axis");
        require<InputError>(start >= 0 && start + len <= ta.shape[axis], "slice: out of range");
        int64_t outer = 1, inner = 1;
        for (int d = 0; d < axis; ++d) outer *= ta.shape[d];
        for (int d = axis + 1; d < rank; ++d) inner *= ta.shape[d];
        auto shape = ta.shape;
        shape[axis] = len;
        Tensor<T> out(shape);
        int64_t full = static_cast<int64_t>(ta.shape[axis]) * inner;
        int64_t w = static_cast<int64_t>(len) * inner;
        for (int64_t o = 0; o < outer; ++o)
            std::copy(ta.v.begin() + o * full + start * inner,
                      ta.v.begin() + o * full + start * inner + w, out.v.begin() + o * w);
        return push(std::move(out), [a, outer, inner, full, w, start](Tape& tp) {
            auto& g = tp.g_cur();
            auto& ga = tp.nodes[a.i].grad;
            for (int64_t o = 0; o < outer; ++o) {
                const T* src = g.data() + o * w;
                T* dst = ga.data() + o * full + start * inner;
                for (int64_t i = 0; i < w; ++i) dst[i] += src[i];
            }
        });
    }

    // ---- linear algebra ---------------------------------------------------

    Val<T> matmul(Val<T> a, Val<T> b) {
        const auto &ta = v_(a), &tb = v_(b);
        require<InputError>(ta.rank() == 2 && tb.rank() == 2 && ta.shape[1] == tb.shape[0],
                            "matmul: bad shapes");
        int m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
        Tensor<T> out({m, n});
        MapM(out.data(), m, n).noalias() = CMapM(ta.data(), m, k) * CMapM(tb.data(), k, n);
        return push(std::move(out), [a, b, m, k, n](Tape& tp) {
            auto& g = tp.g_cur();
            CMapM G(g.data(), m, n);
            CMapM A(tp.nodes[a.i].val.data(), m, k);
            CMapM B(tp.nodes[b.i].val.data(), k, n);
            MapM(tp.nodes[a.i].grad.data(), m, k).noalias() += G * B.transpose();
            MapM(tp.nodes[b.i].grad.data(), k, n).noalias() += A.transpose() * G;
        });
    }

    // x:[M,K] w:[K,N] b:[N] -> [M,N]
    Val<T> linear(Val<T> x, Val<T> w, Val<T> b) {
        const auto &tx = v_(x), &tw = v_(w), &tb = v_(b);
        require<InputError>(tx.rank() == 2 && tw.rank() == 2 && tx.shape[1] == tw.shape[0] &&
                                tb.numel() == tw.shape[1],
                            "linear: bad shapes");
        int m = tx.shape[0], k = tx.shape[1], n = tw.shape[1];
        Tensor<T> out({m, n});
        MapM O(out.data(), m, n);
        O.noalias() = CMapM(tx.data(), m, k) * CMapM(tw.data(), k, n);
        O.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(tb.data(), n);
        return push(std::move(out), [x, w, b, m, k, n](Tape& tp) {
            auto& g = tp.g_cur();
            CMapM G(g.data(), m, n);
            CMapM X(tp.nodes[x.i].val.data(), m, k);
            CMapM W(tp.nodes[w.i].val.data(), k, n);
            MapM(tp.nodes[x.i].grad.data(), m, k).noalias() += G * W.transpose();
            MapM(tp.nodes[w.i].grad.data(), k, n).noalias() += X.transpose() * G;
            Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(tp.nodes[b.i].grad.data(), n) +=
                G.colwise().sum();
        });
    }

    // a:[B,M,K] b:[B,K,N] -> [B,M,N]
    Val<T> bmm(Val<T> a, Val<T> b) {
        const auto &ta = v_(a), &tb = v_(b);
        require<InputError>(ta.rank() == 3 && tb.rank() == 3 && ta.shape[0] == tb.shape[0] &&
                                ta.shape[2] == tb.shape[1],
                            "bmm: bad shapes");
        int B = ta.shape[0], m = ta.shape[1], k = ta.shape[2], n = tb.shape[2];
        Tensor<T> out({B, m, n});
        for (int s = 0; s < B; ++s)
            MapM(out.data() + static_cast<int64_t>(s) * m * n, m, n).noalias() =
                CMapM(ta.data() + static_cast<int64_t>(s) * m * k, m, k) *
                CMapM(tb.data() + static_cast<int64_t>(s) * k * n, k, n);
        return push(std::move(out), [a, b, B, m, k, n](Tape& tp) {
            auto& g = tp.g_cur();
            for (int s = 0; s < B; ++s) {
                CMapM G(g.data() + static_cast<int64_t>(s) * m * n, m, n);
                CMapM A(tp.nodes[a.i].val.data() + static_cast<int64_t>(s) * m * k, m, k);
                CMapM Bm(tp.nodes[b.i].val.data() + static_cast<int64_t>(s) * k * n, k, n);
                MapM(tp.nodes[a.i].grad.data() + static_cast<int64_t>(s) * m * k, m, k)
                    .noalias() += G * Bm.transpose();
                MapM(tp.nodes[b.i].grad.data() + static_cast<int64_t>(s) * k * n, k, n)
                    .noalias() += A.transpose() * G;
            }
        });
    }

    // a:[B,M,K] b:[B,N,K] -> [B,M,N]  (a @ b^T per batch)
    Val<T> bmm_nt(Val<T> a, Val<T> b) {
        const auto &ta = v_(a), &tb = v_(b);
        require<InputError>(ta.rank() == 3 && tb.rank() == 3 && ta.shape[0] == tb.shape[0] &&
                                ta.shape[2] == tb.shape[2],
                            "bmm_nt: bad shapes");
        int B = ta.shape[0], m = ta.shape[1], k = ta.shape[2], n = tb.shape[1];
        Tensor<T> out({B, m, n});
        for (int s = 0; s < B; ++s)
            MapM(out.data() + static_cast<int64_t>(s) * m * n, m, n).noalias() =
                CMapM(ta.data() + static_cast<int64_t>(s) * m * k, m, k) *
                CMapM(tb.data() + static_cast<int64_t>(s) * n * k, n, k).transpose();
        return push(std::move(out), [a, b, B, m, k, n](Tape& tp) {
            auto& g = tp.g_cur();
            for (int s = 0; s < B; ++s) {
                CMapM G(g.data() + static_cast<int64_t>(s) * m * n, m, n);
                CMapM A(tp.nodes[a.i].val.data() + static_cast<int64_t>(s) * m * k, m, k);
                CMapM Bm(tp.nodes[b.i].val.data() + static_cast<int64_t>(s) * n * k, n, k);
                MapM(tp.nodes[a.i].grad.data() + static_cast<int64_t>(s) * m * k, m, k)
                    .noalias() += G * Bm;
                MapM(tp.nodes[b.i].grad.data() + static_cast<int64_t>(s) * n * k, n, k)
                    .noalias() += G.transpose() * A;
            }
        });
    }

    // [N,C,H,W] -> [N,H*W,C] token layout for attention over pixels.
    Val<T> nchw_to_nlc(Val<T> x) {
        const auto& tx = v_(x);
        require<InputError>(tx.rank() == 4, "nchw_to_nlc: rank 4 required");
        int N = tx.shape[0], C = tx.shape[1];
        int64_t HW = static_cast<int64_t>(tx.shape[2]) * tx.shape[3];
        Tensor<T> out({N, static_cast<int>(HW), C});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const T* src = tx.data() + (static_cast<int64_t>(n) * C + c) * HW;
                T* dst = out.data() + static_cast<int64_t>(n) * HW * C + c;
                for (int64_t i = 0; i < HW; ++i) dst[i * C] = src[i];
            }
        return push(std::move(out), [x, N, C, HW](Tape& tp) {
            auto& g = tp.g_cur();
            auto& gx = tp.nodes[x.i].grad;
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const T* src = g.data() + static_cast<int64_t>(n) * HW * C + c;
                    T* dst = gx.data() + (static_cast<int64_t>(n) * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) dst[i] += src[i * C];
                }
        });
    }

    // [N,L,C] -> [N,C,H,W] with L == H*W.
    Val<T> nlc_to_nchw(Val<T> x, int H, int W) {
        const auto& tx = v_(x);
        require<InputError>(tx.rank() == 3 && tx.shape[1] == H * W, "nlc_to_nchw: bad shapes");
        int N = tx.shape[0], C = tx.shape[2];
        int64_t HW = static_cast<int64_t>(H) * W;
        Tensor<T> out({N, C, H, W});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const T* src = tx.data() + static_cast<int64_t>(n) * HW * C + c;
                T* dst = out.data() + (static_cast<int64_t>(n) * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) dst[i] = src[i * C];
            }
        return push(std::move(out), [x, N, C, HW](Tape& tp) {
            auto& g = tp.g_cur();
            auto& gx = tp.nodes[x.i].grad;
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const T* src = g.data() + (static_cast<int64_t>(n) * C + c) * HW;
                    T* dst = gx.data() + static_cast<int64_t>(n) * HW * C + c;
                    for (int64_t i = 0; i < HW; ++i) dst[i * C] += src[i];
                }
        });
    }

    Val<T> softmax_lastdim(Val<T> a) {
        const auto& ta = v_(a);
        int d = ta.shape.back();
        int64_t rows = ta.numel() / d;
        Tensor<T> out = ta;
        for (int64_t r = 0; r < rows; ++r) {
            T* p = out.data() + r * d;
            T mx = p[0];
            for (int i = 1; i < d; ++i) mx = std::max(mx, p[i]);
            T sum = T(0);
            for (int i = 0; i < d; ++i) {
                p[i] = std::exp(p[i] - mx);
                sum += p[i];
            }
            for (int i = 0; i < d; ++i) p[i] /= sum;
        }
        return push(std::move(out), [a, rows, d, self = nodes.size()](Tape& tp) {
            auto& g = tp.g_cur();
            const auto& y = tp.nodes[self].val;
            auto& ga = tp.nodes[a.i].grad;
            for (int64_t r = 0; r < rows; ++r) {
                const T* yp = y.data() + r * d;
                const T* gp = g.data() + r * d;
                T dot = T(0);
                for (int i = 0; i < d; ++i) dot += yp[i] * gp[i];
                T* gap = ga.data() + r * d;
                for (int i = 0; i < d; ++i) gap[i] += yp[i] * (gp[i] - dot);
            }
        });
    }

    // ---- convolution -----------------------------------------------------

    static void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad,
                       int oh, int ow, T* col) {
        // col layout: [oh*ow, C*kh*kw]
        int K = C * kh * kw;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                T* dst = col + (static_cast<int64_t>(oy) * ow + ox) * K;
                for (int c = 0; c < C; ++c) {
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = oy * stride - pad + ky;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ox * stride - pad + kx;
                            *dst++ = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                         ? x[(static_cast<int64_t>(c) * H + iy) * W + ix]
                                         : T(0);
                        }
                    }
                }
            }
        }
    }

    static void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int stride,
                           int pad, int oh, int ow, T* x) {
        int K = C * kh * kw;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const T* src = col + (static_cast<int64_t>(oy) * ow + ox) * K;
                for (int c = 0; c < C; ++c) {
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = oy * stride - pad + ky;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ox * stride - pad + kx;
                            if (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                x[(static_cast<int64_t>(c) * H + iy) * W + ix] += *src;
                            ++src;
                        }
                    }
                }
            }
        }
    }

    // x:[N,C,H,W] w:[Co,Ci,kh,kw] b:[Co]
    Val<T> conv2d(Val<T> x, Val<T> w, Val<T> b, int stride, int pad) {
        const auto &tx = v_(x), &tw = v_(w), &tb = v_(b);
        require<InputError>(tx.rank() == 4 && tw.rank() == 4 && tx.shape[1] == tw.shape[1],
                            "conv2d: bad shapes");
        require<InputError>(tb.numel() == tw.shape[0], "conv2d: bad bias");
        int N = tx.shape[0], C = tx.shape[1], H = tx.shape[2], W = tx.shape[3];
        int Co = tw.shape[0], kh = tw.shape[2], kw = tw.shape[3];
        int oh = (H + 2 * pad - kh) / stride + 1;
        int ow = (W + 2 * pad - kw) / stride + 1;
        require<InputError>(oh > 0 && ow > 0, "conv2d: empty output");
        int K = C * kh * kw;
        Tensor<T> out({N, Co, oh, ow});
        std::vector<T> col(static_cast<size_t>(oh) * ow * K);
        // weight as [Co, K] row-major view of w
        CMapM Wm(tw.data(), Co, K);
        for (int n = 0; n < N; ++n) {
            im2col(tx.data() + static_cast<int64_t>(n) * C * H * W, C, H, W, kh, kw, stride,
                   pad, oh, ow, col.data());
            // out_n^T view: [oh*ow, Co] = col [oh*ow,K] * Wm^T
            EMat o = CMapM(col.data(), oh * ow, K) * Wm.transpose();
            T* op = out.data() + static_cast<int64_t>(n) * Co * oh * ow;
            for (int c = 0; c < Co; ++c) {
                T bias = tb[c];
                for (int p = 0; p < oh * ow; ++p) op[static_cast<int64_t>(c) * oh * ow + p] = o(p, c) + bias;
            }
        }
        return push(std::move(out),
                    [x, w, b, N, C, H, W, Co, kh, kw, stride, pad, oh, ow, K](Tape& tp) {
            auto& g = tp.g_cur();
            const auto& tx2 = tp.nodes[x.i].val;
            const auto& tw2 = tp.nodes[w.i].val;
            auto& gx = tp.nodes[x.i].grad;
            auto& gw = tp.nodes[w.i].grad;
            auto& gb = tp.nodes[b.i].grad;
            CMapM Wm(tw2.data(), Co, K);
            MapM Gw(gw.data(), Co, K);
            std::vector<T> col(static_cast<size_t>(oh) * ow * K);
            std::vector<T> gout(static_cast<size_t>(oh) * ow * Co);
            std::vector<T> gcol(static_cast<size_t>(oh) * ow * K);
            for (int n = 0; n < N; ++n) {
                const T* gp = g.data() + static_cast<int64_t>(n) * Co * oh * ow;
                // transpose grad to [oh*ow, Co]
                for (int c = 0; c < Co; ++c)
                    for (int p = 0; p < oh * ow; ++p)
                        gout[static_cast<size_t>(p) * Co + c] = gp[static_cast<int64_t>(c) * oh * ow + p];
                CMapM G(gout.data(), oh * ow, Co);
                for (int c = 0; c < Co; ++c) gb[c] += G.col(c).sum();
                im2col(tx2.data() + static_cast<int64_t>(n) * C * H * W, C, H, W, kh, kw,
                       stride, pad, oh, ow, col.data());
                Gw.noalias() += G.transpose() * CMapM(col.data(), oh * ow, K);
                MapM(gcol.data(), oh * ow, K).noalias() = G * Wm;
                col2im_add(gcol.data(), C, H, W, kh, kw, stride, pad, oh, ow,
                           gx.data() + static_cast<int64_t>(n) * C * H * W);
            }
        });
    }

    Val<T> upsample_nearest2(Val<T> x) {
        const auto& tx = v_(x);
        require<InputError>(tx.rank() == 4, "upsample: rank 4 required");
        int N = tx.shape[0], C = tx.shape[1], H = tx.shape[2], W = tx.shape[3];
        Tensor<T> out({N, C, 2 * H, 2 * W});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const T* src = tx.data() + (static_cast<int64_t>(n) * C + c) * H * W;
                T* dst = out.data() + (static_cast<int64_t>(n) * C + c) * 4 * H * W;
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) {
                        T v = src[y * W + xx];
                        int64_t o = (static_cast<int64_t>(2 * y) * 2 * W + 2 * xx);
                        dst[o] = v;
                        dst[o + 1] = v;
                        dst[o + 2 * W] = v;
                        dst[o + 2 * W + 1] = v;
                    }
            }
        return push(std::move(out), [x, N, C, H, W](Tape& tp) {
            auto& g = tp.g_cur();
            auto& gx = tp.nodes[x.i].grad;
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const T* src = g.data() + (static_cast<int64_t>(n) * C + c) * 4 * H * W;
                    T* dst = gx.data() + (static_cast<int64_t>(n) * C + c) * H * W;
                    for (int y = 0; y < H; ++y)
                        for (int xx = 0; xx < W; ++xx) {
                            int64_t o = (static_cast<int64_t>(2 * y) * 2 * W + 2 * xx);
                            dst[y * W + xx] +=
                                src[o] + src[o + 1] + src[o + 2 * W] + src[o + 2 * W + 1];
                        }
                }
        });
    }

    // [N,C,H,W] -> [N,C]
    Val<T> global_avgpool(Val<T> x) {
        const auto& tx = v_(x);
        require<InputError>(tx.rank() == 4, "avgpool: rank 4 required");
        int N = tx.shape[0], C = tx.shape[1];
        int64_t HW = static_cast<int64_t>(tx.shape[2]) * tx.shape[3];
        Tensor<T> out({N, C});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const T* p = tx.data() + (static_cast<int64_t>(n) * C + c) * HW;
                T s = T(0);
                for (int64_t i = 0; i < HW; ++i) s += p[i];
                out.at(n, c) = s / static_cast<T>(HW);
            }
        return push(std::move(out), [x, N, C, HW](Tape& tp) {
            auto& g = tp.g_cur();
            auto& gx = tp.nodes[x.i].grad;
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    T gv = g.at(n, c) / static_cast<T>(HW);
                    T* p = gx.data() + (static_cast<int64_t>(n) * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) p[i] += gv;
                }
        });
    }

    // x:[N,C,H,W] v:[N,C] -> x + v broadcast over spatial dims
    Val<T> add_chan(Val<T> x, Val<T> vv) {
        const auto &tx = v_(x), &tv = v_(vv);
        require<InputError>(tx.rank() == 4 && tv.rank() == 2 && tv.shape[0] == tx.shape[0] &&
                                tv.shape[1] == tx.shape[1],
                            "add_chan: bad shapes");
        int N = tx.shape[0], C = tx.shape[1];
        int64_t HW = static_cast<int64_t>(tx.shape[2]) * tx.shape[3];
        Tensor<T> out = tx;
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                T a = tv.at(n, c);
                T* p = out.data() + (static_cast<int64_t>(n) * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) p[i] += a;
            }
        return push(std::move(out), [x, vv, N, C, HW](Tape& tp) {
            auto& g = tp.g_cur();
            tp.accum(x, g);
            auto& gv = tp.nodes[vv.i].grad;
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const T* p = g.data() + (static_cast<int64_t>(n) * C + c) * HW;
                    T s = T(0);
                    for (int64_t i = 0; i < HW; ++i) s += p[i];
                    gv.at(n, c) += s;
                }
        });
    }

    // ---- normalization ----------------------------------------------------

    // GroupNorm over [N,C,H,W] with affine per channel.
    Val<T> group_norm(Val<T> x, int groups, Val<T> gamma, Val<T> beta, T eps = T(1e-5)) {
        const auto& tx = v_(x);
        require<InputError>(tx.rank() == 4 && tx.shape[1] % groups == 0, "group_norm: bad shapes");
        int N = tx.shape[0], C = tx.shape[1];
        int64_t HW = static_cast<int64_t>(tx.shape[2]) * tx.shape[3];
        int cg = C / groups;
        int64_t gsz = cg * HW;
        const auto& tgm = v_(gamma);
        const auto& tbt = v_(beta);
        require<InputError>(tgm.numel() == C && tbt.numel() == C, "group_norm: bad affine");
        Tensor<T> out(tx.shape);
        Tensor<T> xhat(tx.shape);
        std::vector<T> inv_std(static_cast<size_t>(N) * groups);
        for (int n = 0; n < N; ++n)
            for (int gi = 0; gi < groups; ++gi) {
                const T* p = tx.data() + (static_cast<int64_t>(n) * C + gi * cg) * HW;
                double mu = 0;
                for (int64_t i = 0; i < gsz; ++i) mu += p[i];
                mu /= static_cast<double>(gsz);
                double var = 0;
                for (int64_t i = 0; i < gsz; ++i) {
                    double d = p[i] - mu;
                    var += d * d;
                }
                var /= static_cast<double>(gsz);
                T istd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
                inv_std[static_cast<size_t>(n) * groups + gi] = istd;
                T* xh = xhat.data() + (static_cast<int64_t>(n) * C + gi * cg) * HW;
                T* o = out.data() + (static_cast<int64_t>(n) * C + gi * cg) * HW;
                for (int c = 0; c < cg; ++c) {
                    T gm = tgm[gi * cg + c], bt = tbt[gi * cg + c];
                    for (int64_t i = 0; i < HW; ++i) {
                        int64_t ix = static_cast<int64_t>(c) * HW + i;
                        xh[ix] = (p[ix] - static_cast<T>(mu)) * istd;
                        o[ix] = xh[ix] * gm + bt;
                    }
                }
            }
        auto xhat_sh = std::make_shared<Tensor<T>>(std::move(xhat));
        auto istd_sh = std::make_shared<std::vector<T>>(std::move(inv_std));
        return push(std::move(out),
                    [x, gamma, beta, groups, N, C, HW, cg, gsz, xhat_sh, istd_sh](Tape& tp) {
            auto& g = tp.g_cur();
            auto& gx = tp.nodes[x.i].grad;
            auto& ggm = tp.nodes[gamma.i].grad;
            auto& gbt = tp.nodes[beta.i].grad;
            const auto& tgm = tp.nodes[gamma.i].val;
            const auto& xh = *xhat_sh;
            for (int n = 0; n < N; ++n)
                for (int gi = 0; gi < groups; ++gi) {
                    int64_t base = (static_cast<int64_t>(n) * C + gi * cg) * HW;
                    const T* gp = g.data() + base;
                    const T* xhp = xh.data() + base;
                    // dL/dxhat = g * gamma; reduce for dgamma/dbeta
                    double sum_dxh = 0, sum_dxh_xh = 0;
                    for (int c = 0; c < cg; ++c) {
                        T gm = tgm[gi * cg + c];
                        double dg = 0, db = 0;
                        for (int64_t i = 0; i < HW; ++i) {
                            int64_t ix = static_cast<int64_t>(c) * HW + i;
                            T dxh = gp[ix] * gm;
                            sum_dxh += dxh;
                            sum_dxh_xh += static_cast<double>(dxh) * xhp[ix];
                            dg += static_cast<double>(gp[ix]) * xhp[ix];
                            db += gp[ix];
                        }
                        ggm[gi * cg + c] += static_cast<T>(dg);
                        gbt[gi * cg + c] += static_cast<T>(db);
                    }
                    T istd = (*istd_sh)[static_cast<size_t>(n) * groups + gi];
                    T m1 = static_cast<T>(sum_dxh / static_cast<double>(gsz));
                    T m2 = static_cast<T>(sum_dxh_xh / static_cast<double>(gsz));
                    T* gxp = gx.data() + base;
                    for (int c = 0; c < cg; ++c) {
                        T gm = tgm[gi * cg + c];
                        for (int64_t i = 0; i < HW; ++i) {
                            int64_t ix = static_cast<int64_t>(c) * HW + i;
                            T dxh = gp[ix] * gm;
                            gxp[ix] += istd * (dxh - m1 - xhp[ix] * m2);
                        }
                    }
                }
        });
    }

    // Per-channel spatial normalization with no affine (FDN base).
    Val<T> instance_norm(Val<T> x, T eps = T(1e-5)) {
        const auto& tx = v_(x);
        require<InputError>(tx.rank() == 4, "instance_norm: rank 4 required");
        int N = tx.shape[0], C = tx.shape[1];
        int64_t HW = static_cast<int64_t>(tx.shape[2]) * tx.shape[3];
        Tensor<T> out(tx.shape);
        std::vector<T> inv_std(static_cast<size_t>(N) * C);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const T* p = tx.data() + (static_cast<int64_t>(n) * C + c) * HW;
                double mu = 0;
                for (int64_t i = 0; i < HW; ++i) mu += p[i];
                mu /= static_cast<double>(HW);
                double var = 0;
                for (int64_t i = 0; i < HW; ++i) {
                    double d = p[i] - mu;
                    var += d * d;
                }
                var /= static_cast<double>(HW);
                T istd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
                inv_std[static_cast<size_t>(n) * C + c] = istd;
                T* o = out.data() + (static_cast<int64_t>(n) * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) o[i] = (p[i] - static_cast<T>(mu)) * istd;
            }
        auto istd_sh = std::make_shared<std::vector<T>>(std::move(inv_std));
        return push(std::move(out), [x, N, C, HW, istd_sh, self = nodes.size()](Tape& tp) {
            auto& g = tp.g_cur();
            const auto& xh = tp.nodes[self].val;  // output == xhat
            auto& gx = tp.nodes[x.i].grad;
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    int64_t base = (static_cast<int64_t>(n) * C + c) * HW;
                    const T* gp = g.data() + base;
                    const T* xhp = xh.data() + base;
                    double m1 = 0, m2 = 0;
                    for (int64_t i = 0; i < HW; ++i) {
                        m1 += gp[i];
                        m2 += static_cast<double>(gp[i]) * xhp[i];
                    }
                    m1 /= static_cast<double>(HW);
                    m2 /= static_cast<double>(HW);
                    T istd = (*istd_sh)[static_cast<size_t>(n) * C + c];
                    T* gxp = gx.data() + base;
                    for (int64_t i = 0; i < HW; ++i)
                        gxp[i] += istd * (gp[i] - static_cast<T>(m1) - xhp[i] * static_cast<T>(m2));
                }
        });
    }

    // LayerNorm over the last dimension with affine.
    Val<T> layer_norm(Val<T> x, Val<T> gamma, Val<T> beta, T eps = T(1e-5)) {
        const auto& tx = v_(x);
        int d = tx.shape.back();
        int64_t rows = tx.numel() / d;
        require<InputError>(v_(gamma).numel() == d && v_(beta).numel() == d,
                            "layer_norm: bad affine");
        Tensor<T> out(tx.shape);
        Tensor<T> xhat(tx.shape);
        std::vector<T> inv_std(static_cast<size_t>(rows));
        const auto& tgm = v_(gamma);
        const auto& tbt = v_(beta);
        for (int64_t r = 0; r < rows; ++r) {
            const T* p = tx.data() + r * d;
            double mu = 0;
            for (int i = 0; i < d; ++i) mu += p[i];
            mu /= d;
            double var = 0;
            for (int i = 0; i < d; ++i) {
                double dd = p[i] - mu;
                var += dd * dd;
            }
            var /= d;
            T istd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            inv_std[static_cast<size_t>(r)] = istd;
            for (int i = 0; i < d; ++i) {
                xhat[r * d + i] = (p[i] - static_cast<T>(mu)) * istd;
                out[r * d + i] = xhat[r * d + i] * tgm[i] + tbt[i];
            }
        }
        auto xhat_sh = std::make_shared<Tensor<T>>(std::move(xhat));
        auto istd_sh = std::make_shared<std::vector<T>>(std::move(inv_std));
        return push(std::move(out), [x, gamma, beta, rows, d, xhat_sh, istd_sh](Tape& tp) {
            auto& g = tp.g_cur();
            auto& gx = tp.nodes[x.i].grad;
            auto& ggm = tp.nodes[gamma.i].grad;
            auto& gbt = tp.nodes[beta.i].grad;
            const auto& tgm = tp.nodes[gamma.i].val;
            const auto& xh = *xhat_sh;
            for (int64_t r = 0; r < rows; ++r) {
                const T* gp = g.data() + r * d;
                const T* xhp = xh.data() + r * d;
                double m1 = 0, m2 = 0;
                for (int i = 0; i < d; ++i) {
                    T dxh = gp[i] * tgm[i];
                    m1 += dxh;
                    m2 += static_cast<double>(dxh) * xhp[i];
                    ggm[i] += gp[i] * xhp[i];
                    gbt[i] += gp[i];
                }
                m1 /= d;
                m2 /= d;
                T istd = (*istd_sh)[static_cast<size_t>(r)];
                T* gxp = gx.data() + r * d;
                for (int i = 0; i < d; ++i) {
                    T dxh = gp[i] * tgm[i];
                    gxp[i] += istd * (dxh - static_cast<T>(m1) - xhp[i] * static_cast<T>(m2));
                }
            }
        });
    }

    // ---- embeddings and reductions ----------------------------------------

    // table:[V,D], ids flattened [n] -> [n,D]; shape_out overrides leading dims.
    Val<T> embedding(Val<T> table, const std::vector<int>& ids, std::vector<int> shape_out) {
        const auto& tt = v_(table);
        require<InputError>(tt.rank() == 2, "embedding: table rank 2");
        int V = tt.shape[0], D = tt.shape[1];
        for (int id : ids) require<InputError>(id >= 0 && id < V, "embedding: id out of range");
        shape_out.push_back(D);
        Tensor<T> out(shape_out);
        require<InputError>(out.numel() == static_cast<int64_t>(ids.size()) * D,
                            "embedding: bad output shape");
        for (size_t i = 0; i < ids.size(); ++i)
            std::copy(tt.data() + static_cast<int64_t>(ids[i]) * D,
                      tt.data() + static_cast<int64_t>(ids[i] + 1) * D, out.data() + i * D);
        return push(std::move(out), [table, ids, D](Tape& tp) {
            auto& g = tp.g_cur();
            auto& gt = tp.nodes[table.i].grad;
            for (size_t i = 0; i < ids.size(); ++i) {
                const T* src = g.data() + i * D;
                T* dst = gt.data() + static_cast<int64_t>(ids[i]) * D;
                for (int j = 0; j < D; ++j) dst[j] += src[j];
            }
        });
    }

    // [B,L,D] -> [B,D]
    Val<T> mean_axis1(Val<T> x) {
        const auto& tx = v_(x);
        require<InputError>(tx.rank() == 3, "mean_axis1: rank 3 required");
        int B = tx.shape[0], L = tx.shape[1], D = tx.shape[2];
        Tensor<T> out({B, D});
        for (int b = 0; b < B; ++b)
            for (int l = 0; l < L; ++l)
                for (int j = 0; j < D; ++j) out.at(b, j) += tx.at(b, l, j) / static_cast<T>(L);
        return push(std::move(out), [x, B, L, D](Tape& tp) {
            auto& g = tp.g_cur();
            auto& gx = tp.nodes[x.i].grad;
            for (int b = 0; b < B; ++b)
                for (int l = 0; l < L; ++l)
                    for (int j = 0; j < D; ++j)
                        gx.at(b, l, j) += g.at(b, j) / static_cast<T>(L);
        });
    }

    Val<T> mean_all(Val<T> x) {
        const auto& tx = v_(x);
        int64_t n = tx.numel();
        Tensor<T> out({1});
        double s = 0;
        for (int64_t i = 0; i < n; ++i) s += tx[i];
        out[0] = static_cast<T>(s / static_cast<double>(n));
        return push(std::move(out), [x, n](Tape& tp) {
            T gv = tp.g_cur()[0] / static_cast<T>(n);
            auto& gx = tp.nodes[x.i].grad;
            for (int64_t i = 0; i < n; ++i) gx[i] += gv;
        });
    }

    Val<T> sum_all(Val<T> x) {
        const auto& tx = v_(x);
        int64_t n = tx.numel();
        Tensor<T> out({1});
        double s = 0;
        for (int64_t i = 0; i < n; ++i) s += tx[i];
        out[0] = static_cast<T>(s);
        return push(std::move(out), [x, n](Tape& tp) {
            T gv = tp.g_cur()[0];
            auto& gx = tp.nodes[x.i].grad;
            for (int64_t i = 0; i < n; ++i) gx[i] += gv;
        });
    }

    Val<T> mse(Val<T> a, Val<T> b) {
        const auto &ta = v_(a), &tb = v_(b);
        require<InputError>(ta.same_shape(tb), "mse: shape mismatch");
        int64_t n = ta.numel();
        Tensor<T> out({1});
        double s = 0;
        for (int64_t i = 0; i < n; ++i) {
            double d = static_cast<double>(ta[i]) - tb[i];
            s += d * d;
        }
        out[0] = static_cast<T>(s / static_cast<double>(n));
        return push(std::move(out), [a, b, n](Tape& tp) {
            T gv = tp.g_cur()[0];
            const auto &ta2 = tp.nodes[a.i].val, &tb2 = tp.nodes[b.i].val;
            auto &ga = tp.nodes[a.i].grad, &gb = tp.nodes[b.i].grad;
            T c = gv * T(2) / static_cast<T>(n);
            for (int64_t i = 0; i < n; ++i) {
                T d = c * (ta2[i] - tb2[i]);
                ga[i] += d;
                gb[i] -= d;
            }
        });
    }

    // logits:[N,C], labels one int per row; mean cross entropy.
    Val<T> softmax_xent(Val<T> logits, const std::vector<int>& labels) {
        const auto& tl = v_(logits);
        require<InputError>(tl.rank() == 2 &&
                                tl.shape[0] == static_cast<int>(labels.size()),
                            "softmax_xent: bad shapes");
        int N = tl.shape[0], C = tl.shape[1];
        Tensor<T> probs({N, C});
        double loss = 0;
        for (int n = 0; n < N; ++n) {
            const T* p = tl.data() + static_cast<int64_t>(n) * C;
            T mx = p[0];
            for (int c = 1; c < C; ++c) mx = std::max(mx, p[c]);
            double sum = 0;
            for (int c = 0; c < C; ++c) {
                probs.at(n, c) = std::exp(p[c] - mx);
                sum += probs.at(n, c);
            }
            for (int c = 0; c < C; ++c) probs.at(n, c) /= static_cast<T>(sum);
            loss -= std::log(std::max(static_cast<double>(probs.at(n, labels[n])), 1e-30));
        }
        Tensor<T> out({1});
        out[0] = static_cast<T>(loss / N);
        auto probs_sh = std::make_shared<Tensor<T>>(std::move(probs));
        return push(std::move(out), [logits, labels, N, C, probs_sh](Tape& tp) {
            T gv = tp.g_cur()[0] / static_cast<T>(N);
            auto& gl = tp.nodes[logits.i].grad;
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c)
                    gl.at(n, c) += gv * (probs_sh->at(n, c) - (labels[n] == c ? T(1) : T(0)));
        });
    }

    // rows of x:[N,D] scaled to unit L2 norm.
    Val<T> l2_normalize_rows(Val<T> x, T eps = T(1e-12)) {
        const auto& tx = v_(x);
        require<InputError>(tx.rank() == 2, "l2_normalize_rows: rank 2 required");
        int N = tx.shape[0], D = tx.shape[1];
        Tensor<T> out(tx.shape);
        std::vector<T> inv_norm(static_cast<size_t>(N));
        for (int n = 0; n < N; ++n) {
            const T* p = tx.data() + static_cast<int64_t>(n) * D;
            double s = 0;
            for (int i = 0; i < D; ++i) s += static_cast<double>(p[i]) * p[i];
            T inm = static_cast<T>(1.0 / std::sqrt(std::max(s, static_cast<double>(eps))));
            inv_norm[static_cast<size_t>(n)] = inm;
            for (int i = 0; i < D; ++i) out.at(n, i) = p[i] * inm;
        }
        auto inm_sh = std::make_shared<std::vector<T>>(std::move(inv_norm));
        return push(std::move(out), [x, N, D, inm_sh, self = nodes.size()](Tape& tp) {
            auto& g = tp.g_cur();
            const auto& y = tp.nodes[self].val;
            auto& gx = tp.nodes[x.i].grad;
            for (int n = 0; n < N; ++n) {
                double dot = 0;
                for (int i = 0; i < D; ++i) dot += static_cast<double>(g.at(n, i)) * y.at(n, i);
                T inm = (*inm_sh)[static_cast<size_t>(n)];
                for (int i = 0; i < D; ++i)
                    gx.at(n, i) += inm * (g.at(n, i) - y.at(n, i) * static_cast<T>(dot));
            }
        });
    }

    // row-wise dot product of equal-shape [N,D] -> [N]
    Val<T> rowdot(Val<T> a, Val<T> b) {
        const auto &ta = v_(a), &tb = v_(b);
        require<InputError>(ta.same_shape(tb) && ta.rank() == 2, "rowdot: bad shapes");
        int N = ta.shape[0], D = ta.shape[1];
        Tensor<T> out({N});
        for (int n = 0; n < N; ++n) {
            double s = 0;
            for (int i = 0; i < D; ++i) s += static_cast<double>(ta.at(n, i)) * tb.at(n, i);
            out[n] = static_cast<T>(s);
        }
        return push(std::move(out), [a, b, N, D](Tape& tp) {
            auto& g = tp.g_cur();
            const auto &ta2 = tp.nodes[a.i].val, &tb2 = tp.nodes[b.i].val;
            auto &ga = tp.nodes[a.i].grad, &gb = tp.nodes[b.i].grad;
            for (int n = 0; n < N; ++n)
                for (int i = 0; i < D; ++i) {
                    ga.at(n, i) += g[n] * tb2.at(n, i);
                    gb.at(n, i) += g[n] * ta2.at(n, i);
                }
        });
    }

private:
    const Tensor<T>& v_(Val<T> v) const { return nodes[v.i].val; }

    Tensor<T>& g_cur() { return nodes[cur_].grad; }

    void accum(Val<T> v, const Tensor<T>& g) {
        auto& dst = nodes[v.i].grad;
        for (int64_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
    }

    Val<T> push(Tensor<T> val, std::function<void(Tape&)> back) {
        Node n;
        n.val = std::move(val);
        n.grad = Tensor<T>::zeros(n.val.shape);
        nodes.push_back(std::move(n));
        int idx = static_cast<int>(nodes.size()) - 1;
        if (back)
            nodes[idx].back = [idx, back = std::move(back)](Tape& tp) {
                tp.cur_ = idx;
                back(tp);
            };
        return Val<T>{this, idx};
    }

    int cur_ = -1;

    template <typename U>
    friend struct ParamLease;
};

// Binds persistent parameters into a tape for one forward/backward pass.
// leased params receive their accumulated gradients when backward reaches
// the leaf node.
template <typename T>
struct ParamLease {
    Tape<T>& tape;

    explicit ParamLease(Tape<T>& t) : tape(t) {}

    Val<T> operator()(Param<T>& p) {
        Tensor<T> copy = p.value;
        Tape<T>* tp = &tape;
        tape.nodes.push_back(typename Tape<T>::Node{std::move(copy), Tensor<T>::zeros(p.value.shape), nullptr});
        int idx = static_cast<int>(tape.nodes.size()) - 1;
        tape.nodes[idx].back = [idx, pp = &p](Tape<T>& t) {
            auto& g = t.nodes[idx].grad;
            for (int64_t i = 0; i < g.numel(); ++i) pp->grad[i] += g[i];
        };
        return Val<T>{tp, idx};
    }
};

}  // namespace crsdiff
