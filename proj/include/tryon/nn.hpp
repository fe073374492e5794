#ifndef TRYON_NN_HPP
#define TRYON_NN_HPP

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "tryon/blas.hpp"
#include "tryon/tape.hpp"

// Differentiable ops over Tape<T>. Feature maps are NCHW; token
// matrices are [B, rows, C]. Backward closures recompute cheap
// intermediates (im2col) instead of caching them.
namespace tryon::nn {

template <typename T>
using Var = typename Tape<T>::Var;

namespace detail {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape) + " vs " + shape_str(b.shape));
}

// x: [C, H, W] -> col: [C*k*k, H*W], zero padding k/2, stride 1.
template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int64_t k, T* col) {
    const int64_t pad = k / 2;
    const int64_t HW = H * W;
    int64_t row = 0;
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx, ++row) {
                T* dst = col + row * HW;
                const int64_t dy = ky - pad, dx = kx - pad;
                for (int64_t y = 0; y < H; ++y) {
                    const int64_t sy = y + dy;
                    if (sy < 0 || sy >= H) {
                        for (int64_t xwhere = 0; xwhere < W; ++xwhere) dst[y * W + xwhere] = T(0);
                        continue;
                    }
                    const T* src = x + (c * H + sy) * W;
                    for (int64_t xw = 0; xw < W; ++xw) {
                        const int64_t sx = xw + dx;
                        dst[y * W + xw] = (sx < 0 || sx >= W) ? T(0) : src[sx];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, int64_t C, int64_t H, int64_t W, int64_t k, T* x) {
    const int64_t pad = k / 2;
    const int64_t HW = H * W;
    int64_t row = 0;
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx, ++row) {
                const T* src = col + row * HW;
                const int64_t dy = ky - pad, dx = kx - pad;
                for (int64_t y = 0; y < H; ++y) {
                    const int64_t sy = y + dy;
                    if (sy < 0 || sy >= H) continue;
                    T* dst = x + (c * H + sy) * W;
                    for (int64_t xw = 0; xw < W; ++xw) {
                        const int64_t sx = xw + dx;
                        if (sx >= 0 && sx < W) dst[sx] += src[y * W + xw];
                    }
                }
            }
        }
    }
}

}  // namespace detail

template <typename T>
Var<T> add(Tape<T>& tp, Var<T> a, Var<T> b) {
    const auto& av = tp.val(a);
    const auto& bv = tp.val(b);
    detail::check_same_shape(av, bv, "add");
    Tensor<T> out(av.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
    bool ng = tp.needs_grad(a) || tp.needs_grad(b);
    return tp.make(std::move(out), ng, [a, b](Tape<T>& t, Var<T> self) {
        const Tensor<T>& g = t.grad(self);
        t.accum(a, g);
        t.accum(b, g);
    });
}

template <typename T>
Var<T> scale(Tape<T>& tp, Var<T> a, double c) {
    const auto& av = tp.val(a);
    Tensor<T> out(av.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(c) * av[i];
    return tp.make(std::move(out), tp.needs_grad(a), [a, c](Tape<T>& t, Var<T> self) {
        if (!t.needs_grad(a)) return;
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& da = t.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) da[i] += static_cast<T>(c) * g[i];
    });
}

template <typename T>
Var<T> swish(Tape<T>& tp, Var<T> a) {
    const auto& av = tp.val(a);
    Tensor<T> out(av.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        const T x = av[i];
        out[i] = x / (T(1) + std::exp(-x));
    }
    return tp.make(std::move(out), tp.needs_grad(a), [a](Tape<T>& t, Var<T> self) {
        if (!t.needs_grad(a)) return;
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& av = t.val(a);
        Tensor<T>& da = t.grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) {
            const T x = av[i];
            const T s = T(1) / (T(1) + std::exp(-x));
            da[i] += g[i] * (s + x * s * (T(1) - s));
        }
    });
}

// Channel concat of NCHW maps with equal B, H, W.
template <typename T>
Var<T> concat_channels(Tape<T>& tp, const std::vector<Var<T>>& xs) {
    const auto& first = tp.val(xs.at(0));
    const int64_t B = first.dim(0), H = first.dim(2), W = first.dim(3);
    int64_t Ctot = 0;
    bool ng = false;
    for (auto v : xs) {
        const auto& t = tp.val(v);
        if (t.dim(0) != B || t.dim(2) != H || t.dim(3) != W)
            throw std::invalid_argument("concat_channels: mismatched dims");
        Ctot += t.dim(1);
        ng = ng || tp.needs_grad(v);
    }
    Tensor<T> out({B, Ctot, H, W});
    const int64_t HW = H * W;
    for (int64_t b = 0; b < B; ++b) {
        int64_t co = 0;
        for (auto v : xs) {
            const auto& t = tp.val(v);
            const int64_t C = t.dim(1);
            std::copy_n(t.ptr() + b * C * HW, C * HW, out.ptr() + (b * Ctot + co) * HW);
            co += C;
        }
    }
    std::vector<Var<T>> parts = xs;
    return tp.make(std::move(out), ng, [parts, B, Ctot, HW](Tape<T>& t, Var<T> self) {
        const Tensor<T>& g = t.grad(self);
        for (int64_t b = 0; b < B; ++b) {
            int64_t co = 0;
            for (auto v : parts) {
                const int64_t C = t.val(v).dim(1);
                if (t.needs_grad(v)) {
                    Tensor<T>& dv = t.grad(v);
                    const T* src = g.ptr() + (b * Ctot + co) * HW;
                    T* dst = dv.ptr() + b * C * HW;
                    for (int64_t i = 0; i < C * HW; ++i) dst[i] += src[i];
                }
                co += C;
            }
        }
    });
}

// x: [B, Cin, H, W], w: [Cout, Cin, k, k], bias: [Cout]; stride 1, same padding.
template <typename T>
Var<T> conv2d(Tape<T>& tp, Var<T> x, Var<T> w, Var<T> bias) {
    const auto& xv = tp.val(x);
    const auto& wv = tp.val(w);
    const auto& bv = tp.val(bias);
    if (xv.ndim() != 4 || wv.ndim() != 4) throw std::invalid_argument("conv2d: rank");
    const int64_t B = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int64_t Cout = wv.dim(0), k = wv.dim(2);
    if (wv.dim(1) != Cin) throw std::invalid_argument("conv2d: channel mismatch");
    if (bv.numel() != Cout) throw std::invalid_argument("conv2d: bias size");
    const int64_t HW = H * W, CKK = Cin * k * k;

    Tensor<T> out({B, Cout, H, W});
    std::vector<T> col(static_cast<size_t>(CKK * HW));
    for (int64_t b = 0; b < B; ++b) {
        detail::im2col(xv.ptr() + b * Cin * HW, Cin, H, W, k, col.data());
        blas::gemm(false, false, Cout, HW, CKK, T(1), wv.ptr(), CKK, col.data(), HW,
                   T(0), out.ptr() + b * Cout * HW, HW);
        for (int64_t c = 0; c < Cout; ++c) {
            T* o = out.ptr() + (b * Cout + c) * HW;
            const T bb = bv[c];
            for (int64_t i = 0; i < HW; ++i) o[i] += bb;
        }
    }
    bool ng = tp.needs_grad(x) || tp.needs_grad(w) || tp.needs_grad(bias);
    return tp.make(std::move(out), ng,
                   [x, w, bias, B, Cin, H, W, Cout, k, HW, CKK](Tape<T>& t, Var<T> self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& xv = t.val(x);
        const Tensor<T>& wv = t.val(w);
        std::vector<T> col(static_cast<size_t>(CKK * HW));
        const bool need_x = t.needs_grad(x), need_w = t.needs_grad(w);
        std::vector<T> dcol(need_x ? static_cast<size_t>(CKK * HW) : 0);
        for (int64_t b = 0; b < B; ++b) {
            const T* gb = g.ptr() + b * Cout * HW;
            if (need_w) {
                detail::im2col(xv.ptr() + b * Cin * HW, Cin, H, W, k, col.data());
                blas::gemm(false, true, Cout, CKK, HW, T(1), gb, HW, col.data(), HW,
                           T(1), t.grad(w).ptr(), CKK);
            }
            if (need_x) {
                blas::gemm(true, false, CKK, HW, Cout, T(1), wv.ptr(), CKK, gb, HW,
                           T(0), dcol.data(), HW);
                detail::col2im_add(dcol.data(), Cin, H, W, k,
                                   t.grad(x).ptr() + b * Cin * HW);
            }
            if (t.needs_grad(bias)) {
                Tensor<T>& db = t.grad(bias);
                for (int64_t c = 0; c < Cout; ++c) {
                    T s = 0;
                    const T* gc = gb + c * HW;
                    for (int64_t i = 0; i < HW; ++i) s += gc[i];
                    db[c] += s;
                }
            }
        }
    });
}

// x: [..., in] treated as rows; w: [out, in]; bias: [out] (empty Var allowed via bias numel 0).
template <typename T>
Var<T> linear(Tape<T>& tp, Var<T> x, Var<T> w, Var<T> bias) {
    const auto& xv = tp.val(x);
    const auto& wv = tp.val(w);
    const auto& bv = tp.val(bias);
    const int64_t in = wv.dim(1), out_dim = wv.dim(0);
    if (xv.shape.back() != in) throw std::invalid_argument("linear: inner dim mismatch");
    const int64_t rows = xv.numel() / in;
    std::vector<int64_t> oshape = xv.shape;
    oshape.back() = out_dim;
    Tensor<T> out(oshape);
    blas::gemm(false, true, rows, out_dim, in, T(1), xv.ptr(), in, wv.ptr(), in, T(0),
               out.ptr(), out_dim);
    if (bv.numel()) {
        for (int64_t r = 0; r < rows; ++r) {
            T* o = out.ptr() + r * out_dim;
            for (int64_t c = 0; c < out_dim; ++c) o[c] += bv[c];
        }
    }
    bool ng = tp.needs_grad(x) || tp.needs_grad(w) || tp.needs_grad(bias);
    return tp.make(std::move(out), ng,
                   [x, w, bias, rows, in, out_dim](Tape<T>& t, Var<T> self) {
        const Tensor<T>& g = t.grad(self);
        if (t.needs_grad(w))
            blas::gemm(true, false, out_dim, in, rows, T(1), g.ptr(), out_dim,
                       t.val(x).ptr(), in, T(1), t.grad(w).ptr(), in);
        if (t.needs_grad(x))
            blas::gemm(false, false, rows, in, out_dim, T(1), g.ptr(), out_dim,
                       t.val(w).ptr(), in, T(1), t.grad(x).ptr(), in);
        if (t.needs_grad(bias) && t.val(bias).numel()) {
            Tensor<T>& db = t.grad(bias);
            for (int64_t r = 0; r < rows; ++r) {
                const T* gr = g.ptr() + r * out_dim;
                for (int64_t c = 0; c < out_dim; ++c) db[c] += gr[c];
            }
        }
    });
}

// GroupNorm over [B, C, H, W] with per-channel affine.
template <typename T>
Var<T> group_norm(Tape<T>& tp, Var<T> x, Var<T> gamma, Var<T> beta, int64_t groups,
                  double eps = 1e-5) {
    const auto& xv = tp.val(x);
    const int64_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    if (C % groups != 0) throw std::invalid_argument("group_norm: C % groups != 0");
    const int64_t cg = C / groups, HW = H * W, gsz = cg * HW;
    const auto& gv = tp.val(gamma);
    const auto& bv = tp.val(beta);
    if (gv.numel() != C || bv.numel() != C) throw std::invalid_argument("group_norm: affine size");

    Tensor<T> out({B, C, H, W});
    // saved statistics per (b, group)
    auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(B * groups));
    auto istd = std::make_shared<std::vector<T>>(static_cast<size_t>(B * groups));
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t g = 0; g < groups; ++g) {
            const T* base = xv.ptr() + (b * C + g * cg) * HW;
            double mu = 0;
            for (int64_t i = 0; i < gsz; ++i) mu += static_cast<double>(base[i]);
            mu /= static_cast<double>(gsz);
            double var = 0;
            for (int64_t i = 0; i < gsz; ++i) {
                const double d = static_cast<double>(base[i]) - mu;
                var += d * d;
            }
            var /= static_cast<double>(gsz);
            const double is = 1.0 / std::sqrt(var + eps);
            (*mean)[static_cast<size_t>(b * groups + g)] = static_cast<T>(mu);
            (*istd)[static_cast<size_t>(b * groups + g)] = static_cast<T>(is);
            for (int64_t c = 0; c < cg; ++c) {
                const int64_t ch = g * cg + c;
                const T* src = xv.ptr() + (b * C + ch) * HW;
                T* dst = out.ptr() + (b * C + ch) * HW;
                const T ga = gv[ch], be = bv[ch];
                for (int64_t i = 0; i < HW; ++i)
                    dst[i] = static_cast<T>((static_cast<double>(src[i]) - mu) * is) * ga + be;
            }
        }
    }
    bool ng = tp.needs_grad(x) || tp.needs_grad(gamma) || tp.needs_grad(beta);
    return tp.make(std::move(out), ng,
                   [x, gamma, beta, B, C, groups, cg, HW, gsz, mean, istd](Tape<T>& t, Var<T> self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& xv = t.val(x);
        const Tensor<T>& gv = t.val(gamma);
        const bool need_x = t.needs_grad(x);
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t gr = 0; gr < groups; ++gr) {
                const T mu = (*mean)[static_cast<size_t>(b * groups + gr)];
                const T is = (*istd)[static_cast<size_t>(b * groups + gr)];
                // per-channel reductions for dgamma/dbeta; group reductions for dx
                double sum_dxh = 0, sum_dxh_xh = 0;
                for (int64_t c = 0; c < cg; ++c) {
                    const int64_t ch = gr * cg + c;
                    const T* xb = xv.ptr() + (b * C + ch) * HW;
                    const T* gb = g.ptr() + (b * C + ch) * HW;
                    double dg = 0, db = 0;
                    for (int64_t i = 0; i < HW; ++i) {
                        const double xh = (static_cast<double>(xb[i]) - mu) * is;
                        dg += static_cast<double>(gb[i]) * xh;
                        db += static_cast<double>(gb[i]);
                        const double dxh = static_cast<double>(gb[i]) * gv[ch];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh;
                    }
                    if (t.needs_grad(gamma)) t.grad(gamma)[ch] += static_cast<T>(dg);
                    if (t.needs_grad(beta)) t.grad(beta)[ch] += static_cast<T>(db);
                }
                if (!need_x) continue;
                const double m1 = sum_dxh / static_cast<double>(gsz);
                const double m2 = sum_dxh_xh / static_cast<double>(gsz);
                for (int64_t c = 0; c < cg; ++c) {
                    const int64_t ch = gr * cg + c;
                    const T* xb = xv.ptr() + (b * C + ch) * HW;
                    const T* gb = g.ptr() + (b * C + ch) * HW;
                    T* dx = t.grad(x).ptr() + (b * C + ch) * HW;
                    const double ga = gv[ch];
                    for (int64_t i = 0; i < HW; ++i) {
                        const double xh = (static_cast<double>(xb[i]) - mu) * is;
                        const double dxh = static_cast<double>(gb[i]) * ga;
                        dx[i] += static_cast<T>(is * (dxh - m1 - xh * m2));
                    }
                }
            }
        }
    });
}

// FiLM: y[b,c,:,:] = x * (1 + scale[b,c]) + shift[b,c], ss: [B, 2C].
template <typename T>
Var<T> film(Tape<T>& tp, Var<T> x, Var<T> ss) {
    const auto& xv = tp.val(x);
    const auto& sv = tp.val(ss);
    const int64_t B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    if (sv.dim(0) != B || sv.dim(1) != 2 * C)
        throw std::invalid_argument("film: scale/shift must be [B, 2C]");
    Tensor<T> out(xv.shape);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const T s = sv.at2(b, c), sh = sv.at2(b, C + c);
            const T* src = xv.ptr() + (b * C + c) * HW;
            T* dst = out.ptr() + (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) dst[i] = src[i] * (T(1) + s) + sh;
        }
    bool ng = tp.needs_grad(x) || tp.needs_grad(ss);
    return tp.make(std::move(out), ng, [x, ss, B, C, HW](Tape<T>& t, Var<T> self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& xv = t.val(x);
        const Tensor<T>& sv = t.val(ss);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const T* gb = g.ptr() + (b * C + c) * HW;
                if (t.needs_grad(x)) {
                    const T s = sv.at2(b, c);
                    T* dx = t.grad(x).ptr() + (b * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) dx[i] += gb[i] * (T(1) + s);
                }
                if (t.needs_grad(ss)) {
                    const T* xb = xv.ptr() + (b * C + c) * HW;
                    double dscale = 0, dshift = 0;
                    for (int64_t i = 0; i < HW; ++i) {
                        dscale += static_cast<double>(gb[i]) * xb[i];
                        dshift += static_cast<double>(gb[i]);
                    }
                    t.grad(ss).at2(b, c) += static_cast<T>(dscale);
                    t.grad(ss).at2(b, C + c) += static_cast<T>(dshift);
                }
            }
    });
}

template <typename T>
Var<T> avg_pool2(Tape<T>& tp, Var<T> x) {
    const auto& xv = tp.val(x);
    const int64_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    if (H % 2 || W % 2) throw std::invalid_argument("avg_pool2: odd spatial size");
    const int64_t OH = H / 2, OW = W / 2;
    Tensor<T> out({B, C, OH, OW});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* src = xv.ptr() + bc * H * W;
        T* dst = out.ptr() + bc * OH * OW;
        for (int64_t y = 0; y < OH; ++y)
            for (int64_t xw = 0; xw < OW; ++xw)
                dst[y * OW + xw] = (src[2 * y * W + 2 * xw] + src[2 * y * W + 2 * xw + 1] +
                                    src[(2 * y + 1) * W + 2 * xw] +
                                    src[(2 * y + 1) * W + 2 * xw + 1]) *
                                   T(0.25);
    }
    return tp.make(std::move(out), tp.needs_grad(x),
                   [x, B, C, H, W, OH, OW](Tape<T>& t, Var<T> self) {
        if (!t.needs_grad(x)) return;
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& dx = t.grad(x);
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const T* gb = g.ptr() + bc * OH * OW;
            T* db = dx.ptr() + bc * H * W;
            for (int64_t y = 0; y < OH; ++y)
                for (int64_t xw = 0; xw < OW; ++xw) {
                    const T v = gb[y * OW + xw] * T(0.25);
                    db[2 * y * W + 2 * xw] += v;
                    db[2 * y * W + 2 * xw + 1] += v;
                    db[(2 * y + 1) * W + 2 * xw] += v;
                    db[(2 * y + 1) * W + 2 * xw + 1] += v;
                }
        }
    });
}

template <typename T>
Var<T> upsample_nearest2(Tape<T>& tp, Var<T> x) {
    const auto& xv = tp.val(x);
    const int64_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int64_t OH = 2 * H, OW = 2 * W;
    Tensor<T> out({B, C, OH, OW});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* src = xv.ptr() + bc * H * W;
        T* dst = out.ptr() + bc * OH * OW;
        for (int64_t y = 0; y < OH; ++y)
            for (int64_t xw = 0; xw < OW; ++xw)
                dst[y * OW + xw] = src[(y / 2) * W + xw / 2];
    }
    return tp.make(std::move(out), tp.needs_grad(x),
                   [x, B, C, H, W, OH, OW](Tape<T>& t, Var<T> self) {
        if (!t.needs_grad(x)) return;
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& dx = t.grad(x);
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const T* gb = g.ptr() + bc * OH * OW;
            T* db = dx.ptr() + bc * H * W;
            for (int64_t y = 0; y < OH; ++y)
                for (int64_t xw = 0; xw < OW; ++xw)
                    db[(y / 2) * W + xw / 2] += gb[y * OW + xw];
        }
    });
}

// [B, C, H, W] -> [B, H*W, C]
template <typename T>
Var<T> flatten_hw(Tape<T>& tp, Var<T> x) {
    const auto& xv = tp.val(x);
    const int64_t B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    Tensor<T> out({B, HW, C});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const T* src = xv.ptr() + (b * C + c) * HW;
            T* dst = out.ptr() + b * HW * C + c;
            for (int64_t i = 0; i < HW; ++i) dst[i * C] = src[i];
        }
    return tp.make(std::move(out), tp.needs_grad(x), [x, B, C, HW](Tape<T>& t, Var<T> self) {
        if (!t.needs_grad(x)) return;
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& dx = t.grad(x);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const T* src = g.ptr() + b * HW * C + c;
                T* dst = dx.ptr() + (b * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) dst[i] += src[i * C];
            }
    });
}

// [B, H*W, C] -> [B, C, H, W]
template <typename T>
Var<T> unflatten_hw(Tape<T>& tp, Var<T> x, int64_t H, int64_t W) {
    const auto& xv = tp.val(x);
    const int64_t B = xv.dim(0), HW = xv.dim(1), C = xv.dim(2);
    if (HW != H * W) throw std::invalid_argument("unflatten_hw: size mismatch");
    Tensor<T> out({B, C, H, W});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const T* src = xv.ptr() + b * HW * C + c;
            T* dst = out.ptr() + (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) dst[i] = src[i * C];
        }
    return tp.make(std::move(out), tp.needs_grad(x), [x, B, C, HW](Tape<T>& t, Var<T> self) {
        if (!t.needs_grad(x)) return;
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& dx = t.grad(x);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const T* src = g.ptr() + (b * C + c) * HW;
                T* dst = dx.ptr() + b * HW * C + c;
                for (int64_t i = 0; i < HW; ++i) dst[i * C] += src[i];
            }
    });
}

// Row concat of [B, N1, C] and [B, N2, C].
template <typename T>
Var<T> concat_rows(Tape<T>& tp, Var<T> a, Var<T> b) {
    const auto& av = tp.val(a);
    const auto& bv = tp.val(b);
    const int64_t B = av.dim(0), N1 = av.dim(1), N2 = bv.dim(1), C = av.dim(2);
    if (bv.dim(0) != B || bv.dim(2) != C)
        throw std::invalid_argument("concat_rows: mismatched dims");
    Tensor<T> out({B, N1 + N2, C});
    for (int64_t bb = 0; bb < B; ++bb) {
        std::copy_n(av.ptr() + bb * N1 * C, N1 * C, out.ptr() + bb * (N1 + N2) * C);
        std::copy_n(bv.ptr() + bb * N2 * C, N2 * C, out.ptr() + (bb * (N1 + N2) + N1) * C);
    }
    bool ng = tp.needs_grad(a) || tp.needs_grad(b);
    return tp.make(std::move(out), ng, [a, b, B, N1, N2, C](Tape<T>& t, Var<T> self) {
        const Tensor<T>& g = t.grad(self);
        for (int64_t bb = 0; bb < B; ++bb) {
            if (t.needs_grad(a)) {
                T* dst = t.grad(a).ptr() + bb * N1 * C;
                const T* src = g.ptr() + bb * (N1 + N2) * C;
                for (int64_t i = 0; i < N1 * C; ++i) dst[i] += src[i];
            }
            if (t.needs_grad(b)) {
                T* dst = t.grad(b).ptr() + bb * N2 * C;
                const T* src = g.ptr() + (bb * (N1 + N2) + N1) * C;
                for (int64_t i = 0; i < N2 * C; ++i) dst[i] += src[i];
            }
        }
    });
}

// Mean over rows: [B, K, C] -> [B, 1, C].
template <typename T>
Var<T> mean_rows(Tape<T>& tp, Var<T> x) {
    const auto& xv = tp.val(x);
    const int64_t B = xv.dim(0), K = xv.dim(1), C = xv.dim(2);
    Tensor<T> out({B, 1, C});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            double s = 0;
            for (int64_t k = 0; k < K; ++k) s += static_cast<double>(xv.at3(b, k, c));
            out.at3(b, 0, c) = static_cast<T>(s / static_cast<double>(K));
        }
    return tp.make(std::move(out), tp.needs_grad(x), [x, B, K, C](Tape<T>& t, Var<T> self) {
        if (!t.needs_grad(x)) return;
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& dx = t.grad(x);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const T v = g.at3(b, 0, c) / static_cast<T>(K);
                for (int64_t k = 0; k < K; ++k) dx.at3(b, k, c) += v;
            }
    });
}

// Multi-head scaled dot-product attention.
// q: [B, M, C], k/v: [B, N, C]; C divisible by heads; softmax over N per row.
// key_mask (optional, [B, N], nonzero = valid) removes keys pre-softmax.
template <typename T>
Var<T> attention(Tape<T>& tp, Var<T> q, Var<T> k, Var<T> v, int64_t heads,
                 std::shared_ptr<Tensor<uint8_t>> key_mask = nullptr) {
    const auto& qv = tp.val(q);
    const auto& kv = tp.val(k);
    const auto& vv = tp.val(v);
    const int64_t B = qv.dim(0), M = qv.dim(1), C = qv.dim(2), N = kv.dim(1);
    if (C == 0 || N == 0) throw std::invalid_argument("attention: empty K/V or zero dim");
    if (kv.dim(0) != B || vv.dim(0) != B || vv.dim(1) != N || kv.dim(2) != C ||
        vv.dim(2) != C)
        throw std::invalid_argument("attention: shape mismatch");
    if (C % heads) throw std::invalid_argument("attention: C % heads != 0");
    const int64_t dh = C / heads;
    const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    if (key_mask) {
        if (key_mask->dim(0) != B || key_mask->dim(1) != N)
            throw std::invalid_argument("attention: key_mask must be [B, N]");
        for (int64_t b = 0; b < B; ++b) {
            bool any = false;
            for (int64_t j = 0; j < N && !any; ++j) any = (*key_mask).at2(b, j) != 0;
            if (!any) throw std::invalid_argument("attention: all keys masked for a batch row");
        }
    }

    auto probs = std::make_shared<Tensor<T>>(std::vector<int64_t>{B * heads, M, N});
    Tensor<T> out({B, M, C});
    std::vector<T> scores(static_cast<size_t>(M * N));
    for (int64_t b = 0; b < B; ++b) {
        const uint8_t* mask = key_mask ? key_mask->ptr() + b * N : nullptr;
        for (int64_t h = 0; h < heads; ++h) {
            const T* qh = qv.ptr() + b * M * C + h * dh;
            const T* kh = kv.ptr() + b * N * C + h * dh;
            const T* vh = vv.ptr() + b * N * C + h * dh;
            blas::gemm(false, true, M, N, dh, inv_sqrt_d, qh, C, kh, C, T(0),
                       scores.data(), N);
            T* P = probs->ptr() + (b * heads + h) * M * N;
            for (int64_t m = 0; m < M; ++m) {
                const T* s = scores.data() + m * N;
                T mx = s[0];
                bool seeded = false;
                for (int64_t j = 0; j < N; ++j) {
                    if (mask && !mask[j]) continue;
                    mx = seeded ? std::max(mx, s[j]) : s[j];
                    seeded = true;
                }
                double z = 0;
                T* p = P + m * N;
                for (int64_t j = 0; j < N; ++j) {
                    if (mask && !mask[j]) {
                        p[j] = T(0);
                        continue;
                    }
                    p[j] = std::exp(s[j] - mx);
                    z += static_cast<double>(p[j]);
                }
                const T iz = static_cast<T>(1.0 / z);
                for (int64_t j = 0; j < N; ++j) p[j] *= iz;
            }
            blas::gemm(false, false, M, dh, N, T(1), P, N, vh, C, T(0),
                       out.ptr() + b * M * C + h * dh, C);
        }
    }
    bool ng = tp.needs_grad(q) || tp.needs_grad(k) || tp.needs_grad(v);
    return tp.make(std::move(out), ng,
                   [q, k, v, B, M, N, C, heads, dh, inv_sqrt_d, probs](Tape<T>& t, Var<T> self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& qv = t.val(q);
        const Tensor<T>& kv = t.val(k);
        const Tensor<T>& vv = t.val(v);
        std::vector<T> dP(static_cast<size_t>(M * N)), dS(static_cast<size_t>(M * N));
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t h = 0; h < heads; ++h) {
                const T* gh = g.ptr() + b * M * C + h * dh;
                const T* qh = qv.ptr() + b * M * C + h * dh;
                const T* kh = kv.ptr() + b * N * C + h * dh;
                const T* vh = vv.ptr() + b * N * C + h * dh;
                const T* P = probs->ptr() + (b * heads + h) * M * N;
                if (t.needs_grad(v))
                    blas::gemm(true, false, N, dh, M, T(1), P, N, gh, C, T(1),
                               t.grad(v).ptr() + b * N * C + h * dh, C);
                // dP = g @ v^T ; dS = P * (dP - rowsum(dP * P))
                blas::gemm(false, true, M, N, dh, T(1), gh, C, vh, C, T(0), dP.data(), N);
                for (int64_t m = 0; m < M; ++m) {
                    const T* p = P + m * N;
                    const T* dp = dP.data() + m * N;
                    double dot = 0;
                    for (int64_t j = 0; j < N; ++j) dot += static_cast<double>(dp[j]) * p[j];
                    T* ds = dS.data() + m * N;
                    for (int64_t j = 0; j < N; ++j)
                        ds[j] = p[j] * (dp[j] - static_cast<T>(dot));
                }
                if (t.needs_grad(q))
                    blas::gemm(false, false, M, dh, N, inv_sqrt_d, dS.data(), N, kh, C,
                               T(1), t.grad(q).ptr() + b * M * C + h * dh, C);
                if (t.needs_grad(k))
                    blas::gemm(true, false, N, dh, M, inv_sqrt_d, dS.data(), N, qh, C,
                               T(1), t.grad(k).ptr() + b * N * C + h * dh, C);
            }
        }
    });
}

// Same data, new shape (numel must match).
template <typename T>
Var<T> reshape(Tape<T>& tp, Var<T> x, std::vector<int64_t> shape) {
    const auto& xv = tp.val(x);
    if (Tensor<T>::count(shape) != xv.numel())
        throw std::invalid_argument("reshape: numel mismatch");
    Tensor<T> out(std::move(shape), xv.data);
    return tp.make(std::move(out), tp.needs_grad(x), [x](Tape<T>& t, Var<T> self) {
        if (!t.needs_grad(x)) return;
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& dx = t.grad(x);
        for (int64_t i = 0; i < g.numel(); ++i) dx[i] += g[i];
    });
}

// Mean squared error to a constant target; returns a scalar var.
template <typename T>
Var<T> mse_loss(Tape<T>& tp, Var<T> pred, const Tensor<T>& target) {
    const auto& pv = tp.val(pred);
    detail::check_same_shape(pv, target, "mse_loss");
    const int64_t n = pv.numel();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pv[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    Tensor<T> out({1}, {static_cast<T>(acc / static_cast<double>(n))});
    auto tgt = std::make_shared<Tensor<T>>(target);
    return tp.make(std::move(out), tp.needs_grad(pred),
                   [pred, tgt, n](Tape<T>& t, Var<T> self) {
        if (!t.needs_grad(pred)) return;
        const T go = t.grad(self)[0];
        const Tensor<T>& pv = t.val(pred);
        Tensor<T>& dp = t.grad(pred);
        const T c = go * static_cast<T>(2.0 / static_cast<double>(n));
        for (int64_t i = 0; i < n; ++i) dp[i] += c * (pv[i] - (*tgt)[i]);
    });
}

}  // namespace tryon::nn

#endif
