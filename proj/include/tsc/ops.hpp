#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>

#include "tsc/tensor.hpp"

// Differentiable operations. Conventions used throughout:
//   - batched series activations are laid out [B, C, T] (channel rows
//     contiguous in time) so inner loops run along T;
//   - token sequences are [B, S, h]; attention works on [B, H, S, dh];
//   - convolution is cross-correlation (no kernel flip), stride 1;
//   - every backward rule accumulates (+=) so shared subexpressions sum
//     their path contributions, and skips inputs with requires_grad=false.

namespace tsc {

enum class Padding { Valid, Same };

namespace detail {

template <typename S>
bool skip_rule(const std::shared_ptr<TensorNode<S>>& out_node) {
    // An output never reached from the loss keeps an empty grad buffer.
    return out_node->grad.empty();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor<S> out(a.shape());
    const int64_t n = out.numel();
    const S* pa = a.data().data();
    const S* pb = b.data().data();
    S* po = out.data().data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    if (detail::tracking<S>({&a, &b})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([an = a.node(), bn = b.node(), on = out.node()] {
            if (detail::skip_rule(on)) return;
            const auto& og = on->grad;
            if (an->requires_grad) {
                auto& ga = an->ensure_grad();
                for (size_t i = 0; i < og.size(); ++i) ga[i] += og[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                for (size_t i = 0; i < og.size(); ++i) gb[i] += og[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor<S> out(a.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (detail::tracking<S>({&a, &b})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([an = a.node(), bn = b.node(), on = out.node()] {
            if (detail::skip_rule(on)) return;
            const auto& og = on->grad;
            if (an->requires_grad) {
                auto& ga = an->ensure_grad();
                for (size_t i = 0; i < og.size(); ++i) ga[i] += og[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                for (size_t i = 0; i < og.size(); ++i) gb[i] -= og[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor<S> out(a.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (detail::tracking<S>({&a, &b})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([an = a.node(), bn = b.node(), on = out.node()] {
            if (detail::skip_rule(on)) return;
            const auto& og = on->grad;
            if (an->requires_grad) {
                auto& ga = an->ensure_grad();
                for (size_t i = 0; i < og.size(); ++i) ga[i] += og[i] * bn->data[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                for (size_t i = 0; i < og.size(); ++i) gb[i] += og[i] * an->data[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
    Tensor<S> out(a.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
    if (detail::tracking<S>({&a})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([an = a.node(), on = out.node(), c] {
            if (detail::skip_rule(on) || !an->requires_grad) return;
            auto& ga = an->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) ga[i] += on->grad[i] * c;
        });
    }
    return out;
}

// x[..., C] + b[C], bias broadcast over the last dimension.
template <typename S>
Tensor<S> add_lastdim_bias(const Tensor<S>& x, const Tensor<S>& b) {
    if (b.rank() != 1 || x.rank() == 0 || x.shape().back() != b.dim(0))
        throw ShapeError("add_lastdim_bias: shape mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(b.shape()));
    const int64_t c = b.dim(0);
    const int64_t rows = x.numel() / c;
    Tensor<S> out(x.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const S* px = x.data().data() + r * c;
        S* po = out.data().data() + r * c;
        const S* pb = b.data().data();
        for (int64_t j = 0; j < c; ++j) po[j] = px[j] + pb[j];
    }
    if (detail::tracking<S>({&x, &b})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), bn = b.node(), on = out.node(), rows,
                                           c] {
            if (detail::skip_rule(on)) return;
            const auto& og = on->grad;
            if (xn->requires_grad) {
                auto& gx = xn->ensure_grad();
                for (size_t i = 0; i < og.size(); ++i) gx[i] += og[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < c; ++j) gb[j] += og[static_cast<size_t>(r * c + j)];
            }
        });
    }
    return out;
}

// x[B, C, T] + b[C], per-channel bias.
template <typename S>
Tensor<S> add_channel_bias(const Tensor<S>& x, const Tensor<S>& b) {
    if (x.rank() != 3 || b.rank() != 1 || x.dim(1) != b.dim(0))
        throw ShapeError("add_channel_bias: shape mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(b.shape()));
    const int64_t bs = x.dim(0), c = x.dim(1), t = x.dim(2);
    Tensor<S> out(x.shape());
    for (int64_t i = 0; i < bs * c; ++i) {
        const S bias = b.data()[static_cast<size_t>(i % c)];
        const S* px = x.data().data() + i * t;
        S* po = out.data().data() + i * t;
        for (int64_t j = 0; j < t; ++j) po[j] = px[j] + bias;
    }
    if (detail::tracking<S>({&x, &b})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), bn = b.node(), on = out.node(), bs, c,
                                           t] {
            if (detail::skip_rule(on)) return;
            const auto& og = on->grad;
            if (xn->requires_grad) {
                auto& gx = xn->ensure_grad();
                for (size_t i = 0; i < og.size(); ++i) gx[i] += og[i];
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                for (int64_t i = 0; i < bs * c; ++i) {
                    S acc = S(0);
                    const S* pg = og.data() + i * t;
                    for (int64_t j = 0; j < t; ++j) acc += pg[j];
                    gb[static_cast<size_t>(i % c)] += acc;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<S> out({m, n});
    const S* pa = a.data().data();
    const S* pb = b.data().data();
    S* po = out.data().data();
    for (int64_t i = 0; i < m; ++i) {
        S* orow = po + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const S av = pa[i * k + kk];
            const S* brow = pb + kk * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    if (detail::tracking<S>({&a, &b})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([an = a.node(), bn = b.node(), on = out.node(), m, k,
                                           n] {
            if (detail::skip_rule(on)) return;
            const S* og = on->grad.data();
            if (an->requires_grad) {
                // dA = dOut . B^T
                auto& ga = an->ensure_grad();
                const S* pb = bn->data.data();
                for (int64_t i = 0; i < m; ++i) {
                    const S* grow = og + i * n;
                    for (int64_t kk = 0; kk < k; ++kk) {
                        const S* brow = pb + kk * n;
                        S acc = S(0);
                        for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[static_cast<size_t>(i * k + kk)] += acc;
                    }
                }
            }
            if (bn->requires_grad) {
                // dB = A^T . dOut
                auto& gb = bn->ensure_grad();
                const S* pa = an->data.data();
                for (int64_t i = 0; i < m; ++i) {
                    const S* grow = og + i * n;
                    for (int64_t kk = 0; kk < k; ++kk) {
                        const S av = pa[i * k + kk];
                        S* gbrow = gb.data() + kk * n;
                        for (int64_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// 1D convolution (cross-correlation), stride 1
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, Padding padding) {
    if (x.rank() != 3 || w.rank() != 3)
        throw ShapeError("conv1d: expected input [B,Cin,T] and weight [Cout,Cin,K], got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
    if (x.dim(1) != w.dim(1))
        throw ShapeError("conv1d: channel mismatch, input " + shape_str(x.shape()) +
                         " vs weight " + shape_str(w.shape()));
    const int64_t bs = x.dim(0), cin = x.dim(1), t = x.dim(2);
    const int64_t cout = w.dim(0), k = w.dim(2);
    if (b.rank() != 1 || b.dim(0) != cout)
        throw ShapeError("conv1d: bias shape " + shape_str(b.shape()) + " does not match " +
                         std::to_string(cout) + " output channels");

    // Same padding splits K-1 zeros as evenly as possible, extra on the right.
    const int64_t left = (padding == Padding::Same) ? (k - 1) / 2 : 0;
    const int64_t right = (padding == Padding::Same) ? (k - 1) - left : 0;
    const int64_t tp = t + left + right;
    if (k > tp)
        throw ShapeError("conv1d: kernel length " + std::to_string(k) +
                         " exceeds padded input length " + std::to_string(tp));
    const int64_t tout = tp - k + 1;

    // Zero-padded copy keeps every inner loop branch-free.
    std::vector<S> xpad(static_cast<size_t>(bs * cin * tp), S(0));
    for (int64_t bc = 0; bc < bs * cin; ++bc) {
        const S* src = x.data().data() + bc * t;
        S* dst = xpad.data() + bc * tp + left;
        std::memcpy(dst, src, static_cast<size_t>(t) * sizeof(S));
    }

    Tensor<S> out({bs, cout, tout});
    const S* pw = w.data().data();
    for (int64_t bb = 0; bb < bs; ++bb) {
        for (int64_t co = 0; co < cout; ++co) {
            S* orow = out.data().data() + (bb * cout + co) * tout;
            const S bias = b.data()[static_cast<size_t>(co)];
            for (int64_t j = 0; j < tout; ++j) orow[j] = bias;
            for (int64_t ci = 0; ci < cin; ++ci) {
                const S* xrow = xpad.data() + (bb * cin + ci) * tp;
                const S* wrow = pw + (co * cin + ci) * k;
                for (int64_t kk = 0; kk < k; ++kk) {
                    const S wv = wrow[kk];
                    const S* xo = xrow + kk;
                    for (int64_t j = 0; j < tout; ++j) orow[j] += wv * xo[j];
                }
            }
        }
    }

    if (detail::tracking<S>({&x, &w, &b})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), wn = w.node(), bn = b.node(),
                                           on = out.node(), xpad = std::move(xpad), bs, cin, cout,
                                           t, tp, tout, k, left] {
            if (detail::skip_rule(on)) return;
            const S* og = on->grad.data();
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                for (int64_t bb = 0; bb < bs; ++bb)
                    for (int64_t co = 0; co < cout; ++co) {
                        const S* grow = og + (bb * cout + co) * tout;
                        S acc = S(0);
                        for (int64_t j = 0; j < tout; ++j) acc += grow[j];
                        gb[static_cast<size_t>(co)] += acc;
                    }
            }
            if (wn->requires_grad) {
                auto& gw = wn->ensure_grad();
                for (int64_t bb = 0; bb < bs; ++bb)
                    for (int64_t co = 0; co < cout; ++co) {
                        const S* grow = og + (bb * cout + co) * tout;
                        for (int64_t ci = 0; ci < cin; ++ci) {
                            const S* xrow = xpad.data() + (bb * cin + ci) * tp;
                            S* gwrow = gw.data() + (co * cin + ci) * k;
                            for (int64_t kk = 0; kk < k; ++kk) {
                                const S* xo = xrow + kk;
                                S acc = S(0);
                                for (int64_t j = 0; j < tout; ++j) acc += grow[j] * xo[j];
                                gwrow[kk] += acc;
                            }
                        }
                    }
            }
            if (xn->requires_grad) {
                std::vector<S> gxpad(static_cast<size_t>(bs * cin * tp), S(0));
                const S* pw = wn->data.data();
                for (int64_t bb = 0; bb < bs; ++bb)
                    for (int64_t co = 0; co < cout; ++co) {
                        const S* grow = og + (bb * cout + co) * tout;
                        for (int64_t ci = 0; ci < cin; ++ci) {
                            S* gxrow = gxpad.data() + (bb * cin + ci) * tp;
                            const S* wrow = pw + (co * cin + ci) * k;
                            for (int64_t kk = 0; kk < k; ++kk) {
                                const S wv = wrow[kk];
                                S* gxo = gxrow + kk;
                                for (int64_t j = 0; j < tout; ++j) gxo[j] += wv * grow[j];
                            }
                        }
                    }
                auto& gx = xn->ensure_grad();
                for (int64_t bc = 0; bc < bs * cin; ++bc) {
                    const S* src = gxpad.data() + bc * tp + left;
                    S* dst = gx.data() + bc * t;
                    for (int64_t j = 0; j < t; ++j) dst[j] += src[j];
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    Tensor<S> out(x.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] > S(0) ? x.data()[i] : S(0);
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node()] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            const auto& og = on->grad;
            // subgradient 0 at exactly 0
            for (size_t i = 0; i < og.size(); ++i)
                if (xn->data[i] > S(0)) gx[i] += og[i];
        });
    }
    return out;
}

template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
    constexpr double kInvSqrt2 = 0.7071067811865475244;
    constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    Tensor<S> out(x.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(x.data()[i]);
        out.data()[i] = static_cast<S>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
    }
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node()] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            const auto& og = on->grad;
            for (size_t i = 0; i < og.size(); ++i) {
                const double v = static_cast<double>(xn->data[i]);
                const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                gx[i] += og[i] * static_cast<S>(cdf + v * pdf);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// x[B,C,T], per-channel statistics over B*T elements. Training mode uses the
// batch statistics and folds them into the running averages with momentum
// 0.1 (running variance stored unbiased, normalization uses the biased one);
// eval mode normalizes with the running averages only.
template <typename S>
Tensor<S> batchnorm1d(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                      Tensor<S>& running_mean, Tensor<S>& running_var, bool training,
                      double momentum = 0.1, double eps = 1e-5) {
    if (x.rank() != 3)
        throw ShapeError("batchnorm1d: expected [B,C,T], got " + shape_str(x.shape()));
    const int64_t bs = x.dim(0), c = x.dim(1), t = x.dim(2);
    if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
        running_var.numel() != c)
        throw ShapeError("batchnorm1d: parameter size does not match " + std::to_string(c) +
                         " channels");
    const int64_t n = bs * t;

    std::vector<S> inv_std(static_cast<size_t>(c));
    std::vector<S> xhat(x.data().size());
    Tensor<S> out(x.shape());

    for (int64_t ch = 0; ch < c; ++ch) {
        double mean, var;
        if (training) {
            double sum = 0.0, sq = 0.0;
            for (int64_t bb = 0; bb < bs; ++bb) {
                const S* row = x.data().data() + (bb * c + ch) * t;
                for (int64_t j = 0; j < t; ++j) {
                    sum += row[j];
                    sq += static_cast<double>(row[j]) * row[j];
                }
            }
            mean = sum / n;
            var = sq / n - mean * mean;
            if (var < 0.0) var = 0.0;
            const double unbiased = (n > 1) ? var * n / (n - 1) : var;
            auto& rm = running_mean.data()[static_cast<size_t>(ch)];
            auto& rv = running_var.data()[static_cast<size_t>(ch)];
            rm = static_cast<S>((1.0 - momentum) * rm + momentum * mean);
            rv = static_cast<S>((1.0 - momentum) * rv + momentum * unbiased);
        } else {
            mean = running_mean.data()[static_cast<size_t>(ch)];
            var = running_var.data()[static_cast<size_t>(ch)];
        }
        const S istd = static_cast<S>(1.0 / std::sqrt(var + eps));
        inv_std[static_cast<size_t>(ch)] = istd;
        const S g = gamma.data()[static_cast<size_t>(ch)];
        const S be = beta.data()[static_cast<size_t>(ch)];
        for (int64_t bb = 0; bb < bs; ++bb) {
            const size_t base = static_cast<size_t>((bb * c + ch) * t);
            const S* row = x.data().data() + base;
            S* hrow = xhat.data() + base;
            S* orow = out.data().data() + base;
            for (int64_t j = 0; j < t; ++j) {
                hrow[j] = (row[j] - static_cast<S>(mean)) * istd;
                orow[j] = g * hrow[j] + be;
            }
        }
    }

    if (detail::tracking<S>({&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), gn = gamma.node(), bn = beta.node(),
                                           on = out.node(), xhat = std::move(xhat),
                                           inv_std = std::move(inv_std), bs, c, t, n, training] {
            if (detail::skip_rule(on)) return;
            const S* og = on->grad.data();
            for (int64_t ch = 0; ch < c; ++ch) {
                double sum_g = 0.0, sum_gh = 0.0;
                for (int64_t bb = 0; bb < bs; ++bb) {
                    const size_t base = static_cast<size_t>((bb * c + ch) * t);
                    for (int64_t j = 0; j < t; ++j) {
                        sum_g += og[base + j];
                        sum_gh += static_cast<double>(og[base + j]) * xhat[base + j];
                    }
                }
                if (gn->requires_grad) gn->ensure_grad()[static_cast<size_t>(ch)] += static_cast<S>(sum_gh);
                if (bn->requires_grad) bn->ensure_grad()[static_cast<size_t>(ch)] += static_cast<S>(sum_g);
                if (xn->requires_grad) {
                    auto& gx = xn->ensure_grad();
                    const S g = gn->data[static_cast<size_t>(ch)];
                    const S istd = inv_std[static_cast<size_t>(ch)];
                    const S mg = static_cast<S>(sum_g / n);
                    const S mgh = static_cast<S>(sum_gh / n);
                    for (int64_t bb = 0; bb < bs; ++bb) {
                        const size_t base = static_cast<size_t>((bb * c + ch) * t);
                        for (int64_t j = 0; j < t; ++j) {
                            const S d = training ? (og[base + j] - mg - xhat[base + j] * mgh)
                                                 : og[base + j];
                            gx[base + j] += g * istd * d;
                        }
                    }
                }
            }
        });
    }
    return out;
}

// Layer normalization over the last dimension.
template <typename S>
Tensor<S> layernorm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                    double eps = 1e-5) {
    if (x.rank() == 0 || gamma.numel() != x.shape().back() || beta.numel() != x.shape().back())
        throw ShapeError("layernorm: scale/shift " + shape_str(gamma.shape()) +
                         " does not match last dim of " + shape_str(x.shape()));
    const int64_t c = x.shape().back();
    const int64_t rows = x.numel() / c;
    Tensor<S> out(x.shape());
    std::vector<S> xhat(x.data().size());
    std::vector<S> inv_std(static_cast<size_t>(rows));

    for (int64_t r = 0; r < rows; ++r) {
        const S* row = x.data().data() + r * c;
        double sum = 0.0, sq = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            sum += row[j];
            sq += static_cast<double>(row[j]) * row[j];
        }
        const double mean = sum / c;
        double var = sq / c - mean * mean;
        if (var < 0.0) var = 0.0;
        const S istd = static_cast<S>(1.0 / std::sqrt(var + eps));
        inv_std[static_cast<size_t>(r)] = istd;
        S* hrow = xhat.data() + r * c;
        S* orow = out.data().data() + r * c;
        for (int64_t j = 0; j < c; ++j) {
            hrow[j] = (row[j] - static_cast<S>(mean)) * istd;
            orow[j] = gamma.data()[static_cast<size_t>(j)] * hrow[j] +
                      beta.data()[static_cast<size_t>(j)];
        }
    }

    if (detail::tracking<S>({&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), gn = gamma.node(), bn = beta.node(),
                                           on = out.node(), xhat = std::move(xhat),
                                           inv_std = std::move(inv_std), rows, c] {
            if (detail::skip_rule(on)) return;
            const S* og = on->grad.data();
            if (gn->requires_grad || bn->requires_grad) {
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < c; ++j) {
                        const size_t i = static_cast<size_t>(r * c + j);
                        if (gn->requires_grad) gn->ensure_grad()[static_cast<size_t>(j)] += og[i] * xhat[i];
                        if (bn->requires_grad) bn->ensure_grad()[static_cast<size_t>(j)] += og[i];
                    }
            }
            if (xn->requires_grad) {
                auto& gx = xn->ensure_grad();
                for (int64_t r = 0; r < rows; ++r) {
                    const size_t base = static_cast<size_t>(r * c);
                    double sum_g = 0.0, sum_gh = 0.0;
                    for (int64_t j = 0; j < c; ++j) {
                        const double gy = static_cast<double>(og[base + j]) *
                                          gn->data[static_cast<size_t>(j)];
                        sum_g += gy;
                        sum_gh += gy * xhat[base + j];
                    }
                    const double mg = sum_g / c, mgh = sum_gh / c;
                    const S istd = inv_std[static_cast<size_t>(r)];
                    for (int64_t j = 0; j < c; ++j) {
                        const double gy = static_cast<double>(og[base + j]) *
                                          gn->data[static_cast<size_t>(j)];
                        gx[base + j] += istd * static_cast<S>(gy - mg - xhat[base + j] * mgh);
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

// Sliding max over T, stride 1, same padding; T is preserved. Backward routes
// to the earliest index on ties.
template <typename S>
Tensor<S> maxpool1d(const Tensor<S>& x, int64_t window) {
    if (x.rank() != 3)
        throw ShapeError("maxpool1d: expected [B,C,T], got " + shape_str(x.shape()));
    if (window < 1) throw ShapeError("maxpool1d: window must be >= 1");
    const int64_t bc = x.dim(0) * x.dim(1), t = x.dim(2);
    const int64_t left = (window - 1) / 2;
    Tensor<S> out(x.shape());
    std::vector<int64_t> argmax(static_cast<size_t>(bc * t));
    for (int64_t i = 0; i < bc; ++i) {
        const S* row = x.data().data() + i * t;
        S* orow = out.data().data() + i * t;
        int64_t* arow = argmax.data() + i * t;
        for (int64_t j = 0; j < t; ++j) {
            const int64_t lo = std::max<int64_t>(0, j - left);
            const int64_t hi = std::min<int64_t>(t, j - left + window);
            S best = row[lo];
            int64_t bi = lo;
            for (int64_t p = lo + 1; p < hi; ++p)
                if (row[p] > best) {
                    best = row[p];
                    bi = p;
                }
            orow[j] = best;
            arow[j] = bi;
        }
    }
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node(),
                                           argmax = std::move(argmax), bc, t] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            const S* og = on->grad.data();
            for (int64_t i = 0; i < bc; ++i)
                for (int64_t j = 0; j < t; ++j)
                    gx[static_cast<size_t>(i * t + argmax[static_cast<size_t>(i * t + j)])] +=
                        og[i * t + j];
        });
    }
    return out;
}

// [B,C,T] -> [B,C], mean over time.
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
    if (x.rank() != 3)
        throw ShapeError("global_avg_pool: expected [B,C,T], got " + shape_str(x.shape()));
    const int64_t bc = x.dim(0) * x.dim(1), t = x.dim(2);
    Tensor<S> out({x.dim(0), x.dim(1)});
    for (int64_t i = 0; i < bc; ++i) {
        const S* row = x.data().data() + i * t;
        S acc = S(0);
        for (int64_t j = 0; j < t; ++j) acc += row[j];
        out.data()[static_cast<size_t>(i)] = acc / static_cast<S>(t);
    }
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node(), bc, t] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            for (int64_t i = 0; i < bc; ++i) {
                const S g = on->grad[static_cast<size_t>(i)] / static_cast<S>(t);
                S* grow = gx.data() + i * t;
                for (int64_t j = 0; j < t; ++j) grow[j] += g;
            }
        });
    }
    return out;
}

// [B,L,h] -> [B,h], mean over tokens.
template <typename S>
Tensor<S> mean_tokens(const Tensor<S>& x) {
    if (x.rank() != 3)
        throw ShapeError("mean_tokens: expected [B,L,h], got " + shape_str(x.shape()));
    const int64_t bs = x.dim(0), l = x.dim(1), h = x.dim(2);
    Tensor<S> out({bs, h});
    for (int64_t bb = 0; bb < bs; ++bb)
        for (int64_t tok = 0; tok < l; ++tok) {
            const S* row = x.data().data() + (bb * l + tok) * h;
            S* orow = out.data().data() + bb * h;
            for (int64_t j = 0; j < h; ++j) orow[j] += row[j] / static_cast<S>(l);
        }
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node(), bs, l, h] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            for (int64_t bb = 0; bb < bs; ++bb)
                for (int64_t tok = 0; tok < l; ++tok) {
                    S* grow = gx.data() + (bb * l + tok) * h;
                    const S* og = on->grad.data() + bb * h;
                    for (int64_t j = 0; j < h; ++j) grow[j] += og[j] / static_cast<S>(l);
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Softmax / cross entropy
// ---------------------------------------------------------------------------

// Softmax over the last dimension, max-subtracted for stability.
template <typename S>
Tensor<S> softmax_lastdim(const Tensor<S>& x) {
    if (x.rank() == 0) throw ShapeError("softmax_lastdim: scalar input");
    const int64_t c = x.shape().back();
    const int64_t rows = x.numel() / c;
    Tensor<S> out(x.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const S* row = x.data().data() + r * c;
        S* orow = out.data().data() + r * c;
        S mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            orow[j] = static_cast<S>(std::exp(static_cast<double>(row[j] - mx)));
            denom += orow[j];
        }
        for (int64_t j = 0; j < c; ++j) orow[j] = static_cast<S>(orow[j] / denom);
    }
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node(), rows, c] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            const S* og = on->grad.data();
            const S* p = on->data.data();
            for (int64_t r = 0; r < rows; ++r) {
                const size_t base = static_cast<size_t>(r * c);
                double dot = 0.0;
                for (int64_t j = 0; j < c; ++j) dot += static_cast<double>(og[base + j]) * p[base + j];
                for (int64_t j = 0; j < c; ++j)
                    gx[base + j] += p[base + j] * (og[base + j] - static_cast<S>(dot));
            }
        });
    }
    return out;
}

// Mean over the batch of -log softmax(logits)[label]. Returns a scalar.
template <typename S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int64_t>& labels) {
    if (logits.rank() != 2)
        throw ShapeError("softmax_cross_entropy: expected [B,C] logits, got " +
                         shape_str(logits.shape()));
    const int64_t bs = logits.dim(0), c = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != bs)
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(bs));
    for (int64_t i = 0; i < bs; ++i)
        if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= c)
            throw DataError("softmax_cross_entropy: label " +
                            std::to_string(labels[static_cast<size_t>(i)]) + " at row " +
                            std::to_string(i) + " outside [0, " + std::to_string(c) + ")");

    std::vector<S> probs(logits.data().size());
    double loss = 0.0;
    for (int64_t i = 0; i < bs; ++i) {
        const S* row = logits.data().data() + i * c;
        S* prow = probs.data() + i * c;
        S mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            prow[j] = static_cast<S>(std::exp(static_cast<double>(row[j] - mx)));
            denom += prow[j];
        }
        for (int64_t j = 0; j < c; ++j) prow[j] = static_cast<S>(prow[j] / denom);
        loss -= std::log(static_cast<double>(prow[labels[static_cast<size_t>(i)]]));
    }
    Tensor<S> out = Tensor<S>::scalar(static_cast<S>(loss / bs));

    if (detail::tracking<S>({&logits})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([ln = logits.node(), on = out.node(),
                                           probs = std::move(probs), labels, bs, c] {
            if (detail::skip_rule(on) || !ln->requires_grad) return;
            auto& gl = ln->ensure_grad();
            const S g = on->grad[0] / static_cast<S>(bs);
            for (int64_t i = 0; i < bs; ++i)
                for (int64_t j = 0; j < c; ++j) {
                    const size_t idx = static_cast<size_t>(i * c + j);
                    const S delta = (j == labels[static_cast<size_t>(i)]) ? S(1) : S(0);
                    gl[idx] += g * (probs[idx] - delta);
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

// softmax(q.k^T / sqrt(dh) [+ causal mask]) . v over [B,H,S,dh] inputs.
// The causal mask zeroes attention to strictly-future positions.
template <typename S>
Tensor<S> attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v, bool causal) {
    if (q.rank() != 4 || q.shape() != k.shape() || q.shape() != v.shape())
        throw ShapeError("attention: q/k/v must share shape [B,H,S,dh], got " +
                         shape_str(q.shape()) + ", " + shape_str(k.shape()) + ", " +
                         shape_str(v.shape()));
    const int64_t bh = q.dim(0) * q.dim(1), s = q.dim(2), dh = q.dim(3);
    const S inv_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

    Tensor<S> out(q.shape());
    std::vector<S> attn(static_cast<size_t>(bh * s * s));
    for (int64_t g = 0; g < bh; ++g) {
        const S* qm = q.data().data() + g * s * dh;
        const S* km = k.data().data() + g * s * dh;
        const S* vm = v.data().data() + g * s * dh;
        S* am = attn.data() + g * s * s;
        S* om = out.data().data() + g * s * dh;
        for (int64_t i = 0; i < s; ++i) {
            S* arow = am + i * s;
            const int64_t jmax = causal ? i + 1 : s;
            S mx = -std::numeric_limits<S>::infinity();
            for (int64_t j = 0; j < jmax; ++j) {
                S acc = S(0);
                const S* qrow = qm + i * dh;
                const S* krow = km + j * dh;
                for (int64_t e = 0; e < dh; ++e) acc += qrow[e] * krow[e];
                arow[j] = acc * inv_scale;
                mx = std::max(mx, arow[j]);
            }
            double denom = 0.0;
            for (int64_t j = 0; j < jmax; ++j) {
                arow[j] = static_cast<S>(std::exp(static_cast<double>(arow[j] - mx)));
                denom += arow[j];
            }
            for (int64_t j = 0; j < jmax; ++j) arow[j] = static_cast<S>(arow[j] / denom);
            for (int64_t j = jmax; j < s; ++j) arow[j] = S(0);
            S* orow = om + i * dh;
            for (int64_t j = 0; j < jmax; ++j) {
                const S a = arow[j];
                const S* vrow = vm + j * dh;
                for (int64_t e = 0; e < dh; ++e) orow[e] += a * vrow[e];
            }
        }
    }

    if (detail::tracking<S>({&q, &k, &v})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([qn = q.node(), kn = k.node(), vn = v.node(),
                                           on = out.node(), attn = std::move(attn), bh, s, dh,
                                           inv_scale] {
            if (detail::skip_rule(on)) return;
            const S* og = on->grad.data();
            std::vector<S> dscores(static_cast<size_t>(s * s));
            for (int64_t g = 0; g < bh; ++g) {
                const S* am = attn.data() + g * s * s;
                const S* qm = qn->data.data() + g * s * dh;
                const S* km = kn->data.data() + g * s * dh;
                const S* vm = vn->data.data() + g * s * dh;
                const S* gm = og + g * s * dh;
                // dV = attn^T . dOut
                if (vn->requires_grad) {
                    S* gv = vn->ensure_grad().data() + g * s * dh;
                    for (int64_t i = 0; i < s; ++i) {
                        const S* arow = am + i * s;
                        const S* grow = gm + i * dh;
                        for (int64_t j = 0; j < s; ++j) {
                            const S a = arow[j];
                            if (a == S(0)) continue;
                            S* gvrow = gv + j * dh;
                            for (int64_t e = 0; e < dh; ++e) gvrow[e] += a * grow[e];
                        }
                    }
                }
                if (!qn->requires_grad && !kn->requires_grad) continue;
                // dscores via softmax backward, then dQ and dK.
                for (int64_t i = 0; i < s; ++i) {
                    const S* arow = am + i * s;
                    const S* grow = gm + i * dh;
                    double dot = 0.0;
                    S* drow = dscores.data() + i * s;
                    for (int64_t j = 0; j < s; ++j) {
                        S dattn = S(0);
                        if (arow[j] != S(0)) {
                            const S* vrow = vm + j * dh;
                            for (int64_t e = 0; e < dh; ++e) dattn += grow[e] * vrow[e];
                        }
                        drow[j] = dattn;
                        dot += static_cast<double>(dattn) * arow[j];
                    }
                    for (int64_t j = 0; j < s; ++j)
                        drow[j] = arow[j] * (drow[j] - static_cast<S>(dot)) * inv_scale;
                }
                if (qn->requires_grad) {
                    S* gq = qn->ensure_grad().data() + g * s * dh;
                    for (int64_t i = 0; i < s; ++i) {
                        const S* drow = dscores.data() + i * s;
                        S* gqrow = gq + i * dh;
                        for (int64_t j = 0; j < s; ++j) {
                            const S d = drow[j];
                            if (d == S(0)) continue;
                            const S* krow = km + j * dh;
                            for (int64_t e = 0; e < dh; ++e) gqrow[e] += d * krow[e];
                        }
                    }
                }
                if (kn->requires_grad) {
                    S* gk = kn->ensure_grad().data() + g * s * dh;
                    for (int64_t i = 0; i < s; ++i) {
                        const S* drow = dscores.data() + i * s;
                        const S* qrow = qm + i * dh;
                        for (int64_t j = 0; j < s; ++j) {
                            const S d = drow[j];
                            if (d == S(0)) continue;
                            S* gkrow = gk + j * dh;
                            for (int64_t e = 0; e < dh; ++e) gkrow[e] += d * qrow[e];
                        }
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, std::vector<int64_t> new_shape) {
    Tensor<S> out(std::move(new_shape), x.data());
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node()] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) gx[i] += on->grad[i];
        });
    }
    return out;
}

// [A,B,C] -> [A,C,B]; swaps the two trailing axes of a rank-3 tensor.
template <typename S>
Tensor<S> transpose12(const Tensor<S>& x) {
    if (x.rank() != 3)
        throw ShapeError("transpose12: expected rank-3, got " + shape_str(x.shape()));
    const int64_t a = x.dim(0), b = x.dim(1), c = x.dim(2);
    Tensor<S> out({a, c, b});
    for (int64_t i = 0; i < a; ++i)
        for (int64_t j = 0; j < b; ++j) {
            const S* row = x.data().data() + (i * b + j) * c;
            for (int64_t e = 0; e < c; ++e)
                out.data()[static_cast<size_t>((i * c + e) * b + j)] = row[e];
        }
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node(), a, b, c] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            const S* og = on->grad.data();
            for (int64_t i = 0; i < a; ++i)
                for (int64_t j = 0; j < b; ++j) {
                    S* grow = gx.data() + (i * b + j) * c;
                    for (int64_t e = 0; e < c; ++e) grow[e] += og[(i * c + e) * b + j];
                }
        });
    }
    return out;
}

// [B,S,h] -> [B,H,S,h/H]
template <typename S>
Tensor<S> split_heads(const Tensor<S>& x, int64_t heads) {
    if (x.rank() != 3 || heads < 1 || x.dim(2) % heads != 0)
        throw ShapeError("split_heads: cannot split " + shape_str(x.shape()) + " into " +
                         std::to_string(heads) + " heads");
    const int64_t bs = x.dim(0), s = x.dim(1), h = x.dim(2), dh = h / heads;
    Tensor<S> out({bs, heads, s, dh});
    for (int64_t bb = 0; bb < bs; ++bb)
        for (int64_t i = 0; i < s; ++i) {
            const S* row = x.data().data() + (bb * s + i) * h;
            for (int64_t hd = 0; hd < heads; ++hd) {
                S* orow = out.data().data() + ((bb * heads + hd) * s + i) * dh;
                std::memcpy(orow, row + hd * dh, static_cast<size_t>(dh) * sizeof(S));
            }
        }
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node(), bs, s, h, heads, dh] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            const S* og = on->grad.data();
            for (int64_t bb = 0; bb < bs; ++bb)
                for (int64_t i = 0; i < s; ++i) {
                    S* grow = gx.data() + (bb * s + i) * h;
                    for (int64_t hd = 0; hd < heads; ++hd) {
                        const S* orow = og + ((bb * heads + hd) * s + i) * dh;
                        for (int64_t e = 0; e < dh; ++e) grow[hd * dh + e] += orow[e];
                    }
                }
        });
    }
    return out;
}

// [B,H,S,dh] -> [B,S,H*dh]
template <typename S>
Tensor<S> merge_heads(const Tensor<S>& x) {
    if (x.rank() != 4)
        throw ShapeError("merge_heads: expected [B,H,S,dh], got " + shape_str(x.shape()));
    const int64_t bs = x.dim(0), heads = x.dim(1), s = x.dim(2), dh = x.dim(3);
    const int64_t h = heads * dh;
    Tensor<S> out({bs, s, h});
    for (int64_t bb = 0; bb < bs; ++bb)
        for (int64_t hd = 0; hd < heads; ++hd)
            for (int64_t i = 0; i < s; ++i) {
                const S* row = x.data().data() + ((bb * heads + hd) * s + i) * dh;
                S* orow = out.data().data() + (bb * s + i) * h + hd * dh;
                std::memcpy(orow, row, static_cast<size_t>(dh) * sizeof(S));
            }
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node(), bs, s, h, heads, dh] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            const S* og = on->grad.data();
            for (int64_t bb = 0; bb < bs; ++bb)
                for (int64_t hd = 0; hd < heads; ++hd)
                    for (int64_t i = 0; i < s; ++i) {
                        S* grow = gx.data() + ((bb * heads + hd) * s + i) * dh;
                        const S* orow = og + (bb * s + i) * h + hd * dh;
                        for (int64_t e = 0; e < dh; ++e) grow[e] += orow[e];
                    }
        });
    }
    return out;
}

// Concatenate rank-3 tensors along axis 1 ([B,*,X] with matching B and X).
template <typename S>
Tensor<S> concat_axis1(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_axis1: no inputs");
    const int64_t bs = parts[0].dim(0), x = parts[0].dim(2);
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != 3 || p.dim(0) != bs || p.dim(2) != x)
            throw ShapeError("concat_axis1: incompatible part shape " + shape_str(p.shape()) +
                             " vs " + shape_str(parts[0].shape()));
        total += p.dim(1);
    }
    Tensor<S> out({bs, total, x});
    int64_t offset = 0;
    for (const auto& p : parts) {
        const int64_t c = p.dim(1);
        for (int64_t bb = 0; bb < bs; ++bb)
            std::memcpy(out.data().data() + (bb * total + offset) * x,
                        p.data().data() + bb * c * x, static_cast<size_t>(c * x) * sizeof(S));
        offset += c;
    }
    bool track = false;
    for (const auto& p : parts)
        if (p.requires_grad()) track = true;
    if (track && GradientTape<S>::active()) {
        out.set_requires_grad(true);
        std::vector<std::shared_ptr<detail::TensorNode<S>>> nodes;
        for (const auto& p : parts) nodes.push_back(p.node());
        GradientTape<S>::active()->record([nodes = std::move(nodes), on = out.node(), bs, total,
                                           x] {
            if (detail::skip_rule(on)) return;
            const S* og = on->grad.data();
            int64_t offset = 0;
            for (auto& node : nodes) {
                const int64_t c = node->shape[1];
                if (node->requires_grad) {
                    auto& g = node->ensure_grad();
                    for (int64_t bb = 0; bb < bs; ++bb) {
                        const S* src = og + (bb * total + offset) * x;
                        S* dst = g.data() + bb * c * x;
                        for (int64_t i = 0; i < c * x; ++i) dst[i] += src[i];
                    }
                }
                offset += c;
            }
        });
    }
    return out;
}

// [R,C] -> [B,R,C], shared across the batch; backward sums over the batch.
template <typename S>
Tensor<S> expand_batch(const Tensor<S>& x, int64_t batch) {
    if (x.rank() != 2 || batch < 1)
        throw ShapeError("expand_batch: expected rank-2 input, got " + shape_str(x.shape()));
    const int64_t n = x.numel();
    Tensor<S> out({batch, x.dim(0), x.dim(1)});
    for (int64_t bb = 0; bb < batch; ++bb)
        std::memcpy(out.data().data() + bb * n, x.data().data(),
                    static_cast<size_t>(n) * sizeof(S));
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node(), batch, n] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            const S* og = on->grad.data();
            for (int64_t bb = 0; bb < batch; ++bb)
                for (int64_t i = 0; i < n; ++i) gx[static_cast<size_t>(i)] += og[bb * n + i];
        });
    }
    return out;
}

// [B,S,h] -> [B,h], the hidden state at one sequence position.
template <typename S>
Tensor<S> slice_token(const Tensor<S>& x, int64_t pos) {
    if (x.rank() != 3 || pos < 0 || pos >= x.dim(1))
        throw ShapeError("slice_token: position " + std::to_string(pos) + " out of range for " +
                         shape_str(x.shape()));
    const int64_t bs = x.dim(0), s = x.dim(1), h = x.dim(2);
    Tensor<S> out({bs, h});
    for (int64_t bb = 0; bb < bs; ++bb)
        std::memcpy(out.data().data() + bb * h, x.data().data() + (bb * s + pos) * h,
                    static_cast<size_t>(h) * sizeof(S));
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node(), bs, s, h, pos] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            const S* og = on->grad.data();
            for (int64_t bb = 0; bb < bs; ++bb)
                for (int64_t e = 0; e < h; ++e) gx[static_cast<size_t>((bb * s + pos) * h + e)] += og[bb * h + e];
        });
    }
    return out;
}

// [B,T,d] -> [B,ceil(T/p),p*d] non-overlapping patches, zero-padded tail.
template <typename S>
Tensor<S> patchify(const Tensor<S>& x, int64_t patch_len) {
    if (x.rank() != 3 || patch_len < 1)
        throw ShapeError("patchify: expected [B,T,d], got " + shape_str(x.shape()));
    const int64_t bs = x.dim(0), t = x.dim(1), d = x.dim(2);
    const int64_t l = (t + patch_len - 1) / patch_len;
    Tensor<S> out({bs, l, patch_len * d});
    for (int64_t bb = 0; bb < bs; ++bb)
        for (int64_t i = 0; i < t; ++i) {
            const S* src = x.data().data() + (bb * t + i) * d;
            S* dst = out.data().data() + (bb * l + i / patch_len) * patch_len * d +
                     (i % patch_len) * d;
            std::memcpy(dst, src, static_cast<size_t>(d) * sizeof(S));
        }
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node(), bs, t, d, l,
                                           patch_len] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            const S* og = on->grad.data();
            for (int64_t bb = 0; bb < bs; ++bb)
                for (int64_t i = 0; i < t; ++i) {
                    const S* src = og + (bb * l + i / patch_len) * patch_len * d +
                                   (i % patch_len) * d;
                    S* dst = gx.data() + (bb * t + i) * d;
                    for (int64_t e = 0; e < d; ++e) dst[e] += src[e];
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
    double acc = 0.0;
    for (S v : x.data()) acc += v;
    Tensor<S> out = Tensor<S>::scalar(static_cast<S>(acc));
    if (detail::tracking<S>({&x})) {
        out.set_requires_grad(true);
        GradientTape<S>::active()->record([xn = x.node(), on = out.node()] {
            if (detail::skip_rule(on) || !xn->requires_grad) return;
            auto& gx = xn->ensure_grad();
            const S g = on->grad[0];
            for (auto& v : gx) v += g;
        });
    }
    return out;
}

// Argmax per row, ties resolved toward the lowest index. Not differentiable.
template <typename S>
std::vector<int64_t> argmax_rows(const Tensor<S>& logits) {
    if (logits.rank() != 2)
        throw ShapeError("argmax_rows: expected [B,C], got " + shape_str(logits.shape()));
    const int64_t bs = logits.dim(0), c = logits.dim(1);
    std::vector<int64_t> out(static_cast<size_t>(bs));
    for (int64_t i = 0; i < bs; ++i) {
        const S* row = logits.data().data() + i * c;
        int64_t best = 0;
        for (int64_t j = 1; j < c; ++j)
            if (row[j] > row[best]) best = j;
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

}  // namespace tsc
