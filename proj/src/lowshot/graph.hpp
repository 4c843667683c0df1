#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lowshot/tensor.hpp"

namespace lowshot {

// Reverse-mode engine over a fixed primitive set. Graphs are ephemeral: built
// per evaluation, backward once, dropped. Every backward pass is hand-derived.
//
// Gradient buffers live on the nodes and are lazily allocated; closures
// accumulate (+=) so shared subexpressions work. Non-finite values abort with
// a NumericError naming the primitive.

template <class T>
struct Node;

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

template <class T>
struct Node {
    const char* op = "leaf";
    Tensor<T> value;
    std::vector<T> grad;  // empty until touched; numel of value when sized
    bool requires_grad = false;
    std::vector<NodePtr<T>> parents;
    std::function<void(Node<T>&)> backward;  // pushes this->grad into parents

    std::vector<T>& grad_buf() {
        if (grad.empty()) grad.assign(static_cast<std::size_t>(value.numel()), T(0));
        return grad;
    }
};

namespace detail {

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <class T>
void check_finite(const Tensor<T>& t, const char* op, const char* phase) {
    if (!t.all_finite())
        throw NumericError(std::string("non-finite value in ") + op + " " + phase);
}

template <class T>
void check_finite(const std::vector<T>& v, const char* op, const char* phase) {
    for (const T& x : v)
        if (!std::isfinite(static_cast<double>(x)))
            throw NumericError(std::string("non-finite value in ") + op + " " + phase);
}

template <class T>
NodePtr<T> make_node(const char* op, Tensor<T> value, std::vector<NodePtr<T>> parents) {
    auto n = std::make_shared<Node<T>>();
    n->op = op;
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) n->requires_grad |= p->requires_grad;
    check_finite(n->value, op, "forward");
    return n;
}

}  // namespace detail

template <class T>
NodePtr<T> leaf(Tensor<T> v, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->op = "leaf";
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    detail::check_finite(n->value, "leaf", "forward");
    return n;
}

template <class T>
NodePtr<T> constant(Tensor<T> v) {
    return leaf(std::move(v), false);
}

// ---- view ----

template <class T>
NodePtr<T> reshape(const NodePtr<T>& x, Shape s) {
    auto n = detail::make_node<T>("reshape", x->value.reshaped(std::move(s)), {x});
    n->backward = [](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
    return n;
}

// ---- elementwise ----

template <class T>
NodePtr<T> add(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (a->value.shape != b->value.shape)
        throw ShapeError("add " + shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
    Tensor<T> out = Tensor<T>::zeros(a->value.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
    auto n = detail::make_node<T>("add", std::move(out), {a, b});
    n->backward = [](Node<T>& self) {
        for (int k = 0; k < 2; ++k) {
            auto& p = *self.parents[k];
            if (!p.requires_grad) continue;
            auto& g = p.grad_buf();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    };
    return n;
}

template <class T>
NodePtr<T> sub(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (a->value.shape != b->value.shape)
        throw ShapeError("sub " + shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
    Tensor<T> out = Tensor<T>::zeros(a->value.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
    auto n = detail::make_node<T>("sub", std::move(out), {a, b});
    n->backward = [](Node<T>& self) {
        if (self.parents[0]->requires_grad) {
            auto& g = self.parents[0]->grad_buf();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (self.parents[1]->requires_grad) {
            auto& g = self.parents[1]->grad_buf();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    };
    return n;
}

template <class T>
NodePtr<T> mul(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (a->value.shape != b->value.shape)
        throw ShapeError("mul " + shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
    Tensor<T> out = Tensor<T>::zeros(a->value.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
    auto n = detail::make_node<T>("mul", std::move(out), {a, b});
    n->backward = [](Node<T>& self) {
        auto& a = *self.parents[0];
        auto& b = *self.parents[1];
        if (a.requires_grad) {
            auto& g = a.grad_buf();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b.value[static_cast<std::int64_t>(i)];
        }
        if (b.requires_grad) {
            auto& g = b.grad_buf();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a.value[static_cast<std::int64_t>(i)];
        }
    };
    return n;
}

// scale * x + shift, elementwise with scalar coefficients
template <class T>
NodePtr<T> affine(const NodePtr<T>& x, T scale, T shift) {
    Tensor<T> out = Tensor<T>::zeros(x->value.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = scale * x->value[i] + shift;
    auto n = detail::make_node<T>("affine", std::move(out), {x});
    n->backward = [scale](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * self.grad[i];
    };
    return n;
}

template <class T>
NodePtr<T> square(const NodePtr<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x->value.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] * x->value[i];
    auto n = detail::make_node<T>("square", std::move(out), {x});
    n->backward = [](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += T(2) * p.value[static_cast<std::int64_t>(i)] * self.grad[i];
    };
    return n;
}

template <class T>
NodePtr<T> exp_op(const NodePtr<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x->value.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(x->value[i]);
    auto n = detail::make_node<T>("exp", std::move(out), {x});
    n->backward = [](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += self.value[static_cast<std::int64_t>(i)] * self.grad[i];
    };
    return n;
}

template <class T>
NodePtr<T> relu(const NodePtr<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x->value.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] > T(0) ? x->value[i] : T(0);
    auto n = detail::make_node<T>("relu", std::move(out), {x});
    n->backward = [](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (p.value[static_cast<std::int64_t>(i)] > T(0)) g[i] += self.grad[i];
    };
    return n;
}

template <class T>
NodePtr<T> tanh_op(const NodePtr<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x->value.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(x->value[i]);
    auto n = detail::make_node<T>("tanh", std::move(out), {x});
    n->backward = [](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buf();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T y = self.value[static_cast<std::int64_t>(i)];
            g[i] += (T(1) - y * y) * self.grad[i];
        }
    };
    return n;
}

// ---- reductions ----

template <class T>
NodePtr<T> sum(const NodePtr<T>& x) {
    T acc = 0;
    for (std::int64_t i = 0; i < x->value.numel(); ++i) acc += x->value[i];
    auto n = detail::make_node<T>("sum", Tensor<T>(Shape{}, {acc}), {x});
    n->backward = [](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buf();
        const T s = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
    };
    return n;
}

template <class T>
NodePtr<T> mean(const NodePtr<T>& x) {
    T acc = 0;
    for (std::int64_t i = 0; i < x->value.numel(); ++i) acc += x->value[i];
    const T inv = T(1) / static_cast<T>(x->value.numel());
    auto n = detail::make_node<T>("mean", Tensor<T>(Shape{}, {acc * inv}), {x});
    n->backward = [inv](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buf();
        const T s = self.grad[0] * inv;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
    };
    return n;
}

// ---- transposed convolution ----
//
// input  [C_in, H, W], kernel [C_in, C_out, K, K], H' = (H-1)*stride - 2*pad + K.
// Forward is the adjoint of a stride-`stride` convolution: cols = W^T X
// followed by a scatter-add into the (cropped) output plane.
template <class T>
NodePtr<T> conv_transpose2d(const NodePtr<T>& x, const NodePtr<T>& w, int stride, int padding) {
    const Shape& xs = x->value.shape;
    const Shape& ws = w->value.shape;
    if (xs.size() != 3) throw ShapeError("conv_transpose2d input must be CxHxW, got " + shape_str(xs));
    if (ws.size() != 4 || ws[2] != ws[3])
        throw ShapeError("conv_transpose2d kernel must be Cin x Cout x K x K, got " + shape_str(ws));
    if (xs[0] != ws[0])
        throw ShapeError("conv_transpose2d input channels " + std::to_string(xs[0]) +
                         " vs kernel Cin " + std::to_string(ws[0]));
    if (stride < 1 || padding < 0) throw ConfigError("conv_transpose2d stride/padding out of range");

    const std::int64_t cin = xs[0], h = xs[1], wdt = xs[2];
    const std::int64_t cout = ws[1], k = ws[2];
    const std::int64_t oh = (h - 1) * stride - 2 * padding + k;
    const std::int64_t ow = (wdt - 1) * stride - 2 * padding + k;
    if (oh <= 0 || ow <= 0) throw ShapeError("conv_transpose2d output collapses to nothing");

    const std::int64_t hw = h * wdt;
    const std::int64_t ckk = cout * k * k;

    // cols[(co*K+kh)*K+kw, h*W+w] = sum_ci W[ci,co,kh,kw] * X[ci,h,w]
    std::vector<T> cols(static_cast<std::size_t>(ckk * hw));
    {
        detail::ConstMatMap<T> wm(w->value.data(), cin, ckk);
        detail::ConstMatMap<T> xm(x->value.data(), cin, hw);
        detail::MatMap<T> cm(cols.data(), ckk, hw);
        cm.noalias() = wm.transpose() * xm;
    }

    Tensor<T> out = Tensor<T>::zeros({cout, oh, ow});
    for (std::int64_t co = 0; co < cout; ++co) {
        for (std::int64_t kh = 0; kh < k; ++kh) {
            for (std::int64_t kw = 0; kw < k; ++kw) {
                const T* crow = cols.data() + ((co * k + kh) * k + kw) * hw;
                T* oplane = out.data() + co * oh * ow;
                for (std::int64_t ih = 0; ih < h; ++ih) {
                    const std::int64_t r = ih * stride - padding + kh;
                    if (r < 0 || r >= oh) continue;
                    for (std::int64_t iw = 0; iw < wdt; ++iw) {
                        const std::int64_t c = iw * stride - padding + kw;
                        if (c < 0 || c >= ow) continue;
                        oplane[r * ow + c] += crow[ih * wdt + iw];
                    }
                }
            }
        }
    }

    auto n = detail::make_node<T>("conv_transpose2d", std::move(out), {x, w});
    n->backward = [stride, padding, cin, cout, h, wdt, k, oh, ow, hw, ckk](Node<T>& self) {
        auto& xp = *self.parents[0];
        auto& wp = *self.parents[1];
        if (!xp.requires_grad && !wp.requires_grad) return;

        // gather: gcols[(co,kh,kw),(h,w)] = gout[co, h*s-p+kh, w*s-p+kw] (0 outside)
        std::vector<T> gcols(static_cast<std::size_t>(ckk * hw), T(0));
        for (std::int64_t co = 0; co < cout; ++co) {
            for (std::int64_t kh = 0; kh < k; ++kh) {
                for (std::int64_t kw = 0; kw < k; ++kw) {
                    T* grow = gcols.data() + ((co * k + kh) * k + kw) * hw;
                    const T* gplane = self.grad.data() + co * oh * ow;
                    for (std::int64_t ih = 0; ih < h; ++ih) {
                        const std::int64_t r = ih * stride - padding + kh;
                        if (r < 0 || r >= oh) continue;
                        for (std::int64_t iw = 0; iw < wdt; ++iw) {
                            const std::int64_t c = iw * stride - padding + kw;
                            if (c < 0 || c >= ow) continue;
                            grow[ih * wdt + iw] = gplane[r * ow + c];
                        }
                    }
                }
            }
        }

        detail::ConstMatMap<T> gcm(gcols.data(), ckk, hw);
        if (xp.requires_grad) {
            auto& gx = xp.grad_buf();
            detail::ConstMatMap<T> wm(wp.value.data(), cin, ckk);
            detail::MatMap<T> gxm(gx.data(), cin, hw);
            gxm.noalias() += wm * gcm;
        }
        if (wp.requires_grad) {
            auto& gw = wp.grad_buf();
            detail::ConstMatMap<T> xm(xp.value.data(), cin, hw);
            detail::MatMap<T> gwm(gw.data(), cin, ckk);
            gwm.noalias() += xm * gcm.transpose();
        }
    };
    return n;
}

// ---- batch normalization ----
//
// input [B, C, H, W]; per-channel statistics over B*H*W, biased variance.
// Always batch statistics: the pipeline re-optimizes on the live graph, so
// there is no train/eval split and no running state.
template <class T>
NodePtr<T> batch_norm(const NodePtr<T>& x, const NodePtr<T>& gamma, const NodePtr<T>& beta, T eps) {
    const Shape& xs = x->value.shape;
    if (xs.size() != 4) throw ShapeError("batch_norm input must be BxCxHxW, got " + shape_str(xs));
    const std::int64_t b = xs[0], c = xs[1], h = xs[2], w = xs[3];
    if (gamma->value.shape != Shape{c} || beta->value.shape != Shape{c})
        throw ShapeError("batch_norm gamma/beta must be [C]=" + std::to_string(c));
    if (!(eps > T(0))) throw ConfigError("batch_norm epsilon must be positive");

    const std::int64_t plane = h * w;
    const std::int64_t n_per_c = b * plane;
    const T invn = T(1) / static_cast<T>(n_per_c);

    std::vector<T> mean_c(static_cast<std::size_t>(c)), inv_std_c(static_cast<std::size_t>(c));
    Tensor<T> out = Tensor<T>::zeros(xs);
    for (std::int64_t ch = 0; ch < c; ++ch) {
        T m = 0;
        for (std::int64_t bi = 0; bi < b; ++bi) {
            const T* p = x->value.data() + (bi * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) m += p[i];
        }
        m *= invn;
        T var = 0;
        for (std::int64_t bi = 0; bi < b; ++bi) {
            const T* p = x->value.data() + (bi * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                const T d = p[i] - m;
                var += d * d;
            }
        }
        var *= invn;
        const T istd = T(1) / std::sqrt(var + eps);
        mean_c[static_cast<std::size_t>(ch)] = m;
        inv_std_c[static_cast<std::size_t>(ch)] = istd;
        const T g = gamma->value[ch], be = beta->value[ch];
        for (std::int64_t bi = 0; bi < b; ++bi) {
            const T* p = x->value.data() + (bi * c + ch) * plane;
            T* q = out.data() + (bi * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) q[i] = g * (p[i] - m) * istd + be;
        }
    }

    auto n = detail::make_node<T>("batch_norm", std::move(out), {x, gamma, beta});
    n->backward = [b, c, plane, invn, mean_c = std::move(mean_c),
                   inv_std_c = std::move(inv_std_c)](Node<T>& self) {
        auto& xp = *self.parents[0];
        auto& gp = *self.parents[1];
        auto& bp = *self.parents[2];
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const T m = mean_c[static_cast<std::size_t>(ch)];
            const T istd = inv_std_c[static_cast<std::size_t>(ch)];
            const T gam = gp.value[ch];
            // per-channel sums of g and g*xhat
            T sg = 0, sgx = 0;
            for (std::int64_t bi = 0; bi < b; ++bi) {
                const T* gr = self.grad.data() + (bi * c + ch) * plane;
                const T* xv = xp.value.data() + (bi * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const T xh = (xv[i] - m) * istd;
                    sg += gr[i];
                    sgx += gr[i] * xh;
                }
            }
            if (bp.requires_grad) bp.grad_buf()[static_cast<std::size_t>(ch)] += sg;
            if (gp.requires_grad) gp.grad_buf()[static_cast<std::size_t>(ch)] += sgx;
            if (xp.requires_grad) {
                auto& gx = xp.grad_buf();
                const T k1 = sg * invn, k2 = sgx * invn;
                for (std::int64_t bi = 0; bi < b; ++bi) {
                    const T* gr = self.grad.data() + (bi * c + ch) * plane;
                    const T* xv = xp.value.data() + (bi * c + ch) * plane;
                    T* gxp = gx.data() + (bi * c + ch) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        const T xh = (xv[i] - m) * istd;
                        gxp[i] += gam * istd * (gr[i] - k1 - xh * k2);
                    }
                }
            }
        }
    };
    return n;
}

// ---- linear measurement primitives ----

// y = A x with a constant matrix A [m, n]; differentiable w.r.t. x only.
template <class T>
NodePtr<T> matvec(const Tensor<T>& a, const NodePtr<T>& x) {
    if (a.rank() != 2) throw ShapeError("matvec matrix must be rank 2");
    const std::int64_t m = a.shape[0], nn = a.shape[1];
    if (x->value.shape != Shape{nn})
        throw ShapeError("matvec expects x of length " + std::to_string(nn) + ", got " +
                         shape_str(x->value.shape));
    Tensor<T> out = Tensor<T>::zeros({m});
    {
        detail::ConstMatMap<T> am(a.data(), m, nn);
        detail::ConstVecMap<T> xv(x->value.data(), nn);
        detail::VecMap<T> ov(out.data(), m);
        ov.noalias() = am * xv;
    }
    auto n = detail::make_node<T>("matvec", std::move(out), {x});
    n->backward = [a, m, nn](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buf();
        detail::ConstMatMap<T> am(a.data(), m, nn);
        detail::ConstVecMap<T> gv(self.grad.data(), m);
        detail::VecMap<T> gx(g.data(), nn);
        gx.noalias() += am.transpose() * gv;
    };
    return n;
}

// out[h,w] = sum_c coeff[c] * x[c,h,w]; coefficients constant.
template <class T>
NodePtr<T> channel_weighted_sum(const NodePtr<T>& x, const Tensor<T>& coeff) {
    const Shape& xs = x->value.shape;
    if (xs.size() != 3) throw ShapeError("channel_weighted_sum input must be CxHxW");
    const std::int64_t c = xs[0], h = xs[1], w = xs[2];
    if (coeff.shape != Shape{c}) throw ShapeError("channel_weighted_sum needs one coefficient per channel");
    const std::int64_t plane = h * w;
    Tensor<T> out = Tensor<T>::zeros({h, w});
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const T k = coeff[ch];
        const T* p = x->value.data() + ch * plane;
        for (std::int64_t i = 0; i < plane; ++i) out[i] += k * p[i];
    }
    auto n = detail::make_node<T>("channel_weighted_sum", std::move(out), {x});
    n->backward = [coeff, c, plane](Node<T>& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buf();
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const T k = coeff[ch];
            T* gp = g.data() + ch * plane;
            for (std::int64_t i = 0; i < plane; ++i) gp[i] += k * self.grad[i];
        }
    };
    return n;
}

// ---- backward driver ----
//
// Topological order by iterative DFS (kernel-sum chains get deep), then run
// closures in reverse. Returns the objective value. Throws NumericError if a
// non-finite gradient shows up, naming the primitive about to consume it.
template <class T>
T backward(const NodePtr<T>& root) {
    if (root->value.numel() != 1)
        throw ShapeError("backward requires a scalar objective, got " + shape_str(root->value.shape));

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad_buf()[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (!node->backward) continue;
        if (node->grad.empty()) continue;  // never reached by the objective
        detail::check_finite(node->grad, node->op, "backward");
        node->backward(*node);
    }
    return root->value[0];
}

// Forward-only evaluation helper: the scalar value of a built node.
template <class T>
T scalar_value(const NodePtr<T>& n) {
    if (n->value.numel() != 1) throw ShapeError("scalar_value on non-scalar node");
    return n->value[0];
}

}  // namespace lowshot
