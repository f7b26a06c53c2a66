#include "physvox/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "physvox/kernels.hpp"

namespace physvox::ad {

namespace {

std::atomic<int64_t> g_next_id{1};

Var make_node(Tensor value, std::vector<Var> parents, Vjp vjp, bool force_rg = false) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    n->requires_grad = force_rg;
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->vjp = std::move(vjp);
    return n;
}

Tensor map1(const Tensor& a, double (*f)(double)) {
    Tensor out(a.shape);
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = f(a[i]);
    return out;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
}

// grad of relu/clamp-style ops: elementwise product with a constant 0/1 mask.
Var masked(const Var& g, const std::shared_ptr<std::vector<double>>& mask) {
    const auto& mv = *mask;
    Tensor out(g->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = g->value[i] * mv[static_cast<size_t>(i)];
    return make_node(std::move(out), {g},
                     [mask](const Var&, const Var& gy, const std::vector<bool>& need,
                            std::vector<Var>& out) {
                         if (need[0]) out[0] = masked(gy, mask);
                     });
}

struct ConvGeom {
    int B, Cin, Cout, D, H, W, Do, Ho, Wo, k, stride, pad;
    int64_t in_vol() const { return static_cast<int64_t>(D) * H * W; }
    int64_t out_vol() const { return static_cast<int64_t>(Do) * Ho * Wo; }
};

int conv_out_dim(int d, int k, int s, int p) {
    const int num = d + 2 * p - k;
    if (num < 0 || num % s != 0)
        throw DimensionError("conv3d: input extent " + std::to_string(d) +
                             " incompatible with kernel/stride/pad");
    return num / s + 1;
}

}  // namespace

Var leaf(Tensor value, bool requires_grad) {
    return make_node(std::move(value), {}, {}, requires_grad);
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor out(a->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
    return make_node(std::move(out), {a, b},
                     [](const Var&, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = gy;
                         if (need[1]) out[1] = gy;
                     });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "sub");
    Tensor out(a->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] - b->value[i];
    return make_node(std::move(out), {a, b},
                     [](const Var&, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = gy;
                         if (need[1]) out[1] = neg(gy);
                     });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor out(a->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * b->value[i];
    return make_node(std::move(out), {a, b},
                     [](const Var& self, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = mul(gy, self->parents[1]);
                         if (need[1]) out[1] = mul(gy, self->parents[0]);
                     });
}

Var scale(const Var& a, double c) {
    Tensor out(a->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * c;
    return make_node(std::move(out), {a},
                     [c](const Var&, const Var& gy, const std::vector<bool>& need,
                         std::vector<Var>& out) {
                         if (need[0]) out[0] = scale(gy, c);
                     });
}

Var add_scalar(const Var& a, double c) {
    Tensor out(a->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] + c;
    return make_node(std::move(out), {a},
                     [](const Var&, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = gy;
                     });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var exp_(const Var& a) {
    Tensor out = map1(a->value, [](double x) { return std::exp(x); });
    return make_node(std::move(out), {a},
                     [](const Var& self, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = mul(gy, self);
                     });
}

Var log_(const Var& a) {
    Tensor out = map1(a->value, [](double x) { return std::log(x); });
    return make_node(std::move(out), {a},
                     [](const Var& self, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = mul(gy, recip(self->parents[0]));
                     });
}

Var recip(const Var& a) {
    Tensor out = map1(a->value, [](double x) { return 1.0 / x; });
    return make_node(std::move(out), {a},
                     [](const Var& self, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = neg(mul(gy, mul(self, self)));
                     });
}

Var sqrt_(const Var& a) {
    Tensor out = map1(a->value, [](double x) { return std::sqrt(x); });
    return make_node(std::move(out), {a},
                     [](const Var& self, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = mul(gy, scale(recip(self), 0.5));
                     });
}

Var sigmoid(const Var& a) {
    Tensor out = map1(a->value, [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
    return make_node(std::move(out), {a},
                     [](const Var& self, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0])
                             out[0] = mul(gy, mul(self, add_scalar(neg(self), 1.0)));
                     });
}

Var relu(const Var& a) {
    const int64_t n = a->value.numel();
    Tensor out(a->value.shape);
    auto mask = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const bool pos = a->value[i] > 0.0;
        (*mask)[static_cast<size_t>(i)] = pos ? 1.0 : 0.0;
        out[i] = pos ? a->value[i] : 0.0;
    }
    return make_node(std::move(out), {a},
                     [mask](const Var&, const Var& gy, const std::vector<bool>& need,
                            std::vector<Var>& out) {
                         if (need[0]) out[0] = masked(gy, mask);
                     });
}

Var clamp(const Var& a, double lo, double hi) {
    const int64_t n = a->value.numel();
    Tensor out(a->value.shape);
    auto mask = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const double x = a->value[i];
        (*mask)[static_cast<size_t>(i)] = (x > lo && x < hi) ? 1.0 : 0.0;
        out[i] = std::min(hi, std::max(lo, x));
    }
    return make_node(std::move(out), {a},
                     [mask](const Var&, const Var& gy, const std::vector<bool>& need,
                            std::vector<Var>& out) {
                         if (need[0]) out[0] = masked(gy, mask);
                     });
}

Var matmul(const Var& a, const Var& b) {
    const int m = a->value.dim(0), k = a->value.dim(1);
    if (b->value.dim(0) != k) throw DimensionError("matmul: inner dims differ");
    const int n = b->value.dim(1);
    Tensor out({m, n});
    kernels::gemm_nn(a->value.ptr(), b->value.ptr(), out.ptr(), m, k, n);
    return make_node(std::move(out), {a, b},
                     [](const Var& self, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = matmul_nt(gy, self->parents[1]);
                         if (need[1]) out[1] = matmul_tn(self->parents[0], gy);
                     });
}

Var matmul_nt(const Var& a, const Var& b) {
    const int m = a->value.dim(0), k = a->value.dim(1);
    if (b->value.dim(1) != k) throw DimensionError("matmul_nt: inner dims differ");
    const int n = b->value.dim(0);
    Tensor out({m, n});
    kernels::gemm_nt(a->value.ptr(), b->value.ptr(), out.ptr(), m, k, n);
    return make_node(std::move(out), {a, b},
                     [](const Var& self, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = matmul(gy, self->parents[1]);
                         if (need[1]) out[1] = matmul_tn(gy, self->parents[0]);
                     });
}

Var matmul_tn(const Var& a, const Var& b) {
    const int k = a->value.dim(0), m = a->value.dim(1);
    if (b->value.dim(0) != k) throw DimensionError("matmul_tn: inner dims differ");
    const int n = b->value.dim(1);
    Tensor out({m, n});
    kernels::gemm_tn(a->value.ptr(), b->value.ptr(), out.ptr(), m, k, n);
    return make_node(std::move(out), {a, b},
                     [](const Var& self, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = matmul_nt(self->parents[1], gy);
                         if (need[1]) out[1] = matmul(self->parents[0], gy);
                     });
}

namespace {

ConvGeom conv_geom(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.ndim() != 5 || w.ndim() != 5) throw DimensionError("conv3d: need 5-D tensors");
    ConvGeom g;
    g.B = x.dim(0);
    g.Cin = x.dim(1);
    g.D = x.dim(2);
    g.H = x.dim(3);
    g.W = x.dim(4);
    g.Cout = w.dim(0);
    g.k = w.dim(2);
    g.stride = stride;
    g.pad = pad;
    if (w.dim(1) != g.Cin) throw DimensionError("conv3d: weight Cin mismatch");
    g.Do = conv_out_dim(g.D, g.k, stride, pad);
    g.Ho = conv_out_dim(g.H, g.k, stride, pad);
    g.Wo = conv_out_dim(g.W, g.k, stride, pad);
    return g;
}

}  // namespace

Var conv3d(const Var& x, const Var& w, int stride, int pad) {
    const ConvGeom g = conv_geom(x->value, w->value, stride, pad);
    Tensor out({g.B, g.Cout, g.Do, g.Ho, g.Wo});
    const int kk = g.Cin * g.k * g.k * g.k;
    std::vector<double> col(static_cast<size_t>(kk) * g.out_vol());
    for (int b = 0; b < g.B; ++b) {
        kernels::im2col3d(x->value.ptr() + static_cast<int64_t>(b) * g.Cin * g.in_vol(), g.Cin,
                          g.D, g.H, g.W, g.k, stride, pad, col.data(), g.Do, g.Ho, g.Wo);
        kernels::gemm_nn(w->value.ptr(), col.data(),
                         out.ptr() + static_cast<int64_t>(b) * g.Cout * g.out_vol(), g.Cout, kk,
                         static_cast<int>(g.out_vol()));
    }
    return make_node(std::move(out), {x, w},
                     [stride, pad, k = g.k](const Var& self, const Var& gy,
                                            const std::vector<bool>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = tconv3d(gy, self->parents[1], stride, pad);
                         if (need[1]) out[1] = conv_wgrad(self->parents[0], gy, k, stride, pad);
                     });
}

Var tconv3d(const Var& a, const Var& w, int stride, int pad) {
    const Tensor& av = a->value;
    const Tensor& wv = w->value;
    if (av.ndim() != 5 || wv.ndim() != 5) throw DimensionError("tconv3d: need 5-D tensors");
    if (av.dim(1) != wv.dim(0)) throw DimensionError("tconv3d: channel mismatch");
    const int B = av.dim(0), A = av.dim(1), Do = av.dim(2), Ho = av.dim(3), Wo = av.dim(4);
    const int Bc = wv.dim(1), k = wv.dim(2);
    const int D = (Do - 1) * stride - 2 * pad + k;
    const int H = (Ho - 1) * stride - 2 * pad + k;
    const int W = (Wo - 1) * stride - 2 * pad + k;
    const int64_t ov = static_cast<int64_t>(Do) * Ho * Wo;
    const int64_t iv = static_cast<int64_t>(D) * H * W;
    const int kk = Bc * k * k * k;
    Tensor out({B, Bc, D, H, W});
    std::vector<double> u(static_cast<size_t>(kk) * ov);
    for (int b = 0; b < B; ++b) {
        std::fill(u.begin(), u.end(), 0.0);
        kernels::gemm_tn(wv.ptr(), av.ptr() + static_cast<int64_t>(b) * A * ov, u.data(), kk, A,
                         static_cast<int>(ov));
        kernels::col2im3d(u.data(), Bc, D, H, W, k, stride, pad,
                          out.ptr() + static_cast<int64_t>(b) * Bc * iv, Do, Ho, Wo);
    }
    return make_node(std::move(out), {a, w},
                     [stride, pad, k](const Var& self, const Var& gy,
                                      const std::vector<bool>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = conv3d(gy, self->parents[1], stride, pad);
                         if (need[1]) out[1] = conv_wgrad(gy, self->parents[0], k, stride, pad);
                     });
}

Var conv_wgrad(const Var& x, const Var& a, int k, int stride, int pad) {
    const Tensor& xv = x->value;
    const Tensor& av = a->value;
    if (xv.ndim() != 5 || av.ndim() != 5) throw DimensionError("conv_wgrad: need 5-D tensors");
    if (xv.dim(0) != av.dim(0)) throw DimensionError("conv_wgrad: batch mismatch");
    const int B = xv.dim(0), Bx = xv.dim(1), D = xv.dim(2), H = xv.dim(3), W = xv.dim(4);
    const int A = av.dim(1);
    const int Do = conv_out_dim(D, k, stride, pad);
    const int Ho = conv_out_dim(H, k, stride, pad);
    const int Wo = conv_out_dim(W, k, stride, pad);
    if (av.dim(2) != Do || av.dim(3) != Ho || av.dim(4) != Wo)
        throw DimensionError("conv_wgrad: output extent mismatch");
    const int64_t ov = static_cast<int64_t>(Do) * Ho * Wo;
    const int64_t iv = static_cast<int64_t>(D) * H * W;
    const int kk = Bx * k * k * k;
    Tensor out({A, Bx, k, k, k});
    std::vector<double> col(static_cast<size_t>(kk) * ov);
    for (int b = 0; b < B; ++b) {
        kernels::im2col3d(xv.ptr() + static_cast<int64_t>(b) * Bx * iv, Bx, D, H, W, k, stride,
                          pad, col.data(), Do, Ho, Wo);
        kernels::gemm_nt(av.ptr() + static_cast<int64_t>(b) * A * ov, col.data(), out.ptr(), A,
                         static_cast<int>(ov), kk);
    }
    return make_node(std::move(out), {x, a},
                     [stride, pad](const Var& self, const Var& gy, const std::vector<bool>& need,
                                   std::vector<Var>& out) {
                         if (need[0]) out[0] = tconv3d(self->parents[1], gy, stride, pad);
                         if (need[1]) out[1] = conv3d(self->parents[0], gy, stride, pad);
                     });
}

Var add_channel_bias(const Var& x, const Var& bias) {
    const Tensor& xv = x->value;
    if (xv.ndim() < 2) throw DimensionError("add_channel_bias: need >= 2 dims");
    const int B = xv.dim(0), C = xv.dim(1);
    if (bias->value.numel() != C) throw DimensionError("add_channel_bias: bias length mismatch");
    const int64_t sp = xv.numel() / (static_cast<int64_t>(B) * C);
    Tensor out(xv.shape);
    int64_t i = 0;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double bb = bias->value[c];
            for (int64_t s = 0; s < sp; ++s, ++i) out[i] = xv[i] + bb;
        }
    return make_node(std::move(out), {x, bias},
                     [](const Var&, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = gy;
                         if (need[1]) out[1] = sum_nonchannel(gy);
                     });
}

Var sum_nonchannel(const Var& x) {
    const Tensor& xv = x->value;
    const int B = xv.dim(0), C = xv.dim(1);
    const int64_t sp = xv.numel() / (static_cast<int64_t>(B) * C);
    Tensor out({C});
    int64_t i = 0;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int64_t s = 0; s < sp; ++s, ++i) acc += xv[i];
            out[c] += acc;
        }
    return make_node(std::move(out), {x},
                     [shape = xv.shape](const Var&, const Var& gy, const std::vector<bool>& need,
                                        std::vector<Var>& out) {
                         if (need[0]) out[0] = bcast_channel(gy, shape);
                     });
}

Var bcast_channel(const Var& g, std::vector<int> shape) {
    const int B = shape[0], C = shape[1];
    Tensor out(shape);
    const int64_t sp = out.numel() / (static_cast<int64_t>(B) * C);
    int64_t i = 0;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const double v = g->value[c];
            for (int64_t s = 0; s < sp; ++s, ++i) out[i] = v;
        }
    return make_node(std::move(out), {g},
                     [](const Var&, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = sum_nonchannel(gy);
                     });
}

Var sum_all(const Var& x) {
    double acc = 0.0;
    const int64_t n = x->value.numel();
    for (int64_t i = 0; i < n; ++i) acc += x->value[i];
    return make_node(Tensor::scalar(acc), {x},
                     [shape = x->value.shape](const Var&, const Var& gy,
                                              const std::vector<bool>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = bcast_full(gy, shape);
                     });
}

Var bcast_full(const Var& g, std::vector<int> shape) {
    Tensor out = Tensor::full(shape, g->value[0]);
    return make_node(std::move(out), {g},
                     [](const Var&, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = sum_all(gy);
                     });
}

Var mean_all(const Var& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x->value.numel()));
}

Var sum_per_sample(const Var& x) {
    const int B = x->value.dim(0);
    const int64_t sp = x->value.numel() / B;
    Tensor out({B});
    for (int b = 0; b < B; ++b) {
        double acc = 0.0;
        const double* p = x->value.ptr() + static_cast<int64_t>(b) * sp;
        for (int64_t s = 0; s < sp; ++s) acc += p[s];
        out[b] = acc;
    }
    return make_node(std::move(out), {x},
                     [shape = x->value.shape](const Var&, const Var& gy,
                                              const std::vector<bool>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = bcast_sample(gy, shape);
                     });
}

Var bcast_sample(const Var& g, std::vector<int> shape) {
    const int B = shape[0];
    Tensor out(shape);
    const int64_t sp = out.numel() / B;
    for (int b = 0; b < B; ++b) {
        const double v = g->value[b];
        double* p = out.ptr() + static_cast<int64_t>(b) * sp;
        for (int64_t s = 0; s < sp; ++s) p[s] = v;
    }
    return make_node(std::move(out), {g},
                     [](const Var&, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = sum_per_sample(gy);
                     });
}

Var sum_spatial(const Var& x) {
    const Tensor& xv = x->value;
    const int B = xv.dim(0), C = xv.dim(1);
    const int64_t sp = xv.numel() / (static_cast<int64_t>(B) * C);
    Tensor out({B, C});
    int64_t i = 0;
    for (int bc = 0; bc < B * C; ++bc) {
        double acc = 0.0;
        for (int64_t s = 0; s < sp; ++s, ++i) acc += xv[i];
        out[bc] = acc;
    }
    return make_node(std::move(out), {x},
                     [D = xv.dim(2), H = xv.dim(3), W = xv.dim(4)](
                         const Var&, const Var& gy, const std::vector<bool>& need,
                         std::vector<Var>& out) {
                         if (need[0]) out[0] = bcast_spatial(gy, D, H, W);
                     });
}

Var bcast_spatial(const Var& y, int D, int H, int W) {
    const int B = y->value.dim(0), C = y->value.dim(1);
    Tensor out({B, C, D, H, W});
    const int64_t sp = static_cast<int64_t>(D) * H * W;
    int64_t i = 0;
    for (int bc = 0; bc < B * C; ++bc) {
        const double v = y->value[bc];
        for (int64_t s = 0; s < sp; ++s, ++i) out[i] = v;
    }
    return make_node(std::move(out), {y},
                     [](const Var&, const Var& gy, const std::vector<bool>& need,
                        std::vector<Var>& out) {
                         if (need[0]) out[0] = sum_spatial(gy);
                     });
}

namespace {

Var embed_ch(const Var& g, int c0, int C);

}  // namespace

Var concat_ch(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.ndim() != bv.ndim() || av.dim(0) != bv.dim(0))
        throw DimensionError("concat_ch: incompatible shapes");
    for (int i = 2; i < av.ndim(); ++i)
        if (av.dim(i) != bv.dim(i)) throw DimensionError("concat_ch: spatial mismatch");
    const int B = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1);
    std::vector<int> shape = av.shape;
    shape[1] = Ca + Cb;
    Tensor out(shape);
    const int64_t spa = av.numel() / (static_cast<int64_t>(B) * Ca);
    for (int bb = 0; bb < B; ++bb) {
        std::copy_n(av.ptr() + static_cast<int64_t>(bb) * Ca * spa, Ca * spa,
                    out.ptr() + static_cast<int64_t>(bb) * (Ca + Cb) * spa);
        std::copy_n(bv.ptr() + static_cast<int64_t>(bb) * Cb * spa, Cb * spa,
                    out.ptr() + (static_cast<int64_t>(bb) * (Ca + Cb) + Ca) * spa);
    }
    return make_node(std::move(out), {a, b},
                     [Ca, Cb](const Var&, const Var& gy, const std::vector<bool>& need,
                              std::vector<Var>& out) {
                         if (need[0]) out[0] = slice_ch(gy, 0, Ca);
                         if (need[1]) out[1] = slice_ch(gy, Ca, Ca + Cb);
                     });
}

Var slice_ch(const Var& x, int c0, int c1) {
    const Tensor& xv = x->value;
    const int B = xv.dim(0), C = xv.dim(1), Cs = c1 - c0;
    if (c0 < 0 || c1 > C || Cs <= 0) throw DimensionError("slice_ch: bad channel range");
    std::vector<int> shape = xv.shape;
    shape[1] = Cs;
    Tensor out(shape);
    const int64_t sp = xv.numel() / (static_cast<int64_t>(B) * C);
    for (int b = 0; b < B; ++b)
        std::copy_n(xv.ptr() + (static_cast<int64_t>(b) * C + c0) * sp, Cs * sp,
                    out.ptr() + static_cast<int64_t>(b) * Cs * sp);
    return make_node(std::move(out), {x},
                     [c0, C](const Var&, const Var& gy, const std::vector<bool>& need,
                             std::vector<Var>& out) {
                         if (need[0]) out[0] = embed_ch(gy, c0, C);
                     });
}

namespace {

Var embed_ch(const Var& g, int c0, int C) {
    const Tensor& gv = g->value;
    const int B = gv.dim(0), Cs = gv.dim(1);
    std::vector<int> shape = gv.shape;
    shape[1] = C;
    Tensor out(shape);
    const int64_t sp = gv.numel() / (static_cast<int64_t>(B) * Cs);
    for (int b = 0; b < B; ++b)
        std::copy_n(gv.ptr() + static_cast<int64_t>(b) * Cs * sp, Cs * sp,
                    out.ptr() + (static_cast<int64_t>(b) * C + c0) * sp);
    return make_node(std::move(out), {g},
                     [c0, Cs](const Var&, const Var& gy, const std::vector<bool>& need,
                              std::vector<Var>& out) {
                         if (need[0]) out[0] = slice_ch(gy, c0, c0 + Cs);
                     });
}

}  // namespace

Var reshape(const Var& x, std::vector<int> shape) {
    Tensor out(shape, x->value.data);
    return make_node(std::move(out), {x},
                     [old = x->value.shape](const Var&, const Var& gy,
                                            const std::vector<bool>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = reshape(gy, old);
                     });
}

GradMap backward(const Var& root, const std::vector<Var>& wanted) {
    if (root->value.numel() != 1)
        throw DimensionError("backward: root must be a scalar");

    // Reachable differentiable subgraph, sorted by creation id. Parents always
    // have smaller ids than children, so id order is a topological order.
    std::vector<Var> nodes;
    std::unordered_map<const Node*, bool> seen;
    std::vector<Var> stack{root};
    while (!stack.empty()) {
        Var n = stack.back();
        stack.pop_back();
        if (!n->requires_grad || seen.count(n.get())) continue;
        seen[n.get()] = true;
        nodes.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad && !seen.count(p.get())) stack.push_back(p);
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const Var& a, const Var& b) { return a->id < b->id; });

    std::unordered_map<const Node*, bool> needed;
    for (const auto& w : wanted) needed[w.get()] = true;
    for (const auto& n : nodes) {
        if (needed.count(n.get())) continue;
        for (const auto& p : n->parents)
            if (needed.count(p.get()) && needed[p.get()]) {
                needed[n.get()] = true;
                break;
            }
    }

    GradMap grads;
    grads[root.get()] = constant(Tensor::scalar(1.0));
    std::vector<Var> pgrads;
    std::vector<bool> need;
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        const Var& n = *it;
        auto git = grads.find(n.get());
        if (git == grads.end() || !n->vjp) continue;
        const size_t np = n->parents.size();
        need.assign(np, false);
        bool any = false;
        for (size_t i = 0; i < np; ++i) {
            const Node* p = n->parents[i].get();
            auto nit = needed.find(p);
            need[i] = p->requires_grad && nit != needed.end() && nit->second;
            any = any || need[i];
        }
        if (!any) continue;
        pgrads.assign(np, nullptr);
        n->vjp(n, git->second, need, pgrads);
        for (size_t i = 0; i < np; ++i) {
            if (!pgrads[i]) continue;
            const Node* p = n->parents[i].get();
            auto pit = grads.find(p);
            if (pit == grads.end())
                grads[p] = pgrads[i];
            else
                pit->second = add(pit->second, pgrads[i]);
        }
    }
    return grads;
}

}  // namespace physvox::ad
