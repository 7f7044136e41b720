#include "textpainter/nn/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace textpainter::nn {

namespace {

thread_local int g_nograd_depth = 0;
int64_t g_seq = 0;

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;
using MapA = Eigen::Map<Eigen::ArrayXf>;
using MapCA = Eigen::Map<const Eigen::ArrayXf>;

std::shared_ptr<VarImpl> make_node(TensorData d, bool rg) {
    auto n = std::make_shared<VarImpl>();
    n->data = std::move(d);
    n->requires_grad = rg;
    n->seq = g_seq++;
    return n;
}

Var make_result(TensorData out, const std::vector<Var>& parents,
                std::function<void(VarImpl&)> bw) {
    bool rg = false;
    if (grad_enabled())
        for (const auto& p : parents)
            if (p.defined() && p.requires_grad()) rg = true;
    auto n = make_node(std::move(out), rg);
    if (rg) {
        for (const auto& p : parents)
            if (p.defined()) n->parents.push_back(p.impl());
        n->backward_fn = std::move(bw);
    }
    return Var(n);
}

void accum(VarImpl& p, const float* g, int64_t n) {
    p.ensure_grad();
    MapA(p.grad.data(), n) += MapCA(g, n);
}

bool wants_grad(const Var& v) { return v.defined() && v.impl()->requires_grad; }

float sigmoid_stable(float z) {
    if (z >= 0.f) return 1.f / (1.f + std::exp(-z));
    float e = std::exp(z);
    return e / (1.f + e);
}

float softplus_stable(float z) {
    if (z > 20.f) return z;
    return std::log1p(std::exp(z));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    check(a.shape() == b.shape(), "shape_mismatch",
          std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// x (C,H,W) -> col (C*kh*kw, Ho*Wo), zero filling outside the image.
void im2col(const float* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho,
            int Wo, float* col) {
    for (int c = 0; c < C; ++c) {
        const float* xc = x + static_cast<int64_t>(c) * H * W;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                float* row = col + (static_cast<int64_t>(c) * kh * kw + ky * kw + kx) *
                                       (static_cast<int64_t>(Ho) * Wo);
                for (int oy = 0; oy < Ho; ++oy) {
                    int iy = oy * stride + ky - pad;
                    float* dst = row + static_cast<int64_t>(oy) * Wo;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst, dst + Wo, 0.f);
                        continue;
                    }
                    const float* src = xc + static_cast<int64_t>(iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        int ix = ox * stride + kx - pad;
                        dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.f;
                    }
                }
            }
        }
    }
}

void col2im_add(const float* col, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho,
                int Wo, float* dx) {
    for (int c = 0; c < C; ++c) {
        float* xc = dx + static_cast<int64_t>(c) * H * W;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const float* row = col + (static_cast<int64_t>(c) * kh * kw + ky * kw + kx) *
                                             (static_cast<int64_t>(Ho) * Wo);
                for (int oy = 0; oy < Ho; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    const float* src = row + static_cast<int64_t>(oy) * Wo;
                    float* dst = xc + static_cast<int64_t>(iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < W) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

// Shared conv engine; per_sample selects (N,Cout,Cin,kh,kw) weights.
Var conv_impl(const Var& x, const Var& w, const Var& b, int stride, int pad, bool per_sample) {
    check(x.shape().size() == 4, "conv_shape", "conv input must be NCHW");
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const auto& ws = w.shape();
    check(ws.size() == (per_sample ? 5u : 4u), "conv_shape", "bad conv weight rank");
    int wi = per_sample ? 1 : 0;
    const int Cout = ws[wi], WCin = ws[wi + 1], kh = ws[wi + 2], kw = ws[wi + 3];
    check(WCin == Cin, "conv_shape", "conv weight in-channels mismatch");
    if (per_sample) check(ws[0] == N, "conv_shape", "per-sample weight batch mismatch");
    if (b.defined()) check(b.shape() == Shape{Cout}, "conv_shape", "conv bias shape");
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    check(Ho > 0 && Wo > 0, "conv_shape", "conv output would be empty");

    const int64_t K = static_cast<int64_t>(Cin) * kh * kw;
    const int64_t P = static_cast<int64_t>(Ho) * Wo;
    const int64_t in_sz = static_cast<int64_t>(Cin) * H * W;
    const int64_t out_sz = static_cast<int64_t>(Cout) * P;
    const bool k1 = (kh == 1 && kw == 1 && stride == 1 && pad == 0);

    TensorData out(Shape{N, Cout, Ho, Wo});
    std::vector<float> col;
    if (!k1) col.resize(static_cast<size_t>(K * P));
    for (int n = 0; n < N; ++n) {
        const float* xp = x.values().data() + n * in_sz;
        const float* wp = w.values().data() + (per_sample ? n * Cout * K : 0);
        float* op = out.v.data() + n * out_sz;
        MapCM wm(wp, Cout, K);
        MapM om(op, Cout, P);
        if (k1) {
            MapCM xm(xp, K, P);
            om.noalias() = wm * xm;
        } else {
            im2col(xp, Cin, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
            MapCM cm(col.data(), K, P);
            om.noalias() = wm * cm;
        }
        if (b.defined()) {
            for (int o = 0; o < Cout; ++o) {
                float bv = b.values()[static_cast<size_t>(o)];
                MapA(op + o * P, P) += bv;
            }
        }
    }

    Var xa = x, wa = w, ba = b;
    auto bw = [xa, wa, ba, stride, pad, per_sample, N, Cin, H, W, Cout, kh, kw, Ho, Wo, K, P,
               in_sz, out_sz, k1](VarImpl& self) {
        std::vector<float> col, dcol;
        if (!k1) col.resize(static_cast<size_t>(K * P));
        const bool need_x = wants_grad(xa), need_w = wants_grad(wa),
                   need_b = ba.defined() && wants_grad(ba);
        if (need_x) xa.impl()->ensure_grad();
        if (need_w) wa.impl()->ensure_grad();
        if (need_b) ba.impl()->ensure_grad();
        if (need_x && !k1) dcol.resize(static_cast<size_t>(K * P));
        for (int n = 0; n < N; ++n) {
            const float* gp = self.grad.data() + n * out_sz;
            MapCM gm(gp, Cout, P);
            const float* wp = wa.values().data() + (per_sample ? n * Cout * K : 0);
            MapCM wm(wp, Cout, K);
            const float* xp = xa.values().data() + n * in_sz;
            if (need_w) {
                float* dwp = wa.impl()->grad.data() + (per_sample ? n * Cout * K : 0);
                MapM dwm(dwp, Cout, K);
                if (k1) {
                    MapCM xm(xp, K, P);
                    dwm.noalias() += gm * xm.transpose();
                } else {
                    im2col(xp, Cin, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
                    MapCM cm(col.data(), K, P);
                    dwm.noalias() += gm * cm.transpose();
                }
            }
            if (need_x) {
                float* dxp = xa.impl()->grad.data() + n * in_sz;
                if (k1) {
                    MapM dxm(dxp, K, P);
                    dxm.noalias() += wm.transpose() * gm;
                } else {
                    MapM dcm(dcol.data(), K, P);
                    dcm.noalias() = wm.transpose() * gm;
                    col2im_add(dcol.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo, dxp);
                }
            }
            if (need_b) {
                float* dbp = ba.impl()->grad.data();
                for (int o = 0; o < Cout; ++o) dbp[o] += MapCA(gp + o * P, P).sum();
            }
        }
    };
    return make_result(std::move(out), {x, w, b}, std::move(bw));
}

}  // namespace

Var::Var(TensorData d, bool requires_grad) : impl_(make_node(std::move(d), requires_grad)) {}

Var Var::zeros(Shape s, bool rg) { return Var(TensorData(std::move(s)), rg); }

Var Var::full(Shape s, float value, bool rg) { return Var(TensorData(std::move(s), value), rg); }

Var Var::from_vector(Shape s, std::vector<float> v, bool rg) {
    return Var(TensorData(std::move(s), std::move(v)), rg);
}

Var Var::randn(Shape s, Rng& rng, float stddev, bool rg) {
    TensorData d(std::move(s));
    for (auto& v : d.v) v = static_cast<float>(rng.normal()) * stddev;
    return Var(std::move(d), rg);
}

Var Var::scalar(float v) { return Var(TensorData(Shape{1}, std::vector<float>{v})); }

float Var::item() const {
    check(numel() == 1, "not_scalar", "item() on non-scalar of shape " + shape_str(shape()));
    return values()[0];
}

bool grad_enabled() { return g_nograd_depth == 0; }
NoGrad::NoGrad() { ++g_nograd_depth; }
NoGrad::~NoGrad() { --g_nograd_depth; }

void backward(const Var& root) {
    check(root.defined() && root.numel() == 1, "backward_root", "backward needs a scalar root");
    auto ri = root.impl();
    if (!ri->backward_fn && ri->parents.empty() && !ri->requires_grad) return;

    // Collect reachable recorded nodes; children always have higher seq than
    // parents, so descending seq order is a valid reverse topological order.
    std::vector<VarImpl*> order;
    std::unordered_set<VarImpl*> seen;
    std::vector<VarImpl*> stack{ri.get()};
    seen.insert(ri.get());
    while (!stack.empty()) {
        VarImpl* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->parents)
            if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](const VarImpl* a, const VarImpl* b) { return a->seq > b->seq; });

    ri->ensure_grad();
    ri->grad[0] += 1.f;
    for (VarImpl* n : order) {
        if (!n->backward_fn) continue;
        if (n->grad.empty()) continue;
        n->backward_fn(*n);
        n->grad = std::vector<float>();  // children are done with it
    }
}

// ---- elementwise ----

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    TensorData out(a.shape());
    int64_t n = a.numel();
    MapA(out.v.data(), n) = MapCA(a.values().data(), n) + MapCA(b.values().data(), n);
    Var aa = a, bb = b;
    return make_result(std::move(out), {a, b}, [aa, bb, n](VarImpl& self) {
        if (wants_grad(aa)) accum(*aa.impl(), self.grad.data(), n);
        if (wants_grad(bb)) accum(*bb.impl(), self.grad.data(), n);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    TensorData out(a.shape());
    int64_t n = a.numel();
    MapA(out.v.data(), n) = MapCA(a.values().data(), n) - MapCA(b.values().data(), n);
    Var aa = a, bb = b;
    return make_result(std::move(out), {a, b}, [aa, bb, n](VarImpl& self) {
        if (wants_grad(aa)) accum(*aa.impl(), self.grad.data(), n);
        if (wants_grad(bb)) {
            bb.impl()->ensure_grad();
            MapA(bb.impl()->grad.data(), n) -= MapCA(self.grad.data(), n);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    TensorData out(a.shape());
    int64_t n = a.numel();
    MapA(out.v.data(), n) = MapCA(a.values().data(), n) * MapCA(b.values().data(), n);
    Var aa = a, bb = b;
    return make_result(std::move(out), {a, b}, [aa, bb, n](VarImpl& self) {
        if (wants_grad(aa)) {
            aa.impl()->ensure_grad();
            MapA(aa.impl()->grad.data(), n) +=
                MapCA(self.grad.data(), n) * MapCA(bb.values().data(), n);
        }
        if (wants_grad(bb)) {
            bb.impl()->ensure_grad();
            MapA(bb.impl()->grad.data(), n) +=
                MapCA(self.grad.data(), n) * MapCA(aa.values().data(), n);
        }
    });
}

Var add_scalar(const Var& a, float c) {
    TensorData out(a.shape());
    int64_t n = a.numel();
    MapA(out.v.data(), n) = MapCA(a.values().data(), n) + c;
    Var aa = a;
    return make_result(std::move(out), {a}, [aa, n](VarImpl& self) {
        if (wants_grad(aa)) accum(*aa.impl(), self.grad.data(), n);
    });
}

Var mul_scalar(const Var& a, float c) {
    TensorData out(a.shape());
    int64_t n = a.numel();
    MapA(out.v.data(), n) = MapCA(a.values().data(), n) * c;
    Var aa = a;
    return make_result(std::move(out), {a}, [aa, c, n](VarImpl& self) {
        if (wants_grad(aa)) {
            aa.impl()->ensure_grad();
            MapA(aa.impl()->grad.data(), n) += MapCA(self.grad.data(), n) * c;
        }
    });
}

Var neg(const Var& a) { return mul_scalar(a, -1.f); }

Var leaky_relu(const Var& a, float slope) {
    TensorData out(a.shape());
    int64_t n = a.numel();
    const float* av = a.values().data();
    for (int64_t i = 0; i < n; ++i) out.v[i] = av[i] > 0.f ? av[i] : slope * av[i];
    Var aa = a;
    return make_result(std::move(out), {a}, [aa, slope, n](VarImpl& self) {
        if (!wants_grad(aa)) return;
        aa.impl()->ensure_grad();
        const float* av = aa.values().data();
        const float* g = self.grad.data();
        float* dg = aa.impl()->grad.data();
        for (int64_t i = 0; i < n; ++i) dg[i] += av[i] > 0.f ? g[i] : slope * g[i];
    });
}

Var tanh_(const Var& a) {
    TensorData out(a.shape());
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.v[i] = std::tanh(a.values()[i]);
    Var aa = a;
    return make_result(std::move(out), {a}, [aa, n](VarImpl& self) {
        if (!wants_grad(aa)) return;
        aa.impl()->ensure_grad();
        const float* y = self.data.v.data();
        const float* g = self.grad.data();
        float* dg = aa.impl()->grad.data();
        for (int64_t i = 0; i < n; ++i) dg[i] += g[i] * (1.f - y[i] * y[i]);
    });
}

Var softplus_(const Var& a) {
    TensorData out(a.shape());
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.v[i] = softplus_stable(a.values()[i]);
    Var aa = a;
    return make_result(std::move(out), {a}, [aa, n](VarImpl& self) {
        if (!wants_grad(aa)) return;
        aa.impl()->ensure_grad();
        const float* x = aa.values().data();
        const float* g = self.grad.data();
        float* dg = aa.impl()->grad.data();
        for (int64_t i = 0; i < n; ++i) dg[i] += g[i] * sigmoid_stable(x[i]);
    });
}

Var abs_(const Var& a) {
    TensorData out(a.shape());
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.v[i] = std::fabs(a.values()[i]);
    Var aa = a;
    return make_result(std::move(out), {a}, [aa, n](VarImpl& self) {
        if (!wants_grad(aa)) return;
        aa.impl()->ensure_grad();
        const float* x = aa.values().data();
        const float* g = self.grad.data();
        float* dg = aa.impl()->grad.data();
        for (int64_t i = 0; i < n; ++i)
            dg[i] += x[i] > 0.f ? g[i] : (x[i] < 0.f ? -g[i] : 0.f);
    });
}

Var square(const Var& a) {
    TensorData out(a.shape());
    int64_t n = a.numel();
    MapA(out.v.data(), n) = MapCA(a.values().data(), n).square();
    Var aa = a;
    return make_result(std::move(out), {a}, [aa, n](VarImpl& self) {
        if (!wants_grad(aa)) return;
        aa.impl()->ensure_grad();
        MapA(aa.impl()->grad.data(), n) +=
            2.f * MapCA(self.grad.data(), n) * MapCA(aa.values().data(), n);
    });
}

Var sqrt_(const Var& a) {
    TensorData out(a.shape());
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.v[i] = std::sqrt(a.values()[i]);
    Var aa = a;
    return make_result(std::move(out), {a}, [aa, n](VarImpl& self) {
        if (!wants_grad(aa)) return;
        aa.impl()->ensure_grad();
        const float* y = self.data.v.data();
        const float* g = self.grad.data();
        float* dg = aa.impl()->grad.data();
        for (int64_t i = 0; i < n; ++i) dg[i] += g[i] * 0.5f / std::max(y[i], 1e-12f);
    });
}

Var rsqrt_(const Var& a, float eps) {
    TensorData out(a.shape());
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out.v[i] = 1.f / std::sqrt(a.values()[i] + eps);
    Var aa = a;
    return make_result(std::move(out), {a}, [aa, n](VarImpl& self) {
        if (!wants_grad(aa)) return;
        aa.impl()->ensure_grad();
        const float* y = self.data.v.data();
        const float* g = self.grad.data();
        float* dg = aa.impl()->grad.data();
        for (int64_t i = 0; i < n; ++i) dg[i] += -0.5f * g[i] * y[i] * y[i] * y[i];
    });
}

// ---- broadcast / reduce ----

Var add_bias_nchw(const Var& x, const Var& b) {
    check(x.shape().size() == 4, "shape_mismatch", "add_bias_nchw needs NCHW");
    const int N = x.dim(0), C = x.dim(1);
    const int64_t HW = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    check(b.shape() == Shape{C}, "shape_mismatch", "bias must be (C)");
    TensorData out(x.shape());
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            int64_t off = (static_cast<int64_t>(n) * C + c) * HW;
            MapA(out.v.data() + off, HW) = MapCA(x.values().data() + off, HW) + b.values()[c];
        }
    Var xa = x, ba = b;
    return make_result(std::move(out), {x, b}, [xa, ba, N, C, HW](VarImpl& self) {
        if (wants_grad(xa)) accum(*xa.impl(), self.grad.data(), self.data.size());
        if (wants_grad(ba)) {
            ba.impl()->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    int64_t off = (static_cast<int64_t>(n) * C + c) * HW;
                    ba.impl()->grad[c] += MapCA(self.grad.data() + off, HW).sum();
                }
        }
    });
}

Var add_rowvec(const Var& x, const Var& b) {
    check(x.shape().size() == 2, "shape_mismatch", "add_rowvec needs (N,F)");
    const int N = x.dim(0), F = x.dim(1);
    check(b.shape() == Shape{F}, "shape_mismatch", "row vector must be (F)");
    TensorData out(x.shape());
    for (int n = 0; n < N; ++n)
        MapA(out.v.data() + static_cast<int64_t>(n) * F, F) =
            MapCA(x.values().data() + static_cast<int64_t>(n) * F, F) +
            MapCA(b.values().data(), F);
    Var xa = x, ba = b;
    return make_result(std::move(out), {x, b}, [xa, ba, N, F](VarImpl& self) {
        if (wants_grad(xa)) accum(*xa.impl(), self.grad.data(), self.data.size());
        if (wants_grad(ba)) {
            ba.impl()->ensure_grad();
            for (int n = 0; n < N; ++n)
                MapA(ba.impl()->grad.data(), F) +=
                    MapCA(self.grad.data() + static_cast<int64_t>(n) * F, F);
        }
    });
}

Var mul_bcast_trailing(const Var& big, const Var& small) {
    const auto& bs = big.shape();
    const auto& ss = small.shape();
    check(ss.size() <= bs.size() && std::equal(ss.begin(), ss.end(), bs.begin()),
          "shape_mismatch", "mul_bcast_trailing: small must be a leading prefix of big");
    int64_t rows = numel(ss);
    int64_t block = big.numel() / std::max<int64_t>(rows, 1);
    TensorData out(bs);
    for (int64_t r = 0; r < rows; ++r)
        MapA(out.v.data() + r * block, block) =
            MapCA(big.values().data() + r * block, block) * small.values()[static_cast<size_t>(r)];
    Var ba = big, sa = small;
    return make_result(std::move(out), {big, small}, [ba, sa, rows, block](VarImpl& self) {
        if (wants_grad(ba)) {
            ba.impl()->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                MapA(ba.impl()->grad.data() + r * block, block) +=
                    MapCA(self.grad.data() + r * block, block) *
                    sa.values()[static_cast<size_t>(r)];
        }
        if (wants_grad(sa)) {
            sa.impl()->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                sa.impl()->grad[static_cast<size_t>(r)] +=
                    (MapCA(self.grad.data() + r * block, block) *
                     MapCA(ba.values().data() + r * block, block))
                        .sum();
        }
    });
}

Var weight_modulate(const Var& w, const Var& s) {
    const auto& ws = w.shape();
    check(ws.size() == 4, "shape_mismatch", "weight_modulate weight must be (O,I,kh,kw)");
    const int O = ws[0], I = ws[1];
    const int64_t T = static_cast<int64_t>(ws[2]) * ws[3];
    check(s.shape().size() == 2 && s.dim(1) == I, "shape_mismatch",
          "weight_modulate style must be (N,I)");
    const int N = s.dim(0);
    TensorData out(Shape{N, O, I, ws[2], ws[3]});
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int i = 0; i < I; ++i) {
                float sv = s.values()[static_cast<size_t>(n) * I + i];
                const float* wp = w.values().data() + (static_cast<int64_t>(o) * I + i) * T;
                float* op =
                    out.v.data() + ((static_cast<int64_t>(n) * O + o) * I + i) * T;
                MapA(op, T) = MapCA(wp, T) * sv;
            }
    Var wa = w, sa = s;
    return make_result(std::move(out), {w, s}, [wa, sa, N, O, I, T](VarImpl& self) {
        const bool nw = wants_grad(wa), ns = wants_grad(sa);
        if (nw) wa.impl()->ensure_grad();
        if (ns) sa.impl()->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int o = 0; o < O; ++o)
                for (int i = 0; i < I; ++i) {
                    const float* gp =
                        self.grad.data() + ((static_cast<int64_t>(n) * O + o) * I + i) * T;
                    if (nw) {
                        float sv = sa.values()[static_cast<size_t>(n) * I + i];
                        MapA(wa.impl()->grad.data() + (static_cast<int64_t>(o) * I + i) * T, T) +=
                            MapCA(gp, T) * sv;
                    }
                    if (ns) {
                        const float* wp =
                            wa.values().data() + (static_cast<int64_t>(o) * I + i) * T;
                        sa.impl()->grad[static_cast<size_t>(n) * I + i] +=
                            (MapCA(gp, T) * MapCA(wp, T)).sum();
                    }
                }
    });
}

Var sum_last(const Var& x, int keep_dims) {
    const auto& xs = x.shape();
    check(keep_dims >= 0 && keep_dims < static_cast<int>(xs.size()), "shape_mismatch",
          "sum_last keep_dims out of range");
    Shape os(xs.begin(), xs.begin() + keep_dims);
    if (os.empty()) os = {1};
    int64_t rows = numel(Shape(xs.begin(), xs.begin() + keep_dims));
    int64_t block = x.numel() / std::max<int64_t>(rows, 1);
    TensorData out(os);
    for (int64_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        const float* p = x.values().data() + r * block;
        for (int64_t i = 0; i < block; ++i) acc += p[i];
        out.v[static_cast<size_t>(r)] = static_cast<float>(acc);
    }
    Var xa = x;
    return make_result(std::move(out), {x}, [xa, rows, block](VarImpl& self) {
        if (!wants_grad(xa)) return;
        xa.impl()->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
            MapA(xa.impl()->grad.data() + r * block, block) += self.grad[static_cast<size_t>(r)];
    });
}

Var sum_all(const Var& x) { return sum_last(x, 0); }

Var mean_all(const Var& x) { return mul_scalar(sum_all(x), 1.f / static_cast<float>(x.numel())); }

// ---- linear algebra ----

Var matmul(const Var& a, const Var& b) {
    check(a.shape().size() == 2 && b.shape().size() == 2 && a.dim(1) == b.dim(0),
          "shape_mismatch",
          "matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    TensorData out(Shape{m, n});
    MapM(out.v.data(), m, n).noalias() =
        MapCM(a.values().data(), m, k) * MapCM(b.values().data(), k, n);
    Var aa = a, bb = b;
    return make_result(std::move(out), {a, b}, [aa, bb, m, k, n](VarImpl& self) {
        MapCM g(self.grad.data(), m, n);
        if (wants_grad(aa)) {
            aa.impl()->ensure_grad();
            MapM(aa.impl()->grad.data(), m, k).noalias() +=
                g * MapCM(bb.values().data(), k, n).transpose();
        }
        if (wants_grad(bb)) {
            bb.impl()->ensure_grad();
            MapM(bb.impl()->grad.data(), k, n).noalias() +=
                MapCM(aa.values().data(), m, k).transpose() * g;
        }
    });
}

Var bmatmul(const Var& a, const Var& b) {
    check(a.shape().size() == 3 && b.shape().size() == 3 && a.dim(0) == b.dim(0) &&
              a.dim(2) == b.dim(1),
          "shape_mismatch", "bmatmul shapes");
    const int N = a.dim(0), p = a.dim(1), q = a.dim(2), r = b.dim(2);
    TensorData out(Shape{N, p, r});
    for (int i = 0; i < N; ++i)
        MapM(out.v.data() + static_cast<int64_t>(i) * p * r, p, r).noalias() =
            MapCM(a.values().data() + static_cast<int64_t>(i) * p * q, p, q) *
            MapCM(b.values().data() + static_cast<int64_t>(i) * q * r, q, r);
    Var aa = a, bb = b;
    return make_result(std::move(out), {a, b}, [aa, bb, N, p, q, r](VarImpl& self) {
        for (int i = 0; i < N; ++i) {
            MapCM g(self.grad.data() + static_cast<int64_t>(i) * p * r, p, r);
            if (wants_grad(aa)) {
                aa.impl()->ensure_grad();
                MapM(aa.impl()->grad.data() + static_cast<int64_t>(i) * p * q, p, q).noalias() +=
                    g * MapCM(bb.values().data() + static_cast<int64_t>(i) * q * r, q, r)
                            .transpose();
            }
            if (wants_grad(bb)) {
                bb.impl()->ensure_grad();
                MapM(bb.impl()->grad.data() + static_cast<int64_t>(i) * q * r, q, r).noalias() +=
                    MapCM(aa.values().data() + static_cast<int64_t>(i) * p * q, p, q)
                        .transpose() *
                    g;
            }
        }
    });
}

Var bmatmul_nt(const Var& a, const Var& b) {
    check(a.shape().size() == 3 && b.shape().size() == 3 && a.dim(0) == b.dim(0) &&
              a.dim(2) == b.dim(2),
          "shape_mismatch", "bmatmul_nt shapes");
    const int N = a.dim(0), p = a.dim(1), q = a.dim(2), r = b.dim(1);
    TensorData out(Shape{N, p, r});
    for (int i = 0; i < N; ++i)
        MapM(out.v.data() + static_cast<int64_t>(i) * p * r, p, r).noalias() =
            MapCM(a.values().data() + static_cast<int64_t>(i) * p * q, p, q) *
            MapCM(b.values().data() + static_cast<int64_t>(i) * r * q, r, q).transpose();
    Var aa = a, bb = b;
    return make_result(std::move(out), {a, b}, [aa, bb, N, p, q, r](VarImpl& self) {
        for (int i = 0; i < N; ++i) {
            MapCM g(self.grad.data() + static_cast<int64_t>(i) * p * r, p, r);
            if (wants_grad(aa)) {
                aa.impl()->ensure_grad();
                MapM(aa.impl()->grad.data() + static_cast<int64_t>(i) * p * q, p, q).noalias() +=
                    g * MapCM(bb.values().data() + static_cast<int64_t>(i) * r * q, r, q);
            }
            if (wants_grad(bb)) {
                bb.impl()->ensure_grad();
                MapM(bb.impl()->grad.data() + static_cast<int64_t>(i) * r * q, r, q).noalias() +=
                    g.transpose() *
                    MapCM(aa.values().data() + static_cast<int64_t>(i) * p * q, p, q);
            }
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    Var y = matmul(x, w);
    if (b.defined()) y = add_rowvec(y, b);
    return y;
}

// ---- convolution / spatial ----

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    return conv_impl(x, w, b, stride, pad, false);
}

Var conv2d_per_sample(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    return conv_impl(x, w, b, stride, pad, true);
}

namespace {

// Depthwise 3x3 binomial blur with zero padding; self-adjoint, so the
// backward pass reuses the same kernel.
void blur3_apply(const float* src, float* dst, int N, int C, int H, int W) {
    static const float k[3] = {0.25f, 0.5f, 0.25f};
    std::vector<float> tmp(static_cast<size_t>(H) * W);
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const float* s = src + nc * H * W;
        float* d = dst + nc * H * W;
        // horizontal
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                float acc = 0.f;
                for (int t = -1; t <= 1; ++t) {
                    int xx = x + t;
                    if (xx >= 0 && xx < W) acc += k[t + 1] * s[y * W + xx];
                }
                tmp[static_cast<size_t>(y) * W + x] = acc;
            }
        // vertical
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                float acc = 0.f;
                for (int t = -1; t <= 1; ++t) {
                    int yy = y + t;
                    if (yy >= 0 && yy < H) acc += k[t + 1] * tmp[static_cast<size_t>(yy) * W + x];
                }
                d[y * W + x] = acc;
            }
    }
}

}  // namespace

Var blur3(const Var& x) {
    check(x.shape().size() == 4, "shape_mismatch", "blur3 needs NCHW");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    TensorData out(x.shape());
    blur3_apply(x.values().data(), out.v.data(), N, C, H, W);
    Var xa = x;
    return make_result(std::move(out), {x}, [xa, N, C, H, W](VarImpl& self) {
        if (!wants_grad(xa)) return;
        xa.impl()->ensure_grad();
        std::vector<float> dx(self.grad.size());
        blur3_apply(self.grad.data(), dx.data(), N, C, H, W);
        MapA(xa.impl()->grad.data(), static_cast<int64_t>(dx.size())) +=
            MapCA(dx.data(), static_cast<int64_t>(dx.size()));
    });
}

Var upsample_nearest2(const Var& x) {
    check(x.shape().size() == 4, "shape_mismatch", "upsample needs NCHW");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    TensorData out(Shape{N, C, 2 * H, 2 * W});
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const float* s = x.values().data() + nc * H * W;
        float* d = out.v.data() + nc * 4 * H * W;
        for (int y = 0; y < H; ++y)
            for (int x2 = 0; x2 < W; ++x2) {
                float v = s[y * W + x2];
                float* r0 = d + (2 * y) * 2 * W + 2 * x2;
                float* r1 = r0 + 2 * W;
                r0[0] = r0[1] = r1[0] = r1[1] = v;
            }
    }
    Var xa = x;
    return make_result(std::move(out), {x}, [xa, N, C, H, W](VarImpl& self) {
        if (!wants_grad(xa)) return;
        xa.impl()->ensure_grad();
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
            const float* g = self.grad.data() + nc * 4 * H * W;
            float* dg = xa.impl()->grad.data() + nc * H * W;
            for (int y = 0; y < H; ++y)
                for (int x2 = 0; x2 < W; ++x2) {
                    const float* r0 = g + (2 * y) * 2 * W + 2 * x2;
                    const float* r1 = r0 + 2 * W;
                    dg[y * W + x2] += r0[0] + r0[1] + r1[0] + r1[1];
                }
        }
    });
}

Var avg_pool(const Var& x, int k) {
    check(x.shape().size() == 4 && k >= 1, "shape_mismatch", "avg_pool needs NCHW");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = H / k, Wo = W / k;
    check(Ho > 0 && Wo > 0, "shape_mismatch", "avg_pool output would be empty");
    const float inv = 1.f / static_cast<float>(k * k);
    TensorData out(Shape{N, C, Ho, Wo});
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        const float* s = x.values().data() + nc * H * W;
        float* d = out.v.data() + nc * Ho * Wo;
        for (int y = 0; y < Ho; ++y)
            for (int x2 = 0; x2 < Wo; ++x2) {
                float acc = 0.f;
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx) acc += s[(y * k + dy) * W + x2 * k + dx];
                d[y * Wo + x2] = acc * inv;
            }
    }
    Var xa = x;
    return make_result(std::move(out), {x}, [xa, N, C, H, W, Ho, Wo, k, inv](VarImpl& self) {
        if (!wants_grad(xa)) return;
        xa.impl()->ensure_grad();
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
            const float* g = self.grad.data() + nc * Ho * Wo;
            float* dg = xa.impl()->grad.data() + nc * H * W;
            for (int y = 0; y < Ho; ++y)
                for (int x2 = 0; x2 < Wo; ++x2) {
                    float gv = g[y * Wo + x2] * inv;
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx)
                            dg[(y * k + dy) * W + x2 * k + dx] += gv;
                }
        }
    });
}

Var global_avg_pool(const Var& x) {
    check(x.shape().size() == 4, "shape_mismatch", "global_avg_pool needs NCHW");
    const int N = x.dim(0), C = x.dim(1);
    const int64_t HW = static_cast<int64_t>(x.dim(2)) * x.dim(3);
    const float inv = 1.f / static_cast<float>(HW);
    TensorData out(Shape{N, C});
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        double acc = 0.0;
        const float* s = x.values().data() + nc * HW;
        for (int64_t i = 0; i < HW; ++i) acc += s[i];
        out.v[static_cast<size_t>(nc)] = static_cast<float>(acc) * inv;
    }
    Var xa = x;
    return make_result(std::move(out), {x}, [xa, N, C, HW, inv](VarImpl& self) {
        if (!wants_grad(xa)) return;
        xa.impl()->ensure_grad();
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc)
            MapA(xa.impl()->grad.data() + nc * HW, HW) +=
                self.grad[static_cast<size_t>(nc)] * inv;
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    check(!xs.empty(), "concat_empty", "concat_channels needs at least one input");
    const int N = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
    int Ctot = 0;
    for (const auto& x : xs) {
        check(x.shape().size() == 4 && x.dim(0) == N && x.dim(2) == H && x.dim(3) == W,
              "shape_mismatch", "concat_channels inputs must agree on N,H,W");
        Ctot += x.dim(1);
    }
    const int64_t HW = static_cast<int64_t>(H) * W;
    TensorData out(Shape{N, Ctot, H, W});
    for (int n = 0; n < N; ++n) {
        int64_t coff = 0;
        for (const auto& x : xs) {
            const int C = x.dim(1);
            std::copy_n(x.values().data() + static_cast<int64_t>(n) * C * HW, C * HW,
                        out.v.data() + (static_cast<int64_t>(n) * Ctot + coff) * HW);
            coff += C;
        }
    }
    std::vector<Var> parents = xs;
    return make_result(std::move(out), parents, [parents, N, Ctot, HW](VarImpl& self) {
        for (int n = 0; n < N; ++n) {
            int64_t coff = 0;
            for (const auto& x : parents) {
                const int C = x.dim(1);
                if (wants_grad(x)) {
                    x.impl()->ensure_grad();
                    MapA(x.impl()->grad.data() + static_cast<int64_t>(n) * C * HW, C * HW) +=
                        MapCA(self.grad.data() + (static_cast<int64_t>(n) * Ctot + coff) * HW,
                              C * HW);
                }
                coff += C;
            }
        }
    });
}

Var crop_hw(const Var& x, int y0, int x0, int h, int w) {
    check(x.shape().size() == 4, "shape_mismatch", "crop_hw needs NCHW");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    check(y0 >= 0 && x0 >= 0 && y0 + h <= H && x0 + w <= W, "crop_oob",
          "crop_hw region outside tensor");
    TensorData out(Shape{N, C, h, w});
    for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc)
        for (int y = 0; y < h; ++y)
            std::copy_n(x.values().data() + nc * H * W + (y0 + y) * W + x0, w,
                        out.v.data() + nc * h * w + static_cast<int64_t>(y) * w);
    Var xa = x;
    return make_result(std::move(out), {x}, [xa, N, C, H, W, y0, x0, h, w](VarImpl& self) {
        if (!wants_grad(xa)) return;
        xa.impl()->ensure_grad();
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc)
            for (int y = 0; y < h; ++y)
                MapA(xa.impl()->grad.data() + nc * H * W + (y0 + y) * W + x0, w) +=
                    MapCA(self.grad.data() + nc * h * w + static_cast<int64_t>(y) * w, w);
    });
}

Var slice_batch(const Var& x, int i) {
    check(!x.shape().empty(), "shape_mismatch", "slice_batch needs a batch dim");
    const int N = x.dim(0);
    check(i >= 0 && i < N, "slice_oob", "slice_batch index out of range");
    Shape s = x.shape();
    s[0] = 1;
    const int64_t stride = numel(s);
    TensorData out(std::move(s));
    std::copy_n(x.values().data() + static_cast<int64_t>(i) * stride, stride, out.v.data());
    Var xa = x;
    return make_result(std::move(out), {x}, [xa, i, stride](VarImpl& self) {
        if (!wants_grad(xa)) return;
        xa.impl()->ensure_grad();
        MapA(xa.impl()->grad.data() + static_cast<int64_t>(i) * stride, stride) +=
            MapCA(self.grad.data(), stride);
    });
}

Var reshape(const Var& x, Shape s) {
    check(numel(s) == x.numel(), "shape_mismatch",
          "reshape element count " + shape_str(s) + " vs " + shape_str(x.shape()));
    TensorData out(std::move(s), x.values());
    Var xa = x;
    return make_result(std::move(out), {x}, [xa](VarImpl& self) {
        if (wants_grad(xa)) accum(*xa.impl(), self.grad.data(), self.data.size());
    });
}

Var nchw_to_tokens(const Var& x) {
    check(x.shape().size() == 4, "shape_mismatch", "nchw_to_tokens needs NCHW");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t HW = static_cast<int64_t>(H) * W;
    TensorData out(Shape{N, static_cast<int>(HW), C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* s = x.values().data() + (static_cast<int64_t>(n) * C + c) * HW;
            float* d = out.v.data() + static_cast<int64_t>(n) * HW * C + c;
            for (int64_t t = 0; t < HW; ++t) d[t * C] = s[t];
        }
    Var xa = x;
    return make_result(std::move(out), {x}, [xa, N, C, HW](VarImpl& self) {
        if (!wants_grad(xa)) return;
        xa.impl()->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                float* dg = xa.impl()->grad.data() + (static_cast<int64_t>(n) * C + c) * HW;
                const float* g = self.grad.data() + static_cast<int64_t>(n) * HW * C + c;
                for (int64_t t = 0; t < HW; ++t) dg[t] += g[t * C];
            }
    });
}

Var tokens_to_nchw(const Var& x, int h, int w) {
    check(x.shape().size() == 3 && x.dim(1) == h * w, "shape_mismatch",
          "tokens_to_nchw token count must equal h*w");
    const int N = x.dim(0), C = x.dim(2);
    const int64_t HW = static_cast<int64_t>(h) * w;
    TensorData out(Shape{N, C, h, w});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* s = x.values().data() + static_cast<int64_t>(n) * HW * C + c;
            float* d = out.v.data() + (static_cast<int64_t>(n) * C + c) * HW;
            for (int64_t t = 0; t < HW; ++t) d[t] = s[t * C];
        }
    Var xa = x;
    return make_result(std::move(out), {x}, [xa, N, C, HW](VarImpl& self) {
        if (!wants_grad(xa)) return;
        xa.impl()->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const float* g = self.grad.data() + (static_cast<int64_t>(n) * C + c) * HW;
                float* dg = xa.impl()->grad.data() + static_cast<int64_t>(n) * HW * C + c;
                for (int64_t t = 0; t < HW; ++t) dg[t * C] += g[t];
            }
    });
}

Var softmax_masked(const Var& x, const std::vector<uint8_t>& mask) {
    check(x.shape().size() == 3, "shape_mismatch", "softmax_masked needs (N,P,T)");
    const int N = x.dim(0), P = x.dim(1), T = x.dim(2);
    check(mask.size() == static_cast<size_t>(N) * T, "shape_mismatch",
          "softmax mask must be (N,T)");
    TensorData out(x.shape());
    for (int n = 0; n < N; ++n) {
        const uint8_t* m = mask.data() + static_cast<size_t>(n) * T;
        for (int p = 0; p < P; ++p) {
            const float* row = x.values().data() + (static_cast<int64_t>(n) * P + p) * T;
            float* orow = out.v.data() + (static_cast<int64_t>(n) * P + p) * T;
            float mx = -std::numeric_limits<float>::infinity();
            for (int t = 0; t < T; ++t)
                if (m[t] && row[t] > mx) mx = row[t];
            double denom = 0.0;
            for (int t = 0; t < T; ++t) {
                if (m[t]) {
                    orow[t] = std::exp(row[t] - mx);
                    denom += orow[t];
                } else {
                    orow[t] = 0.f;
                }
            }
            check(denom > 0.0, "softmax_empty", "softmax row has no valid entries");
            float inv = static_cast<float>(1.0 / denom);
            for (int t = 0; t < T; ++t) orow[t] *= inv;
        }
    }
    Var xa = x;
    return make_result(std::move(out), {x}, [xa, N, P, T](VarImpl& self) {
        if (!wants_grad(xa)) return;
        xa.impl()->ensure_grad();
        for (int64_t np = 0; np < static_cast<int64_t>(N) * P; ++np) {
            const float* y = self.data.v.data() + np * T;
            const float* g = self.grad.data() + np * T;
            float* dg = xa.impl()->grad.data() + np * T;
            double dot = 0.0;
            for (int t = 0; t < T; ++t) dot += static_cast<double>(g[t]) * y[t];
            for (int t = 0; t < T; ++t)
                dg[t] += y[t] * (g[t] - static_cast<float>(dot));
        }
    });
}

Var detach(const Var& x) {
    return Var(TensorData(x.shape(), x.values()), false);
}

// ---- loss reductions ----

Var l1_mean(const Var& a, const Var& b) {
    check_same_shape(a, b, "l1_mean");
    const int64_t n = a.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i)
        acc += std::fabs(static_cast<double>(a.values()[i]) - b.values()[i]);
    TensorData out(Shape{1}, std::vector<float>{static_cast<float>(acc / n)});
    Var aa = a, bb = b;
    return make_result(std::move(out), {a, b}, [aa, bb, n](VarImpl& self) {
        const float g = self.grad[0] / static_cast<float>(n);
        const bool na = wants_grad(aa), nb = wants_grad(bb);
        if (na) aa.impl()->ensure_grad();
        if (nb) bb.impl()->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            float d = aa.values()[i] - bb.values()[i];
            float s = d > 0.f ? g : (d < 0.f ? -g : 0.f);
            if (na) aa.impl()->grad[i] += s;
            if (nb) bb.impl()->grad[i] -= s;
        }
    });
}

Var mean_softplus(const Var& x, bool negate) {
    const int64_t n = x.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        float z = negate ? -x.values()[i] : x.values()[i];
        acc += softplus_stable(z);
    }
    TensorData out(Shape{1}, std::vector<float>{static_cast<float>(acc / n)});
    Var xa = x;
    return make_result(std::move(out), {x}, [xa, negate, n](VarImpl& self) {
        if (!wants_grad(xa)) return;
        xa.impl()->ensure_grad();
        const float g = self.grad[0] / static_cast<float>(n);
        for (int64_t i = 0; i < n; ++i) {
            float z = negate ? -xa.values()[i] : xa.values()[i];
            float d = sigmoid_stable(z) * g;
            xa.impl()->grad[i] += negate ? -d : d;
        }
    });
}

Var softmax_xent(const Var& logits, const std::vector<int>& labels) {
    check(logits.shape().size() == 2, "shape_mismatch", "softmax_xent needs (N,K)");
    const int N = logits.dim(0), K = logits.dim(1);
    check(labels.size() == static_cast<size_t>(N), "shape_mismatch", "label count mismatch");
    double acc = 0.0;
    for (int n = 0; n < N; ++n) {
        check(labels[n] >= 0 && labels[n] < K, "label_range", "label out of range");
        const float* row = logits.values().data() + static_cast<int64_t>(n) * K;
        float mx = *std::max_element(row, row + K);
        double denom = 0.0;
        for (int k = 0; k < K; ++k) denom += std::exp(static_cast<double>(row[k]) - mx);
        acc += std::log(denom) + mx - row[labels[n]];
    }
    TensorData out(Shape{1}, std::vector<float>{static_cast<float>(acc / N)});
    Var la = logits;
    std::vector<int> labs = labels;
    return make_result(std::move(out), {logits}, [la, labs, N, K](VarImpl& self) {
        if (!wants_grad(la)) return;
        la.impl()->ensure_grad();
        const float g = self.grad[0] / static_cast<float>(N);
        for (int n = 0; n < N; ++n) {
            const float* row = la.values().data() + static_cast<int64_t>(n) * K;
            float* dg = la.impl()->grad.data() + static_cast<int64_t>(n) * K;
            float mx = *std::max_element(row, row + K);
            double denom = 0.0;
            for (int k = 0; k < K; ++k) denom += std::exp(static_cast<double>(row[k]) - mx);
            for (int k = 0; k < K; ++k) {
                float p = static_cast<float>(std::exp(static_cast<double>(row[k]) - mx) / denom);
                dg[k] += g * (p - (k == labs[n] ? 1.f : 0.f));
            }
        }
    });
}

}  // namespace textpainter::nn
