#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "textpainter/nn/autodiff.hpp"

using namespace textpainter;
using namespace textpainter::nn;

namespace {

float eval_scalar(const std::function<Var()>& f) {
    NoGrad ng;
    return f().item();
}

// Central-difference check of d f / d x for every listed leaf. f must rebuild
// its graph from the leaves on each call; leaf data is perturbed in place.
void gradcheck(const std::vector<Var>& inputs, const std::function<Var()>& f, float eps = 1e-2f,
               float tol = 2e-2f, size_t max_checks = 48) {
    for (auto in : inputs) in.zero_grad();
    Var y = f();
    REQUIRE(y.numel() == 1);
    backward(y);
    Rng pick(1234);
    for (size_t ii = 0; ii < inputs.size(); ++ii) {
        Var x = inputs[ii];
        REQUIRE(x.grad().size() == static_cast<size_t>(x.numel()));
        std::vector<size_t> idx(static_cast<size_t>(x.numel()));
        std::iota(idx.begin(), idx.end(), size_t{0});
        if (idx.size() > max_checks) {
            pick.shuffle(idx);
            idx.resize(max_checks);
        }
        for (size_t j : idx) {
            float orig = x.values()[j];
            x.values_mut()[j] = orig + eps;
            float yp = eval_scalar(f);
            x.values_mut()[j] = orig - eps;
            float ym = eval_scalar(f);
            x.values_mut()[j] = orig;
            float fd = (yp - ym) / (2.f * eps);
            float an = x.grad()[j];
            CAPTURE(ii);
            CAPTURE(j);
            CAPTURE(an);
            CAPTURE(fd);
            CHECK(std::fabs(an - fd) <= tol * std::max({1.f, std::fabs(an), std::fabs(fd)}));
        }
    }
}

// Reduces a tensor to a scalar with fixed random weights so every element
// influences the objective.
Var weighted_sum(const Var& y, uint64_t seed = 99) {
    Rng r(seed);
    Var c = Var::randn(y.shape(), r);
    return sum_all(mul(y, c));
}

Var offset_randn(Shape s, Rng& rng, float lo = 0.3f, float hi = 1.2f) {
    // magnitudes bounded away from zero, for kinked ops
    TensorData d(s);
    for (auto& v : d.v) {
        double m = rng.uniform(lo, hi);
        v = static_cast<float>(rng.bernoulli(0.5) ? m : -m);
    }
    return Var(std::move(d), true);
}

}  // namespace

TEST_CASE("gradcheck elementwise ops") {
    Rng r(7);
    Var a = Var::randn({2, 3, 4}, r, 1.f, true);
    Var b = Var::randn({2, 3, 4}, r, 1.f, true);
    gradcheck({a, b}, [&] { return weighted_sum(add(a, b)); });
    gradcheck({a, b}, [&] { return weighted_sum(sub(a, b)); });
    gradcheck({a, b}, [&] { return weighted_sum(mul(a, b)); });
    gradcheck({a}, [&] { return weighted_sum(mul_scalar(add_scalar(a, 0.5f), -1.7f)); });
    gradcheck({a}, [&] { return weighted_sum(neg(a)); });
    gradcheck({a}, [&] { return weighted_sum(tanh_(a)); });
    gradcheck({a}, [&] { return weighted_sum(softplus_(a)); });
    gradcheck({a}, [&] { return weighted_sum(square(a)); });

    Var k = offset_randn({3, 5}, r);
    gradcheck({k}, [&] { return weighted_sum(leaky_relu(k)); });
    gradcheck({k}, [&] { return weighted_sum(abs_(k)); });

    Rng rp(8);
    Var p = Var(TensorData({3, 4}), true);
    for (auto& v : p.values_mut()) v = static_cast<float>(rp.uniform(0.5, 2.0));
    gradcheck({p}, [&] { return weighted_sum(sqrt_(p)); });
    gradcheck({p}, [&] { return weighted_sum(rsqrt_(p, 1e-8f)); });
}

TEST_CASE("gradcheck broadcast and reduce ops") {
    Rng r(17);
    Var x = Var::randn({2, 3, 4, 5}, r, 1.f, true);
    Var bias = Var::randn({3}, r, 1.f, true);
    gradcheck({x, bias}, [&] { return weighted_sum(add_bias_nchw(x, bias)); });

    Var m = Var::randn({4, 6}, r, 1.f, true);
    Var rv = Var::randn({6}, r, 1.f, true);
    gradcheck({m, rv}, [&] { return weighted_sum(add_rowvec(m, rv)); });

    Var big = Var::randn({2, 3, 4}, r, 1.f, true);
    Var small = Var::randn({2, 3}, r, 1.f, true);
    gradcheck({big, small}, [&] { return weighted_sum(mul_bcast_trailing(big, small)); });

    Var w = Var::randn({3, 2, 3, 3}, r, 1.f, true);
    Var s = Var::randn({2, 2}, r, 1.f, true);
    gradcheck({w, s}, [&] { return weighted_sum(weight_modulate(w, s)); });

    gradcheck({x}, [&] { return weighted_sum(sum_last(x, 2)); });
    gradcheck({x}, [&] { return mean_all(x); });
    gradcheck({x}, [&] { return weighted_sum(reshape(x, {6, 20})); });
}

TEST_CASE("gradcheck matmul family") {
    Rng r(27);
    Var a = Var::randn({3, 4}, r, 1.f, true);
    Var b = Var::randn({4, 5}, r, 1.f, true);
    Var bias = Var::randn({5}, r, 1.f, true);
    gradcheck({a, b}, [&] { return weighted_sum(matmul(a, b)); });
    gradcheck({a, b, bias}, [&] { return weighted_sum(linear(a, b, bias)); });

    Var p = Var::randn({2, 3, 4}, r, 1.f, true);
    Var q = Var::randn({2, 4, 5}, r, 1.f, true);
    gradcheck({p, q}, [&] { return weighted_sum(bmatmul(p, q)); });

    Var t = Var::randn({2, 5, 4}, r, 1.f, true);
    gradcheck({p, t}, [&] { return weighted_sum(bmatmul_nt(p, t)); });
}

TEST_CASE("matmul value against hand computation") {
    Var a = Var::from_vector({2, 2}, {1, 2, 3, 4});
    Var b = Var::from_vector({2, 2}, {5, 6, 7, 8});
    Var y = matmul(a, b);
    CHECK(y.values() == std::vector<float>{19, 22, 43, 50});

    Var bt = Var::from_vector({1, 2, 2}, {5, 7, 6, 8});  // b transposed, batched
    Var y2 = bmatmul_nt(reshape(a, {1, 2, 2}), bt);
    CHECK(y2.values()[0] == doctest::Approx(19));
    CHECK(y2.values()[3] == doctest::Approx(50));
}

namespace {

// Naive convolution reference, zero padding.
std::vector<float> conv_ref(const std::vector<float>& x, int N, int Cin, int H, int W,
                            const std::vector<float>& w, int Cout, int kh, int kw,
                            const std::vector<float>& b, int stride, int pad, bool per_sample) {
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    std::vector<float> y(static_cast<size_t>(N) * Cout * Ho * Wo, 0.f);
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < Cout; ++o)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    double acc = b.empty() ? 0.0 : b[static_cast<size_t>(o)];
                    for (int i = 0; i < Cin; ++i)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                int iy = oy * stride + ky - pad;
                                int ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                size_t xi =
                                    ((static_cast<size_t>(n) * Cin + i) * H + iy) * W + ix;
                                size_t wi =
                                    ((static_cast<size_t>(per_sample ? n : 0) * Cout + o) * Cin +
                                     i) *
                                        kh * kw +
                                    static_cast<size_t>(ky) * kw + kx;
                                acc += static_cast<double>(x[xi]) * w[wi];
                            }
                    y[((static_cast<size_t>(n) * Cout + o) * Ho + oy) * Wo + ox] =
                        static_cast<float>(acc);
                }
    return y;
}

}  // namespace

TEST_CASE("conv2d forward matches naive reference") {
    Rng r(31);
    struct Case {
        int N, Cin, H, W, Cout, k, stride, pad;
    };
    for (Case c : {Case{2, 3, 7, 6, 4, 3, 1, 1}, Case{1, 2, 8, 8, 3, 3, 2, 1},
                   Case{2, 4, 5, 5, 2, 1, 1, 0}, Case{1, 1, 6, 9, 2, 5, 2, 2}}) {
        Var x = Var::randn({c.N, c.Cin, c.H, c.W}, r);
        Var w = Var::randn({c.Cout, c.Cin, c.k, c.k}, r);
        Var b = Var::randn({c.Cout}, r);
        Var y = conv2d(x, w, b, c.stride, c.pad);
        auto ref = conv_ref(x.values(), c.N, c.Cin, c.H, c.W, w.values(), c.Cout, c.k, c.k,
                            b.values(), c.stride, c.pad, false);
        REQUIRE(y.numel() == static_cast<int64_t>(ref.size()));
        for (size_t i = 0; i < ref.size(); ++i)
            CHECK(y.values()[i] == doctest::Approx(ref[i]).epsilon(1e-4));
    }
}

TEST_CASE("conv2d_per_sample forward matches naive reference") {
    Rng r(37);
    Var x = Var::randn({2, 3, 6, 5}, r);
    Var w = Var::randn({2, 4, 3, 3, 3}, r);
    Var y = conv2d_per_sample(x, w, Var(), 1, 1);
    auto ref = conv_ref(x.values(), 2, 3, 6, 5, w.values(), 4, 3, 3, {}, 1, 1, true);
    REQUIRE(y.numel() == static_cast<int64_t>(ref.size()));
    for (size_t i = 0; i < ref.size(); ++i)
        CHECK(y.values()[i] == doctest::Approx(ref[i]).epsilon(1e-4));
}

TEST_CASE("gradcheck convolutions") {
    Rng r(41);
    Var x = Var::randn({2, 2, 5, 6}, r, 0.7f, true);
    Var w = Var::randn({3, 2, 3, 3}, r, 0.5f, true);
    Var b = Var::randn({3}, r, 0.5f, true);
    gradcheck({x, w, b}, [&] { return weighted_sum(conv2d(x, w, b, 1, 1)); });
    gradcheck({x, w, b}, [&] { return weighted_sum(conv2d(x, w, b, 2, 1)); });

    Var w1 = Var::randn({3, 2, 1, 1}, r, 0.5f, true);
    gradcheck({x, w1}, [&] { return weighted_sum(conv2d(x, w1, Var(), 1, 0)); });

    Var wp = Var::randn({2, 3, 2, 3, 3}, r, 0.5f, true);
    gradcheck({x, wp}, [&] { return weighted_sum(conv2d_per_sample(x, wp, Var(), 1, 1)); });
}

TEST_CASE("blur3 preserves mass interior and is correct on a delta") {
    Var x = Var::zeros({1, 1, 5, 5});
    x.values_mut()[2 * 5 + 2] = 16.f;
    Var y = blur3(x);
    // separable [1,2,1]/4 x [1,2,1]/4 on 16 at the center
    float expect[3][3] = {{1, 2, 1}, {2, 4, 2}, {1, 2, 1}};
    for (int dy = 0; dy < 3; ++dy)
        for (int dx = 0; dx < 3; ++dx)
            CHECK(y.values()[(1 + dy) * 5 + 1 + dx] == doctest::Approx(expect[dy][dx]));
    double total = 0;
    for (float v : y.values()) total += v;
    CHECK(total == doctest::Approx(16.0));
}

TEST_CASE("gradcheck spatial ops") {
    Rng r(43);
    Var x = Var::randn({2, 2, 4, 6}, r, 1.f, true);
    gradcheck({x}, [&] { return weighted_sum(blur3(x)); });
    gradcheck({x}, [&] { return weighted_sum(upsample_nearest2(x)); });
    gradcheck({x}, [&] { return weighted_sum(avg_pool(x, 2)); });
    gradcheck({x}, [&] { return weighted_sum(global_avg_pool(x)); });
    gradcheck({x}, [&] { return weighted_sum(crop_hw(x, 1, 2, 2, 3)); });
    gradcheck({x}, [&] { return weighted_sum(nchw_to_tokens(x)); });

    Var a = Var::randn({2, 3, 4, 6}, r, 1.f, true);
    Var b = Var::randn({2, 1, 4, 6}, r, 1.f, true);
    gradcheck({a, b, x}, [&] { return weighted_sum(concat_channels({a, b, x})); });

    Var t = Var::randn({2, 12, 5}, r, 1.f, true);
    gradcheck({t}, [&] { return weighted_sum(tokens_to_nchw(t, 3, 4)); });

    Var sb = Var::randn({3, 2, 4}, r, 1.f, true);
    gradcheck({sb}, [&] { return weighted_sum(slice_batch(sb, 1)); });
}

TEST_CASE("slice_batch values and bounds") {
    Var x = Var::from_vector({2, 3}, {1, 2, 3, 4, 5, 6});
    Var s = slice_batch(x, 1);
    CHECK(s.shape() == Shape{1, 3});
    CHECK(s.values() == std::vector<float>{4, 5, 6});
    CHECK_THROWS_AS(slice_batch(x, 2), Error);
    CHECK_THROWS_AS(slice_batch(x, -1), Error);
}

TEST_CASE("upsample_nearest2 values") {
    Var x = Var::from_vector({1, 1, 2, 2}, {1, 2, 3, 4});
    Var y = upsample_nearest2(x);
    CHECK(y.values() == std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
}

TEST_CASE("token layout round trip") {
    Rng r(47);
    Var x = Var::randn({2, 3, 2, 4}, r);
    Var t = nchw_to_tokens(x);
    REQUIRE(t.shape() == Shape{2, 8, 3});
    // token index is row-major over (y, x); channel is the fastest axis
    CHECK(t.values()[0 * 3 + 1] == x.values()[1 * 8 + 0]);
    Var back = tokens_to_nchw(t, 2, 4);
    CHECK(back.values() == x.values());
}

TEST_CASE("softmax_masked rows sum to one and mask kills entries") {
    Rng r(53);
    Var x = Var::randn({2, 3, 5}, r);
    std::vector<uint8_t> mask = {1, 1, 0, 1, 0, 1, 1, 1, 1, 1};
    Var y = softmax_masked(x, mask);
    for (int n = 0; n < 2; ++n)
        for (int p = 0; p < 3; ++p) {
            double s = 0;
            for (int t = 0; t < 5; ++t) s += y.values()[(n * 3 + p) * 5 + t];
            CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
        }
    for (int p = 0; p < 3; ++p) {
        CHECK(y.values()[(0 * 3 + p) * 5 + 2] == 0.f);
        CHECK(y.values()[(0 * 3 + p) * 5 + 4] == 0.f);
    }
}

TEST_CASE("gradcheck softmax_masked") {
    Rng r(59);
    Var x = Var::randn({2, 2, 4}, r, 1.f, true);
    std::vector<uint8_t> mask = {1, 1, 1, 0, 1, 1, 1, 1};
    gradcheck({x}, [&] { return weighted_sum(softmax_masked(x, mask)); }, 5e-3f);
}

TEST_CASE("gradcheck loss reductions") {
    Rng r(61);
    Var a = offset_randn({2, 3, 4}, r);
    Var b = Var::zeros({2, 3, 4});  // |a - 0| stays away from the kink
    Var bg = Var::zeros({2, 3, 4}, true);
    gradcheck({a}, [&] { return l1_mean(a, b); }, 1e-3f);
    gradcheck({a, bg}, [&] { return l1_mean(a, bg); }, 1e-3f);

    Var x = Var::randn({3, 4}, r, 1.f, true);
    gradcheck({x}, [&] { return mean_softplus(x, false); }, 1e-3f);
    gradcheck({x}, [&] { return mean_softplus(x, true); }, 1e-3f);

    Var logits = Var::randn({3, 5}, r, 1.f, true);
    std::vector<int> labels = {0, 3, 4};
    gradcheck({logits}, [&] { return softmax_xent(logits, labels); }, 1e-3f);
}

TEST_CASE("loss reduction values") {
    Var a = Var::from_vector({2, 2}, {1, -2, 3, 0});
    Var b = Var::from_vector({2, 2}, {0, 0, 0, 0});
    CHECK(l1_mean(a, b).item() == doctest::Approx(1.5f));

    Var z = Var::zeros({1, 4});
    CHECK(mean_softplus(z, false).item() == doctest::Approx(std::log(2.f)));
    CHECK(mean_softplus(z, true).item() == doctest::Approx(std::log(2.f)));

    Var logits = Var::from_vector({1, 2}, {0.f, 0.f});
    CHECK(softmax_xent(logits, {0}).item() == doctest::Approx(std::log(2.f)));
}

TEST_CASE("shared subgraph accumulates both paths") {
    Var x = Var::from_vector({1}, {3.f}, true);
    Var sq = square(x);           // 9
    Var y = add(sq, sq);          // 18, two children of sq
    backward(y);
    REQUIRE(x.grad().size() == 1);
    CHECK(x.grad()[0] == doctest::Approx(12.f));  // 2 * dx(x^2) = 2 * 2x
}

TEST_CASE("grad accumulates across backward calls until zeroed") {
    Var x = Var::from_vector({1}, {2.f}, true);
    backward(square(x));
    backward(square(x));
    CHECK(x.grad()[0] == doctest::Approx(8.f));
    x.zero_grad();
    backward(square(x));
    CHECK(x.grad()[0] == doctest::Approx(4.f));
}

TEST_CASE("NoGrad blocks recording and detach blocks flow") {
    Var x = Var::from_vector({1}, {2.f}, true);
    {
        NoGrad ng;
        Var y = square(x);
        CHECK_FALSE(y.requires_grad());
    }
    Var d = detach(square(x));
    CHECK_FALSE(d.requires_grad());
    Var z = mul(d, x);  // only the direct x path carries gradient
    backward(z);
    CHECK(x.grad()[0] == doctest::Approx(4.f));  // d = 4 constant
}

TEST_CASE("backward on non-scalar throws") {
    Var x = Var::from_vector({2}, {1.f, 2.f}, true);
    CHECK_THROWS_AS(backward(add(x, x)), Error);
}

TEST_CASE("shape mismatches throw") {
    Var a = Var::zeros({2, 3});
    Var b = Var::zeros({3, 2});
    CHECK_THROWS_AS((void)add(a, b), Error);
    CHECK_THROWS_AS((void)matmul(a, a), Error);
    CHECK_THROWS_AS((void)reshape(a, {4, 2}), Error);
    CHECK_THROWS_AS((void)crop_hw(Var::zeros({1, 1, 4, 4}), 2, 2, 3, 3), Error);
}
