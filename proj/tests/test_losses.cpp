#include <doctest.h>

#include <cmath>
#include <functional>

#include "textpainter/losses.hpp"

using namespace textpainter;
using nn::NoGrad;
using nn::Shape;
using nn::TensorData;
using nn::Var;

namespace {

struct IdentityExtractor : FeatureExtractor {
    std::vector<Var> features(const Var& x) const override { return {x}; }
};

double eval_with(Var& param, size_t idx, float v, const std::function<Var()>& f) {
    NoGrad ng;
    float keep = param.values()[idx];
    param.values_mut()[idx] = v;
    double out = f().item();
    param.values_mut()[idx] = keep;
    return out;
}

// central-difference check of d f / d param against the recorded grads;
// the step stays small so lrelu/abs kink crossings cannot dominate
void fd_check(Var param, const std::function<Var()>& f, double tol = 1e-3, float h = 1e-3f) {
    Var y = f();
    param.zero_grad();
    backward(y);
    for (size_t i = 0; i < param.values().size(); ++i) {
        double plus = eval_with(param, i, param.values()[i] + h, f);
        double minus = eval_with(param, i, param.values()[i] - h, f);
        double fd = (plus - minus) / (2.0 * h);
        double an = param.grad()[i];
        CAPTURE(i);
        CHECK(std::abs(an - fd) <= tol * std::max({1.0, std::abs(an), std::abs(fd)}));
    }
}

}  // namespace

TEST_CASE("rec_loss identity, constant offset, and brute-force agreement") {
    Rng r(3);
    Var gt = Var::randn({2, 3, 8, 12}, r, 0.5f);
    std::vector<std::pair<int, int>> sizes = {{5, 7}, {8, 12}};
    std::vector<std::pair<int, int>> offs = {{2, 3}, {0, 0}};

    CHECK(rec_loss(gt, gt, sizes, offs).item() == 0.f);

    Var shifted{TensorData(Shape{2, 3, 8, 12}, gt.values())};
    for (int i = 0; i < 2; ++i) {
        auto [h, w] = sizes[static_cast<size_t>(i)];
        auto [oy, ox] = offs[static_cast<size_t>(i)];
        for (int c = 0; c < 3; ++c)
            for (int y = oy; y < oy + h; ++y)
                for (int x = ox; x < ox + w; ++x)
                    shifted.values_mut()[((static_cast<size_t>(i) * 3 + c) * 8 + y) * 12 + x] +=
                        0.5f;
    }
    CHECK(rec_loss(shifted, gt, sizes, offs).item() == doctest::Approx(0.5).epsilon(1e-6));

    Var fake = Var::randn({2, 3, 8, 12}, r, 0.5f);
    double want = 0;
    for (int i = 0; i < 2; ++i) {
        auto [h, w] = sizes[static_cast<size_t>(i)];
        auto [oy, ox] = offs[static_cast<size_t>(i)];
        double item = 0;
        for (int c = 0; c < 3; ++c)
            for (int y = oy; y < oy + h; ++y)
                for (int x = ox; x < ox + w; ++x) {
                    size_t at = ((static_cast<size_t>(i) * 3 + c) * 8 + y) * 12 + x;
                    item += std::abs(static_cast<double>(fake.values()[at]) - gt.values()[at]);
                }
        want += item / (h * w);
    }
    want /= 2 * 3;
    CHECK(rec_loss(fake, gt, sizes, offs).item() == doctest::Approx(want).epsilon(1e-7));

    CHECK(rec_loss(fake, gt, sizes, offs).item() ==
          rec_loss(gt, fake, sizes, offs).item());  // symmetry

    CHECK_THROWS_AS(rec_loss(fake, gt, {{5, 7}}, {{0, 0}}), Error);
    CHECK_THROWS_AS(rec_loss(fake, gt, {{9, 7}, {1, 1}}, {{0, 7}, {0, 0}}), Error);
}

TEST_CASE("rec_loss satisfies the triangle inequality on random triples") {
    Rng r(5);
    std::vector<std::pair<int, int>> sizes = {{6, 9}};
    std::vector<std::pair<int, int>> offs = {{1, 2}};
    for (int t = 0; t < 5; ++t) {
        Var a = Var::randn({1, 3, 8, 12}, r);
        Var b = Var::randn({1, 3, 8, 12}, r);
        Var c = Var::randn({1, 3, 8, 12}, r);
        double ac = rec_loss(a, c, sizes, offs).item();
        double ab = rec_loss(a, b, sizes, offs).item();
        double bc = rec_loss(b, c, sizes, offs).item();
        CHECK(ac <= ab + bc + 1e-6);
    }
}

TEST_CASE("perceptual_loss reduces to plain L1 under an identity extractor") {
    Rng r(7);
    Var a = Var::randn({2, 3, 8, 8}, r);
    Var b = Var::randn({2, 3, 8, 8}, r);
    IdentityExtractor id;
    CHECK(perceptual_loss(a, a, id).item() == 0.f);
    CHECK(perceptual_loss(a, b, id).item() ==
          doctest::Approx(l1_mean(a, b).item()).epsilon(1e-7));
    CHECK(perceptual_loss(a, b, id).item() == perceptual_loss(b, a, id).item());
}

TEST_CASE("perceptual_loss matches layerwise brute force with the toy extractor") {
    Rng r(9);
    Var a = Var::randn({2, 3, 16, 16}, r);
    Var b = Var::randn({2, 3, 16, 16}, r);
    ToyFeatureExtractor phi(42);
    NoGrad ng;
    auto fa = phi.features(a);
    auto fb = phi.features(b);
    REQUIRE(fa.size() == 2);
    double want = 0;
    for (size_t i = 0; i < fa.size(); ++i) {
        double s = 0;
        for (size_t j = 0; j < fa[i].values().size(); ++j)
            s += std::abs(static_cast<double>(fa[i].values()[j]) - fb[i].values()[j]);
        want += s / fa[i].numel();  // 1/(batch * C_i * H_i * W_i)
    }
    CHECK(perceptual_loss(a, b, phi).item() == doctest::Approx(want).epsilon(1e-6));
    CHECK(perceptual_loss(a, a, phi).item() == 0.f);
}

TEST_CASE("toy extractor is frozen and deterministic in its seed") {
    ToyFeatureExtractor p1(7), p2(7), p3(8);
    Rng r(11);
    Var x = Var::randn({1, 3, 8, 8}, r);
    {
        NoGrad ng;
        CHECK(p1.features(x)[1].values() == p2.features(x)[1].values());
        CHECK(p1.features(x)[1].values() != p3.features(x)[1].values());
    }

    // gradient flows to the input but the weights stay untrainable
    Var y = Var::randn({1, 3, 8, 8}, r, 1.f, true);
    backward(perceptual_loss(y, x, p1));
    CHECK(y.grad().size() == y.values().size());
}

TEST_CASE("adversarial closed forms at zero scores") {
    Var zero_scores = Var::zeros({4});
    CHECK(adv_g_loss(zero_scores).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    CHECK(adv_d_loss(zero_scores, zero_scores).item() ==
          doctest::Approx(2 * std::log(2.0)).epsilon(1e-6));

    // a zeroed discriminator produces exactly these values through the model
    GenConfig cfg;
    cfg.base_channels = 8;
    cfg.style_dim = 16;
    cfg.text_dim = 8;
    cfg.d_k = 4;
    cfg.enc_width = 4;
    cfg.enc_depths = {1, 1, 1, 1};
    cfg.disc_width = 4;
    TextPainterModel m(cfg, 1);
    for (const auto& p : m.d_params().items()) {
        Var v = p.var;
        std::fill(v.values_mut().begin(), v.values_mut().end(), 0.f);
    }
    Rng r(13);
    Var fake = Var::randn({2, 3, 32, 32}, r);
    Var real = Var::randn({2, 3, 32, 32}, r);
    Var lb = Var::randn({2, 3, 32, 32}, r);
    AdvPair pair = adversarial_losses(m, fake, real, lb);
    CHECK(pair.g.item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    CHECK(pair.d.item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("adv_g decreases monotonically in the score and matches softplus'") {
    for (float s = -2.f; s < 2.f; s += 0.5f) {
        double lo = adv_g_loss(Var::from_vector({1}, {s})).item();
        double hi = adv_g_loss(Var::from_vector({1}, {s + 0.5f})).item();
        CHECK(hi < lo);
    }
    Var scores = Var::from_vector({3}, {-1.3f, 0.2f, 2.1f}, true);
    fd_check(scores, [&] { return adv_g_loss(scores); }, 1e-4);
}

TEST_CASE("generator gradients never flow through the d side") {
    GenConfig cfg;
    cfg.base_channels = 8;
    cfg.style_dim = 16;
    cfg.text_dim = 8;
    cfg.d_k = 4;
    cfg.enc_width = 4;
    cfg.enc_depths = {1, 1, 1, 1};
    cfg.disc_width = 4;
    TextPainterModel m(cfg, 2);
    Rng r(17);
    Var fake_src = Var::randn({1, 3, 32, 32}, r, 1.f, true);
    Var fake = tanh_(fake_src);  // stands in for the generator output
    Var real = Var::randn({1, 3, 32, 32}, r);
    Var lb = Var::randn({1, 3, 32, 32}, r);
    AdvPair pair = adversarial_losses(m, fake, real, lb);
    backward(pair.d);
    CHECK(fake_src.grad().empty());  // detached: no gradient reached the source
    backward(pair.g);
    double g = 0;
    for (float v : fake_src.grad()) g += std::abs(v);
    CHECK(g > 0.0);
}

TEST_CASE("schedule produces exact powers and exact complements") {
    Schedule s0 = schedule(0);
    CHECK(s0.lambda1 == 1.0);
    CHECK(s0.lambda3 == 0.0);
    Schedule s1 = schedule(1);
    CHECK(s1.lambda1 == doctest::Approx(0.85).epsilon(1e-15));
    CHECK(s1.lambda3 == doctest::Approx(0.15).epsilon(1e-12));

    double acc = 1.0;
    for (int n = 0; n <= 40; ++n) {
        Schedule s = schedule(n, 0.85);
        CHECK(s.lambda1 == doctest::Approx(acc).epsilon(1e-12));
        CHECK(s.lambda1 + s.lambda3 == 1.0);  // exact complement
        if (n > 0) CHECK(s.lambda1 < schedule(n - 1, 0.85).lambda1);
        CHECK((s.lambda1 > s.lambda3) == (n <= 4));
        acc *= 0.85;
    }
    CHECK(schedule(10).lambda1 == doctest::Approx(0.19687).epsilon(1e-4));
    CHECK_THROWS_AS(schedule(-1), Error);
    CHECK_THROWS_AS(schedule(1, 0.0), Error);
}

TEST_CASE("total generator loss is the exact weighted sum") {
    Var rec = Var::scalar(1.f);
    Var per = Var::scalar(1.f);
    Var adv = Var::scalar(1.f);
    CHECK(total_generator_loss(rec, per, adv, schedule(0)).item() ==
          doctest::Approx(2.0).epsilon(1e-7));
    CHECK(total_generator_loss(Var::scalar(2.f), Var::scalar(0.f), Var::scalar(4.f),
                               schedule(1))
              .item() == doctest::Approx(2.3).epsilon(1e-6));
    CHECK(total_generator_loss(Var::scalar(0.f), Var::scalar(0.f), Var::scalar(0.f),
                               schedule(3))
              .item() == 0.f);
}

TEST_CASE("loss gradients match finite differences through a tiny network") {
    Rng r(23);
    Var w = Var::randn({3, 3, 1, 1}, r, 0.5f, true);  // 9-parameter 1x1 conv
    Var x = Var::randn({1, 3, 6, 8}, r);
    Var gt = Var::randn({1, 3, 6, 8}, r);
    std::vector<std::pair<int, int>> sizes = {{4, 5}};
    std::vector<std::pair<int, int>> offs = {{1, 2}};
    fd_check(w, [&] { return rec_loss(conv2d(x, w, Var{}, 1, 0), gt, sizes, offs); });

    IdentityExtractor id;
    fd_check(w, [&] { return perceptual_loss(conv2d(x, w, Var{}, 1, 0), gt, id); });

    ToyFeatureExtractor phi(31);
    fd_check(w, [&] { return perceptual_loss(conv2d(x, w, Var{}, 1, 0), gt, phi); });
}

TEST_CASE("loss config parses and validates") {
    KVConfig kv = KVConfig::from_string("loss.r=0.9\nloss.lambda2=0.5\n");
    LossConfig lc = LossConfig::from_config(kv);
    CHECK(lc.r == doctest::Approx(0.9));
    CHECK(lc.lambda2 == doctest::Approx(0.5));
    CHECK(lc.adv_variant == "nonsat");

    CHECK_THROWS_AS(LossConfig::from_config(KVConfig::from_string("loss.r=1.5\n")), Error);
    CHECK_THROWS_AS(
        LossConfig::from_config(KVConfig::from_string("loss.adv_variant=wgan\n")), Error);
}
