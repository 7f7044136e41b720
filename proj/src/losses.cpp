#include "textpainter/losses.hpp"

#include <cmath>

namespace textpainter {

using namespace nn;

LossConfig LossConfig::from_config(const KVConfig& cfg) {
    LossConfig lc;
    lc.r = cfg.get_double("loss.r", lc.r);
    lc.lambda2 = cfg.get_double("loss.lambda2", lc.lambda2);
    lc.adv_variant = cfg.get_str("loss.adv_variant", lc.adv_variant);
    lc.validate();
    return lc;
}

void LossConfig::validate() const {
    check(r > 0.0 && r <= 1.0, "loss_config", "loss.r must be in (0, 1]");
    check(lambda2 >= 0.0, "loss_config", "loss.lambda2 must be >= 0");
    check(adv_variant == "nonsat", "loss_config",
          "unknown loss.adv_variant (only nonsat is implemented): " + adv_variant);
}

Schedule schedule(int n, double r, double lambda2) {
    check(n >= 0, "loss_schedule", "epoch index must be >= 0");
    check(r > 0.0 && r <= 1.0, "loss_schedule", "rate must be in (0, 1]");
    Schedule s;
    s.lambda1 = std::pow(r, n);
    s.lambda2 = lambda2;
    s.lambda3 = 1.0 - s.lambda1;
    return s;
}

Var rec_loss(const Var& fake, const Var& gt,
             const std::vector<std::pair<int, int>>& true_sizes,
             const std::vector<std::pair<int, int>>& offsets) {
    check(fake.shape() == gt.shape(), "loss_shape", "rec_loss shapes disagree");
    check(fake.shape().size() == 4 && fake.dim(1) == 3, "loss_shape",
          "rec_loss needs (N,3,H,W)");
    const int N = fake.dim(0), C = fake.dim(1), H = fake.dim(2), W = fake.dim(3);
    check(true_sizes.size() == static_cast<size_t>(N) && offsets.size() == true_sizes.size(),
          "loss_shape", "rec_loss needs one bbox per item");
    TensorData wmask(fake.shape());
    for (int i = 0; i < N; ++i) {
        auto [h, w] = true_sizes[static_cast<size_t>(i)];
        auto [oy, ox] = offsets[static_cast<size_t>(i)];
        check(h > 0 && w > 0 && oy >= 0 && ox >= 0 && oy + h <= H && ox + w <= W,
              "loss_shape", "true bbox outside the padded crop");
        float coef = 1.f / (static_cast<float>(N) * C * h * w);
        for (int c = 0; c < C; ++c)
            for (int y = oy; y < oy + h; ++y)
                for (int x = ox; x < ox + w; ++x)
                    wmask.v[((static_cast<size_t>(i) * C + c) * H + y) * W + x] = coef;
    }
    return sum_all(mul(abs_(sub(fake, gt)), Var{std::move(wmask)}));
}

ToyFeatureExtractor::ToyFeatureExtractor(uint64_t seed) {
    ParamList ps;  // local: the extractor is frozen, nothing registers for training
    Rng rng(seed);
    c1_ = Conv2d(ps, "phi.c1", 3, 16, 3, 2, 1, rng);
    c2_ = Conv2d(ps, "phi.c2", 16, 32, 3, 2, 1, rng);
    for (auto& p : ps.items()) p.var.impl()->requires_grad = false;
}

std::vector<Var> ToyFeatureExtractor::features(const Var& x) const {
    Var f1 = leaky_relu(c1_.forward(x));
    Var f2 = leaky_relu(c2_.forward(f1));
    return {f1, f2};
}

Var perceptual_loss(const Var& fake, const Var& gt, const FeatureExtractor& phi) {
    check(fake.shape() == gt.shape(), "loss_shape", "perceptual_loss shapes disagree");
    auto fa = phi.features(fake);
    auto fb = phi.features(gt);
    check(fa.size() == fb.size() && !fa.empty(), "loss_shape",
          "feature extractor returned mismatched layer lists");
    Var total;
    for (size_t i = 0; i < fa.size(); ++i) {
        // batched mean == per-item 1/M_i normalization averaged over items
        Var term = l1_mean(fa[i], fb[i]);
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

Var adv_g_loss(const Var& fake_scores) { return mean_softplus(fake_scores, true); }

Var adv_d_loss(const Var& fake_scores, const Var& real_scores) {
    return add(mean_softplus(fake_scores, false), mean_softplus(real_scores, true));
}

AdvPair adversarial_losses(const TextPainterModel& model, const Var& fake, const Var& real,
                           const Var& local_bg) {
    AdvPair out;
    out.g = adv_g_loss(model.discriminate(fake, local_bg));
    out.d = adv_d_loss(model.discriminate(detach(fake), local_bg),
                       model.discriminate(real, local_bg));
    return out;
}

Var total_generator_loss(const Var& rec, const Var& per, const Var& adv_g, const Schedule& s) {
    Var total = mul_scalar(rec, static_cast<float>(s.lambda1));
    total = add(total, mul_scalar(per, static_cast<float>(s.lambda2)));
    return add(total, mul_scalar(adv_g, static_cast<float>(s.lambda3)));
}

}  // namespace textpainter
