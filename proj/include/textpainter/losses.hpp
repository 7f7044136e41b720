#pragma once

#include <utility>
#include <vector>

#include "textpainter/config.hpp"
#include "textpainter/model.hpp"
#include "textpainter/nn/autodiff.hpp"

namespace textpainter {

// Non-saturating logistic GAN is the one implemented adversarial variant;
// the objective printed in the source material under-determines the sign.
struct LossConfig {
    double r = 0.85;
    double lambda2 = 1.0;
    std::string adv_variant = "nonsat";

    static LossConfig from_config(const KVConfig& cfg);
    void validate() const;
};

struct Schedule {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 0.0;
};

// lambda1 = r^n over epochs, lambda3 = 1 - lambda1 exactly.
Schedule schedule(int n, double r = 0.85, double lambda2 = 1.0);

struct LossReport {
    double rec = 0, per = 0, adv_g = 0, adv_d = 0;
    double lambda1 = 1, lambda2 = 1, lambda3 = 0;
    double total_g = 0;
};

// L1 restricted to each item's true bbox, normalized per item by h*w, then
// averaged over channels and batch.
nn::Var rec_loss(const nn::Var& fake, const nn::Var& gt,
                 const std::vector<std::pair<int, int>>& true_sizes,
                 const std::vector<std::pair<int, int>>& offsets);

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<nn::Var> features(const nn::Var& x) const = 0;
};

// Two frozen random conv layers; a valid perceptual proxy at desk scale and
// free of heavyweight pretrained weights. Deterministic in the seed.
class ToyFeatureExtractor : public FeatureExtractor {
public:
    explicit ToyFeatureExtractor(uint64_t seed);
    std::vector<nn::Var> features(const nn::Var& x) const override;

private:
    nn::Conv2d c1_, c2_;
};

// Sum over layers of L1 / (H_i * W_i * C_i), averaged over the batch.
nn::Var perceptual_loss(const nn::Var& fake, const nn::Var& gt, const FeatureExtractor& phi);

nn::Var adv_g_loss(const nn::Var& fake_scores);                          // mean softplus(-s)
nn::Var adv_d_loss(const nn::Var& fake_scores, const nn::Var& real_scores);

// Convenience wrapper running the discriminator on live fake, detached fake,
// and real; generator gradients never flow through the .d side.
struct AdvPair {
    nn::Var g, d;
};
AdvPair adversarial_losses(const TextPainterModel& model, const nn::Var& fake,
                           const nn::Var& real, const nn::Var& local_bg);

nn::Var total_generator_loss(const nn::Var& rec, const nn::Var& per, const nn::Var& adv_g,
                             const Schedule& s);

}  // namespace textpainter
