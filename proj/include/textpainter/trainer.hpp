#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "textpainter/checkpoint.hpp"
#include "textpainter/corpus.hpp"
#include "textpainter/losses.hpp"
#include "textpainter/model.hpp"
#include "textpainter/textsem.hpp"

namespace textpainter {

struct TrainConfig {
    int epochs = 5;
    int batch_size = 4;
    double lr_g = 2e-4;
    double lr_d = 2e-4;
    uint64_t seed = 1;
    int checkpoint_interval = 1;  // epochs between saves; 0 = final save only
    int align = 32;
    uint64_t perceptual_seed = 77;
    LossConfig loss;

    static TrainConfig from_config(const KVConfig& cfg);
    void validate() const;
};

// Owns the model, both optimizers, the frozen perceptual extractor, and the
// data order. One D step then one G step per batch; the schedule is fixed at
// the start of each epoch.
class Trainer {
public:
    Trainer(TrainConfig tc, GenConfig gc, std::shared_ptr<const GlyphFont> font,
            std::shared_ptr<const TextEncoder> encoder, std::vector<PosterSample> corpus);

    // Aggregate means over the epoch's steps. Aborts with the offending
    // batch ids if any loss goes non-finite.
    LossReport train_epoch();

    TextPainterModel& model() { return model_; }
    const TextPainterModel& model() const { return model_; }
    const TrainState& state() const { return state_; }
    int64_t steps_per_epoch() const;

    void save(const std::string& path) const;
    void load(const std::string& path);

    // Receives one JSON line per step: {step, epoch, rec, per, adv_g, adv_d,
    // lambda1}. Unset means no logging.
    std::function<void(const std::string&)> log_sink;

private:
    TrainConfig tc_;
    std::shared_ptr<const GlyphFont> font_;
    std::shared_ptr<const TextEncoder> encoder_;
    std::vector<PosterSample> corpus_;
    std::vector<std::pair<int, int>> elements_;  // (poster, element) index pairs
    TextPainterModel model_;
    nn::Adam opt_g_, opt_d_;
    ToyFeatureExtractor phi_;
    TrainState state_;
};

}  // namespace textpainter
