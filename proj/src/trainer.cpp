#include "textpainter/trainer.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "textpainter/batch.hpp"

namespace textpainter {

using nn::Var;

TrainConfig TrainConfig::from_config(const KVConfig& cfg) {
    TrainConfig tc;
    tc.epochs = static_cast<int>(cfg.get_int("train.epochs", tc.epochs));
    tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size", tc.batch_size));
    tc.lr_g = cfg.get_double("train.lr_g", tc.lr_g);
    tc.lr_d = cfg.get_double("train.lr_d", tc.lr_d);
    tc.seed = static_cast<uint64_t>(cfg.get_int("train.seed", static_cast<int64_t>(tc.seed)));
    tc.checkpoint_interval =
        static_cast<int>(cfg.get_int("train.checkpoint_interval", tc.checkpoint_interval));
    tc.align = static_cast<int>(cfg.get_int("train.align", tc.align));
    tc.perceptual_seed = static_cast<uint64_t>(
        cfg.get_int("train.perceptual_seed", static_cast<int64_t>(tc.perceptual_seed)));
    tc.loss = LossConfig::from_config(cfg);
    tc.validate();
    return tc;
}

void TrainConfig::validate() const {
    check(epochs >= 1, "train_config", "train.epochs must be >= 1");
    check(batch_size >= 1, "train_config", "train.batch_size must be >= 1");
    check(lr_g > 0 && lr_d > 0, "train_config", "learning rates must be > 0");
    check(checkpoint_interval >= 0, "train_config", "train.checkpoint_interval must be >= 0");
    check(align >= 1, "train_config", "train.align must be >= 1");
    loss.validate();
}

Trainer::Trainer(TrainConfig tc, GenConfig gc, std::shared_ptr<const GlyphFont> font,
                 std::shared_ptr<const TextEncoder> encoder, std::vector<PosterSample> corpus)
    : tc_(std::move(tc)),
      font_(std::move(font)),
      encoder_(std::move(encoder)),
      corpus_(std::move(corpus)),
      model_(gc, tc_.seed),
      opt_g_(model_.g_params().items(), static_cast<float>(tc_.lr_g)),
      opt_d_(model_.d_params().items(), static_cast<float>(tc_.lr_d)),
      phi_(tc_.perceptual_seed),
      state_{0, 0, Rng(tc_.seed ^ 0xD1CEB00CULL)} {
    tc_.validate();
    check(font_ != nullptr, "train_config", "trainer needs a font");
    check(!corpus_.empty(), "train_config", "trainer needs a nonempty corpus");
    if (gc.use_text) check(encoder_ != nullptr, "train_config", "text model needs an encoder");
    for (size_t p = 0; p < corpus_.size(); ++p)
        for (size_t e = 0; e < corpus_[p].elements.size(); ++e)
            elements_.emplace_back(static_cast<int>(p), static_cast<int>(e));
    check(!elements_.empty(), "train_config", "corpus has no text elements");
}

int64_t Trainer::steps_per_epoch() const {
    return static_cast<int64_t>((elements_.size() + tc_.batch_size - 1) / tc_.batch_size);
}

LossReport Trainer::train_epoch() {
    Schedule sched = schedule(state_.epoch, tc_.loss.r, tc_.loss.lambda2);
    std::vector<std::pair<int, int>> order = elements_;
    state_.rng.shuffle(order);

    LossReport agg;
    agg.lambda1 = sched.lambda1;
    agg.lambda2 = sched.lambda2;
    agg.lambda3 = sched.lambda3;
    int64_t n_steps = 0;

    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(tc_.batch_size)) {
        size_t end = std::min(order.size(), begin + static_cast<size_t>(tc_.batch_size));
        std::vector<std::pair<const PosterSample*, int>> items;
        for (size_t i = begin; i < end; ++i)
            items.emplace_back(&corpus_[static_cast<size_t>(order[i].first)], order[i].second);

        GenBatch batch = make_batch(items, *font_, tc_.align);
        TokenBatch tokens;
        const bool text = model_.config().use_text;
        if (text) tokens = make_token_batch(batch.contents, *encoder_);

        Var fake = model_.generate(batch, text ? &tokens : nullptr);
        Var gt{nn::TensorData(batch.gt)};
        Var local_bg{nn::TensorData(batch.local_bg)};

        // discriminator step on the frozen copy of the fake
        opt_d_.zero_grad();
        Var d_loss = adv_d_loss(model_.discriminate(detach(fake), local_bg),
                                model_.discriminate(gt, local_bg));
        backward(d_loss);
        opt_d_.step();

        // generator step against the updated discriminator
        Var rec = rec_loss(fake, gt, batch.true_sizes, batch.offsets);
        Var per = perceptual_loss(fake, gt, phi_);
        Var adv_g = adv_g_loss(model_.discriminate(fake, local_bg));
        Var total = total_generator_loss(rec, per, adv_g, sched);
        opt_g_.zero_grad();
        backward(total);
        opt_g_.step();

        double rec_v = rec.item(), per_v = per.item();
        double advg_v = adv_g.item(), advd_v = d_loss.item();
        if (!std::isfinite(rec_v) || !std::isfinite(per_v) || !std::isfinite(advg_v) ||
            !std::isfinite(advd_v)) {
            std::string ids;
            for (const auto& id : batch.ids) ids += (ids.empty() ? "" : ", ") + id;
            fail("train_nan", "non-finite loss at step " + std::to_string(state_.step) +
                                  "; batch ids: " + ids);
        }

        agg.rec += rec_v;
        agg.per += per_v;
        agg.adv_g += advg_v;
        agg.adv_d += advd_v;
        ++n_steps;

        if (log_sink) {
            nlohmann::json j;
            j["step"] = state_.step;
            j["epoch"] = state_.epoch;
            j["rec"] = rec_v;
            j["per"] = per_v;
            j["adv_g"] = advg_v;
            j["adv_d"] = advd_v;
            j["lambda1"] = sched.lambda1;
            log_sink(j.dump());
        }
        ++state_.step;
    }

    agg.rec /= static_cast<double>(n_steps);
    agg.per /= static_cast<double>(n_steps);
    agg.adv_g /= static_cast<double>(n_steps);
    agg.adv_d /= static_cast<double>(n_steps);
    agg.total_g = agg.lambda1 * agg.rec + agg.lambda2 * agg.per + agg.lambda3 * agg.adv_g;
    ++state_.epoch;
    return agg;
}

void Trainer::save(const std::string& path) const {
    save_checkpoint(path, model_, opt_g_, opt_d_, state_);
}

void Trainer::load(const std::string& path) {
    load_checkpoint(path, model_, opt_g_, opt_d_, state_);
}

}  // namespace textpainter
