#pragma once

#include <string>
#include <vector>

#include "textpainter/corpus.hpp"
#include "textpainter/image.hpp"
#include "textpainter/nn/modules.hpp"
#include "textpainter/palette.hpp"

namespace textpainter {

// Modified median cut: recursive box splitting on the longest color axis at
// the population median, most populous box first. Returns population-weighted
// box means, ordered by population (descending, lexical RGB on ties). Fewer
// than k distinct colors yields exactly the distinct colors.
std::vector<Rgb> theme_colors_mmcq(const Image& img, int k);

// Highest WCAG contrast ratio against the local theme; ties go to the larger
// RGB Euclidean distance from it, then the lexically smallest entry.
Rgb contrast_pick(const std::vector<Rgb>& global_themes, const Rgb& local_theme);

// Global 5-theme extraction + local theme + contrast_pick in one call.
Rgb contrast_color(const Image& background, const Rect& bbox);

// Two small frozen-architecture conv encoders (global poster + bbox mask,
// local crop) fused into a 26-way head over the fixed palette.
class ColorClassifier {
public:
    explicit ColorClassifier(uint64_t seed = 1);

    // Supervised on the elements' palette indices. Deterministic in (seed,
    // corpus, epochs, batch_size, lr).
    void train(const std::vector<PosterSample>& corpus, int epochs, int batch_size, double lr);

    int classify_index(const Image& background, const Rect& bbox) const;
    Rgb classify(const Image& background, const Rect& bbox) const;
    bool trained() const { return trained_; }

private:
    nn::Var logits(const std::vector<const Image*>& bgs, const std::vector<Rect>& boxes) const;

    nn::ParamList ps_;
    nn::Conv2d g1_, g2_, g3_;  // global: 4ch 64x64 input
    nn::Conv2d l1_, l2_, l3_;  // local: 3ch 32x32 crop
    nn::Linear head_;
    uint64_t seed_;
    bool trained_ = false;
};

// 768-d color histogram signature: 128 bins per channel, global then local,
// each channel histogram L1-normalized.
std::vector<float> retrieval_feature(const Image& global_bg, const Image& local_bg);

struct RetrievalIndex {
    std::vector<std::vector<float>> features;  // n x 768
    std::vector<Rgb> labels;
};

RetrievalIndex build_retrieval_index(const std::vector<PosterSample>& samples);

// Nearest neighbor by L2 over the histogram features; ties keep the earliest
// indexed sample.
Rgb retrieve_color(const Image& background, const Image& local_bg, const RetrievalIndex& index);

// Alpha-composite of the glyph ink in the predicted color over the local
// background crop, rounded to the nearest 8-bit value.
Image render_baseline(const std::string& content, const Rgb& color, const Image& local_bg,
                      const GlyphFont& font);

}  // namespace textpainter
