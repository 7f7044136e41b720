#pragma once

#include <string>
#include <vector>

#include "textpainter/config.hpp"
#include "textpainter/glyph.hpp"
#include "textpainter/image.hpp"
#include "textpainter/palette.hpp"

namespace textpainter {

struct ElementMeta {
    std::string content;
    Rect bbox;
    Rgb color{0, 0, 0};     // body text color, a palette26 entry
    int color_index = 0;
    bool has_keyword = false;
    int kw_begin = 0, kw_end = 0;  // codepoint span [begin, end)
    Rgb kw_color{0, 0, 0};
};

struct PosterSample {
    Image background;  // clean, no text
    Image composed;    // background with text rendered in
    std::vector<ElementMeta> elements;
    std::string source_id;
};

struct CorpusConfig {
    int poster_w = 513;
    int poster_h = 750;
    int max_texts = 5;
    int min_h = 30, max_h = 60;
    int min_w = 50, max_w = 200;
    double kw_prob = 0.5;
    std::string font_path = "builtin";

    static CorpusConfig from_config(const KVConfig& cfg);
    void validate() const;
};

// Deterministic in (seed, cfg). Text colors follow a fixed rule (highest
// WCAG contrast against the local background mean, over palette26) and
// keyword spans take an accent color that is a pure function of the keyword
// characters, so both baselines and the text-conditional path have exact,
// learnable signal. All assignments are recorded in the element metadata.
std::vector<PosterSample> synth_corpus(uint64_t seed, int n_posters, const CorpusConfig& cfg);

// Appendix rules: drop elements with aspect ratio > 11, height outside
// [30, 100], width outside [50, 450], or content length outside [1, 11];
// then drop posters left with zero or more than five elements.
std::vector<PosterSample> filter_corpus(std::vector<PosterSample> samples);

Image gt_text_image(const PosterSample& sample, size_t element_idx);

// Re-renders the glyph and reads the body color back from full-coverage ink
// pixels outside the keyword span (per-channel median). Exact on synthetic
// data, where such pixels exist by construction.
Rgb extract_text_color(const PosterSample& sample, size_t element_idx, const GlyphFont& font,
                       bool exclude_keyword = true);

// Canonical per-poster annotation JSON (sorted keys, stable formatting).
std::string annotation_json(const PosterSample& sample);

void write_corpus(const std::string& dir, const std::vector<PosterSample>& samples,
                  const CorpusConfig& cfg);
std::vector<PosterSample> read_corpus(const std::string& dir);
CorpusConfig read_corpus_config(const std::string& dir);

}  // namespace textpainter
