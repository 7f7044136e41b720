#include "textpainter/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "textpainter/nn/autodiff.hpp"
#include "textpainter/rng.hpp"

namespace textpainter {

namespace {

using nn::Var;

struct ColorCount {
    Rgb color;
    int64_t count;
};

struct ColorBox {
    std::vector<ColorCount> entries;  // kept in lexical RGB order
    int64_t population = 0;
    int created = 0;
};

int longest_axis(const ColorBox& box) {
    int lo[3] = {256, 256, 256}, hi[3] = {-1, -1, -1};
    for (const auto& e : box.entries)
        for (int c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], static_cast<int>(e.color[c]));
            hi[c] = std::max(hi[c], static_cast<int>(e.color[c]));
        }
    int best = 0, range = hi[0] - lo[0];
    for (int c = 1; c < 3; ++c)
        if (hi[c] - lo[c] > range) {
            best = c;
            range = hi[c] - lo[c];
        }
    return best;  // strict > keeps the R > G > B tie priority
}

Rgb box_mean(const ColorBox& box) {
    double sum[3] = {0, 0, 0};
    for (const auto& e : box.entries)
        for (int c = 0; c < 3; ++c) sum[c] += static_cast<double>(e.color[c]) * e.count;
    Rgb out;
    for (int c = 0; c < 3; ++c)
        out[c] = static_cast<uint8_t>(
            std::llround(sum[c] / static_cast<double>(box.population)));
    return out;
}

double sq_dist(const Rgb& a, const Rgb& b) {
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
        double d = static_cast<double>(a[c]) - static_cast<double>(b[c]);
        acc += d * d;
    }
    return acc;
}

ImageF resize01(const Image& img, int h, int w) {
    return to_float(resize_area(img, h, w));
}

void fill_chw(std::vector<float>& dst, size_t base, const ImageF& img) {
    for (int c = 0; c < img.c; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                dst[base + (static_cast<size_t>(c) * img.h + y) * img.w + x] = img.at(y, x, c);
}

void append_hist128(std::vector<float>& out, const Image& img) {
    check(img.c == 3, "baseline_input", "histogram features expect 3-channel images");
    check(!img.empty(), "baseline_input", "histogram of an empty image");
    const float inv = 1.f / static_cast<float>(static_cast<size_t>(img.h) * img.w);
    for (int ch = 0; ch < 3; ++ch) {
        size_t base = out.size();
        out.resize(base + 128, 0.f);
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) out[base + (img.at(y, x, ch) >> 1)] += inv;
    }
}

}  // namespace

std::vector<Rgb> theme_colors_mmcq(const Image& img, int k) {
    check(k >= 1, "baseline_input", "theme color count must be >= 1");
    check(!img.empty() && img.c == 3, "baseline_input", "mmcq expects a 3-channel image");

    std::map<uint32_t, int64_t> hist;  // lexical RGB order for free
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            uint32_t key = (static_cast<uint32_t>(img.at(y, x, 0)) << 16) |
                           (static_cast<uint32_t>(img.at(y, x, 1)) << 8) |
                           img.at(y, x, 2);
            ++hist[key];
        }

    ColorBox root;
    for (const auto& [key, count] : hist) {
        Rgb c{static_cast<uint8_t>(key >> 16), static_cast<uint8_t>((key >> 8) & 0xFF),
              static_cast<uint8_t>(key & 0xFF)};
        root.entries.push_back({c, count});
        root.population += count;
    }
    std::vector<ColorBox> boxes{std::move(root)};
    int next_created = 1;

    while (static_cast<int>(boxes.size()) < k) {
        int pick = -1;
        for (int i = 0; i < static_cast<int>(boxes.size()); ++i) {
            if (boxes[i].entries.size() < 2) continue;
            if (pick < 0 || boxes[i].population > boxes[pick].population ||
                (boxes[i].population == boxes[pick].population &&
                 boxes[i].created < boxes[pick].created))
                pick = i;
        }
        if (pick < 0) break;  // every box is a single distinct color

        ColorBox box = std::move(boxes[pick]);
        boxes.erase(boxes.begin() + pick);
        int axis = longest_axis(box);
        std::stable_sort(box.entries.begin(), box.entries.end(),
                         [axis](const ColorCount& a, const ColorCount& b) {
                             return a.color[axis] < b.color[axis];
                         });
        int64_t cum = 0;
        size_t split = 0;
        for (size_t i = 0; i < box.entries.size(); ++i) {
            cum += box.entries[i].count;
            if (2 * cum >= box.population) {
                split = i;
                break;
            }
        }
        if (split + 1 == box.entries.size()) --split;  // both sides stay nonempty

        ColorBox lower, upper;
        for (size_t i = 0; i <= split; ++i) {
            lower.population += box.entries[i].count;
            lower.entries.push_back(box.entries[i]);
        }
        for (size_t i = split + 1; i < box.entries.size(); ++i) {
            upper.population += box.entries[i].count;
            upper.entries.push_back(box.entries[i]);
        }
        auto relex = [](ColorBox& b) {
            std::sort(b.entries.begin(), b.entries.end(),
                      [](const ColorCount& a, const ColorCount& c) { return a.color < c.color; });
        };
        relex(lower);
        relex(upper);
        lower.created = next_created++;
        upper.created = next_created++;
        boxes.push_back(std::move(lower));
        boxes.push_back(std::move(upper));
    }

    std::vector<std::pair<int64_t, Rgb>> ranked;
    for (const auto& b : boxes) ranked.emplace_back(b.population, box_mean(b));
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<Rgb> out;
    for (const auto& [pop, color] : ranked) out.push_back(color);
    return out;
}

Rgb contrast_pick(const std::vector<Rgb>& global_themes, const Rgb& local_theme) {
    check(!global_themes.empty(), "baseline_input", "no candidate theme colors");
    int best = 0;
    double best_ratio = contrast_ratio(global_themes[0], local_theme);
    double best_dist = sq_dist(global_themes[0], local_theme);
    for (int i = 1; i < static_cast<int>(global_themes.size()); ++i) {
        double ratio = contrast_ratio(global_themes[i], local_theme);
        double dist = sq_dist(global_themes[i], local_theme);
        bool take = ratio > best_ratio;
        if (ratio == best_ratio)
            take = dist > best_dist ||
                   (dist == best_dist && global_themes[i] < global_themes[best]);
        if (take) {
            best = i;
            best_ratio = ratio;
            best_dist = dist;
        }
    }
    return global_themes[best];
}

Rgb contrast_color(const Image& background, const Rect& bbox) {
    check(bbox.w >= 1 && bbox.h >= 1, "baseline_input", "empty bbox");
    check(Rect{0, 0, background.w, background.h}.contains(bbox), "baseline_input",
          "bbox outside the poster");
    std::vector<Rgb> themes = theme_colors_mmcq(background, 5);
    Rgb local = theme_colors_mmcq(crop(background, bbox), 1)[0];
    return contrast_pick(themes, local);
}

ColorClassifier::ColorClassifier(uint64_t seed) : seed_(seed) {
    Rng rng(seed);
    g1_ = nn::Conv2d(ps_, "cls.g1", 4, 8, 3, 2, 1, rng);
    g2_ = nn::Conv2d(ps_, "cls.g2", 8, 16, 3, 2, 1, rng);
    g3_ = nn::Conv2d(ps_, "cls.g3", 16, 32, 3, 2, 1, rng);
    l1_ = nn::Conv2d(ps_, "cls.l1", 3, 8, 3, 2, 1, rng);
    l2_ = nn::Conv2d(ps_, "cls.l2", 8, 16, 3, 2, 1, rng);
    l3_ = nn::Conv2d(ps_, "cls.l3", 16, 32, 3, 2, 1, rng);
    head_ = nn::Linear(ps_, "cls.head", 64, 26, rng);
}

nn::Var ColorClassifier::logits(const std::vector<const Image*>& bgs,
                                const std::vector<Rect>& boxes) const {
    const int n = static_cast<int>(bgs.size());
    nn::TensorData g({n, 4, 64, 64});
    nn::TensorData l({n, 3, 32, 32});
    for (int i = 0; i < n; ++i) {
        const Image& bg = *bgs[i];
        const Rect& r = boxes[i];
        check(Rect{0, 0, bg.w, bg.h}.contains(r), "baseline_input", "bbox outside the poster");
        fill_chw(g.v, static_cast<size_t>(i) * 4 * 64 * 64, resize01(bg, 64, 64));
        Image mask(bg.h, bg.w, 1, 0);
        for (int y = r.y; y < r.y + r.h; ++y)
            for (int x = r.x; x < r.x + r.w; ++x) mask.at(y, x, 0) = 255;
        ImageF mask_small = resize01(mask, 64, 64);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                g.v[(static_cast<size_t>(i) * 4 + 3) * 64 * 64 + static_cast<size_t>(y) * 64 +
                    x] = mask_small.at(y, x, 0);
        fill_chw(l.v, static_cast<size_t>(i) * 3 * 32 * 32,
                 resize01(crop(bg, r), 32, 32));
    }
    Var gx{std::move(g)}, lx{std::move(l)};
    gx = nn::global_avg_pool(nn::leaky_relu(g3_.forward(
        nn::leaky_relu(g2_.forward(nn::leaky_relu(g1_.forward(gx)))))));
    lx = nn::global_avg_pool(nn::leaky_relu(l3_.forward(
        nn::leaky_relu(l2_.forward(nn::leaky_relu(l1_.forward(lx)))))));
    Var fused = nn::concat_channels(
        {nn::reshape(gx, {n, 32, 1, 1}), nn::reshape(lx, {n, 32, 1, 1})});
    return nn::linear(nn::reshape(fused, {n, 64}), head_.w, head_.b);
}

void ColorClassifier::train(const std::vector<PosterSample>& corpus, int epochs, int batch_size,
                            double lr) {
    check(epochs >= 1 && batch_size >= 1 && lr > 0, "baseline_input",
          "bad classifier training settings");
    std::vector<std::pair<int, int>> items;
    for (int p = 0; p < static_cast<int>(corpus.size()); ++p)
        for (int e = 0; e < static_cast<int>(corpus[p].elements.size()); ++e)
            items.emplace_back(p, e);
    check(!items.empty(), "baseline_input", "classifier corpus has no elements");

    nn::Adam opt(ps_.items(), static_cast<float>(lr));
    Rng order_rng(seed_ ^ 0x5EEDC0DEULL);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        order_rng.shuffle(items);
        for (size_t begin = 0; begin < items.size(); begin += static_cast<size_t>(batch_size)) {
            size_t end = std::min(items.size(), begin + static_cast<size_t>(batch_size));
            std::vector<const Image*> bgs;
            std::vector<Rect> boxes;
            std::vector<int> labels;
            for (size_t i = begin; i < end; ++i) {
                const auto& sample = corpus[static_cast<size_t>(items[i].first)];
                const auto& el = sample.elements[static_cast<size_t>(items[i].second)];
                bgs.push_back(&sample.background);
                boxes.push_back(el.bbox);
                labels.push_back(el.color_index);
            }
            opt.zero_grad();
            nn::backward(nn::softmax_xent(logits(bgs, boxes), labels));
            opt.step();
        }
    }
    trained_ = true;
}

int ColorClassifier::classify_index(const Image& background, const Rect& bbox) const {
    check(trained_, "baseline_untrained", "classifier has not been trained");
    nn::NoGrad ng;
    std::vector<float> scores = logits({&background}, {bbox}).values();
    return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

Rgb ColorClassifier::classify(const Image& background, const Rect& bbox) const {
    return palette26()[static_cast<size_t>(classify_index(background, bbox))];
}

std::vector<float> retrieval_feature(const Image& global_bg, const Image& local_bg) {
    std::vector<float> out;
    out.reserve(768);
    append_hist128(out, global_bg);
    append_hist128(out, local_bg);
    return out;
}

RetrievalIndex build_retrieval_index(const std::vector<PosterSample>& samples) {
    RetrievalIndex index;
    for (const auto& s : samples)
        for (const auto& el : s.elements) {
            index.features.push_back(retrieval_feature(s.background, crop(s.background, el.bbox)));
            index.labels.push_back(el.color);
        }
    check(!index.features.empty(), "baseline_input", "retrieval index is empty");
    return index;
}

Rgb retrieve_color(const Image& background, const Image& local_bg, const RetrievalIndex& index) {
    check(!index.features.empty(), "baseline_input", "retrieval index is empty");
    check(index.features.size() == index.labels.size(), "baseline_input",
          "retrieval index features/labels out of sync");
    std::vector<float> q = retrieval_feature(background, local_bg);
    int best = 0;
    double best_d = -1.0;
    for (int i = 0; i < static_cast<int>(index.features.size()); ++i) {
        const auto& f = index.features[static_cast<size_t>(i)];
        check(f.size() == q.size(), "baseline_input", "retrieval feature dimension mismatch");
        double d = 0.0;
        for (size_t j = 0; j < q.size(); ++j) {
            double diff = static_cast<double>(q[j]) - static_cast<double>(f[j]);
            d += diff * diff;
        }
        if (best_d < 0.0 || d < best_d) {  // strict < keeps the earliest on ties
            best_d = d;
            best = i;
        }
    }
    return index.labels[static_cast<size_t>(best)];
}

Image render_baseline(const std::string& content, const Rgb& color, const Image& local_bg,
                      const GlyphFont& font) {
    check(local_bg.c == 3 && !local_bg.empty(), "baseline_input",
          "render_baseline expects a 3-channel local background");
    GlyphImage alpha = render_glyph(content, local_bg.h, local_bg.w, font);
    Image out(local_bg.h, local_bg.w, 3);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            double a = alpha.at(y, x);
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = static_cast<uint8_t>(std::llround(
                    static_cast<double>(color[c]) * a +
                    static_cast<double>(local_bg.at(y, x, c)) * (1.0 - a)));
        }
    return out;
}

}  // namespace textpainter
