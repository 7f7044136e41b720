#include "textpainter/batch.hpp"

#include <algorithm>

namespace textpainter {

namespace {

void put_rgb(nn::TensorData& dst, int item, const Image& img) {
    // HWC u8 -> CHW float in [-1, 1]
    const int64_t hw = static_cast<int64_t>(img.h) * img.w;
    float* base = dst.v.data() + static_cast<int64_t>(item) * 3 * hw;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c)
                base[c * hw + y * img.w + x] = img.at(y, x, c) / 127.5f - 1.f;
}

}  // namespace

GenBatch make_batch(const std::vector<std::pair<const PosterSample*, int>>& items,
                    const GlyphFont& font, int align) {
    check(!items.empty(), "batch_empty", "make_batch needs at least one element");
    check(align >= 1, "batch_align", "align must be >= 1");

    GenBatch b;
    b.n = static_cast<int>(items.size());
    int max_h = 0, max_w = 0;
    const PosterSample* first = items[0].first;
    b.PH = first->background.h;
    b.PW = first->background.w;
    for (const auto& [smp, ei] : items) {
        check(smp != nullptr && ei >= 0 &&
                  ei < static_cast<int>(smp->elements.size()),
              "batch_item", "bad batch item reference");
        check(smp->background.h == b.PH && smp->background.w == b.PW, "batch_poster_size",
              "all posters in a batch must share one size");
        const Rect& r = smp->elements[static_cast<size_t>(ei)].bbox;
        check(r.w <= b.PW && r.h <= b.PH, "batch_bbox", "bbox larger than poster");
        max_h = std::max(max_h, r.h);
        max_w = std::max(max_w, r.w);
    }
    b.H = round_up(max_h, align);
    b.W = round_up(max_w, align);

    b.glyph = nn::TensorData({b.n, 1, b.H, b.W});
    b.local_bg = nn::TensorData({b.n, 3, b.H, b.W});
    b.gt = nn::TensorData({b.n, 3, b.H, b.W});
    b.pos_mask = nn::TensorData({b.n, 1, b.PH, b.PW});
    b.bg_full = nn::TensorData({b.n, 3, b.PH, b.PW});

    for (int i = 0; i < b.n; ++i) {
        const PosterSample& smp = *items[static_cast<size_t>(i)].first;
        const ElementMeta& el =
            smp.elements[static_cast<size_t>(items[static_cast<size_t>(i)].second)];
        const Rect& r = el.bbox;

        int oy0 = r.y + (r.h - b.H) / 2;
        int ox0 = r.x + (r.w - b.W) / 2;
        put_rgb(b.local_bg, i, crop_replicate(smp.background, oy0, ox0, b.H, b.W));
        put_rgb(b.gt, i, crop_replicate(smp.composed, oy0, ox0, b.H, b.W));
        put_rgb(b.bg_full, i, smp.background);

        int oy = r.y - oy0, ox = r.x - ox0;
        b.true_sizes.emplace_back(r.h, r.w);
        b.offsets.emplace_back(oy, ox);
        b.ids.push_back(smp.source_id + ":" +
                        std::to_string(items[static_cast<size_t>(i)].second));
        b.contents.push_back(el.content);

        GlyphImage g = render_glyph(el.content, r.h, r.w, font);
        float* gbase = b.glyph.v.data() + static_cast<int64_t>(i) * b.H * b.W;
        for (int y = 0; y < r.h; ++y)
            for (int x = 0; x < r.w; ++x)
                gbase[static_cast<int64_t>(oy + y) * b.W + ox + x] = g.at(y, x);

        float* mbase = b.pos_mask.v.data() + static_cast<int64_t>(i) * b.PH * b.PW;
        for (int y = r.y; y < r.y + r.h; ++y)
            for (int x = r.x; x < r.x + r.w; ++x)
                mbase[static_cast<int64_t>(y) * b.PW + x] = 1.f;
    }
    return b;
}

TokenBatch make_token_batch(const std::vector<std::string>& contents,
                            const TextEncoder& encoder) {
    check(!contents.empty(), "batch_empty", "make_token_batch needs at least one string");
    TokenBatch tb;
    tb.n = static_cast<int>(contents.size());
    tb.dim = encoder.dim();
    tb.tokens = nn::TensorData({tb.n, tb.T, tb.dim});
    tb.z0 = nn::TensorData({tb.n, tb.dim});
    tb.valid.assign(static_cast<size_t>(tb.n) * tb.T, 0);
    for (int i = 0; i < tb.n; ++i) {
        TokenBundle bundle = encode_text(contents[static_cast<size_t>(i)], encoder);
        std::copy(bundle.tokens.begin(), bundle.tokens.end(),
                  tb.tokens.v.begin() + static_cast<int64_t>(i) * tb.T * tb.dim);
        std::copy(bundle.sentence.begin(), bundle.sentence.end(),
                  tb.z0.v.begin() + static_cast<int64_t>(i) * tb.dim);
        for (int t = 0; t < bundle.n_tok; ++t)
            tb.valid[static_cast<size_t>(i) * tb.T + t] = 1;
    }
    return tb;
}

}  // namespace textpainter
