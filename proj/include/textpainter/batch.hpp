#pragma once

#include <string>
#include <utility>
#include <vector>

#include "textpainter/corpus.hpp"
#include "textpainter/nn/tensor.hpp"
#include "textpainter/textsem.hpp"

namespace textpainter {

// One training batch. Image tensors are NCHW float; pixel tensors are
// normalized to [-1, 1], glyph coverage stays in [0, 1], masks in {0, 1}.
struct GenBatch {
    int n = 0;
    int H = 0, W = 0;    // shared padded crop size, multiples of align
    int PH = 0, PW = 0;  // full poster size
    nn::TensorData glyph;     // (N, 1, H, W)
    nn::TensorData local_bg;  // (N, 3, H, W), clean background window
    nn::TensorData gt;        // (N, 3, H, W), composed poster window
    nn::TensorData pos_mask;  // (N, 1, PH, PW)
    nn::TensorData bg_full;   // (N, 3, PH, PW)
    std::vector<std::pair<int, int>> true_sizes;  // (h, w) per item
    std::vector<std::pair<int, int>> offsets;     // (oy, ox) of bbox in the window
    std::vector<std::string> ids;                 // "source_id:element_idx"
    std::vector<std::string> contents;
};

// Pads every crop to the rounded-up max size. Windows are centered on the
// bbox and sampled with replicate-edge beyond the poster; the glyph raster
// is zero-padded at the true offset (never resampled).
GenBatch make_batch(const std::vector<std::pair<const PosterSample*, int>>& items,
                    const GlyphFont& font, int align = 32);

struct TokenBatch {
    int n = 0;
    int T = kMaxTextTokens;
    int dim = 0;
    nn::TensorData tokens;       // (N, T, dim), zero padded
    nn::TensorData z0;           // (N, dim)
    std::vector<uint8_t> valid;  // N*T row-major
};

TokenBatch make_token_batch(const std::vector<std::string>& contents,
                            const TextEncoder& encoder);

}  // namespace textpainter
