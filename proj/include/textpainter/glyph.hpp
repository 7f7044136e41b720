#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "textpainter/common.hpp"
#include "textpainter/image.hpp"

namespace textpainter {

// Single-channel coverage raster, values in [0, 1], 1 = ink.
struct GlyphImage {
    int h = 0;
    int w = 0;
    std::vector<float> pixels;

    GlyphImage() = default;
    GlyphImage(int h_, int w_) : h(h_), w(w_), pixels(static_cast<size_t>(h_) * w_, 0.f) {}
    float& at(int y, int x) { return pixels[static_cast<size_t>(y) * w + x]; }
    float at(int y, int x) const { return pixels[static_cast<size_t>(y) * w + x]; }
    double ink_sum() const;
    Rect ink_bbox() const;  // tight box over pixels > 0; w=h=0 when blank
};

// Per-render metadata: which characters fell back to the tofu box, and the
// horizontal cell each character occupies in the output raster. Cells tile
// the rendered line left to right without overlap.
struct GlyphRenderInfo {
    std::vector<char32_t> missing;
    std::vector<std::pair<int, int>> char_cells;  // [x_begin, x_end) per char
};

// Rasterized font atlas: one coverage bitmap per codepoint on a common line
// box. The builtin face covers printable ASCII plus the main CJK ranges with
// thick axis-aligned strokes so downscaled renders keep full-coverage cores.
class GlyphFont {
public:
    struct Cell {
        int w = 0;  // advance in master units
        std::vector<float> data;  // line_h x w coverage
    };

    static std::shared_ptr<const GlyphFont> builtin();
    static std::shared_ptr<const GlyphFont> from_file(const std::string& path);
    // Resolves `glyph.font_path` ("builtin" or a JSON atlas path).
    static std::shared_ptr<const GlyphFont> open(const std::string& font_path);

    bool covers(char32_t cp) const;
    // covers(cp) must hold. CJK glyphs of the builtin face are synthesized
    // per call (deterministic in cp), not stored.
    Cell glyph_for(char32_t cp) const;
    const Cell& tofu() const { return tofu_; }
    int line_h() const { return line_h_; }

private:
    int line_h_ = 0;
    bool procedural_cjk_ = false;
    std::map<char32_t, Cell> cells_;
    Cell tofu_;
};

// Lays the string out on one line, scales to fit the height (shrinking
// further if the line would overflow the width), and centers the ink box
// horizontally. Missing characters render as the tofu box and are recorded
// in `info`, never fatal.
GlyphImage render_glyph(const std::string& content, int h, int w, const GlyphFont& font,
                        GlyphRenderInfo* info = nullptr);

}  // namespace textpainter
