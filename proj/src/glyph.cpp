#include "textpainter/glyph.hpp"

#include <json.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "textpainter/rng.hpp"

namespace textpainter {

namespace {

// Master line box. Strokes are kept >= 12 units thick so that even at the
// smallest corpus render scale (~1/6) a full-coverage core survives area
// downsampling; corpus color oracles rely on alpha == 1 pixels.
constexpr int kLineH = 96;
constexpr int kAscent = 76;
constexpr int kThick = 12;

void fill_rect(GlyphFont::Cell& c, int line_h, int x0, int y0, int x1, int y1) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, c.w);
    y1 = std::min(y1, line_h);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) c.data[static_cast<size_t>(y) * c.w + x] = 1.f;
}

GlyphFont::Cell make_tofu() {
    GlyphFont::Cell c;
    c.w = 64;
    c.data.assign(static_cast<size_t>(kLineH) * c.w, 0.f);
    int top = kAscent - 60, bot = kAscent;
    fill_rect(c, kLineH, 4, top, 60, top + kThick);
    fill_rect(c, kLineH, 4, bot - kThick, 60, bot);
    fill_rect(c, kLineH, 4, top, 4 + kThick, bot);
    fill_rect(c, kLineH, 60 - kThick, top, 60, bot);
    return c;
}

GlyphFont::Cell make_ascii(char32_t cp) {
    std::string s(1, static_cast<char>(cp));
    const int face = cv::FONT_HERSHEY_SIMPLEX;
    const double scale = 3.0;
    int baseline = 0;
    cv::Size sz = cv::getTextSize(s, face, scale, kThick, &baseline);
    GlyphFont::Cell c;
    c.w = std::max(sz.width + 8, 24);
    c.data.assign(static_cast<size_t>(kLineH) * c.w, 0.f);
    if (cp == U' ') return c;
    cv::Mat canvas = cv::Mat::zeros(kLineH, c.w, CV_8UC1);
    cv::putText(canvas, s, cv::Point(4, kAscent - 6), face, scale, cv::Scalar(255), kThick,
                cv::LINE_AA);
    for (int y = 0; y < kLineH; ++y)
        for (int x = 0; x < c.w; ++x)
            c.data[static_cast<size_t>(y) * c.w + x] = canvas.at<uint8_t>(y, x) / 255.f;
    return c;
}

bool in_cjk_ranges(char32_t cp) {
    return (cp >= 0x3000 && cp <= 0x30FF) || (cp >= 0x4E00 && cp <= 0x9FFF) ||
           (cp >= 0xFF00 && cp <= 0xFFEF);
}

// Deterministic stand-in ideograph: axis-aligned bars inside a square box.
// The sandbox ships no CJK-capable font file, so the builtin face fabricates
// shapes; they carry no linguistic meaning, only stable distinct ink.
GlyphFont::Cell make_cjk(char32_t cp) {
    Rng r(static_cast<uint64_t>(cp) * 0x9E3779B97F4A7C15ull + 0x1234567);
    GlyphFont::Cell c;
    c.w = 78;
    c.data.assign(static_cast<size_t>(kLineH) * c.w, 0.f);
    const int x0 = 5, x1 = 71, y0 = kAscent - 66, y1 = kAscent;  // 66x66 box

    int nh = 2 + static_cast<int>(r.randint(0, 2));
    int nv = 1 + static_cast<int>(r.randint(0, 2));
    // distinct slots keep bars separated
    std::vector<int> hslots = {0, 1, 2, 3};
    std::vector<int> vslots = {0, 1, 2, 3};
    r.shuffle(hslots);
    r.shuffle(vslots);
    for (int i = 0; i < nh; ++i) {
        int yy = y0 + hslots[static_cast<size_t>(i)] * 18;
        int xa = x0 + static_cast<int>(r.randint(0, 8));
        int xb = x1 - static_cast<int>(r.randint(0, 8));
        fill_rect(c, kLineH, xa, yy, xb, yy + kThick);
    }
    for (int i = 0; i < nv; ++i) {
        int xx = x0 + vslots[static_cast<size_t>(i)] * 18;
        int ya = y0 + static_cast<int>(r.randint(0, 8));
        int yb = y1 - static_cast<int>(r.randint(0, 8));
        fill_rect(c, kLineH, xx, ya, xx + kThick, yb);
    }
    if (r.bernoulli(0.4)) {  // enclosing box variant
        fill_rect(c, kLineH, x0, y0, x1, y0 + kThick);
        fill_rect(c, kLineH, x0, y1 - kThick, x1, y1);
        fill_rect(c, kLineH, x0, y0, x0 + kThick, y1);
        fill_rect(c, kLineH, x1 - kThick, y0, x1, y1);
    }
    return c;
}

}  // namespace

double GlyphImage::ink_sum() const {
    double s = 0;
    for (float v : pixels) s += v;
    return s;
}

Rect GlyphImage::ink_bbox() const {
    int x0 = w, y0 = h, x1 = -1, y1 = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (at(y, x) > 0.f) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) return Rect{0, 0, 0, 0};
    return Rect{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

std::shared_ptr<const GlyphFont> GlyphFont::builtin() {
    static std::shared_ptr<const GlyphFont> cached = [] {
        auto f = std::make_shared<GlyphFont>();
        f->line_h_ = kLineH;
        f->procedural_cjk_ = true;
        f->tofu_ = make_tofu();
        for (char32_t cp = 0x20; cp <= 0x7E; ++cp) f->cells_[cp] = make_ascii(cp);
        return std::shared_ptr<const GlyphFont>(f);
    }();
    return cached;
}

std::shared_ptr<const GlyphFont> GlyphFont::from_file(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "font_open", "cannot open font atlas: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail("font_parse", std::string("bad font atlas json: ") + e.what());
    }
    auto f = std::make_shared<GlyphFont>();
    check(j.contains("line_h") && j.contains("glyphs"), "font_parse",
          "font atlas needs line_h and glyphs");
    f->line_h_ = j["line_h"].get<int>();
    check(f->line_h_ > 0, "font_parse", "line_h must be positive");
    for (auto& [key, g] : j["glyphs"].items()) {
        char32_t cp = static_cast<char32_t>(std::stoul(key));
        Cell c;
        c.w = g["w"].get<int>();
        check(c.w > 0, "font_parse", "glyph width must be positive");
        auto& data = g["data"];
        check(static_cast<int64_t>(data.size()) ==
                  static_cast<int64_t>(f->line_h_) * c.w,
              "font_parse", "glyph data size mismatch for codepoint " + key);
        c.data.reserve(data.size());
        for (auto& v : data) c.data.push_back(v.get<int>() / 255.f);
        f->cells_[cp] = std::move(c);
    }
    f->tofu_ = make_tofu();
    if (f->line_h_ != kLineH) {
        // tofu is drawn for the builtin metrics; rebuild a plain box at this height
        Cell t;
        t.w = std::max(f->line_h_ * 2 / 3, 4);
        t.data.assign(static_cast<size_t>(f->line_h_) * t.w, 0.f);
        int m = std::max(f->line_h_ / 8, 1);
        for (int y = 0; y < f->line_h_; ++y)
            for (int x = 0; x < t.w; ++x)
                if (y < m || y >= f->line_h_ - m || x < m || x >= t.w - m)
                    t.data[static_cast<size_t>(y) * t.w + x] = 1.f;
        f->tofu_ = std::move(t);
    }
    return f;
}

std::shared_ptr<const GlyphFont> GlyphFont::open(const std::string& font_path) {
    if (font_path.empty() || font_path == "builtin") return builtin();
    return from_file(font_path);
}

bool GlyphFont::covers(char32_t cp) const {
    if (cells_.count(cp)) return true;
    return procedural_cjk_ && in_cjk_ranges(cp);
}

GlyphFont::Cell GlyphFont::glyph_for(char32_t cp) const {
    auto it = cells_.find(cp);
    if (it != cells_.end()) return it->second;
    check(procedural_cjk_ && in_cjk_ranges(cp), "font_missing",
          "glyph_for called for uncovered codepoint");
    return make_cjk(cp);
}

GlyphImage render_glyph(const std::string& content, int h, int w, const GlyphFont& font,
                        GlyphRenderInfo* info) {
    check(!content.empty(), "glyph_content", "render_glyph needs nonempty content");
    check(h > 0 && w > 0, "glyph_size", "render_glyph needs positive size");
    std::u32string cps = utf8_decode(content);

    std::vector<GlyphFont::Cell> cells;
    cells.reserve(cps.size());
    for (char32_t cp : cps) {
        if (font.covers(cp)) {
            cells.push_back(font.glyph_for(cp));
        } else {
            cells.push_back(font.tofu());
            if (info) info->missing.push_back(cp);
        }
    }

    const int L = font.line_h();
    int line_w = 0;
    std::vector<int> prefix{0};
    for (const auto& c : cells) {
        line_w += c.w;
        prefix.push_back(line_w);
    }

    ImageF master(L, line_w, 1);
    int xoff = 0;
    for (const auto& c : cells) {
        for (int y = 0; y < L; ++y)
            for (int x = 0; x < c.w; ++x)
                master.at(y, xoff + x, 0) = c.data[static_cast<size_t>(y) * c.w + x];
        xoff += c.w;
    }

    double s = std::min(static_cast<double>(h) / L, static_cast<double>(w) / line_w);
    int lh = std::max(1, static_cast<int>(std::lround(L * s)));
    int lw = std::max(1, static_cast<int>(std::lround(line_w * s)));
    ImageF scaled = resize_area(master, lh, lw);

    // ink extent of the scaled line, for exact horizontal centering
    int ix0 = lw, ix1 = -1;
    for (int y = 0; y < lh; ++y)
        for (int x = 0; x < lw; ++x)
            if (scaled.at(y, x, 0) > 0.f) {
                ix0 = std::min(ix0, x);
                ix1 = std::max(ix1, x);
            }
    int dx, dy = (h - lh) / 2;
    if (ix1 < 0) {
        dx = (w - lw) / 2;
    } else {
        int iw = ix1 - ix0 + 1;
        dx = (w - iw) / 2 - ix0;
    }

    GlyphImage out(h, w);
    for (int y = 0; y < lh; ++y) {
        int oy = y + dy;
        if (oy < 0 || oy >= h) continue;
        for (int x = 0; x < lw; ++x) {
            int ox = x + dx;
            if (ox < 0 || ox >= w) continue;
            out.at(oy, ox) = std::clamp(scaled.at(y, x, 0), 0.f, 1.f);
        }
    }

    if (info) {
        info->char_cells.clear();
        for (size_t i = 0; i < cells.size(); ++i) {
            int a = static_cast<int>(std::lround(prefix[i] * s)) + dx;
            int b = static_cast<int>(std::lround(prefix[i + 1] * s)) + dx;
            if (i == 0) a = 0;
            if (i + 1 == cells.size()) b = w;
            info->char_cells.emplace_back(std::clamp(a, 0, w), std::clamp(b, 0, w));
        }
    }
    return out;
}

}  // namespace textpainter
