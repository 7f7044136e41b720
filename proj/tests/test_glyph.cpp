#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "textpainter/glyph.hpp"

using namespace textpainter;

namespace {

// Independent ink-extent scan, not GlyphImage::ink_bbox.
struct Extent {
    int x0 = 1 << 30, x1 = -1, y0 = 1 << 30, y1 = -1;
};
Extent scan_ink(const GlyphImage& g) {
    Extent e;
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x)
            if (g.at(y, x) > 0.f) {
                e.x0 = std::min(e.x0, x);
                e.x1 = std::max(e.x1, x);
                e.y0 = std::min(e.y0, y);
                e.y1 = std::max(e.y1, y);
            }
    return e;
}

}  // namespace

TEST_CASE("render_glyph rejects empty content and bad sizes") {
    auto font = GlyphFont::builtin();
    CHECK_THROWS_AS(render_glyph("", 32, 32, *font), Error);
    CHECK_THROWS_AS(render_glyph("A", 0, 32, *font), Error);
    CHECK_THROWS_AS(render_glyph("A", 32, -1, *font), Error);
}

TEST_CASE("render_glyph is deterministic and produces ink in range") {
    auto font = GlyphFont::builtin();
    GlyphImage a = render_glyph("A", 32, 32, *font);
    GlyphImage b = render_glyph("A", 32, 32, *font);
    CHECK(a.h == 32);
    CHECK(a.w == 32);
    CHECK(a.pixels == b.pixels);
    CHECK(a.ink_sum() > 0.0);
    for (float v : a.pixels) {
        CHECK(v >= 0.f);
        CHECK(v <= 1.f);
    }
}

TEST_CASE("CJK render centers the ink box horizontally") {
    auto font = GlyphFont::builtin();
    GlyphImage g = render_glyph("\xe9\x99\x90\xe6\x97\xb6", 40, 120, *font);  // 限时
    CHECK(g.ink_sum() > 0.0);
    Extent e = scan_ink(g);
    int left = e.x0;
    int right = g.w - 1 - e.x1;
    CHECK(std::abs(left - right) <= 1);
}

TEST_CASE("ASCII render centers the ink box horizontally") {
    auto font = GlyphFont::builtin();
    GlyphImage g = render_glyph("SALE", 48, 200, *font);
    Extent e = scan_ink(g);
    CHECK(std::abs(e.x0 - (g.w - 1 - e.x1)) <= 1);
}

TEST_CASE("layout is resolution-covariant: doubling the bbox doubles the ink box") {
    auto font = GlyphFont::builtin();
    for (const char* s : {"HELLO", "\xe9\x99\x90\xe6\x97\xb6\xe4\xbc\x98"}) {
        GlyphImage g1 = render_glyph(s, 30, 100, *font);
        GlyphImage g2 = render_glyph(s, 60, 200, *font);
        Extent e1 = scan_ink(g1);
        Extent e2 = scan_ink(g2);
        // exclusive right/bottom edges double exactly up to centering round-off
        CHECK(std::abs(e2.x0 - 2 * e1.x0) <= 2);
        CHECK(std::abs((e2.x1 + 1) - 2 * (e1.x1 + 1)) <= 2);
        CHECK(std::abs(e2.y0 - 2 * e1.y0) <= 2);
        CHECK(std::abs((e2.y1 + 1) - 2 * (e1.y1 + 1)) <= 2);
    }
}

TEST_CASE("missing characters fall back to tofu and are reported, never fatal") {
    auto font = GlyphFont::builtin();
    CHECK_FALSE(font->covers(0xE000));  // private use area
    GlyphRenderInfo info;
    GlyphImage g = render_glyph("A\xee\x80\x80" "B", 40, 160, *font);  // A U+E000 B
    CHECK(g.ink_sum() > 0.0);
    render_glyph("A\xee\x80\x80" "B", 40, 160, *font, &info);
    REQUIRE(info.missing.size() == 1);
    CHECK(info.missing[0] == char32_t{0xE000});
}

TEST_CASE("char cells tile the raster left to right") {
    auto font = GlyphFont::builtin();
    GlyphRenderInfo info;
    GlyphImage g = render_glyph("POSTER", 36, 180, *font, &info);
    REQUIRE(info.char_cells.size() == 6);
    CHECK(info.char_cells.front().first == 0);
    CHECK(info.char_cells.back().second == g.w);
    for (size_t i = 0; i < info.char_cells.size(); ++i) {
        CHECK(info.char_cells[i].first < info.char_cells[i].second);
        if (i > 0) CHECK(info.char_cells[i].first == info.char_cells[i - 1].second);
    }
}

TEST_CASE("builtin font covers ASCII and the main CJK ranges deterministically") {
    auto font = GlyphFont::builtin();
    CHECK(font->covers(U'A'));
    CHECK(font->covers(char32_t{0x4E00}));
    CHECK(font->covers(char32_t{0x9FFF}));
    CHECK(font->covers(char32_t{0x30A2}));
    CHECK_FALSE(font->covers(char32_t{0x1F600}));
    auto a = font->glyph_for(char32_t{0x4E2D});
    auto b = font->glyph_for(char32_t{0x4E2D});
    CHECK(a.w == b.w);
    CHECK(a.data == b.data);
}

TEST_CASE("font atlas file loads and renders; malformed files are rejected") {
    std::string good = "/tmp/tp_test_font_good.json";
    {
        std::ofstream out(good);
        out << "{\"line_h\":4,\"glyphs\":{\"65\":{\"w\":3,\"data\":"
               "[0,255,0, 255,0,255, 255,255,255, 255,0,255]}}}";
    }
    auto f = GlyphFont::from_file(good);
    CHECK(f->line_h() == 4);
    CHECK(f->covers(U'A'));
    CHECK_FALSE(f->covers(U'B'));
    GlyphImage g = render_glyph("A", 8, 8, *f);
    CHECK(g.ink_sum() > 0.0);
    // open() dispatches on the path value
    CHECK(GlyphFont::open("builtin")->covers(char32_t{0x4E00}));
    CHECK(GlyphFont::open(good)->covers(U'A'));

    CHECK_THROWS_AS(GlyphFont::from_file("/tmp/tp_no_such_font.json"), Error);
    std::string bad = "/tmp/tp_test_font_bad.json";
    {
        std::ofstream out(bad);
        out << "{\"line_h\":4,\"glyphs\":{\"65\":{\"w\":3,\"data\":[0]}}}";
    }
    CHECK_THROWS_AS(GlyphFont::from_file(bad), Error);
    std::remove(good.c_str());
    std::remove(bad.c_str());
}

TEST_CASE("deep downscale keeps full-coverage ink cores") {
    // color extraction reads pixels with coverage 1; strokes are thick enough
    // to survive the worst corpus scale (height 30 from the 96 px master line)
    auto font = GlyphFont::builtin();
    for (const char* s : {"SALE", "\xe4\xb8\xad\xe6\x96\x87"}) {
        GlyphImage g = render_glyph(s, 30, 120, *font);
        int full = 0;
        for (float v : g.pixels)
            if (v >= 0.995f) ++full;
        CHECK(full > 0);
    }
}
