#include "textpainter/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "textpainter/rng.hpp"

namespace textpainter {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string>& ascii_words() {
    static const std::vector<std::string> words = {
        "SALE",  "NEW",  "HOT",  "MEGA", "BONUS", "FRESH", "GIFT",  "PLUS",
        "MAX",   "GO",   "DEAL", "SAVE", "FREE",  "TOP",   "BEST",  "MORE",
        "50OFF", "2FOR1", "VIP",  "NOW",  "OPEN",  "WIN",   "EXTRA", "LUCKY",
    };
    return words;
}

// Small fixed ideograph alphabet for synthetic CJK-style strings.
const std::vector<char32_t>& cjk_alphabet() {
    static const std::vector<char32_t> cps = [] {
        std::vector<char32_t> v;
        Rng r(0x5EEDF00D);
        for (int i = 0; i < 40; ++i)
            v.push_back(static_cast<char32_t>(0x4E00 + r.randint(0, 0x9FFF - 0x4E00)));
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return v;
    }();
    return cps;
}

// Accent colors are deliberately off-palette so a keyword color can never
// collide with a body color.
const std::vector<Rgb>& accent_palette() {
    static const std::vector<Rgb> accents = {
        {220, 40, 40}, {240, 200, 40}, {40, 200, 80},
        {60, 120, 240}, {170, 60, 220}, {250, 130, 30},
    };
    return accents;
}

std::string make_content(Rng& r) {
    if (r.bernoulli(0.5)) {
        return ascii_words()[static_cast<size_t>(
            r.randint(0, static_cast<int64_t>(ascii_words().size()) - 1))];
    }
    const auto& alpha = cjk_alphabet();
    int len = static_cast<int>(r.randint(2, 6));
    std::u32string s;
    for (int i = 0; i < len; ++i)
        s.push_back(alpha[static_cast<size_t>(
            r.randint(0, static_cast<int64_t>(alpha.size()) - 1))]);
    return utf8_encode(s);
}

uint8_t chan(Rng& r) { return static_cast<uint8_t>(r.randint(20, 235)); }

Image make_background(Rng& r, int w, int h) {
    Image bg(h, w, 3);
    int type = static_cast<int>(r.randint(0, 2));
    Rgb c1 = {chan(r), chan(r), chan(r)};
    Rgb c2 = {chan(r), chan(r), chan(r)};
    if (type == 1) c2 = c1;  // solid
    int dir = static_cast<int>(r.randint(0, 2));  // 0 vertical, 1 horizontal, 2 diagonal
    double denom = dir == 0 ? h - 1 : dir == 1 ? w - 1 : (h + w - 2);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double t = (dir == 0 ? y : dir == 1 ? x : x + y) / std::max(denom, 1.0);
            for (int ch = 0; ch < 3; ++ch)
                bg.at(y, x, ch) = static_cast<uint8_t>(
                    std::lround(c1[static_cast<size_t>(ch)] +
                                (c2[static_cast<size_t>(ch)] - c1[static_cast<size_t>(ch)]) * t));
        }
    if (type == 2) {
        int n_shapes = static_cast<int>(r.randint(2, 5));
        for (int i = 0; i < n_shapes; ++i) {
            Rgb sc = {chan(r), chan(r), chan(r)};
            int sw = static_cast<int>(r.randint(w / 8, w / 2));
            int sh = static_cast<int>(r.randint(h / 8, h / 2));
            int sx = static_cast<int>(r.randint(0, w - sw));
            int sy = static_cast<int>(r.randint(0, h - sh));
            bool ellipse = r.bernoulli(0.5);
            double cx = sx + sw / 2.0, cy = sy + sh / 2.0;
            for (int y = sy; y < sy + sh; ++y)
                for (int x = sx; x < sx + sw; ++x) {
                    if (ellipse) {
                        double dx = (x - cx) / (sw / 2.0), dy = (y - cy) / (sh / 2.0);
                        if (dx * dx + dy * dy > 1.0) continue;
                    }
                    for (int ch = 0; ch < 3; ++ch)
                        bg.at(y, x, ch) = sc[static_cast<size_t>(ch)];
                }
        }
    }
    return bg;
}

Rgb mean_color(const Image& img, const Rect& r) {
    double acc[3] = {0, 0, 0};
    for (int y = r.y; y < r.y + r.h; ++y)
        for (int x = r.x; x < r.x + r.w; ++x)
            for (int ch = 0; ch < 3; ++ch) acc[ch] += img.at(y, x, ch);
    double n = static_cast<double>(r.w) * r.h;
    return Rgb{static_cast<uint8_t>(std::lround(acc[0] / n)),
               static_cast<uint8_t>(std::lround(acc[1] / n)),
               static_cast<uint8_t>(std::lround(acc[2] / n))};
}

int char_index_for_x(const std::vector<std::pair<int, int>>& cells, int x) {
    for (size_t i = 0; i < cells.size(); ++i)
        if (x >= cells[i].first && x < cells[i].second) return static_cast<int>(i);
    return static_cast<int>(cells.size()) - 1;
}

// Blends the colored glyph into `dst` at bbox; returns true when at least
// one non-keyword character pixel has full coverage (the color oracle needs
// such pixels to exist).
bool compose_element(Image& dst, const ElementMeta& el, const GlyphImage& glyph,
                     const GlyphRenderInfo& info) {
    bool full_cov_body = false;
    for (int y = 0; y < glyph.h; ++y)
        for (int x = 0; x < glyph.w; ++x) {
            float a = glyph.at(y, x);
            if (a <= 0.f) continue;
            int ci = char_index_for_x(info.char_cells, x);
            bool kw = el.has_keyword && ci >= el.kw_begin && ci < el.kw_end;
            const Rgb& c = kw ? el.kw_color : el.color;
            for (int ch = 0; ch < 3; ++ch) {
                float bgv = dst.at(el.bbox.y + y, el.bbox.x + x, ch);
                dst.at(el.bbox.y + y, el.bbox.x + x, ch) = static_cast<uint8_t>(
                    std::lround(c[static_cast<size_t>(ch)] * a + bgv * (1.f - a)));
            }
            if (!kw && a >= 0.995f) full_cov_body = true;
        }
    return full_cov_body;
}

double estimated_width_factor(char32_t cp) { return cp >= 0x80 ? 0.85 : 0.60; }

}  // namespace

CorpusConfig CorpusConfig::from_config(const KVConfig& cfg) {
    CorpusConfig c;
    c.poster_w = static_cast<int>(cfg.get_int("corpus.poster_w", c.poster_w));
    c.poster_h = static_cast<int>(cfg.get_int("corpus.poster_h", c.poster_h));
    c.max_texts = static_cast<int>(cfg.get_int("corpus.max_texts", c.max_texts));
    c.min_h = static_cast<int>(cfg.get_int("corpus.min_h", c.min_h));
    c.max_h = static_cast<int>(cfg.get_int("corpus.max_h", c.max_h));
    c.min_w = static_cast<int>(cfg.get_int("corpus.min_w", c.min_w));
    c.max_w = static_cast<int>(cfg.get_int("corpus.max_w", c.max_w));
    c.kw_prob = cfg.get_double("corpus.kw_prob", c.kw_prob);
    c.font_path = cfg.get_str("glyph.font_path", c.font_path);
    return c;
}

void CorpusConfig::validate() const {
    check(poster_w > 0 && poster_h > 0, "corpus_config", "poster size must be positive");
    check(max_texts >= 1, "corpus_config", "max_texts must be >= 1");
    check(min_h > 0 && max_h >= min_h, "corpus_config", "bad element height range");
    check(min_w > 0 && max_w >= min_w, "corpus_config", "bad element width range");
    check(max_w + 12 <= poster_w && max_h + 12 <= poster_h, "corpus_config",
          "elements do not fit the poster");
    check(kw_prob >= 0.0 && kw_prob <= 1.0, "corpus_config", "kw_prob must be in [0,1]");
}

std::vector<PosterSample> synth_corpus(uint64_t seed, int n_posters, const CorpusConfig& cfg) {
    check(n_posters >= 1, "corpus_config", "n_posters must be >= 1");
    cfg.validate();
    auto font = GlyphFont::open(cfg.font_path);

    std::vector<PosterSample> out;
    out.reserve(static_cast<size_t>(n_posters));
    for (int pi = 0; pi < n_posters; ++pi) {
        Rng r(seed * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(pi) + 1);
        PosterSample smp;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "p%05d", pi);
        smp.source_id = idbuf;
        smp.background = make_background(r, cfg.poster_w, cfg.poster_h);
        smp.composed = smp.background;

        int want = static_cast<int>(r.randint(1, cfg.max_texts));
        std::vector<Rect> taken;
        for (int ei = 0; ei < want; ++ei) {
            std::string content = make_content(r);
            std::u32string cps = utf8_decode(content);
            int h = static_cast<int>(r.randint(cfg.min_h, cfg.max_h));
            double wf = 0;
            for (char32_t cp : cps) wf += estimated_width_factor(cp);
            int w = std::clamp(static_cast<int>(std::lround(h * wf)), cfg.min_w,
                               std::min(cfg.max_w, cfg.poster_w - 12));

            Rect box{};
            bool placed = false;
            for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
                box = Rect{static_cast<int>(r.randint(6, cfg.poster_w - w - 6)),
                           static_cast<int>(r.randint(6, cfg.poster_h - h - 6)), w, h};
                Rect grown{box.x - 8, box.y - 8, box.w + 16, box.h + 16};
                placed = std::none_of(taken.begin(), taken.end(),
                                      [&](const Rect& t) { return grown.intersects(t); });
            }
            if (!placed) continue;

            ElementMeta el;
            el.content = content;
            el.bbox = box;
            Rgb local = mean_color(smp.background, box);
            el.color_index = best_contrast_index(local);
            el.color = palette26()[static_cast<size_t>(el.color_index)];
            if (cps.size() >= 3 && r.bernoulli(cfg.kw_prob)) {
                int kw_len = static_cast<int>(r.randint(1, 2));
                el.kw_begin = static_cast<int>(
                    r.randint(0, static_cast<int64_t>(cps.size()) - kw_len));
                el.kw_end = el.kw_begin + kw_len;
                el.has_keyword = true;
                std::string kw = utf8_encode(cps.substr(static_cast<size_t>(el.kw_begin),
                                                        static_cast<size_t>(kw_len)));
                el.kw_color = accent_palette()[fnv1a64(kw) % accent_palette().size()];
            }

            GlyphRenderInfo ginfo;
            GlyphImage glyph = render_glyph(content, h, w, *font, &ginfo);
            Image trial = smp.composed;
            if (!compose_element(trial, el, glyph, ginfo)) continue;
            smp.composed = std::move(trial);
            taken.push_back(box);
            smp.elements.push_back(std::move(el));
        }
        if (smp.elements.empty()) {
            // guarantee at least one element: a centered fallback always places
            ElementMeta el;
            el.content = "SALE";
            int h = cfg.min_h, w = std::max(cfg.min_w, h * 3);
            el.bbox = Rect{(cfg.poster_w - w) / 2, (cfg.poster_h - h) / 2, w, h};
            Rgb local = mean_color(smp.background, el.bbox);
            el.color_index = best_contrast_index(local);
            el.color = palette26()[static_cast<size_t>(el.color_index)];
            GlyphRenderInfo ginfo;
            GlyphImage glyph = render_glyph(el.content, h, w, *font, &ginfo);
            check(compose_element(smp.composed, el, glyph, ginfo), "corpus_render",
                  "fallback element produced no full-coverage ink");
            smp.elements.push_back(std::move(el));
        }
        out.push_back(std::move(smp));
    }
    return out;
}

std::vector<PosterSample> filter_corpus(std::vector<PosterSample> samples) {
    std::vector<PosterSample> out;
    for (auto& s : samples) {
        std::vector<ElementMeta> kept;
        for (auto& el : s.elements) {
            double aspect = static_cast<double>(el.bbox.w) / el.bbox.h;
            size_t len = utf8_decode(el.content).size();
            if (aspect > 11.0) continue;
            if (el.bbox.h < 30 || el.bbox.h > 100) continue;
            if (el.bbox.w < 50 || el.bbox.w > 450) continue;
            if (len < 1 || len > 11) continue;
            kept.push_back(el);
        }
        if (kept.empty() || kept.size() > 5) continue;
        s.elements = std::move(kept);
        out.push_back(std::move(s));
    }
    return out;
}

Image gt_text_image(const PosterSample& sample, size_t element_idx) {
    check(element_idx < sample.elements.size(), "corpus_index", "element index out of range");
    return crop(sample.composed, sample.elements[element_idx].bbox);
}

Rgb extract_text_color(const PosterSample& sample, size_t element_idx, const GlyphFont& font,
                       bool exclude_keyword) {
    check(element_idx < sample.elements.size(), "corpus_index", "element index out of range");
    const ElementMeta& el = sample.elements[element_idx];
    GlyphRenderInfo info;
    GlyphImage glyph = render_glyph(el.content, el.bbox.h, el.bbox.w, font, &info);
    Image crop_img = gt_text_image(sample, element_idx);

    std::vector<uint8_t> vals[3];
    for (int y = 0; y < glyph.h; ++y)
        for (int x = 0; x < glyph.w; ++x) {
            if (glyph.at(y, x) < 0.995f) continue;
            int ci = char_index_for_x(info.char_cells, x);
            if (exclude_keyword && el.has_keyword && ci >= el.kw_begin && ci < el.kw_end)
                continue;
            for (int ch = 0; ch < 3; ++ch) vals[ch].push_back(crop_img.at(y, x, ch));
        }
    check(!vals[0].empty(), "corpus_extract", "no full-coverage ink pixels to read color from");
    Rgb out{};
    for (int ch = 0; ch < 3; ++ch) {
        auto& v = vals[ch];
        std::nth_element(v.begin(), v.begin() + static_cast<ptrdiff_t>(v.size() / 2), v.end());
        out[static_cast<size_t>(ch)] = v[v.size() / 2];
    }
    return out;
}

namespace {

json element_to_json(const ElementMeta& el) {
    json e;
    e["text"] = el.content;
    e["bbox"] = {el.bbox.x, el.bbox.y, el.bbox.w, el.bbox.h};
    return e;
}

}  // namespace

std::string annotation_json(const PosterSample& sample) {
    json j;
    j["background"] = "images/" + sample.source_id + "_bg.png";
    j["poster"] = "images/" + sample.source_id + ".png";
    j["elements"] = json::array();
    for (const auto& el : sample.elements) j["elements"].push_back(element_to_json(el));
    return j.dump(2) + "\n";
}

void write_corpus(const std::string& dir, const std::vector<PosterSample>& samples,
                  const CorpusConfig& cfg) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "annotations");
    json meta;
    meta["config"] = {
        {"poster_w", cfg.poster_w}, {"poster_h", cfg.poster_h}, {"max_texts", cfg.max_texts},
        {"min_h", cfg.min_h},       {"max_h", cfg.max_h},       {"min_w", cfg.min_w},
        {"max_w", cfg.max_w},       {"kw_prob", cfg.kw_prob},   {"font_path", cfg.font_path},
    };
    json posters = json::object();
    for (const auto& s : samples) {
        write_png((fs::path(dir) / "images" / (s.source_id + "_bg.png")).string(),
                  s.background);
        write_png((fs::path(dir) / "images" / (s.source_id + ".png")).string(), s.composed);
        std::ofstream ann((fs::path(dir) / "annotations" / (s.source_id + ".json")).string());
        ann << annotation_json(s);
        check(ann.good(), "corpus_write", "failed writing annotation for " + s.source_id);

        json pm = json::array();
        for (const auto& el : s.elements) {
            json e;
            e["color"] = {el.color[0], el.color[1], el.color[2]};
            e["color_index"] = el.color_index;
            if (el.has_keyword) {
                e["keyword"] = {{"begin", el.kw_begin},
                                {"end", el.kw_end},
                                {"color", {el.kw_color[0], el.kw_color[1], el.kw_color[2]}}};
            }
            pm.push_back(e);
        }
        posters[s.source_id] = pm;
    }
    meta["posters"] = posters;
    std::ofstream mf((fs::path(dir) / "meta.json").string());
    mf << meta.dump(2) << "\n";
    check(mf.good(), "corpus_write", "failed writing meta.json");
}

CorpusConfig read_corpus_config(const std::string& dir) {
    std::ifstream mf((fs::path(dir) / "meta.json").string());
    check(mf.good(), "corpus_read", "cannot open meta.json in " + dir);
    json meta;
    try {
        mf >> meta;
    } catch (const std::exception& e) {
        fail("corpus_read", std::string("bad meta.json: ") + e.what());
    }
    CorpusConfig cfg;
    const auto& c = meta.at("config");
    cfg.poster_w = c.at("poster_w").get<int>();
    cfg.poster_h = c.at("poster_h").get<int>();
    cfg.max_texts = c.at("max_texts").get<int>();
    cfg.min_h = c.at("min_h").get<int>();
    cfg.max_h = c.at("max_h").get<int>();
    cfg.min_w = c.at("min_w").get<int>();
    cfg.max_w = c.at("max_w").get<int>();
    cfg.kw_prob = c.at("kw_prob").get<double>();
    cfg.font_path = c.at("font_path").get<std::string>();
    return cfg;
}

std::vector<PosterSample> read_corpus(const std::string& dir) {
    std::ifstream mf((fs::path(dir) / "meta.json").string());
    check(mf.good(), "corpus_read", "cannot open meta.json in " + dir);
    json meta;
    try {
        mf >> meta;
    } catch (const std::exception& e) {
        fail("corpus_read", std::string("bad meta.json: ") + e.what());
    }
    std::vector<PosterSample> out;
    const auto& posters = meta.at("posters");
    std::vector<std::string> ids;
    for (auto it = posters.begin(); it != posters.end(); ++it) ids.push_back(it.key());
    std::sort(ids.begin(), ids.end());
    for (const auto& id : ids) {
        PosterSample s;
        s.source_id = id;
        std::ifstream ann((fs::path(dir) / "annotations" / (id + ".json")).string());
        check(ann.good(), "corpus_read", "missing annotation for " + id);
        json aj;
        try {
            ann >> aj;
        } catch (const std::exception& e) {
            fail("corpus_read", "bad annotation json for " + id + ": " + e.what());
        }
        s.background = read_png((fs::path(dir) / aj.at("background").get<std::string>()).string());
        s.composed = read_png((fs::path(dir) / aj.at("poster").get<std::string>()).string());
        const auto& els = aj.at("elements");
        const auto& metas = posters.at(id);
        check(els.size() == metas.size(), "corpus_read",
              "annotation/meta element count mismatch for " + id);
        for (size_t i = 0; i < els.size(); ++i) {
            ElementMeta el;
            el.content = els[i].at("text").get<std::string>();
            auto bb = els[i].at("bbox");
            el.bbox = Rect{bb[0].get<int>(), bb[1].get<int>(), bb[2].get<int>(),
                           bb[3].get<int>()};
            const auto& m = metas[i];
            auto col = m.at("color");
            el.color = Rgb{col[0].get<uint8_t>(), col[1].get<uint8_t>(), col[2].get<uint8_t>()};
            el.color_index = m.at("color_index").get<int>();
            if (m.contains("keyword")) {
                el.has_keyword = true;
                el.kw_begin = m["keyword"].at("begin").get<int>();
                el.kw_end = m["keyword"].at("end").get<int>();
                auto kc = m["keyword"].at("color");
                el.kw_color = Rgb{kc[0].get<uint8_t>(), kc[1].get<uint8_t>(),
                                  kc[2].get<uint8_t>()};
            }
            s.elements.push_back(std::move(el));
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace textpainter
