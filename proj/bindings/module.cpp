#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "textpainter/baselines.hpp"
#include "textpainter/batch.hpp"
#include "textpainter/checkpoint.hpp"
#include "textpainter/common.hpp"
#include "textpainter/config.hpp"
#include "textpainter/corpus.hpp"
#include "textpainter/glyph.hpp"
#include "textpainter/image.hpp"
#include "textpainter/metrics.hpp"
#include "textpainter/model.hpp"
#include "textpainter/textsem.hpp"
#include "textpainter/trainer.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace textpainter;

namespace {

KVConfig to_cfg(const py::dict& d) {
    KVConfig cfg;
    for (auto item : d) {
        std::string key = py::cast<std::string>(py::str(item.first));
        py::handle v = item.second;
        std::string s;
        if (py::isinstance<py::bool_>(v))
            s = py::cast<bool>(v) ? "true" : "false";
        else
            s = py::cast<std::string>(py::str(v));
        cfg.set(key, s);
    }
    return cfg;
}

Image to_image(const py::array& arr) {
    auto a = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>::ensure(arr);
    check(a && a.ndim() == 3, "py_input", "image must be an (h, w, c) uint8 array");
    int h = static_cast<int>(a.shape(0));
    int w = static_cast<int>(a.shape(1));
    int c = static_cast<int>(a.shape(2));
    check(c == 1 || c == 3, "py_input", "image must have 1 or 3 channels");
    Image img(h, w, c);
    std::memcpy(img.data.data(), a.data(), img.data.size());
    return img;
}

py::array from_image(const Image& img) {
    py::array_t<uint8_t> out({img.h, img.w, img.c});
    std::memcpy(out.mutable_data(), img.data.data(), img.data.size());
    return out;
}

Rect to_rect(const py::sequence& bb) {
    check(py::len(bb) == 4, "py_input", "bbox must be (x, y, w, h)");
    return Rect{py::cast<int>(bb[0]), py::cast<int>(bb[1]), py::cast<int>(bb[2]),
                py::cast<int>(bb[3])};
}

py::tuple rgb_tuple(const Rgb& c) { return py::make_tuple(c[0], c[1], c[2]); }

py::dict sample_dict(const PosterSample& s) {
    py::dict d;
    d["source_id"] = s.source_id;
    d["background"] = from_image(s.background);
    d["composed"] = from_image(s.composed);
    py::list els;
    for (const auto& el : s.elements) {
        py::dict e;
        e["text"] = el.content;
        e["bbox"] = py::make_tuple(el.bbox.x, el.bbox.y, el.bbox.w, el.bbox.h);
        e["color"] = rgb_tuple(el.color);
        e["color_index"] = el.color_index;
        if (el.has_keyword) {
            py::dict k;
            k["begin"] = el.kw_begin;
            k["end"] = el.kw_end;
            k["color"] = rgb_tuple(el.kw_color);
            e["keyword"] = k;
        } else {
            e["keyword"] = py::none();
        }
        els.append(e);
    }
    d["elements"] = els;
    return d;
}

py::list samples_list(const std::vector<PosterSample>& samples) {
    py::list out;
    for (const auto& s : samples) out.append(sample_dict(s));
    return out;
}

std::shared_ptr<const TextEncoder> encoder_for(const KVConfig& cfg, const GenConfig& gc) {
    KVConfig c = cfg;
    if (!c.has("textsem.dim")) c.set("textsem.dim", std::to_string(gc.text_dim));
    return std::shared_ptr<const TextEncoder>(make_text_encoder(c));
}

py::dict report_dict(const MetricsReport& r) {
    py::dict d;
    d["fid"] = r.fid;
    d["ssim"] = r.ssim;
    d["psnr"] = r.psnr;  // inf maps to float('inf')
    d["n_pairs"] = r.n_pairs;
    return d;
}

}  // namespace

PYBIND11_MODULE(_textpainter, m) {
    m.doc() = "poster text image generation: corpus synthesis, training, "
              "generation, metrics, and color baselines";
    py::register_exception<Error>(m, "TextPainterError");
    m.attr("__version__") = "0.1.0";

    m.def(
        "synth_corpus",
        [](uint64_t seed, int n, const py::dict& config, bool filter) {
            CorpusConfig cc = CorpusConfig::from_config(to_cfg(config));
            cc.validate();
            auto samples = synth_corpus(seed, n, cc);
            if (filter) samples = filter_corpus(std::move(samples));
            return samples_list(samples);
        },
        py::arg("seed"), py::arg("n"), py::arg("config") = py::dict(),
        py::arg("filter") = false,
        "Deterministic poster synthesis; returns a list of sample dicts.");

    m.def(
        "make_corpus",
        [](const std::string& out_dir, uint64_t seed, int n, const py::dict& config,
           bool filter) {
            CorpusConfig cc = CorpusConfig::from_config(to_cfg(config));
            cc.validate();
            auto samples = synth_corpus(seed, n, cc);
            if (filter) samples = filter_corpus(std::move(samples));
            write_corpus(out_dir, samples, cc);
            size_t elements = 0;
            for (const auto& s : samples) elements += s.elements.size();
            py::dict d;
            d["posters"] = samples.size();
            d["elements"] = elements;
            d["out"] = out_dir;
            return d;
        },
        py::arg("out_dir"), py::arg("seed"), py::arg("n"), py::arg("config") = py::dict(),
        py::arg("filter") = false, "Synthesize and write a corpus directory.");

    m.def(
        "read_corpus",
        [](const std::string& dir) { return samples_list(read_corpus(dir)); }, py::arg("dir"),
        "Load a corpus directory written by make_corpus or the synth verb.");

    m.def(
        "train",
        [](const py::dict& config, const std::string& resume) {
            KVConfig cfg = to_cfg(config);
            TrainConfig tc = TrainConfig::from_config(cfg);
            tc.validate();
            GenConfig gc = GenConfig::from_config(cfg);
            gc.validate();
            std::string corpus_dir = cfg.get_str("train.corpus", "");
            check(!corpus_dir.empty(), "train_config",
                  "config needs train.corpus pointing at a corpus dir");
            std::string out_dir = cfg.get_str("train.out", "runs");
            std::string log_path =
                cfg.get_str("train.log", (fs::path(out_dir) / "train_log.jsonl").string());

            auto corpus = read_corpus(corpus_dir);
            auto font = GlyphFont::open(read_corpus_config(corpus_dir).font_path);
            std::shared_ptr<const TextEncoder> encoder;
            if (gc.use_text) encoder = encoder_for(cfg, gc);

            Trainer trainer(tc, gc, font, encoder, std::move(corpus));
            if (!resume.empty()) trainer.load(resume);
            fs::create_directories(out_dir);
            std::ofstream log(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
            check(log.good(), "train_io", "cannot open log file " + log_path);
            trainer.log_sink = [&log](const std::string& line) { log << line << "\n"; };

            LossReport last{};
            while (trainer.state().epoch < tc.epochs) last = trainer.train_epoch();
            std::string final_path = (fs::path(out_dir) / "latest.ckpt").string();
            trainer.save(final_path);
            py::dict d;
            d["checkpoint"] = final_path;
            d["epochs"] = tc.epochs;
            d["rec"] = last.rec;
            d["per"] = last.per;
            d["adv_g"] = last.adv_g;
            d["adv_d"] = last.adv_d;
            d["total_g"] = last.total_g;
            d["lambda1"] = last.lambda1;
            return d;
        },
        py::arg("config"), py::arg("resume") = std::string(),
        "Train from a flat config dict (same keys as the CLI train verb); "
        "returns the final checkpoint path and last-epoch losses.");

    m.def(
        "generate",
        [](const std::string& checkpoint, const py::array& background, const py::list& elements,
           const py::dict& config, int align) {
            KVConfig cfg = to_cfg(config);
            GenConfig gc = GenConfig::from_config(read_checkpoint_config(checkpoint));
            TextPainterModel model(gc, 1);
            nn::Adam opt_g(model.g_params().items(), 1e-3);
            nn::Adam opt_d(model.d_params().items(), 1e-3);
            TrainState st;
            load_checkpoint(checkpoint, model, opt_g, opt_d, st);

            Image bg = to_image(background);
            check(bg.c == 3, "generate_input", "background must be 3-channel");
            PosterSample s;
            s.source_id = "sample";
            s.background = bg;
            s.composed = bg;
            Rect full{0, 0, bg.w, bg.h};
            for (auto el_obj : elements) {
                py::dict e = py::cast<py::dict>(el_obj);
                ElementMeta el;
                el.content = py::cast<std::string>(e["text"]);
                el.bbox = to_rect(py::cast<py::sequence>(e["bbox"]));
                check(el.bbox.w >= 1 && el.bbox.h >= 1 && full.contains(el.bbox),
                      "annotation_bad", "element bbox outside the poster: " + el.content);
                check(!el.content.empty(), "annotation_bad", "element with empty text");
                s.elements.push_back(std::move(el));
            }

            py::list ids, crops;
            Image composite = bg;
            if (!s.elements.empty()) {
                std::vector<std::pair<const PosterSample*, int>> items;
                for (size_t i = 0; i < s.elements.size(); ++i)
                    items.emplace_back(&s, static_cast<int>(i));
                auto font = GlyphFont::open(cfg.get_str("glyph.font_path", "builtin"));
                GenBatch batch = make_batch(items, *font, align);
                TokenBatch tok;
                if (gc.use_text) {
                    auto enc = encoder_for(cfg, gc);
                    tok = make_token_batch(batch.contents, *enc);
                }
                nn::NoGrad ng;
                nn::Var fake = model.generate(batch, gc.use_text ? &tok : nullptr);
                const auto& v = fake.values();
                int H = batch.H, W = batch.W;
                for (int i = 0; i < batch.n; ++i) {
                    auto [h, w] = batch.true_sizes[static_cast<size_t>(i)];
                    auto [oy, ox] = batch.offsets[static_cast<size_t>(i)];
                    Image crop_img(h, w, 3);
                    for (int ch = 0; ch < 3; ++ch)
                        for (int y = 0; y < h; ++y)
                            for (int x = 0; x < w; ++x) {
                                size_t src =
                                    ((static_cast<size_t>(i) * 3 + ch) * H + oy + y) * W + ox + x;
                                float u = v[src] * 0.5f + 0.5f;
                                u = std::min(1.0f, std::max(0.0f, u));
                                crop_img.at(y, x, ch) =
                                    static_cast<uint8_t>(std::lround(u * 255.0f));
                            }
                    const Rect& r = s.elements[static_cast<size_t>(i)].bbox;
                    paste(composite, crop_img, r.y, r.x);
                    ids.append(batch.ids[static_cast<size_t>(i)]);
                    crops.append(from_image(crop_img));
                }
            }
            py::dict d;
            d["ids"] = ids;
            d["crops"] = crops;
            d["composite"] = from_image(composite);
            return d;
        },
        py::arg("checkpoint"), py::arg("background"), py::arg("elements"),
        py::arg("config") = py::dict(), py::arg("align") = 32,
        "Render each element dict {text, bbox} and composite onto the background.");

    m.def(
        "evaluate",
        [](const py::list& preds, const py::list& gts, uint64_t feature_seed) {
            std::vector<Image> p, g;
            for (auto a : preds) p.push_back(to_image(py::cast<py::array>(a)));
            for (auto a : gts) g.push_back(to_image(py::cast<py::array>(a)));
            return report_dict(evaluate_pairs(p, g, FidFeatures(feature_seed)));
        },
        py::arg("preds"), py::arg("gts"), py::arg("feature_seed") = 101,
        "Pairwise FID / SSIM / pooled PSNR over matched uint8 image lists.");

    m.def(
        "psnr",
        [](const py::array& a, const py::array& b) {
            return psnr(to_float(to_image(a)), to_float(to_image(b)));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "ssim",
        [](const py::array& a, const py::array& b) {
            return ssim(to_float(to_image(a)), to_float(to_image(b)));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "contrast_color",
        [](const py::array& background, const py::sequence& bbox) {
            return rgb_tuple(contrast_color(to_image(background), to_rect(bbox)));
        },
        py::arg("background"), py::arg("bbox"),
        "Highest-contrast palette color against the themes of the background.");

    m.def(
        "theme_colors",
        [](const py::array& img, int k) {
            py::list out;
            for (const auto& c : theme_colors_mmcq(to_image(img), k)) out.append(rgb_tuple(c));
            return out;
        },
        py::arg("img"), py::arg("k"), "Median-cut theme colors, most populous first.");

    m.def("palette", []() {
        py::list out;
        for (const auto& c : palette26()) out.append(rgb_tuple(c));
        return out;
    });

    m.def(
        "render_glyph",
        [](const std::string& text, int h, int w, const std::string& font_path) {
            auto font = GlyphFont::open(font_path);
            GlyphImage g = render_glyph(text, h, w, *font);
            py::array_t<float> out({g.h, g.w});
            std::memcpy(out.mutable_data(), g.pixels.data(), g.pixels.size() * sizeof(float));
            return out;
        },
        py::arg("text"), py::arg("h"), py::arg("w"), py::arg("font") = "builtin",
        "Ink coverage raster in [0, 1] for a text line.");

    m.def(
        "encode_text",
        [](const std::string& text, int dim, uint64_t seed) {
            ToyTextEncoder enc(seed, dim);
            TokenBundle tb = encode_text(text, enc);
            py::array_t<float> tokens({tb.n_tok, tb.dim});
            std::memcpy(tokens.mutable_data(), tb.tokens.data(),
                        tb.tokens.size() * sizeof(float));
            py::array_t<float> sentence(tb.dim);
            std::memcpy(sentence.mutable_data(), tb.sentence.data(),
                        tb.sentence.size() * sizeof(float));
            py::dict d;
            d["tokens"] = tokens;
            d["sentence"] = sentence;
            d["n_tokens"] = tb.n_tok;
            return d;
        },
        py::arg("text"), py::arg("dim") = 64, py::arg("seed") = 1,
        "Per-token embeddings plus the sentence vector used for fusion.");
}
