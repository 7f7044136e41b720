#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

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

namespace fs = std::filesystem;
using nlohmann::json;
using namespace textpainter;

namespace {

void print_usage(std::ostream& os) {
    os << "usage: textpainter <verb> [options]\n"
          "verbs:\n"
          "  synth      synthesize a poster corpus\n"
          "  train      train a model from a flat key=value config\n"
          "  generate   render text images for a poster + annotation\n"
          "  eval       compare prediction and ground-truth image dirs\n"
          "  baseline   color prediction baselines over a corpus\n"
          "  composite  paste text crops back onto a background\n"
          "run 'textpainter <verb> --help' for options and the config keys read\n";
}

// TEXTPAINTER_SEED overrides whatever seed the config or flags chose.
bool env_seed(uint64_t& seed) {
    const char* s = std::getenv("TEXTPAINTER_SEED");
    if (s == nullptr || *s == '\0') return false;
    char* end = nullptr;
    unsigned long long v = std::strtoull(s, &end, 10);
    check(end != nullptr && *end == '\0', "bad_env",
          std::string("TEXTPAINTER_SEED is not an unsigned integer: ") + s);
    seed = static_cast<uint64_t>(v);
    return true;
}

KVConfig load_config(const std::string& path) {
    if (path.empty()) return KVConfig{};
    return KVConfig::from_file(path);
}

int parse_or_exit(CLI::App& app, int argc, const char* const* argv) {
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::ParseError& e) {
        std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
        std::exit(2);
    }
    return -1;  // parsed, keep going
}

struct Annotation {
    std::string stem;  // element ids are "<stem>:<index>"
    std::vector<ElementMeta> elements;
};

Annotation read_annotation(const std::string& path, const Image& background) {
    std::ifstream f(path);
    check(f.good(), "annotation_open", "cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        fail("annotation_parse", path + ": " + e.what());
    }
    Annotation ann;
    ann.stem = fs::path(path).stem().string();
    check(j.contains("elements") && j["elements"].is_array(), "annotation_parse",
          path + ": missing elements array");
    Rect full{0, 0, background.w, background.h};
    for (const auto& e : j["elements"]) {
        ElementMeta el;
        el.content = e.at("text").get<std::string>();
        const auto& bb = e.at("bbox");
        check(bb.is_array() && bb.size() == 4, "annotation_parse",
              path + ": bbox must be [x, y, w, h]");
        el.bbox = Rect{bb[0].get<int>(), bb[1].get<int>(), bb[2].get<int>(), bb[3].get<int>()};
        check(el.bbox.w >= 1 && el.bbox.h >= 1 && full.contains(el.bbox), "annotation_bad",
              "element bbox outside the poster: " + el.content);
        check(!el.content.empty(), "annotation_bad", "element with empty text");
        ann.elements.push_back(std::move(el));
    }
    return ann;
}

// The encoder width has to match the model's text channels; an explicit
// textsem.dim still wins so a mismatch fails loudly downstream.
std::shared_ptr<const TextEncoder> encoder_for(const KVConfig& cfg, const GenConfig& gc) {
    KVConfig c = cfg;
    if (!c.has("textsem.dim")) c.set("textsem.dim", std::to_string(gc.text_dim));
    return std::shared_ptr<const TextEncoder>(make_text_encoder(c));
}

std::vector<std::string> png_names(const std::string& dir) {
    check(fs::is_directory(dir), "eval_input", "not a directory: " + dir);
    std::vector<std::string> names;
    for (const auto& de : fs::directory_iterator(dir))
        if (de.is_regular_file() && de.path().extension() == ".png")
            names.push_back(de.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

int run_synth(int argc, const char* const* argv) {
    CLI::App app{"synthesize a poster corpus (images/, annotations/, meta.json)"};
    uint64_t seed = 1;
    int n = 0;
    std::string out, config;
    bool filter = false;
    app.add_option("--seed", seed, "corpus seed (default 1)");
    app.add_option("--n", n, "number of posters")->required();
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--config", config, "flat key=value config file");
    app.add_flag("--filter", filter, "drop occluded elements and empty posters");
    app.footer(
        "Config keys read:\n"
        "  corpus.poster_w corpus.poster_h corpus.max_texts\n"
        "  corpus.min_h corpus.max_h corpus.min_w corpus.max_w\n"
        "  corpus.kw_prob glyph.font_path\n"
        "TEXTPAINTER_SEED overrides --seed.");
    if (int rc = parse_or_exit(app, argc, argv); rc >= 0) return rc;

    KVConfig cfg = load_config(config);
    CorpusConfig cc = CorpusConfig::from_config(cfg);
    cc.validate();
    env_seed(seed);
    check(n >= 1, "synth_config", "--n must be >= 1");
    auto samples = synth_corpus(seed, n, cc);
    if (filter) samples = filter_corpus(std::move(samples));
    size_t elements = 0;
    for (const auto& s : samples) elements += s.elements.size();
    write_corpus(out, samples, cc);
    std::cout << json{{"posters", samples.size()}, {"elements", elements}, {"out", out}}.dump()
              << "\n";
    return 0;
}

int run_train(int argc, const char* const* argv) {
    CLI::App app{"train a model; logs one JSON line per step"};
    std::string config, resume;
    app.add_option("--config", config, "flat key=value config file")->required();
    app.add_option("--resume", resume, "checkpoint to continue from");
    app.footer(
        "Config keys read:\n"
        "  train.corpus (required, corpus dir) train.out (checkpoint dir, default runs)\n"
        "  train.log (JSONL step log, default <train.out>/train_log.jsonl)\n"
        "  train.epochs train.batch_size train.lr_g train.lr_d train.seed\n"
        "  train.checkpoint_interval train.align train.perceptual_seed\n"
        "  loss.r loss.lambda2 loss.adv_variant\n"
        "  model.base_channels model.style_dim model.text_dim model.d_k\n"
        "  model.attn_blocks model.use_text model.enc_width model.enc_depths\n"
        "  model.disc_width\n"
        "  textsem.backend textsem.seed textsem.dim textsem.table_path\n"
        "Log record: {step, epoch, rec, per, adv_g, adv_d, lambda1}.\n"
        "TEXTPAINTER_SEED overrides train.seed.");
    if (int rc = parse_or_exit(app, argc, argv); rc >= 0) return rc;

    KVConfig cfg = KVConfig::from_file(config);
    uint64_t seed = 0;
    if (env_seed(seed)) cfg.set("train.seed", std::to_string(seed));
    TrainConfig tc = TrainConfig::from_config(cfg);
    tc.validate();
    GenConfig gc = GenConfig::from_config(cfg);
    gc.validate();

    std::string corpus_dir = cfg.get_str("train.corpus", "");
    check(!corpus_dir.empty(), "train_config", "train.corpus must point at a corpus dir");
    std::string out_dir = cfg.get_str("train.out", "runs");
    std::string log_path = cfg.get_str("train.log", (fs::path(out_dir) / "train_log.jsonl").string());

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

    while (trainer.state().epoch < tc.epochs) {
        LossReport r = trainer.train_epoch();
        log.flush();
        int64_t done = trainer.state().epoch;  // already advanced past this epoch
        std::cout << json{{"epoch", done - 1}, {"rec", r.rec},         {"per", r.per},
                          {"adv_g", r.adv_g},  {"adv_d", r.adv_d},     {"total_g", r.total_g},
                          {"lambda1", r.lambda1}}
                         .dump()
                  << "\n";
        bool last = done >= tc.epochs;
        if (tc.checkpoint_interval > 0 && done % tc.checkpoint_interval == 0 && !last) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%04lld.ckpt", static_cast<long long>(done));
            trainer.save((fs::path(out_dir) / name).string());
        }
    }
    std::string final_path = (fs::path(out_dir) / "latest.ckpt").string();
    trainer.save(final_path);
    std::cout << json{{"checkpoint", final_path}, {"epochs", tc.epochs}}.dump() << "\n";
    return 0;
}

int run_generate(int argc, const char* const* argv) {
    CLI::App app{"render each annotated element and the composite poster"};
    std::string ckpt, poster, annotation, out, config;
    int align = 32;
    app.add_option("--checkpoint", ckpt, "trained checkpoint")->required();
    app.add_option("--poster", poster, "background PNG")->required();
    app.add_option("--annotation", annotation, "JSON with elements[].text and .bbox")->required();
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--config", config, "extra config (encoder and font keys)");
    app.add_option("--align", align, "crop padding multiple, match training (default 32)");
    app.footer(
        "Model keys come from the checkpoint and are not overridable.\n"
        "Config keys read:\n"
        "  textsem.backend textsem.seed textsem.dim textsem.table_path\n"
        "  glyph.font_path\n"
        "Writes <out>/<stem>:<index>.png per element plus <out>/composite.png;\n"
        "with no elements the composite equals the background bit for bit.");
    if (int rc = parse_or_exit(app, argc, argv); rc >= 0) return rc;

    KVConfig cfg = load_config(config);
    GenConfig gc = GenConfig::from_config(read_checkpoint_config(ckpt));
    TextPainterModel model(gc, 1);
    nn::Adam opt_g(model.g_params().items(), 1e-3), opt_d(model.d_params().items(), 1e-3);
    TrainState st;
    load_checkpoint(ckpt, model, opt_g, opt_d, st);

    Image bg = read_png(poster);
    check(bg.c == 3, "generate_input", "background must be 3-channel");
    Annotation ann = read_annotation(annotation, bg);
    fs::create_directories(out);

    Image composite = bg;
    json index = json::array();
    if (!ann.elements.empty()) {
        PosterSample s;
        s.source_id = ann.stem;
        s.background = bg;
        s.composed = bg;  // gt window unused at inference
        s.elements = ann.elements;
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
                        size_t src = ((static_cast<size_t>(i) * 3 + ch) * H + oy + y) * W + ox + x;
                        float u = v[src] * 0.5f + 0.5f;
                        u = std::min(1.0f, std::max(0.0f, u));
                        crop_img.at(y, x, ch) = static_cast<uint8_t>(std::lround(u * 255.0f));
                    }
            std::string id = batch.ids[static_cast<size_t>(i)];
            write_png((fs::path(out) / (id + ".png")).string(), crop_img);
            const Rect& r = s.elements[static_cast<size_t>(i)].bbox;
            paste(composite, crop_img, r.y, r.x);
            index.push_back(json{{"element_id", id}, {"bbox", {r.x, r.y, r.w, r.h}}});
        }
    }
    std::string comp_path = (fs::path(out) / "composite.png").string();
    write_png(comp_path, composite);
    std::cout << json{{"elements", ann.elements.size()},
                      {"composite", comp_path},
                      {"outputs", index}}
                     .dump()
              << "\n";
    return 0;
}

int run_eval(int argc, const char* const* argv) {
    CLI::App app{"FID / SSIM / PSNR between paired prediction and ground-truth dirs"};
    std::string pred_dir, gt_dir, report;
    uint64_t feature_seed = 101;
    app.add_option("--pred-dir", pred_dir, "directory of predicted PNGs")->required();
    app.add_option("--gt-dir", gt_dir, "directory of ground-truth PNGs")->required();
    app.add_option("--report", report, "output JSON path")->required();
    app.add_option("--feature-seed", feature_seed, "FID feature extractor seed (default 101)");
    app.footer(
        "Pairs are matched by file name; the name sets must be identical and\n"
        "hold at least two pairs. No config keys are read.\n"
        "Report schema: {\"fid\", \"n_pairs\", \"psnr\", \"ssim\"}; psnr is \"inf\"\n"
        "when every pair matches exactly.");
    if (int rc = parse_or_exit(app, argc, argv); rc >= 0) return rc;

    auto pred_names = png_names(pred_dir);
    auto gt_names = png_names(gt_dir);
    check(pred_names == gt_names, "eval_input",
          "prediction and ground-truth file names differ");
    check(pred_names.size() >= 2, "eval_input", "need at least two paired images");
    std::vector<Image> preds, gts;
    for (const auto& name : pred_names) {
        preds.push_back(read_png((fs::path(pred_dir) / name).string()));
        gts.push_back(read_png((fs::path(gt_dir) / name).string()));
    }
    MetricsReport mr = evaluate_pairs(preds, gts, FidFeatures(feature_seed));
    std::string body = metrics_json(mr);
    std::ofstream f(report);
    check(f.good(), "eval_io", "cannot open report path " + report);
    f << body << "\n";
    check(f.good(), "eval_io", "failed writing " + report);
    std::cout << body << "\n";
    return 0;
}

int run_baseline(int argc, const char* const* argv) {
    CLI::App app{"color prediction baselines; writes one {element_id, rgb} per element"};
    std::string method, corpus_dir, out, index_dir;
    uint64_t seed = 1;
    int epochs = 30, batch_size = 16;
    double lr = 2e-3;
    app.add_option("--method", method, "classify | contrast | retrieve")
        ->required()
        ->check(CLI::IsMember({"classify", "contrast", "retrieve"}));
    app.add_option("--corpus", corpus_dir, "corpus directory to predict over")->required();
    app.add_option("--out", out, "output predictions JSON")->required();
    app.add_option("--index-corpus", index_dir,
                   "retrieval database corpus; defaults to --corpus with the query's own "
                   "poster excluded");
    app.add_option("--seed", seed, "classifier init seed (default 1)");
    app.add_option("--epochs", epochs, "classifier training epochs (default 30)");
    app.add_option("--batch-size", batch_size, "classifier batch size (default 16)");
    app.add_option("--lr", lr, "classifier learning rate (default 2e-3)");
    app.footer(
        "No config keys are read; the corpus meta.json supplies everything.\n"
        "classify trains on the same corpus it predicts. TEXTPAINTER_SEED\n"
        "overrides --seed.");
    if (int rc = parse_or_exit(app, argc, argv); rc >= 0) return rc;
    env_seed(seed);

    auto corpus = read_corpus(corpus_dir);
    struct Pred {
        std::string id;
        Rgb rgb;
    };
    std::vector<Pred> preds;

    if (method == "contrast") {
        for (const auto& s : corpus)
            for (size_t e = 0; e < s.elements.size(); ++e)
                preds.push_back({s.source_id + ":" + std::to_string(e),
                                 contrast_color(s.background, s.elements[e].bbox)});
    } else if (method == "classify") {
        ColorClassifier clf(seed);
        clf.train(corpus, epochs, batch_size, lr);
        for (const auto& s : corpus)
            for (size_t e = 0; e < s.elements.size(); ++e)
                preds.push_back({s.source_id + ":" + std::to_string(e),
                                 clf.classify(s.background, s.elements[e].bbox)});
    } else {
        RetrievalIndex index;
        std::vector<size_t> poster_of;  // row -> corpus poster, for self exclusion
        if (!index_dir.empty()) {
            index = build_retrieval_index(read_corpus(index_dir));
        } else {
            index = build_retrieval_index(corpus);
            for (size_t p = 0; p < corpus.size(); ++p)
                for (size_t e = 0; e < corpus[p].elements.size(); ++e) poster_of.push_back(p);
        }
        for (size_t p = 0; p < corpus.size(); ++p) {
            const auto& s = corpus[p];
            for (size_t e = 0; e < s.elements.size(); ++e) {
                auto q = retrieval_feature(s.background, crop(s.background, s.elements[e].bbox));
                // Same metric as retrieve_color: squared L2, earliest tie wins.
                double best = 0;
                size_t best_row = index.features.size();
                for (size_t r = 0; r < index.features.size(); ++r) {
                    if (!poster_of.empty() && poster_of[r] == p) continue;
                    double d = 0;
                    for (size_t k = 0; k < q.size(); ++k) {
                        double diff = static_cast<double>(q[k]) - index.features[r][k];
                        d += diff * diff;
                    }
                    if (best_row == index.features.size() || d < best) {
                        best = d;
                        best_row = r;
                    }
                }
                check(best_row < index.features.size(), "baseline_input",
                      "retrieval database has no rows outside the query poster");
                preds.push_back({s.source_id + ":" + std::to_string(e), index.labels[best_row]});
            }
        }
    }

    json arr = json::array();
    for (const auto& pr : preds)
        arr.push_back(json{{"element_id", pr.id}, {"rgb", {pr.rgb[0], pr.rgb[1], pr.rgb[2]}}});
    std::ofstream f(out);
    check(f.good(), "baseline_io", "cannot open " + out);
    f << arr.dump(2) << "\n";
    check(f.good(), "baseline_io", "failed writing " + out);
    std::cout << json{{"method", method}, {"predictions", preds.size()}, {"out", out}}.dump()
              << "\n";
    return 0;
}

int run_composite(int argc, const char* const* argv) {
    CLI::App app{"paste per-element crops back onto a background"};
    std::string background, annotation, crops, out;
    app.add_option("--background", background, "background PNG")->required();
    app.add_option("--annotation", annotation, "JSON with elements[].text and .bbox")->required();
    app.add_option("--crops", crops, "directory holding <stem>:<index>.png crops")->required();
    app.add_option("--out", out, "output PNG path")->required();
    app.footer(
        "Crop sizes must equal their bbox sizes. No config keys are read.\n"
        "With no elements the output equals the background bit for bit.");
    if (int rc = parse_or_exit(app, argc, argv); rc >= 0) return rc;

    Image bg = read_png(background);
    check(bg.c == 3, "composite_input", "background must be 3-channel");
    Annotation ann = read_annotation(annotation, bg);
    Image result = bg;
    for (size_t i = 0; i < ann.elements.size(); ++i) {
        const Rect& r = ann.elements[i].bbox;
        std::string name = ann.stem + ":" + std::to_string(i) + ".png";
        Image crop_img = read_png((fs::path(crops) / name).string());
        check(crop_img.h == r.h && crop_img.w == r.w && crop_img.c == 3, "composite_input",
              name + " does not match its bbox size");
        paste(result, crop_img, r.y, r.x);
    }
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_png(out, result);
    std::cout << json{{"elements", ann.elements.size()}, {"out", out}}.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        print_usage(std::cerr);
        return 2;
    }
    std::string verb = argv[1];
    if (verb == "--help" || verb == "-h" || verb == "help") {
        print_usage(std::cout);
        return 0;
    }
    try {
        if (verb == "synth") return run_synth(argc - 1, argv + 1);
        if (verb == "train") return run_train(argc - 1, argv + 1);
        if (verb == "generate") return run_generate(argc - 1, argv + 1);
        if (verb == "eval") return run_eval(argc - 1, argv + 1);
        if (verb == "baseline") return run_baseline(argc - 1, argv + 1);
        if (verb == "composite") return run_composite(argc - 1, argv + 1);
    } catch (const Error& e) {
        std::cerr << json{{"error", e.code()}, {"message", e.what()}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
        return 1;
    }
    std::cerr << json{{"error", "usage"}, {"message", "unknown verb: " + verb}}.dump() << "\n";
    return 2;
}
