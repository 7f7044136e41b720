#include "textpainter/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace textpainter {

using namespace nn;

namespace {

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(std::stoi(tok));
    }
    return out;
}

std::string join_int_list(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

int GenConfig::block_channels(int i) const {
    check(i >= 0 && i <= 5, "model_config", "block index out of range");
    if (i == 5) return std::max(base_channels >> 5, 8);
    return std::max(base_channels >> i, 4);
}

GenConfig GenConfig::from_config(const KVConfig& cfg) {
    GenConfig g;
    g.base_channels = static_cast<int>(cfg.get_int("model.base_channels", g.base_channels));
    g.style_dim = static_cast<int>(cfg.get_int("model.style_dim", g.style_dim));
    g.text_dim = static_cast<int>(cfg.get_int("model.text_dim", g.text_dim));
    g.d_k = static_cast<int>(cfg.get_int("model.d_k", g.d_k));
    if (cfg.has("model.attn_blocks"))
        g.attn_blocks = parse_int_list(cfg.get_str("model.attn_blocks", ""));
    g.use_text = cfg.get_bool("model.use_text", g.use_text);
    g.enc_width = static_cast<int>(cfg.get_int("model.enc_width", g.enc_width));
    if (cfg.has("model.enc_depths"))
        g.enc_depths = parse_int_list(cfg.get_str("model.enc_depths", ""));
    g.disc_width = static_cast<int>(cfg.get_int("model.disc_width", g.disc_width));
    g.validate();
    return g;
}

KVConfig GenConfig::to_config() const {
    KVConfig cfg;
    cfg.set("model.base_channels", std::to_string(base_channels));
    cfg.set("model.style_dim", std::to_string(style_dim));
    cfg.set("model.text_dim", std::to_string(text_dim));
    cfg.set("model.d_k", std::to_string(d_k));
    cfg.set("model.attn_blocks", join_int_list(attn_blocks));
    cfg.set("model.use_text", use_text ? "true" : "false");
    cfg.set("model.enc_width", std::to_string(enc_width));
    cfg.set("model.enc_depths", join_int_list(enc_depths));
    cfg.set("model.disc_width", std::to_string(disc_width));
    return cfg;
}

void GenConfig::validate() const {
    check(base_channels >= 8, "model_config", "base_channels must be >= 8");
    check(style_dim >= 8 && text_dim >= 8, "model_config", "style/text dims must be >= 8");
    check(d_k >= 4, "model_config", "d_k must be >= 4");
    check(enc_width >= 4 && disc_width >= 4, "model_config", "encoder widths must be >= 4");
    check(enc_depths.size() == 4, "model_config", "enc_depths needs exactly 4 stages");
    for (int d : enc_depths) check(d >= 1, "model_config", "stage depth must be >= 1");
    std::set<int> seen;
    for (int b : attn_blocks) {
        check(b >= 2 && b <= 5, "model_config", "attn_blocks entries must be in {2,3,4,5}");
        check(seen.insert(b).second, "model_config", "duplicate attn block");
    }
}

uint64_t GenConfig::hash() const { return to_config().hash(); }

ResStage::ResStage(nn::ParamList& ps, const std::string& prefix, int cin, int cout, int depth,
                   int stride, Rng& rng) {
    blocks.emplace_back(ps, prefix + ".b0", cin, cout, stride, rng);
    for (int i = 1; i < depth; ++i)
        blocks.emplace_back(ps, prefix + ".b" + std::to_string(i), cout, cout, 1, rng);
}

Var ResStage::forward(Var x) const {
    for (const auto& b : blocks) x = b.forward(x);
    return x;
}

GlyphEncoder::GlyphEncoder(nn::ParamList& ps, const GenConfig& cfg, Rng& rng) {
    const auto& d = cfg.enc_depths;
    stem = nn::Conv2d(ps, "genc.stem", 1, cfg.block_channels(4), 3, 2, 1, rng);
    s1 = ResStage(ps, "genc.s1", cfg.block_channels(4), cfg.block_channels(4), d[0], 1, rng);
    s2 = ResStage(ps, "genc.s2", cfg.block_channels(4), cfg.block_channels(3), d[1], 2, rng);
    s3 = ResStage(ps, "genc.s3", cfg.block_channels(3), cfg.block_channels(2), d[2], 2, rng);
    s4 = ResStage(ps, "genc.s4", cfg.block_channels(2), cfg.block_channels(1), d[3], 2, rng);
    tail = nn::Conv2d(ps, "genc.tail", cfg.block_channels(1), cfg.block_channels(0), 3, 2, 1, rng);
    tail_res = nn::ResBlock(ps, "genc.tailres", cfg.block_channels(0), cfg.block_channels(0), 1, rng);
    bott = nn::Conv2d(ps, "genc.bott", cfg.block_channels(0), cfg.block_channels(0), 3, 1, 1, rng);
}

std::pair<Var, std::vector<Var>> GlyphEncoder::forward(const Var& glyph) const {
    check(glyph.shape().size() == 4 && glyph.dim(1) == 1, "model_shape",
          "glyph_encode needs (N,1,H,W)");
    check(glyph.dim(2) % 32 == 0 && glyph.dim(3) % 32 == 0, "model_shape",
          "glyph_encode needs /32-aligned spatial dims");
    Var x = leaky_relu(stem.forward(glyph));
    Var x1 = s1.forward(x);    // 1/2
    Var x2 = s2.forward(x1);   // 1/4
    Var x3 = s3.forward(x2);   // 1/8
    Var x4 = s4.forward(x3);   // 1/16
    Var t = leaky_relu(tail.forward(x4));  // 1/32
    t = tail_res.forward(t);
    Var b = leaky_relu(bott.forward(t));
    return {b, {x4, x3, x2, x1}};
}

StyleEncoder::StyleEncoder(nn::ParamList& ps, const GenConfig& cfg, Rng& rng) {
    const auto& d = cfg.enc_depths;
    int w0 = cfg.enc_width;
    int w1 = std::min(w0 * 2, 512), w2 = std::min(w0 * 4, 512), w3 = std::min(w0 * 8, 512);
    stem = nn::Conv2d(ps, "senc.stem", 4, w0, 3, 2, 1, rng);
    s1 = ResStage(ps, "senc.s1", w0, w1, d[0], 2, rng);
    s2 = ResStage(ps, "senc.s2", w1, w2, d[1], 2, rng);
    s3 = ResStage(ps, "senc.s3", w2, w3, d[2], 2, rng);
    s4 = ResStage(ps, "senc.s4", w3, w3, d[3], 2, rng);
    fc = nn::Linear(ps, "senc.fc", w3, cfg.style_dim, rng);
}

Var StyleEncoder::forward(const Var& bg, const Var& pos_mask) const {
    check(bg.shape().size() == 4 && pos_mask.shape().size() == 4, "model_shape",
          "style_encode needs NCHW inputs");
    check(bg.dim(1) == 3 && pos_mask.dim(1) == 1, "model_shape",
          "style_encode needs RGB poster and 1-channel mask");
    check(bg.dim(0) == pos_mask.dim(0) && bg.dim(2) == pos_mask.dim(2) &&
              bg.dim(3) == pos_mask.dim(3),
          "model_shape", "poster and mask sizes disagree");
    Var x = concat_channels({bg, pos_mask});
    // cheap fixed prestem: trim to a multiple of 4 and area-pool before convs
    int h4 = x.dim(2) - x.dim(2) % 4, w4 = x.dim(3) - x.dim(3) % 4;
    check(h4 >= 4 && w4 >= 4, "model_shape", "poster too small for the style encoder");
    x = avg_pool(crop_hw(x, 0, 0, h4, w4), 4);
    x = leaky_relu(stem.forward(x));
    x = s4.forward(s3.forward(s2.forward(s1.forward(x))));
    return fc.forward(global_avg_pool(x));
}

CrossAttention::CrossAttention(nn::ParamList& ps, const std::string& prefix, int c2, int c1,
                               int dk, Rng& rng)
    : d_k(dk) {
    wv = nn::Linear(ps, prefix + ".wv", c2, dk, rng, 1.f, 0.f, false);
    wt = nn::Linear(ps, prefix + ".wt", c1, dk, rng, 1.f, 0.f, false);
    wout = nn::Linear(ps, prefix + ".wout", dk, c2, rng, 1.f, 0.f, false);
}

Var CrossAttention::forward(const Var& x, const Var& tokens,
                            const std::vector<uint8_t>& valid) const {
    ++calls;
    check(x.shape().size() == 4, "model_shape", "cross_attention needs NCHW features");
    check(tokens.shape().size() == 3, "model_shape", "cross_attention needs (N,T,C1) tokens");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int T = tokens.dim(1), C1 = tokens.dim(2);
    check(tokens.dim(0) == N, "model_shape", "token batch size disagrees");
    check(valid.size() == static_cast<size_t>(N) * T, "model_shape", "valid mask size");
    const int P = H * W;

    Var zv = nchw_to_tokens(x);  // (N,P,C)
    Var q = reshape(linear(reshape(zv, {N * P, C}), wv.w, wv.b), {N, P, d_k});
    Var kv = reshape(linear(reshape(tokens, {N * T, C1}), wt.w, wt.b), {N, T, d_k});
    Var scores = mul_scalar(bmatmul_nt(q, kv), 1.f / std::sqrt(static_cast<float>(d_k)));
    Var attn = softmax_masked(scores, valid);
    Var z = add(bmatmul(attn, kv), q);
    Var out = reshape(linear(reshape(z, {N * P, d_k}), wout.w, wout.b), {N, P, C});
    return tokens_to_nchw(out, H, W);
}

StyleMapping::StyleMapping(nn::ParamList& ps, const GenConfig& cfg, Rng& rng) {
    trunk0 = nn::Linear(ps, "map.trunk0", cfg.style_dim, cfg.style_dim, rng);
    trunk1 = nn::Linear(ps, "map.trunk1", cfg.style_dim, cfg.style_dim, rng);
    for (int i = 0; i < cfg.style_conv_count(); ++i)
        heads.emplace_back(ps, "map.head" + std::to_string(i), cfg.style_dim, cfg.style_dim, rng);
}

std::vector<Var> StyleMapping::forward(const Var& s_fused) const {
    Var h = leaky_relu(trunk1.forward(leaky_relu(trunk0.forward(s_fused))));
    std::vector<Var> ws;
    ws.reserve(heads.size());
    for (const auto& head : heads) ws.push_back(head.forward(h));
    return ws;
}

Generator::Generator(nn::ParamList& ps, const GenConfig& cfg, Rng& rng) {
    blocks.resize(6);
    attn.resize(6);
    const int S = cfg.style_dim;
    for (int i = 0; i < 6; ++i) {
        Block& b = blocks[static_cast<size_t>(i)];
        std::string p = "gen.b" + std::to_string(i + 1);
        int cout = cfg.block_channels(i);
        if (i == 0) {
            b.sc0 = nn::ModulatedConv2d(ps, p + ".sc0", cout, cout, 3, S, true, rng);
        } else {
            int cin = cfg.block_channels(i - 1);
            int extra = (i == 5) ? 3 : cfg.block_channels(i);  // I_lb or glyph skip
            b.proj = nn::Conv2d(ps, p + ".proj", cin + extra, cout, 1, 1, 0, rng);
            b.has_proj = true;
            b.sc0 = nn::ModulatedConv2d(ps, p + ".sc0", cout, cout, 3, S, true, rng);
            if (i >= 1 && i <= 4 && cfg.use_text &&
                std::find(cfg.attn_blocks.begin(), cfg.attn_blocks.end(), i + 1) !=
                    cfg.attn_blocks.end())
                attn[static_cast<size_t>(i)] = std::make_unique<CrossAttention>(
                    ps, "attn.b" + std::to_string(i + 1), cin, cfg.text_dim, cfg.d_k, rng);
        }
        b.sc1 = nn::ModulatedConv2d(ps, p + ".sc1", cout, cout, 3, S, true, rng);
        b.rgb = nn::ModulatedConv2d(ps, p + ".rgb", cout, 3, 1, S, false, rng);
    }
}

Var Generator::forward(const Var& bottleneck, const std::vector<Var>& skips,
                       const std::vector<Var>& ws, const Var* tokens,
                       const std::vector<uint8_t>* valid, const Var& local_bg,
                       const GenConfig& cfg) const {
    check(ws.size() == static_cast<size_t>(cfg.style_conv_count()), "model_shape",
          "style vector count disagrees with the generator");
    check(skips.size() == 4, "model_shape", "generator needs 4 glyph skips");
    size_t widx = 0;
    auto next_w = [&]() -> const Var& { return ws[widx++]; };

    Var x = bottleneck, rgb;
    for (int i = 0; i < 6; ++i) {
        const Block& b = blocks[static_cast<size_t>(i)];
        if (i >= 1) {
            if (attn[static_cast<size_t>(i)]) {
                check(tokens != nullptr && valid != nullptr, "model_shape",
                      "attention blocks need text tokens");
                x = attn[static_cast<size_t>(i)]->forward(x, *tokens, *valid);
            }
            x = upsample_nearest2(x);
            x = concat_channels({x, i == 5 ? local_bg : skips[static_cast<size_t>(i - 1)]});
            x = leaky_relu(b.proj.forward(x));
        }
        x = leaky_relu(b.sc0.forward(x, next_w()));
        x = leaky_relu(b.sc1.forward(x, next_w()));
        Var r = b.rgb.forward(x, next_w());
        rgb = (i == 0) ? r : add(r, blur3(upsample_nearest2(rgb)));
    }
    return tanh_(rgb);
}

Discriminator::Discriminator(nn::ParamList& ps, const GenConfig& cfg, Rng& rng) {
    int c = cfg.disc_width;
    stem = nn::Conv2d(ps, "disc.stem", 6, c, 3, 1, 1, rng);
    for (int i = 0; i < 4; ++i) {
        int cn = std::min(c * 2, cfg.disc_width * 8);
        downs.emplace_back(ps, "disc.d" + std::to_string(i), c, cn, 3, 2, 1, rng);
        c = cn;
    }
    fc = nn::Linear(ps, "disc.fc", c, 1, rng);
}

Var Discriminator::forward(const Var& img, const Var& local_bg) const {
    check(img.shape().size() == 4 && img.dim(1) == 3, "model_shape",
          "discriminate needs (N,3,H,W) images");
    check(img.shape() == local_bg.shape(), "model_shape",
          "image and local background shapes disagree");
    Var x = leaky_relu(stem.forward(concat_channels({img, local_bg})));
    for (const auto& d : downs) x = leaky_relu(d.forward(x));
    Var s = fc.forward(global_avg_pool(x));
    return reshape(s, {img.dim(0)});
}

TextPainterModel::TextPainterModel(GenConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    glyph_enc = GlyphEncoder(g_ps_, cfg_, rng);
    style_enc = StyleEncoder(g_ps_, cfg_, rng);
    if (cfg_.use_text)
        z0_proj = nn::Linear(g_ps_, "zproj", cfg_.text_dim, cfg_.style_dim, rng, 1.f, 0.f, false);
    mapping = StyleMapping(g_ps_, cfg_, rng);
    gen = Generator(g_ps_, cfg_, rng);
    disc = Discriminator(d_ps_, cfg_, rng);
}

std::pair<Var, std::vector<Var>> TextPainterModel::glyph_encode(const Var& glyph) const {
    return glyph_enc.forward(glyph);
}

Var TextPainterModel::style_encode(const Var& bg, const Var& pos_mask) const {
    return style_enc.forward(bg, pos_mask);
}

Var TextPainterModel::fuse_sentence(const Var& s, const Var& z0) const {
    if (!cfg_.use_text) return s;
    return add(s, z0_proj.forward(z0));
}

Var TextPainterModel::generate(const GenBatch& batch, const TokenBatch* tokens) const {
    if (cfg_.use_text) {
        check(tokens != nullptr, "model_shape", "text-conditional model needs a token batch");
        check(tokens->dim == cfg_.text_dim, "model_shape",
              "token dim disagrees with model.text_dim");
        check(tokens->n == batch.n, "model_shape", "token batch size disagrees");
    }
    Var glyph{nn::TensorData(batch.glyph)};
    Var local_bg{nn::TensorData(batch.local_bg)};
    Var bg_full{nn::TensorData(batch.bg_full)};
    Var pos_mask{nn::TensorData(batch.pos_mask)};

    auto [bott, skips] = glyph_enc.forward(glyph);
    Var s = style_enc.forward(bg_full, pos_mask);
    Var s_fused = s;
    Var tok;
    if (cfg_.use_text) {
        Var z0{nn::TensorData(tokens->z0)};
        s_fused = fuse_sentence(s, z0);
        tok = Var{nn::TensorData(tokens->tokens)};
    }
    std::vector<Var> ws = mapping.forward(s_fused);
    return gen.forward(bott, skips, ws, cfg_.use_text ? &tok : nullptr,
                       cfg_.use_text && tokens ? &tokens->valid : nullptr, local_bg, cfg_);
}

Var TextPainterModel::discriminate(const Var& img, const Var& local_bg) const {
    return disc.forward(img, local_bg);
}

int64_t TextPainterModel::attn_calls() const {
    int64_t n = 0;
    for (const auto& a : gen.attn)
        if (a) n += a->calls;
    return n;
}

}  // namespace textpainter
