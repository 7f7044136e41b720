#pragma once

#include <memory>
#include <string>
#include <vector>

#include "textpainter/batch.hpp"
#include "textpainter/config.hpp"
#include "textpainter/nn/modules.hpp"

namespace textpainter {

// Architecture knobs. Channel ladder for generator blocks b1..b5 is
// max(base_channels >> i, 4); block6 runs at max(base_channels >> 5, 8).
struct GenConfig {
    int base_channels = 64;          // reference scale uses 512
    int style_dim = 512;
    int text_dim = 64;               // C1, must match the text encoder
    int d_k = 64;
    std::vector<int> attn_blocks = {4, 5};  // subset of {2,3,4,5}
    bool use_text = true;
    int enc_width = 32;              // encoder stem width
    std::vector<int> enc_depths = {3, 4, 6, 3};
    int disc_width = 32;

    static GenConfig from_config(const KVConfig& cfg);
    KVConfig to_config() const;
    void validate() const;
    uint64_t hash() const;

    int block_channels(int i) const;  // i in [0,5], resolution 1/32 .. 1/1
    int style_conv_count() const { return 18; }  // 12 StyleConvs + 6 RGB heads
};

// Residual stack shared by both encoders: stem conv then four stages, each a
// chain of ResBlocks whose first entry downsamples.
struct ResStage {
    std::vector<nn::ResBlock> blocks;
    ResStage() = default;
    ResStage(nn::ParamList& ps, const std::string& prefix, int cin, int cout, int depth,
             int stride, Rng& rng);
    nn::Var forward(nn::Var x) const;
};

// Glyph raster to a 1/32 bottleneck plus U-net skips at 1/2, 1/4, 1/8, 1/16.
struct GlyphEncoder {
    nn::Conv2d stem;
    ResStage s1, s2, s3, s4;
    nn::Conv2d tail;
    nn::ResBlock tail_res;
    nn::Conv2d bott;

    GlyphEncoder() = default;
    GlyphEncoder(nn::ParamList& ps, const GenConfig& cfg, Rng& rng);
    // skips[0] at 1/16, skips[1] at 1/8, skips[2] at 1/4, skips[3] at 1/2
    std::pair<nn::Var, std::vector<nn::Var>> forward(const nn::Var& glyph) const;
};

// Full poster plus position mask to a style vector s.
struct StyleEncoder {
    nn::Conv2d stem;
    ResStage s1, s2, s3, s4;
    nn::Linear fc;

    StyleEncoder() = default;
    StyleEncoder(nn::ParamList& ps, const GenConfig& cfg, Rng& rng);
    nn::Var forward(const nn::Var& bg, const nn::Var& pos_mask) const;
};

// Visual tokens query the text tokens; all three projections are bias-free
// so a zero output matrix is exactly the zero map.
struct CrossAttention {
    nn::Linear wv, wt, wout;
    int d_k = 0;
    mutable int64_t calls = 0;

    CrossAttention() = default;
    CrossAttention(nn::ParamList& ps, const std::string& prefix, int c2, int c1, int d_k,
                   Rng& rng);
    nn::Var forward(const nn::Var& x, const nn::Var& tokens,
                    const std::vector<uint8_t>& valid) const;
};

// s_fused to one per-conv latent: a shared two-layer trunk then one linear
// head per modulated convolution.
struct StyleMapping {
    nn::Linear trunk0, trunk1;
    std::vector<nn::Linear> heads;

    StyleMapping() = default;
    StyleMapping(nn::ParamList& ps, const GenConfig& cfg, Rng& rng);
    std::vector<nn::Var> forward(const nn::Var& s_fused) const;
};

// Hierarchical synthesis head. Block1 works on the bottleneck at 1/32;
// blocks 2..5 run optional cross-attention, upsample, concatenate the glyph
// skip, and apply two style convolutions; block6 blends the local background
// and emits RGB. Every block feeds an accumulated skip-RGB path.
struct Generator {
    struct Block {
        nn::ModulatedConv2d sc0, sc1, rgb;
        nn::Conv2d proj;  // after concat; blocks 2..6
        bool has_proj = false;
    };
    std::vector<Block> blocks;  // 6
    std::vector<std::unique_ptr<CrossAttention>> attn;  // indexed by block 2..5, null when absent

    Generator() = default;
    Generator(nn::ParamList& ps, const GenConfig& cfg, Rng& rng);
    nn::Var forward(const nn::Var& bottleneck, const std::vector<nn::Var>& skips,
                    const std::vector<nn::Var>& ws, const nn::Var* tokens,
                    const std::vector<uint8_t>* valid, const nn::Var& local_bg,
                    const GenConfig& cfg) const;
};

// Scores image/background pairs; channel-concatenated conditioning.
struct Discriminator {
    nn::Conv2d stem;
    std::vector<nn::Conv2d> downs;
    nn::Linear fc;

    Discriminator() = default;
    Discriminator(nn::ParamList& ps, const GenConfig& cfg, Rng& rng);
    nn::Var forward(const nn::Var& img, const nn::Var& local_bg) const;
};

class TextPainterModel {
public:
    TextPainterModel(GenConfig cfg, uint64_t seed);

    const GenConfig& config() const { return cfg_; }
    nn::ParamList& g_params() { return g_ps_; }
    nn::ParamList& d_params() { return d_ps_; }
    const nn::ParamList& g_params() const { return g_ps_; }
    const nn::ParamList& d_params() const { return d_ps_; }

    std::pair<nn::Var, std::vector<nn::Var>> glyph_encode(const nn::Var& glyph) const;
    nn::Var style_encode(const nn::Var& bg, const nn::Var& pos_mask) const;
    // s + projected z0; identity when the model runs text-free.
    nn::Var fuse_sentence(const nn::Var& s, const nn::Var& z0) const;

    // tokens may be null only when cfg.use_text is false or attn_blocks is
    // empty; glyph/background tensors come straight from a GenBatch.
    nn::Var generate(const GenBatch& batch, const TokenBatch* tokens) const;
    nn::Var discriminate(const nn::Var& img, const nn::Var& local_bg) const;

    int64_t attn_calls() const;

    GlyphEncoder glyph_enc;
    StyleEncoder style_enc;
    nn::Linear z0_proj;  // bias-free
    StyleMapping mapping;
    Generator gen;
    Discriminator disc;

private:
    GenConfig cfg_;
    nn::ParamList g_ps_, d_ps_;
};

}  // namespace textpainter
