#pragma once

#include <memory>
#include <string>
#include <vector>

#include "textpainter/common.hpp"
#include "textpainter/config.hpp"

namespace textpainter {

constexpr int kMaxTextTokens = 16;

// Sentence token z0 occupies row 0 of `tokens`; character tokens follow.
// Rows are truncated to kMaxTextTokens; `valid` marks real rows.
struct TokenBundle {
    int n_tok = 0;
    int dim = 0;
    std::vector<float> tokens;    // n_tok x dim, row-major
    std::vector<float> sentence;  // z0, dim
    std::vector<uint8_t> valid;   // n_tok
};

class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual int dim() const = 0;
    // Full untruncated sequence: z0 followed by one token per character.
    virtual std::vector<std::vector<float>> encode_sequence(const std::string& content) const = 0;
};

// Deterministic hash-seeded unit-norm character embeddings; z0 is the mean
// of all character embeddings (computed before truncation). Frozen: holds no
// trainable tensors at all.
class ToyTextEncoder : public TextEncoder {
public:
    ToyTextEncoder(uint64_t vocab_seed, int C1);
    int dim() const override { return dim_; }
    std::vector<std::vector<float>> encode_sequence(const std::string& content) const override;
    std::vector<float> char_embedding(char32_t cp) const;

private:
    uint64_t seed_;
    int dim_;
};

// Adapter for precomputed external embeddings: a JSON table mapping strings
// to token matrices, standing in for a real pretrained text encoder.
class JsonTextEncoder : public TextEncoder {
public:
    explicit JsonTextEncoder(const std::string& path);
    int dim() const override { return dim_; }
    std::vector<std::vector<float>> encode_sequence(const std::string& content) const override;

private:
    int dim_ = 0;
    std::vector<std::pair<std::string, std::vector<std::vector<float>>>> table_;
};

// Applies the 16-token truncation and builds the validity mask.
TokenBundle encode_text(const std::string& content, const TextEncoder& encoder);

// Reads `textsem.backend` (toy|external), `textsem.dim`, `textsem.seed`,
// `textsem.table_path`.
std::unique_ptr<TextEncoder> make_text_encoder(const KVConfig& cfg);

}  // namespace textpainter
