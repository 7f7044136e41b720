#include "textpainter/textsem.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

#include "textpainter/rng.hpp"

namespace textpainter {

ToyTextEncoder::ToyTextEncoder(uint64_t vocab_seed, int C1) : seed_(vocab_seed), dim_(C1) {
    check(C1 >= 8, "textsem_dim", "toy encoder dim must be >= 8");
}

std::vector<float> ToyTextEncoder::char_embedding(char32_t cp) const {
    uint64_t key = fnv1a64(&cp, sizeof(cp), seed_ ^ 0xCAFEBABE12345678ull);
    Rng r(key);
    std::vector<float> e(static_cast<size_t>(dim_));
    double norm2 = 0;
    for (auto& v : e) {
        v = static_cast<float>(r.normal());
        norm2 += static_cast<double>(v) * v;
    }
    float inv = static_cast<float>(1.0 / std::sqrt(std::max(norm2, 1e-12)));
    for (auto& v : e) v *= inv;
    return e;
}

std::vector<std::vector<float>> ToyTextEncoder::encode_sequence(const std::string& content) const {
    std::u32string cps = utf8_decode(content);
    check(!cps.empty(), "textsem_content", "encode needs nonempty content");
    std::vector<std::vector<float>> seq;
    seq.reserve(cps.size() + 1);
    std::vector<float> z0(static_cast<size_t>(dim_), 0.f);
    for (char32_t cp : cps) {
        auto e = char_embedding(cp);
        for (int i = 0; i < dim_; ++i) z0[static_cast<size_t>(i)] += e[static_cast<size_t>(i)];
        seq.push_back(std::move(e));
    }
    float inv = 1.f / static_cast<float>(cps.size());
    for (auto& v : z0) v *= inv;
    seq.insert(seq.begin(), std::move(z0));
    return seq;
}

JsonTextEncoder::JsonTextEncoder(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "textsem_open", "cannot open token table: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail("textsem_parse", std::string("bad token table json: ") + e.what());
    }
    check(j.contains("dim") && j.contains("entries"), "textsem_parse",
          "token table needs dim and entries");
    dim_ = j["dim"].get<int>();
    check(dim_ >= 1, "textsem_parse", "dim must be positive");
    for (auto& [text, rows] : j["entries"].items()) {
        std::vector<std::vector<float>> mat;
        for (auto& row : rows) {
            std::vector<float> r;
            for (auto& v : row) r.push_back(v.get<float>());
            check(static_cast<int>(r.size()) == dim_, "textsem_parse",
                  "token row width mismatch for entry: " + text);
            mat.push_back(std::move(r));
        }
        check(!mat.empty(), "textsem_parse", "empty token entry: " + text);
        table_.emplace_back(text, std::move(mat));
    }
}

std::vector<std::vector<float>> JsonTextEncoder::encode_sequence(
    const std::string& content) const {
    for (const auto& [text, mat] : table_)
        if (text == content) return mat;
    fail("textsem_unknown", "no token entry for content: " + content);
}

TokenBundle encode_text(const std::string& content, const TextEncoder& encoder) {
    auto seq = encoder.encode_sequence(content);
    TokenBundle out;
    out.dim = encoder.dim();
    out.n_tok = static_cast<int>(std::min<size_t>(seq.size(), kMaxTextTokens));
    out.tokens.reserve(static_cast<size_t>(out.n_tok) * out.dim);
    for (int t = 0; t < out.n_tok; ++t) {
        const auto& row = seq[static_cast<size_t>(t)];
        check(static_cast<int>(row.size()) == out.dim, "textsem_dim",
              "encoder row width disagrees with dim()");
        out.tokens.insert(out.tokens.end(), row.begin(), row.end());
    }
    out.sentence = seq[0];
    out.valid.assign(static_cast<size_t>(out.n_tok), 1);
    for (float v : out.tokens)
        check(std::isfinite(v), "textsem_nonfinite", "encoder produced a non-finite value");
    return out;
}

std::unique_ptr<TextEncoder> make_text_encoder(const KVConfig& cfg) {
    std::string backend = cfg.get_str("textsem.backend", "toy");
    if (backend == "toy") {
        return std::make_unique<ToyTextEncoder>(
            static_cast<uint64_t>(cfg.get_int("textsem.seed", 1)),
            static_cast<int>(cfg.get_int("textsem.dim", 64)));
    }
    if (backend == "external") {
        std::string path = cfg.get_str("textsem.table_path", "");
        check(!path.empty(), "textsem_config", "external backend needs textsem.table_path");
        return std::make_unique<JsonTextEncoder>(path);
    }
    fail("textsem_config", "unknown textsem.backend: " + backend);
}

}  // namespace textpainter
