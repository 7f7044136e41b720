#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "textpainter/corpus.hpp"
#include "textpainter/textsem.hpp"

using namespace textpainter;

TEST_CASE("token counts follow the truncation rule") {
    ToyTextEncoder enc(7, 16);
    CHECK(encode_text("abc", enc).n_tok == 4);  // z0 + 3 chars
    CHECK(encode_text("a", enc).n_tok == 2);

    std::string forty(40, 'x');
    TokenBundle t = encode_text(forty, enc);
    CHECK(t.n_tok == kMaxTextTokens);
    CHECK(t.tokens.size() == static_cast<size_t>(16) * 16);
    CHECK(t.valid.size() == 16);
    for (uint8_t v : t.valid) CHECK(v == 1);
}

TEST_CASE("encoding is deterministic and row 0 is the sentence token") {
    ToyTextEncoder enc(7, 32);
    TokenBundle a = encode_text("SALE 50%", enc);
    TokenBundle b = encode_text("SALE 50%", enc);
    CHECK(a.tokens == b.tokens);
    CHECK(a.sentence == b.sentence);
    for (int c = 0; c < a.dim; ++c)
        CHECK(a.tokens[static_cast<size_t>(c)] == a.sentence[static_cast<size_t>(c)]);
}

TEST_CASE("sentence token is the mean over all characters, truncated or not") {
    ToyTextEncoder enc(7, 16);
    std::string content = "abcdefghijklmnopqrstuvwxyz";  // 26 > 15 kept chars
    TokenBundle t = encode_text(content, enc);
    std::vector<double> mean(16, 0.0);
    for (char ch : content) {
        auto e = enc.char_embedding(static_cast<char32_t>(ch));
        for (int c = 0; c < 16; ++c) mean[static_cast<size_t>(c)] += e[static_cast<size_t>(c)];
    }
    for (int c = 0; c < 16; ++c)
        CHECK(t.sentence[static_cast<size_t>(c)] ==
              doctest::Approx(mean[static_cast<size_t>(c)] / 26.0).epsilon(1e-5));
}

TEST_CASE("character embeddings are unit norm and permutation moves rows, not values") {
    ToyTextEncoder enc(3, 24);
    auto e = enc.char_embedding(U'Q');
    double n2 = 0;
    for (float v : e) n2 += static_cast<double>(v) * v;
    CHECK(std::sqrt(n2) == doctest::Approx(1.0).epsilon(1e-5));

    TokenBundle ab = encode_text("ab", enc);
    TokenBundle ba = encode_text("ba", enc);
    std::vector<float> a_row(ab.tokens.begin() + 24, ab.tokens.begin() + 48);
    std::vector<float> b_row(ab.tokens.begin() + 48, ab.tokens.begin() + 72);
    std::vector<float> b_row2(ba.tokens.begin() + 24, ba.tokens.begin() + 48);
    std::vector<float> a_row2(ba.tokens.begin() + 48, ba.tokens.begin() + 72);
    CHECK(a_row == a_row2);
    CHECK(b_row == b_row2);
    CHECK(ab.sentence == ba.sentence);  // mean is order-free
}

TEST_CASE("no collisions across every codepoint the synthetic corpus emits") {
    CorpusConfig cfg;
    cfg.poster_w = 257;
    cfg.poster_h = 320;
    auto samples = synth_corpus(11, 30, cfg);
    std::set<char32_t> alphabet;
    for (const auto& s : samples)
        for (const auto& el : s.elements)
            for (char32_t cp : utf8_decode(el.content)) alphabet.insert(cp);
    CHECK(alphabet.size() > 20);

    ToyTextEncoder enc(1, 64);
    std::vector<std::vector<float>> embs;
    for (char32_t cp : alphabet) embs.push_back(enc.char_embedding(cp));
    for (size_t i = 0; i < embs.size(); ++i)
        for (size_t j = i + 1; j < embs.size(); ++j) CHECK(embs[i] != embs[j]);
}

TEST_CASE("toy encoder rejects tiny dims and empty content, accepts odd codepoints") {
    CHECK_THROWS_AS(ToyTextEncoder(1, 4), Error);
    ToyTextEncoder enc(1, 8);
    CHECK_THROWS_AS(encode_text("", enc), Error);
    TokenBundle t = encode_text("\xee\x80\x80", enc);  // private use cp, OOV-ish
    CHECK(t.n_tok == 2);
    for (float v : t.tokens) CHECK(std::isfinite(v));
}

TEST_CASE("json token table loads, serves entries, and rejects the unknown") {
    std::string path = "/tmp/tp_test_tokens.json";
    {
        std::ofstream out(path);
        out << "{\"dim\":3,\"entries\":{\"hi\":[[1,2,3],[4,5,6],[0.5,0,-1]]}}";
    }
    JsonTextEncoder enc(path);
    CHECK(enc.dim() == 3);
    TokenBundle t = encode_text("hi", enc);
    CHECK(t.n_tok == 3);
    CHECK(t.tokens[0] == 1.f);
    CHECK(t.tokens[8] == -1.f);
    CHECK(t.sentence == std::vector<float>{1.f, 2.f, 3.f});
    CHECK_THROWS_AS(encode_text("bye", enc), Error);
    std::remove(path.c_str());
    CHECK_THROWS_AS(JsonTextEncoder("/tmp/tp_no_such_tokens.json"), Error);
}

TEST_CASE("encoder factory reads the config keys") {
    KVConfig cfg = KVConfig::from_string("textsem.backend=toy\ntextsem.dim=32\ntextsem.seed=9\n");
    auto enc = make_text_encoder(cfg);
    CHECK(enc->dim() == 32);
    TokenBundle a = encode_text("abc", *enc);
    TokenBundle b = encode_text("abc", ToyTextEncoder(9, 32));
    CHECK(a.tokens == b.tokens);

    KVConfig bad = KVConfig::from_string("textsem.backend=bert\n");
    CHECK_THROWS_AS(make_text_encoder(bad), Error);
    KVConfig ext = KVConfig::from_string("textsem.backend=external\n");
    CHECK_THROWS_AS(make_text_encoder(ext), Error);  // table_path missing
}

TEST_CASE("toy encoder is frozen: encoding never drifts across unrelated work") {
    ToyTextEncoder enc(5, 16);
    TokenBundle before = encode_text("FROZEN", enc);
    for (int i = 0; i < 3; ++i) (void)encode_text("other text", enc);
    TokenBundle after = encode_text("FROZEN", enc);
    CHECK(before.tokens == after.tokens);
}
