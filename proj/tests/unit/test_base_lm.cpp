#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "odd/base_lm.hpp"
#include "odd/fusion.hpp"
#include "odd/vocab.hpp"
#include "support/check.hpp"
#include "support/oracle.hpp"

using namespace odd;

TEST_CASE("uniform provider") {
    UniformProvider u(7);
    const auto q = softmax_with_temperature(u.logits(TokenSeq{1, 2}), 1.0);
    for (double p : q.probs) CHECK(p == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("trigram follows forced counts") {
    VocabRegistry v;
    std::vector<TokenSeq> corpus{tokenize("a b c", v, true)};
    auto m = train_ngram(corpus, 3, 0.01, v.size());
    CHECK(argmax(m.logits(TokenSeq{0, 1})) == 2);
}

TEST_CASE("add-k arithmetic") {
    VocabRegistry v;
    std::vector<TokenSeq> corpus{tokenize("a b", v, true), tokenize("a b", v, true), tokenize("a c", v, true)};
    auto m = train_ngram(corpus, 2, 0.01, 3);
    CHECK(m.probability(TokenSeq{0}, 1) == doctest::Approx(2.01 / 3.03).epsilon(1e-12));
    CHECK(m.probability(TokenSeq{0}, 1) == doctest::Approx(0.6634).epsilon(1e-4));

    std::vector<TokenSeq> sym{tokenize("a b", v, false), tokenize("a c", v, false)};
    auto s = train_ngram(sym, 2, 1e-9, 3);
    CHECK(s.probability(TokenSeq{0}, 1) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(s.probability(TokenSeq{0}, 2) == doctest::Approx(0.5).epsilon(1e-6));

    auto k1 = train_ngram(corpus, 2, 1.0, 3);
    for (TokenId t = 0; t < 3; ++t) CHECK(k1.probability(TokenSeq{2}, t) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("training errors") {
    CHECK_ERRC(train_ngram(std::vector<TokenSeq>{}, 3, 0.1, 4), Errc::EmptyCorpus);
    CHECK_ERRC(train_ngram(std::vector<TokenSeq>{{0, 1}}, 0, 0.1, 4), Errc::InvalidConfig);
    CHECK_ERRC(train_ngram(std::vector<TokenSeq>{{0, 1}}, 2, 0.0, 4), Errc::InvalidConfig);
}

TEST_CASE("property: n-gram tables match brute-force counting") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t vocab = 2 + rng() % 8;
        const std::size_t order = 1 + rng() % 4;
        const double k = oracle::uniform(rng, 0.001, 2.0);
        std::vector<TokenSeq> corpus(1 + rng() % 30);
        for (auto& s : corpus) {
            s.resize(1 + rng() % 12);
            for (auto& t : s) t = static_cast<TokenId>(rng() % vocab);
        }
        auto m = train_ngram(corpus, order, k, vocab);
        for (int q = 0; q < 10; ++q) {
            TokenSeq prefix(rng() % 5);
            for (auto& t : prefix) t = static_cast<TokenId>(rng() % vocab);
            const auto z = m.logits(prefix);
            REQUIRE(z.size() == vocab);
            double total = 0;
            for (TokenId y = 0; y < vocab; ++y) {
                const double p = oracle::ngram_probability(corpus, order, k, vocab, prefix, y);
                CHECK(std::exp(z[y]) == doctest::Approx(p).epsilon(1e-12));
                CHECK(std::isfinite(z[y]));
                total += std::exp(z[y]);
            }
            CHECK(std::abs(total - 1.0) <= 1e-9);
            CHECK(m.logits(prefix) == z);
        }
    }
}

TEST_CASE("vocabulary growth renormalizes") {
    auto m = train_ngram(std::vector<TokenSeq>{{0, 1}}, 2, 0.5, 2);
    m.resize_vocab(4);
    const auto z = m.logits(TokenSeq{0});
    double total = 0;
    for (double x : z) total += std::exp(x);
    CHECK(total == doctest::Approx(1.0));
    CHECK(std::exp(z[1]) == doctest::Approx(1.5 / 3.0));
    CHECK_ERRC(m.resize_vocab(3), Errc::InvalidConfig);
}

TEST_CASE("model file round trip") {
    VocabRegistry v;
    std::vector<TokenSeq> corpus{tokenize("how do i reset </s>", v, true), tokenize("how do we pay </s>", v, true)};
    auto m = train_ngram(corpus, 3, 0.01, v.size());
    const auto path = std::filesystem::temp_directory_path() / "odd_lm_test.json";
    save_ngram(m, v, path);
    auto [back, bv] = load_ngram(path);
    CHECK(bv.tokens() == v.tokens());
    CHECK(back.order() == 3);
    for (const auto& prefix : {TokenSeq{}, TokenSeq{0}, TokenSeq{0, 1}, TokenSeq{3, 4}}) {
        CHECK(back.logits(prefix) == m.logits(prefix));
    }
    std::filesystem::remove(path);
}

namespace {

std::string handshake() { return "{\"protocol\":\"odd-logits\",\"version\":1}\n"; }

}  // namespace

TEST_CASE("external provider over a scripted stream") {
    std::istringstream in(handshake() + "{\"logits\":[0.5,1.5,-1.0]}\n");
    std::ostringstream out;
    ExternalLogitProvider p(std::make_unique<StreamChannel>(in, out), 3);
    CHECK(p.logits(TokenSeq{2, 0}) == LogitVector{0.5, 1.5, -1.0});
    CHECK(out.str() == "{\"prefix\":[2,0],\"vocab\":3}\n");
    CHECK_ERRC(p.logits(TokenSeq{1}), Errc::ProviderUnavailable);  // stream ended
}

TEST_CASE("external provider rejects bad replies") {
    auto check_reply = [](const std::string& reply) {
        std::istringstream in(handshake() + reply + "\n");
        std::ostringstream out;
        ExternalLogitProvider p(std::make_unique<StreamChannel>(in, out), 3);
        CHECK_ERRC(p.logits(TokenSeq{0}), Errc::ProviderUnavailable);
    };
    check_reply("{\"logits\":[1,2]}");
    check_reply("{\"logits\":[1,2,\"x\"]}");
    check_reply("not json");
    check_reply("{\"error\":\"boom\"}");
    check_reply("[1,2,3]");

    std::ostringstream sink;
    std::istringstream bad_hello("{\"protocol\":\"other\",\"version\":1}\n");
    CHECK_ERRC(ExternalLogitProvider(std::make_unique<StreamChannel>(bad_hello, sink), 3), Errc::ProviderUnavailable);
    std::istringstream bad_version("{\"protocol\":\"odd-logits\",\"version\":9}\n");
    CHECK_ERRC(ExternalLogitProvider(std::make_unique<StreamChannel>(bad_version, sink), 3), Errc::ProviderUnavailable);
    std::istringstream empty("");
    CHECK_ERRC(ExternalLogitProvider(std::make_unique<StreamChannel>(empty, sink), 3), Errc::ProviderUnavailable);
}

TEST_CASE("serve_logits answers requests and reports errors") {
    auto m = train_ngram(std::vector<TokenSeq>{{0, 1, 2}}, 2, 0.1, 3);
    std::istringstream in("{\"prefix\":[0],\"vocab\":3}\n{\"prefix\":[0],\"vocab\":4}\ngarbage\n");
    std::ostringstream out;
    CHECK(serve_logits(m, *std::make_unique<StreamChannel>(in, out)) == 3);
    std::istringstream replies(out.str());
    std::ostringstream sink;
    ExternalLogitProvider client(std::make_unique<StreamChannel>(replies, sink), 3);
    CHECK(client.logits(TokenSeq{0}) == m.logits(TokenSeq{0}));
    CHECK_ERRC(client.logits(TokenSeq{0}), Errc::ProviderUnavailable);
    CHECK_ERRC(client.logits(TokenSeq{0}), Errc::ProviderUnavailable);
}

TEST_CASE("external provider over a child process") {
    const std::string stub =
        "printf '%s\\n' '{\"protocol\":\"odd-logits\",\"version\":1}'; "
        "while read -r line; do printf '%s\\n' '{\"logits\":[0.25,-3,7]}'; done";
    ExternalLogitProvider p(std::make_unique<ProcessChannel>(stub), 3);
    for (int i = 0; i < 5; ++i) CHECK(p.logits(TokenSeq{static_cast<TokenId>(i % 3)}) == LogitVector{0.25, -3, 7});

    ExternalLogitProvider dead(std::make_unique<ProcessChannel>(
                                   "printf '%s\\n' '{\"protocol\":\"odd-logits\",\"version\":1}'; exit 0"),
                               3);
    CHECK_ERRC(dead.logits(TokenSeq{0}), Errc::ProviderUnavailable);
}
