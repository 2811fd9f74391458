#include <doctest.h>

#include <atomic>
#include <map>
#include <random>
#include <thread>

#include "odd/prefix_trie.hpp"
#include "odd/vocab.hpp"
#include "support/check.hpp"
#include "support/oracle.hpp"

using namespace odd;

namespace {

constexpr Timestamp kT1 = 1758658460;
constexpr Timestamp kT2 = 1759263260;

struct PlanTrie {
    VocabRegistry vocab;
    PrefixTrie trie;
    PlanTrie() {
        trie.insert_sequence(tokenize("activate your plan 4G", vocab, true), kT1);
        trie.insert_sequence(tokenize("please activate your plan 5G", vocab, true), kT2);
    }
    TokenSeq ids(std::string_view text) const { return tokenize(text, vocab); }
    std::map<std::string, FeatureTriple> nodes() const {
        std::map<std::string, FeatureTriple> out;
        trie.visit([&](std::span<const TokenId> path, const FeatureTriple& f) {
            out[detokenize(path, vocab)] = f;
        });
        return out;
    }
};

}  // namespace

TEST_CASE("two-sentence example: every listed node carries the listed features") {
    PlanTrie plan;
    const std::map<std::string, FeatureTriple> listed = {
        {"activate", {2, 1, kT2}},
        {"activate your", {2, 2, kT2}},
        {"activate your plan", {2, 3, kT2}},
        {"activate your plan 4G", {1, 4, kT1}},
        {"activate your plan 5G", {1, 4, kT2}},
        {"your", {2, 1, kT2}},
        {"your plan", {2, 2, kT2}},
        {"your plan 4G", {1, 3, kT1}},
        {"your plan 5G", {1, 3, kT2}},
        {"plan", {2, 1, kT2}},
        {"plan 4G", {1, 2, kT1}},
        {"plan 5G", {1, 2, kT2}},
        {"please", {1, 1, kT2}},
        {"please activate", {1, 2, kT2}},
        {"please activate your", {1, 3, kT2}},
        {"please activate your plan", {1, 4, kT2}},
        {"please activate your plan 5G", {1, 5, kT2}},
    };
    const auto nodes = plan.nodes();
    for (const auto& [path, f] : listed) {
        INFO(path);
        REQUIRE(nodes.count(path) == 1);
        CHECK(nodes.at(path) == f);
    }
    // The windowing rule also stores the single-token windows "4G" and "5G" as
    // root children, which the illustration leaves out.
    CHECK(nodes.size() == 19);
    CHECK(nodes.at("4G") == FeatureTriple{1, 1, kT1});
    CHECK(nodes.at("5G") == FeatureTriple{1, 1, kT2});
    CHECK(plan.trie.stats().node_count == 19);
    CHECK(plan.trie.stats().total_insertions == 9);
}

TEST_CASE("next_tokens") {
    PlanTrie plan;
    const auto four = plan.vocab.id("4G");
    const auto five = plan.vocab.id("5G");
    CHECK(plan.trie.next_tokens(plan.ids("activate your plan")) ==
          std::vector<NextToken>{{four, {1, 4, kT1}}, {five, {1, 4, kT2}}});
    CHECK(plan.trie.next_tokens(plan.ids("your plan")) ==
          std::vector<NextToken>{{four, {1, 3, kT1}}, {five, {1, 3, kT2}}});
    CHECK(plan.trie.next_tokens(TokenSeq{}).size() == 6);
    CHECK(plan.trie.next_tokens(TokenSeq{99}).empty());
    CHECK(plan.trie.next_tokens(plan.ids("plan activate")).empty());
}

TEST_CASE("insert edge cases") {
    PrefixTrie trie;
    CHECK(trie.stats().node_count == 0);
    CHECK(trie.stats().total_insertions == 0);
    CHECK_ERRC(trie.insert_sequence(TokenSeq{}, 5), Errc::EmptySequence);
    trie.insert_sequence(TokenSeq{7}, 100);
    CHECK(trie.stats().node_count == 1);
    CHECK(trie.next_tokens(TokenSeq{}) == std::vector<NextToken>{{7, {1, 1, 100}}});
    trie.insert_sequence(TokenSeq{7}, 100);  // equal timestamps are in order
    CHECK_ERRC(trie.insert_sequence(TokenSeq{7}, 99), Errc::TimestampRegression);
    CHECK(trie.next_tokens(TokenSeq{}) == std::vector<NextToken>{{7, {2, 1, 100}}});
    CHECK_ERRC(PrefixTrie(TrieConfig{1}), Errc::InvalidConfig);
}

TEST_CASE("re-inserting doubles counts and keeps the node set") {
    PlanTrie plan;
    PrefixTrie twice;
    const auto a = plan.ids("activate your plan 4G");
    const auto b = plan.ids("please activate your plan 5G");
    twice.insert_sequence(a, kT1);
    twice.insert_sequence(a, kT1);
    twice.insert_sequence(b, kT2);
    twice.insert_sequence(b, kT2);
    CHECK(twice.stats().node_count == plan.trie.stats().node_count);
    CHECK(twice.stats().total_insertions == 2 * plan.trie.stats().total_insertions);
    std::map<TokenSeq, FeatureTriple> once;
    plan.trie.visit([&](std::span<const TokenId> p, const FeatureTriple& f) { once[TokenSeq(p.begin(), p.end())] = f; });
    twice.visit([&](std::span<const TokenId> p, const FeatureTriple& f) {
        const auto& o = once.at(TokenSeq(p.begin(), p.end()));
        CHECK(f.frequency == 2 * o.frequency);
        CHECK(f.length == o.length);
        CHECK(f.recency == o.recency);
    });
}

TEST_CASE("n_max truncates windows") {
    PrefixTrie trie(TrieConfig{2});
    trie.insert_sequence(TokenSeq{1, 2, 3}, 1);
    CHECK(trie.stats().node_count == 5);  // 1, 2, 3, 1 2, 2 3
    CHECK(trie.next_tokens(TokenSeq{1, 2}).empty());
}

TEST_CASE("snapshot round trip") {
    PlanTrie plan;
    const auto bytes = plan.trie.snapshot();
    const auto back = PrefixTrie::restore(bytes);
    CHECK(back.stats().node_count == 19);
    CHECK(back.stats().total_insertions == plan.trie.stats().total_insertions);
    CHECK(back.last_timestamp() == kT2);
    CHECK(back.config().n_max == plan.trie.config().n_max);
    CHECK(back.snapshot() == bytes);
    CHECK(back.dump(&plan.vocab) == plan.trie.dump(&plan.vocab));
    // Restored tries keep accepting the stream in order.
    auto more = back;
    CHECK_ERRC(more.insert_sequence(plan.ids("plan"), kT1), Errc::TimestampRegression);
}

TEST_CASE("empty snapshot") {
    PrefixTrie empty;
    const auto bytes = empty.snapshot();
    const auto back = PrefixTrie::restore(bytes);
    CHECK(back.empty());
    CHECK(back.stats().node_count == 0);
    auto t = back;
    t.insert_sequence(TokenSeq{1}, -5);  // no lower bound before the first insertion
}

TEST_CASE("corrupt snapshots") {
    PlanTrie plan;
    const auto bytes = plan.trie.snapshot();
    for (std::size_t cut : {std::size_t{0}, std::size_t{4}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1}) {
        CHECK_ERRC(PrefixTrie::restore(std::string_view(bytes).substr(0, cut)), Errc::CorruptSnapshot);
    }
    CHECK_ERRC(PrefixTrie::restore(bytes + "x"), Errc::CorruptSnapshot);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_ERRC(PrefixTrie::restore(bad_magic), Errc::CorruptSnapshot);
    auto future = bytes;
    future[8] = 2;
    CHECK_ERRC(PrefixTrie::restore(future), Errc::VersionMismatch);
}

TEST_CASE("dump lists features") {
    PlanTrie plan;
    const auto text = plan.trie.dump(&plan.vocab);
    CHECK(text.find("activate (F=2, L=1, R=1759263260)") != std::string::npos);
    CHECK(text.find("5G (F=1, L=5, R=1759263260)") != std::string::npos);
}

TEST_CASE("property: trie agrees with a brute-force n-gram scan") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n_max = 2 + rng() % 5;
        const auto corpus = oracle::random_corpus(rng, 40, 8, 12);
        PrefixTrie trie(TrieConfig{static_cast<std::uint32_t>(n_max)});
        std::uint64_t positions = 0;
        for (const auto& s : corpus) {
            trie.insert_sequence(s.tokens, s.time);
            positions += s.tokens.size();
        }
        CHECK(trie.stats().node_count == oracle::distinct_ngrams(corpus, n_max));
        CHECK(trie.stats().total_insertions == positions);
        trie.visit([&](std::span<const TokenId> path, const FeatureTriple& f) {
            TokenSeq prefix(path.begin(), path.end() - 1);
            const auto expect = oracle::next_tokens(corpus, n_max, prefix);
            const auto& e = expect.at(path.back());
            CHECK(f.frequency == e.f);
            CHECK(f.length == e.l);
            CHECK(f.recency == e.r);
            CHECK(f.length == path.size());
        });
        for (int q = 0; q < 20; ++q) {
            TokenSeq suffix(rng() % n_max);
            for (auto& t : suffix) t = static_cast<TokenId>(rng() % 8);
            const auto got = trie.next_tokens(suffix);
            const auto expect = oracle::next_tokens(corpus, n_max, suffix);
            REQUIRE(got.size() == expect.size());
            for (const auto& nt : got) {
                const auto& e = expect.at(nt.token);
                CHECK(nt.features == FeatureTriple{e.f, e.l, e.r});
            }
        }
    }
}

TEST_CASE("property: F and R never decrease") {
    std::mt19937_64 rng(5);
    PrefixTrie trie(TrieConfig{4});
    std::map<TokenSeq, FeatureTriple> last;
    Timestamp t = 0;
    for (int i = 0; i < 200; ++i) {
        TokenSeq s(1 + rng() % 6);
        for (auto& tok : s) tok = static_cast<TokenId>(rng() % 5);
        t += static_cast<Timestamp>(rng() % 2);
        trie.insert_sequence(s, t);
        trie.visit([&](std::span<const TokenId> p, const FeatureTriple& f) {
            TokenSeq key(p.begin(), p.end());
            auto it = last.find(key);
            if (it != last.end()) {
                CHECK(f.frequency >= it->second.frequency);
                CHECK(f.recency >= it->second.recency);
                CHECK(f.length == it->second.length);
            }
            last[key] = f;
        });
    }
}

TEST_CASE("synchronized trie: readers see whole sequences only") {
    SynchronizedTrie shared(TrieConfig{3});
    std::atomic<bool> done{false};
    std::atomic<int> bad{0};
    std::thread reader([&] {
        while (!done.load()) {
            shared.read([&](const PrefixTrie& t) {
                // Each insertion adds 3 positions; a torn read would show a remainder.
                if (t.stats().total_insertions % 3 != 0) bad.fetch_add(1);
            });
        }
    });
    for (Timestamp i = 0; i < 2000; ++i) {
        shared.insert_sequence(TokenSeq{static_cast<TokenId>(i % 7), 1, 2}, i);
    }
    done = true;
    reader.join();
    CHECK(bad.load() == 0);
    CHECK(shared.read([](const PrefixTrie& t) { return t.stats().total_insertions; }) == 6000);
}
