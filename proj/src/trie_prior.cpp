#include "odd/trie_prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "odd/error.hpp"

namespace odd {

void ScoringWeights::validate() const {
    if (frequency < 0 || length < 0 || recency < 0) {
        throw Error(Errc::InvalidConfig, "scoring weights must be non-negative");
    }
    if (std::abs(frequency + length + recency - 1.0) > 1e-9) {
        throw Error(Errc::InvalidConfig, "scoring weights must sum to 1");
    }
}

const ScoredCandidate* CandidateSet::find(TokenId token) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), token,
                               [](const ScoredCandidate& c, TokenId t) { return c.token < t; });
    return (it != entries.end() && it->token == token) ? &*it : nullptr;
}

SparseDistribution::SparseDistribution(std::vector<std::pair<TokenId, double>> probs)
    : probs_(std::move(probs)) {
    std::sort(probs_.begin(), probs_.end());
}

double SparseDistribution::at(TokenId token) const {
    auto it = std::lower_bound(probs_.begin(), probs_.end(), token,
                               [](const auto& e, TokenId t) { return e.first < t; });
    return (it != probs_.end() && it->first == token) ? it->second : 0.0;
}

double SparseDistribution::max_prob() const {
    double best = 0.0;
    for (const auto& [_, p] : probs_) best = std::max(best, p);
    return best;
}

TokenId SparseDistribution::argmax() const {
    if (probs_.empty()) throw Error(Errc::EmptyCandidates, "argmax of an empty distribution");
    auto best = probs_.front();
    for (const auto& e : probs_) {
        if (e.second > best.second) best = e;
    }
    return best.first;
}

double SparseDistribution::sum() const {
    double s = 0.0;
    for (const auto& [_, p] : probs_) s += p;
    return s;
}

std::vector<RawCandidate> collect_candidates(const PrefixTrie& trie,
                                             std::span<const TokenId> prefix) {
    std::vector<RawCandidate> raw;
    for (std::size_t len = 1; len <= prefix.size(); ++len) {
        auto suffix = prefix.subspan(prefix.size() - len);
        trie.for_each_next(suffix, [&](TokenId t, const FeatureTriple& f) {
            raw.push_back(RawCandidate{t, f, len});
        });
    }
    return raw;
}

CandidateSet score_candidates(std::span<const RawCandidate> raw, std::size_t prefix_len,
                              Timestamp now, const ScoringWeights& weights) {
    if (raw.empty()) throw Error(Errc::EmptyCandidates, "no raw candidates to score");
    if (prefix_len == 0) throw Error(Errc::EmptyInput, "prefix length must be positive");

    double max_log_f = 0.0;
    double min_gap = std::numeric_limits<double>::infinity();
    double max_gap = -std::numeric_limits<double>::infinity();
    for (const auto& c : raw) {
        max_log_f = std::max(max_log_f, std::log1p(static_cast<double>(c.features.frequency)));
        const double gap = static_cast<double>(now - c.features.recency);
        min_gap = std::min(min_gap, gap);
        max_gap = std::max(max_gap, gap);
    }
    // Gaps are measured from the freshest candidate so that it gets R' = 1.
    const double span = max_gap - min_gap;

    std::unordered_map<TokenId, std::size_t> slot;
    CandidateSet out;
    out.entries.reserve(raw.size());
    for (const auto& c : raw) {
        NormalizedFeatures n;
        n.frequency = std::log1p(static_cast<double>(c.features.frequency)) / max_log_f;
        n.length = std::min(1.0, static_cast<double>(c.features.length) /
                                     static_cast<double>(prefix_len));
        const double gap = static_cast<double>(now - c.features.recency) - min_gap;
        n.recency = span > 0.0 ? std::exp(-gap / span) : 1.0;
        const double score = weights.frequency * n.frequency + weights.length * n.length +
                             weights.recency * n.recency;

        auto [it, fresh] = slot.try_emplace(c.token, out.entries.size());
        if (fresh) {
            out.entries.push_back(ScoredCandidate{c.token, score, n, c.source_suffix_len});
        } else if (score > out.entries[it->second].score) {
            out.entries[it->second] = ScoredCandidate{c.token, score, n, c.source_suffix_len};
        }
    }
    std::sort(out.entries.begin(), out.entries.end(),
              [](const ScoredCandidate& a, const ScoredCandidate& b) { return a.token < b.token; });
    return out;
}

SparseDistribution top_preserving_distribution(const CandidateSet& candidates) {
    if (candidates.empty()) throw Error(Errc::EmptyCandidates, "no candidates to normalize");

    // entries are sorted by id, so a strict comparison keeps the smallest id.
    std::size_t top = 0;
    for (std::size_t i = 1; i < candidates.entries.size(); ++i) {
        if (candidates.entries[i].score > candidates.entries[top].score) top = i;
    }
    std::vector<std::pair<TokenId, double>> probs;
    probs.reserve(candidates.size());
    if (candidates.size() == 1) {
        probs.emplace_back(candidates.entries[0].token, 1.0);
        return SparseDistribution(std::move(probs));
    }

    const double s_max = candidates.entries[top].score;
    double rest = 0.0;
    for (std::size_t i = 0; i < candidates.entries.size(); ++i) {
        if (i != top) rest += candidates.entries[i].score;
    }
    for (std::size_t i = 0; i < candidates.entries.size(); ++i) {
        const auto& c = candidates.entries[i];
        probs.emplace_back(c.token, i == top ? s_max : (1.0 - s_max) * c.score / rest);
    }
    return SparseDistribution(std::move(probs));
}

SparseDistribution trie_prior(const PrefixTrie& trie, std::span<const TokenId> prefix,
                              Timestamp now, const ScoringWeights& weights,
                              CandidateSet* scored) {
    if (prefix.empty()) return {};
    auto raw = collect_candidates(trie, prefix);
    if (raw.empty()) {
        if (scored != nullptr) scored->entries.clear();
        return {};
    }
    auto cands = score_candidates(raw, prefix.size(), now, weights);
    auto dist = top_preserving_distribution(cands);
    if (scored != nullptr) *scored = std::move(cands);
    return dist;
}

}  // namespace odd
