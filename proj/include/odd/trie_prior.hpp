#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "odd/prefix_trie.hpp"

namespace odd {

struct RawCandidate {
    TokenId token;
    FeatureTriple features;
    std::size_t source_suffix_len;
};

// Convex weights over the normalized (F', L', R') features.
struct ScoringWeights {
    double frequency = 1.0 / 3.0;
    double length = 1.0 / 3.0;
    double recency = 1.0 / 3.0;

    // Throws Errc::InvalidConfig unless non-negative and summing to 1 (1e-9).
    void validate() const;
};

struct NormalizedFeatures {
    double frequency;
    double length;
    double recency;
};

struct ScoredCandidate {
    TokenId token;
    double score;  // in (0, 1]
    NormalizedFeatures normalized;
    std::size_t source_suffix_len;
};

// Deduplicated candidates, sorted by token id.
struct CandidateSet {
    std::vector<ScoredCandidate> entries;

    bool empty() const noexcept { return entries.empty(); }
    std::size_t size() const noexcept { return entries.size(); }
    const ScoredCandidate* find(TokenId token) const;
};

// Sparse distribution over a candidate support, sorted by token id; mass is
// zero outside the support.
class SparseDistribution {
public:
    SparseDistribution() = default;
    explicit SparseDistribution(std::vector<std::pair<TokenId, double>> probs);

    bool empty() const noexcept { return probs_.empty(); }
    std::size_t size() const noexcept { return probs_.size(); }
    const std::vector<std::pair<TokenId, double>>& entries() const noexcept { return probs_; }

    double at(TokenId token) const;
    double max_prob() const;
    // Most probable token, smallest id on ties.
    TokenId argmax() const;
    double sum() const;

private:
    std::vector<std::pair<TokenId, double>> probs_;
};

// Union over every suffix of `prefix` (shortest first) of the trie children
// reached by that suffix. O(|prefix|^2) trie steps in the worst case.
std::vector<RawCandidate> collect_candidates(const PrefixTrie& trie, std::span<const TokenId> prefix);

// Two-pass scoring. Pass one gathers the normalizers over the whole raw set:
//   F' = log(1+F) / max log(1+F)
//   L' = min(1, L / prefix_len)
//   R' = exp(-(d - d_min) / (d_max - d_min)),  d = now - R   (1 when all equal)
// score = <lambda, (F', L', R')>, and each token keeps its best-scoring suffix.
// Throws Errc::EmptyCandidates.
CandidateSet score_candidates(std::span<const RawCandidate> raw, std::size_t prefix_len,
                              Timestamp now, const ScoringWeights& weights);

// Keeps S_max on the best candidate (smallest id on ties) and spreads 1 - S_max
// over the rest in proportion to their scores. A single candidate gets mass 1.
// Throws Errc::EmptyCandidates.
SparseDistribution top_preserving_distribution(const CandidateSet& candidates);

// collect -> score -> normalize. Empty distribution when nothing matches.
SparseDistribution trie_prior(const PrefixTrie& trie, std::span<const TokenId> prefix,
                              Timestamp now, const ScoringWeights& weights,
                              CandidateSet* scored = nullptr);

}  // namespace odd
