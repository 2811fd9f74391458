#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "odd/vocab.hpp"

namespace odd {

// Seconds since epoch (or any caller-chosen monotone clock).
using Timestamp = std::int64_t;

// Per-node statistics: F occurrence count, L depth from root, R last-seen time.
struct FeatureTriple {
    std::uint64_t frequency = 0;
    std::uint32_t length = 0;
    Timestamp recency = 0;

    friend bool operator==(const FeatureTriple&, const FeatureTriple&) = default;
};

struct TrieConfig {
    std::uint32_t n_max = 5;
};

struct NextToken {
    TokenId token;
    FeatureTriple features;

    friend bool operator==(const NextToken&, const NextToken&) = default;
};

struct TrieStats {
    std::size_t node_count = 0;           // U, distinct nodes excluding the root
    std::uint64_t total_insertions = 0;   // cumulative inserted token positions
};

// Online n-gram prefix tree. Every contiguous window of an inserted sequence,
// truncated at n_max tokens, becomes a root path; each node on such a path
// counts one occurrence and remembers the latest timestamp.
//
// Not internally synchronized; see SynchronizedTrie for the reader/writer
// contract.
class PrefixTrie {
public:
    using NodeIndex = std::uint32_t;
    static constexpr NodeIndex kRoot = 0;

    explicit PrefixTrie(TrieConfig config = {});

    const TrieConfig& config() const noexcept { return config_; }

    // Inserts all windows of `tokens`. Returns the number of node updates
    // (one per covered window position). O(|tokens| * n_max).
    // Throws Errc::EmptySequence, Errc::TimestampRegression.
    std::size_t insert_sequence(std::span<const TokenId> tokens, Timestamp timestamp);

    // Children of the node reached by `suffix`, ordered by token id. Empty when
    // the suffix is not a stored path.
    std::vector<NextToken> next_tokens(std::span<const TokenId> suffix) const;

    // Visitor form of next_tokens, no allocation. Returns false when the suffix
    // is absent.
    template <typename Fn>
    bool for_each_next(std::span<const TokenId> suffix, Fn&& fn) const {
        NodeIndex at = find(suffix);
        if (at == kMissing) return false;
        for (const auto& edge : nodes_[at].children) {
            const Node& c = nodes_[edge.child];
            fn(edge.token, FeatureTriple{c.frequency, c.depth, c.recency});
        }
        return true;
    }

    TrieStats stats() const noexcept { return {nodes_.size() - 1, total_insertions_}; }
    Timestamp last_timestamp() const noexcept { return last_timestamp_; }
    bool empty() const noexcept { return nodes_.size() == 1; }

    // Preorder walk over all nodes except the root; path is root -> node.
    void visit(const std::function<void(std::span<const TokenId> path, const FeatureTriple&)>& fn) const;

    // Versioned binary encoding; layout documented in docs/snapshot_format.md.
    std::string snapshot() const;
    // Throws Errc::CorruptSnapshot, Errc::VersionMismatch.
    static PrefixTrie restore(std::string_view bytes);

    // Human-readable tree in the style "token (F=.., L=.., R=..)".
    std::string dump(const VocabRegistry* registry = nullptr) const;

    static constexpr std::uint32_t kSnapshotVersion = 1;

private:
    static constexpr NodeIndex kMissing = ~NodeIndex{0};

    struct Edge {
        TokenId token;
        NodeIndex child;
    };
    struct Node {
        std::uint64_t frequency = 0;
        Timestamp recency = 0;
        std::uint32_t depth = 0;
        std::vector<Edge> children;  // sorted by token
    };

    NodeIndex find(std::span<const TokenId> path) const;
    NodeIndex child_or_insert(NodeIndex parent, TokenId token);

    TrieConfig config_;
    std::vector<Node> nodes_;
    std::uint64_t total_insertions_ = 0;
    Timestamp last_timestamp_ = 0;
    bool has_timestamp_ = false;
};

// Single-writer / multi-reader wrapper: a reader never observes a partially
// inserted sequence.
class SynchronizedTrie {
public:
    explicit SynchronizedTrie(TrieConfig config = {}) : trie_(config) {}

    std::size_t insert_sequence(std::span<const TokenId> tokens, Timestamp timestamp) {
        std::unique_lock lock(mutex_);
        return trie_.insert_sequence(tokens, timestamp);
    }

    template <typename Fn>
    decltype(auto) read(Fn&& fn) const {
        std::shared_lock lock(mutex_);
        return std::forward<Fn>(fn)(trie_);
    }

private:
    mutable std::shared_mutex mutex_;
    PrefixTrie trie_;
};

}  // namespace odd
