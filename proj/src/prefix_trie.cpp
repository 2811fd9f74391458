#include "odd/prefix_trie.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "odd/error.hpp"

namespace odd {

namespace {

constexpr char kMagic[8] = {'O', 'D', 'D', 'T', 'R', 'I', 'E', '\0'};

template <typename T>
void put(std::string& out, T value) {
    static_assert(std::is_integral_v<T>);
    using U = std::make_unsigned_t<T>;
    U u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
    }
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        using U = std::make_unsigned_t<T>;
        if (bytes_.size() - pos_ < sizeof(T)) {
            throw Error(Errc::CorruptSnapshot, "truncated payload at byte " + std::to_string(pos_));
        }
        U u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            u |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }

    std::string_view take(std::size_t n) {
        if (bytes_.size() - pos_ < n) throw Error(Errc::CorruptSnapshot, "truncated header");
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

PrefixTrie::PrefixTrie(TrieConfig config) : config_(config) {
    if (config_.n_max < 2) throw Error(Errc::InvalidConfig, "n_max must be >= 2");
    nodes_.emplace_back();
}

PrefixTrie::NodeIndex PrefixTrie::find(std::span<const TokenId> path) const {
    NodeIndex at = kRoot;
    for (TokenId t : path) {
        const auto& kids = nodes_[at].children;
        auto it = std::lower_bound(kids.begin(), kids.end(), t,
                                   [](const Edge& e, TokenId v) { return e.token < v; });
        if (it == kids.end() || it->token != t) return kMissing;
        at = it->child;
    }
    return at;
}

PrefixTrie::NodeIndex PrefixTrie::child_or_insert(NodeIndex parent, TokenId token) {
    auto& kids = nodes_[parent].children;
    auto it = std::lower_bound(kids.begin(), kids.end(), token,
                               [](const Edge& e, TokenId v) { return e.token < v; });
    if (it != kids.end() && it->token == token) return it->child;

    auto index = static_cast<NodeIndex>(nodes_.size());
    kids.insert(it, Edge{token, index});
    // `kids` may dangle after this push_back.
    Node node;
    node.depth = nodes_[parent].depth + 1;
    nodes_.push_back(std::move(node));
    return index;
}

std::size_t PrefixTrie::insert_sequence(std::span<const TokenId> tokens, Timestamp timestamp) {
    if (tokens.empty()) throw Error(Errc::EmptySequence, "cannot insert an empty sequence");
    if (has_timestamp_ && timestamp < last_timestamp_) {
        throw Error(Errc::TimestampRegression, "timestamp " + std::to_string(timestamp) +
                                                   " precedes " + std::to_string(last_timestamp_));
    }

    std::size_t updates = 0;
    for (std::size_t start = 0; start < tokens.size(); ++start) {
        const std::size_t stop = std::min<std::size_t>(tokens.size(), start + config_.n_max);
        NodeIndex at = kRoot;
        for (std::size_t i = start; i < stop; ++i) {
            at = child_or_insert(at, tokens[i]);
            Node& n = nodes_[at];
            n.frequency += 1;
            n.recency = std::max(n.recency, timestamp);
            ++updates;
        }
    }
    total_insertions_ += tokens.size();
    last_timestamp_ = timestamp;
    has_timestamp_ = true;
    return updates;
}

std::vector<NextToken> PrefixTrie::next_tokens(std::span<const TokenId> suffix) const {
    std::vector<NextToken> out;
    for_each_next(suffix, [&](TokenId t, const FeatureTriple& f) { out.push_back({t, f}); });
    return out;
}

void PrefixTrie::visit(
    const std::function<void(std::span<const TokenId>, const FeatureTriple&)>& fn) const {
    std::vector<TokenId> path;
    // (node, next child position)
    std::vector<std::pair<NodeIndex, std::size_t>> stack{{kRoot, 0}};
    while (!stack.empty()) {
        auto& [node, pos] = stack.back();
        if (pos == nodes_[node].children.size()) {
            stack.pop_back();
            if (!path.empty()) path.pop_back();
            continue;
        }
        const Edge edge = nodes_[node].children[pos++];
        const Node& c = nodes_[edge.child];
        path.push_back(edge.token);
        fn(path, FeatureTriple{c.frequency, c.depth, c.recency});
        stack.emplace_back(edge.child, 0);
    }
}

std::string PrefixTrie::snapshot() const {
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kSnapshotVersion);
    put<std::uint32_t>(out, config_.n_max);
    put<std::uint64_t>(out, total_insertions_);
    put<std::int64_t>(out, last_timestamp_);
    put<std::uint8_t>(out, has_timestamp_ ? 1 : 0);
    put<std::uint64_t>(out, nodes_.size() - 1);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nodes_[kRoot].children.size()));

    std::vector<NodeIndex> stack;
    for (auto it = nodes_[kRoot].children.rbegin(); it != nodes_[kRoot].children.rend(); ++it) {
        stack.push_back(it->child);
    }
    // Tokens live on edges; remember which token leads to each node.
    std::vector<TokenId> incoming(nodes_.size(), 0);
    for (const auto& n : nodes_) {
        for (const auto& e : n.children) incoming[e.child] = e.token;
    }
    while (!stack.empty()) {
        NodeIndex idx = stack.back();
        stack.pop_back();
        const Node& n = nodes_[idx];
        put<std::uint32_t>(out, incoming[idx]);
        put<std::uint64_t>(out, n.frequency);
        put<std::uint32_t>(out, n.depth);
        put<std::int64_t>(out, n.recency);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(n.children.size()));
        for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(it->child);
    }
    return out;
}

PrefixTrie PrefixTrie::restore(std::string_view bytes) {
    Reader in(bytes);
    if (std::memcmp(in.take(sizeof(kMagic)).data(), kMagic, sizeof(kMagic)) != 0) {
        throw Error(Errc::CorruptSnapshot, "bad magic");
    }
    const auto version = in.get<std::uint32_t>();
    if (version != kSnapshotVersion) {
        throw Error(Errc::VersionMismatch, "snapshot version " + std::to_string(version) +
                                               ", expected " + std::to_string(kSnapshotVersion));
    }
    TrieConfig cfg;
    cfg.n_max = in.get<std::uint32_t>();
    if (cfg.n_max < 2) throw Error(Errc::CorruptSnapshot, "n_max < 2");

    PrefixTrie trie(cfg);
    trie.total_insertions_ = in.get<std::uint64_t>();
    trie.last_timestamp_ = in.get<std::int64_t>();
    trie.has_timestamp_ = in.get<std::uint8_t>() != 0;
    const auto declared = in.get<std::uint64_t>();
    if (declared > bytes.size()) throw Error(Errc::CorruptSnapshot, "node count exceeds payload");
    trie.nodes_.reserve(static_cast<std::size_t>(declared) + 1);

    // (parent, children still to read)
    std::vector<std::pair<NodeIndex, std::uint32_t>> stack{{kRoot, in.get<std::uint32_t>()}};
    while (!stack.empty()) {
        if (stack.back().second == 0) {
            stack.pop_back();
            continue;
        }
        --stack.back().second;
        const NodeIndex parent = stack.back().first;

        const auto token = in.get<std::uint32_t>();
        Node node;
        node.frequency = in.get<std::uint64_t>();
        node.depth = in.get<std::uint32_t>();
        node.recency = in.get<std::int64_t>();
        const auto kids = in.get<std::uint32_t>();

        const Node& p = trie.nodes_[parent];
        if (node.depth != p.depth + 1 || node.depth > cfg.n_max) {
            throw Error(Errc::CorruptSnapshot, "inconsistent node depth");
        }
        if (node.frequency == 0) throw Error(Errc::CorruptSnapshot, "zero frequency node");
        if (!p.children.empty() && p.children.back().token >= token) {
            throw Error(Errc::CorruptSnapshot, "children out of order");
        }
        if (trie.nodes_.size() > declared) throw Error(Errc::CorruptSnapshot, "too many nodes");

        auto index = static_cast<NodeIndex>(trie.nodes_.size());
        trie.nodes_[parent].children.push_back(Edge{token, index});
        trie.nodes_.push_back(std::move(node));
        stack.emplace_back(index, kids);
    }
    if (trie.nodes_.size() - 1 != declared) throw Error(Errc::CorruptSnapshot, "node count mismatch");
    if (!in.done()) throw Error(Errc::CorruptSnapshot, "trailing bytes");
    return trie;
}

std::string PrefixTrie::dump(const VocabRegistry* registry) const {
    std::ostringstream out;
    out << "(root)\n";
    visit([&](std::span<const TokenId> path, const FeatureTriple& f) {
        out << std::string(2 * path.size(), ' ') << "+-- ";
        TokenId t = path.back();
        if (registry != nullptr && t < registry->size()) {
            out << registry->token(t);
        } else {
            out << '#' << t;
        }
        out << " (F=" << f.frequency << ", L=" << f.length << ", R=" << f.recency << ")\n";
    });
    return out.str();
}

}  // namespace odd
