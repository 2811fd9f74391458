#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odd/vocab.hpp"

namespace odd {

using LogitVector = std::vector<double>;

// Source of the base next-token logits z_t. One instance serves one decoding
// session at a time.
class LogitProvider {
public:
    virtual ~LogitProvider() = default;
    virtual std::size_t vocab_size() const = 0;
    // Deterministic in `prefix`. Every returned entry is finite.
    virtual LogitVector logits(std::span<const TokenId> prefix) = 0;
};

// All-zero logits; softmax is uniform.
class UniformProvider final : public LogitProvider {
public:
    explicit UniformProvider(std::size_t vocab_size) : vocab_size_(vocab_size) {}
    std::size_t vocab_size() const override { return vocab_size_; }
    LogitVector logits(std::span<const TokenId> prefix) override;

private:
    std::size_t vocab_size_;
};

// Add-k smoothed n-gram model. Conditional tables are kept for every context
// length below `order`; a prefix shorter than order-1 uses the matching
// shorter table. Logits are log-probabilities.
class NGramModel final : public LogitProvider {
public:
    struct ContextCounts {
        std::uint64_t total = 0;
        std::map<TokenId, std::uint64_t> next;
    };

    NGramModel(std::size_t order, double smoothing_k, std::size_t vocab_size);

    std::size_t order() const noexcept { return order_; }
    double smoothing_k() const noexcept { return k_; }
    std::size_t vocab_size() const override { return vocab_size_; }

    // Vocabulary may only grow; existing probabilities renormalize over the
    // larger support.
    void resize_vocab(std::size_t vocab_size);

    void observe(std::span<const TokenId> sequence);
    double probability(std::span<const TokenId> prefix, TokenId next) const;
    LogitVector logits(std::span<const TokenId> prefix) override;

    const std::map<std::vector<TokenId>, ContextCounts>& tables() const noexcept { return tables_; }
    void set_counts(std::vector<TokenId> context, TokenId next, std::uint64_t count);

private:
    std::span<const TokenId> context_of(std::span<const TokenId> prefix) const;

    std::size_t order_;
    double k_;
    std::size_t vocab_size_;
    std::map<std::vector<TokenId>, ContextCounts> tables_;
};

// Throws Errc::EmptyCorpus, Errc::InvalidConfig.
NGramModel train_ngram(std::span<const TokenSeq> corpus, std::size_t order, double smoothing_k,
                       std::size_t vocab_size);

// JSON model file carrying the vocabulary it was trained with.
void save_ngram(const NGramModel& model, const VocabRegistry& vocab,
                const std::filesystem::path& path);
std::pair<NGramModel, VocabRegistry> load_ngram(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// External logits protocol
//
// Newline-delimited JSON over a byte stream. The serving side first writes the
// handshake line {"protocol":"odd-logits","version":1}; afterwards each request
// {"prefix":[ids...],"vocab":N} is answered by {"logits":[N floats]} or
// {"error":"..."}.

inline constexpr const char* kLogitsProtocol = "odd-logits";
inline constexpr int kLogitsProtocolVersion = 1;

class LineChannel {
public:
    virtual ~LineChannel() = default;
    // nullopt on end of stream.
    virtual std::optional<std::string> read_line() = 0;
    virtual void write_line(std::string_view line) = 0;
};

class StreamChannel final : public LineChannel {
public:
    StreamChannel(std::istream& in, std::ostream& out) : in_(in), out_(out) {}
    std::optional<std::string> read_line() override;
    void write_line(std::string_view line) override;

private:
    std::istream& in_;
    std::ostream& out_;
};

// Runs `command` under /bin/sh with its stdin/stdout connected to the channel.
class ProcessChannel final : public LineChannel {
public:
    explicit ProcessChannel(const std::string& command);
    ~ProcessChannel() override;
    ProcessChannel(const ProcessChannel&) = delete;
    ProcessChannel& operator=(const ProcessChannel&) = delete;

    std::optional<std::string> read_line() override;
    void write_line(std::string_view line) override;

private:
    int to_child_ = -1;
    int from_child_ = -1;
    int pid_ = -1;
    std::string buffer_;
};

class TcpChannel final : public LineChannel {
public:
    TcpChannel(const std::string& host, std::uint16_t port);
    ~TcpChannel() override;
    TcpChannel(const TcpChannel&) = delete;
    TcpChannel& operator=(const TcpChannel&) = delete;

    std::optional<std::string> read_line() override;
    void write_line(std::string_view line) override;

private:
    int fd_ = -1;
    std::string buffer_;
};

// Client side. Reads the handshake on construction; every failure (bad
// handshake, closed stream, malformed or mis-sized reply) raises
// Errc::ProviderUnavailable.
class ExternalLogitProvider final : public LogitProvider {
public:
    ExternalLogitProvider(std::unique_ptr<LineChannel> channel, std::size_t vocab_size);
    std::size_t vocab_size() const override { return vocab_size_; }
    LogitVector logits(std::span<const TokenId> prefix) override;

private:
    std::unique_ptr<LineChannel> channel_;
    std::size_t vocab_size_;
};

// Server side: answers requests from `channel` with `provider` until the
// stream ends. Returns the number of requests served.
std::size_t serve_logits(LogitProvider& provider, LineChannel& channel);

}  // namespace odd
