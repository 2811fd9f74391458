#include "odd/base_lm.hpp"

#include <netdb.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "odd/error.hpp"

namespace odd {

using json = nlohmann::json;

LogitVector UniformProvider::logits(std::span<const TokenId> prefix) {
    for (TokenId t : prefix) {
        if (t >= vocab_size_) throw Error(Errc::UnknownId, "prefix token outside vocabulary");
    }
    return LogitVector(vocab_size_, 0.0);
}

NGramModel::NGramModel(std::size_t order, double smoothing_k, std::size_t vocab_size)
    : order_(order), k_(smoothing_k), vocab_size_(vocab_size) {
    if (order_ < 1) throw Error(Errc::InvalidConfig, "n-gram order must be >= 1");
    if (!(k_ > 0.0)) throw Error(Errc::InvalidConfig, "smoothing_k must be > 0");
    if (vocab_size_ < 1) throw Error(Errc::InvalidConfig, "vocabulary must not be empty");
}

void NGramModel::resize_vocab(std::size_t vocab_size) {
    if (vocab_size < vocab_size_) throw Error(Errc::InvalidConfig, "vocabulary cannot shrink");
    vocab_size_ = vocab_size;
}

void NGramModel::observe(std::span<const TokenId> sequence) {
    for (TokenId t : sequence) {
        if (t >= vocab_size_) throw Error(Errc::UnknownId, "corpus token outside vocabulary");
    }
    for (std::size_t j = 0; j < sequence.size(); ++j) {
        for (std::size_t c = 0; c < order_ && c <= j; ++c) {
            std::vector<TokenId> ctx(sequence.begin() + static_cast<std::ptrdiff_t>(j - c),
                                     sequence.begin() + static_cast<std::ptrdiff_t>(j));
            auto& counts = tables_[std::move(ctx)];
            counts.total += 1;
            counts.next[sequence[j]] += 1;
        }
    }
}

void NGramModel::set_counts(std::vector<TokenId> context, TokenId next, std::uint64_t count) {
    if (context.size() >= order_) throw Error(Errc::InvalidConfig, "context longer than order-1");
    if (next >= vocab_size_) throw Error(Errc::UnknownId, "count token outside vocabulary");
    auto& counts = tables_[std::move(context)];
    auto& slot = counts.next[next];
    counts.total = counts.total - slot + count;
    slot = count;
}

std::span<const TokenId> NGramModel::context_of(std::span<const TokenId> prefix) const {
    const std::size_t c = std::min(order_ - 1, prefix.size());
    return prefix.subspan(prefix.size() - c);
}

double NGramModel::probability(std::span<const TokenId> prefix, TokenId next) const {
    auto ctx = context_of(prefix);
    const double denom_k = k_ * static_cast<double>(vocab_size_);
    auto it = tables_.find(std::vector<TokenId>(ctx.begin(), ctx.end()));
    if (it == tables_.end()) return k_ / denom_k;
    auto n = it->second.next.find(next);
    const double count = n == it->second.next.end() ? 0.0 : static_cast<double>(n->second);
    return (count + k_) / (static_cast<double>(it->second.total) + denom_k);
}

LogitVector NGramModel::logits(std::span<const TokenId> prefix) {
    for (TokenId t : prefix) {
        if (t >= vocab_size_) throw Error(Errc::UnknownId, "prefix token outside vocabulary");
    }
    auto ctx = context_of(prefix);
    const double denom_k = k_ * static_cast<double>(vocab_size_);
    auto it = tables_.find(std::vector<TokenId>(ctx.begin(), ctx.end()));
    if (it == tables_.end()) return LogitVector(vocab_size_, -std::log(static_cast<double>(vocab_size_)));

    const double denom = static_cast<double>(it->second.total) + denom_k;
    LogitVector z(vocab_size_, std::log(k_ / denom));
    for (const auto& [token, count] : it->second.next) {
        z[token] = std::log((static_cast<double>(count) + k_) / denom);
    }
    return z;
}

NGramModel train_ngram(std::span<const TokenSeq> corpus, std::size_t order, double smoothing_k,
                       std::size_t vocab_size) {
    if (corpus.empty()) throw Error(Errc::EmptyCorpus, "n-gram corpus is empty");
    NGramModel model(order, smoothing_k, vocab_size);
    for (const auto& seq : corpus) model.observe(seq);
    return model;
}

void save_ngram(const NGramModel& model, const VocabRegistry& vocab,
                const std::filesystem::path& path) {
    json counts = json::array();
    for (const auto& [ctx, table] : model.tables()) {
        json next = json::array();
        for (const auto& [token, count] : table.next) next.push_back({token, count});
        counts.push_back({{"context", ctx}, {"next", std::move(next)}});
    }
    json doc = {{"format", "odd-ngram"},
                {"version", 1},
                {"order", model.order()},
                {"smoothing_k", model.smoothing_k()},
                {"vocab", vocab.tokens()},
                {"counts", std::move(counts)}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    out << doc.dump() << '\n';
}

std::pair<NGramModel, VocabRegistry> load_ngram(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot read " + path.string());
    try {
        json doc = json::parse(in);
        if (doc.at("format") != "odd-ngram" || doc.at("version") != 1) {
            throw Error(Errc::InvalidConfig, path.string() + " is not an odd-ngram v1 model");
        }
        auto tokens = doc.at("vocab").get<std::vector<std::string>>();
        auto vocab = VocabRegistry::from_tokens(tokens);
        NGramModel model(doc.at("order").get<std::size_t>(), doc.at("smoothing_k").get<double>(),
                         std::max<std::size_t>(vocab.size(), 1));
        for (const auto& entry : doc.at("counts")) {
            auto ctx = entry.at("context").get<std::vector<TokenId>>();
            for (const auto& pair : entry.at("next")) {
                model.set_counts(ctx, pair.at(0).get<TokenId>(), pair.at(1).get<std::uint64_t>());
            }
        }
        return {std::move(model), std::move(vocab)};
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, "malformed model " + path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

std::optional<std::string> StreamChannel::read_line() {
    std::string line;
    if (!std::getline(in_, line)) return std::nullopt;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

void StreamChannel::write_line(std::string_view line) {
    out_ << line << '\n';
    out_.flush();
}

namespace {

void write_all(int fd, std::string_view data, bool socket) {
    while (!data.empty()) {
        ssize_t n = socket ? ::send(fd, data.data(), data.size(), MSG_NOSIGNAL)
                           : ::write(fd, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(Errc::ProviderUnavailable, "write failed: " + std::string(std::strerror(errno)));
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

std::optional<std::string> read_line_fd(int fd, std::string& buffer) {
    for (;;) {
        auto nl = buffer.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        char chunk[4096];
        ssize_t n = ::read(fd, chunk, sizeof(chunk));
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(Errc::ProviderUnavailable, "read failed: " + std::string(std::strerror(errno)));
        }
        if (n == 0) return std::nullopt;
        buffer.append(chunk, static_cast<std::size_t>(n));
    }
}

}  // namespace

ProcessChannel::ProcessChannel(const std::string& command) {
    int down[2];
    int up[2];
    if (::pipe(down) != 0) throw Error(Errc::ProviderUnavailable, "pipe() failed");
    if (::pipe(up) != 0) {
        ::close(down[0]);
        ::close(down[1]);
        throw Error(Errc::ProviderUnavailable, "pipe() failed");
    }
    // A provider that dies mid-request must surface as an error, not a signal.
    std::signal(SIGPIPE, SIG_IGN);
    pid_t pid = ::fork();
    if (pid < 0) throw Error(Errc::ProviderUnavailable, "fork() failed");
    if (pid == 0) {
        ::dup2(down[0], STDIN_FILENO);
        ::dup2(up[1], STDOUT_FILENO);
        ::close(down[0]);
        ::close(down[1]);
        ::close(up[0]);
        ::close(up[1]);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(down[0]);
    ::close(up[1]);
    to_child_ = down[1];
    from_child_ = up[0];
    pid_ = pid;
}

ProcessChannel::~ProcessChannel() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    if (pid_ > 0) {
        int status = 0;
        ::waitpid(pid_, &status, 0);
    }
}

std::optional<std::string> ProcessChannel::read_line() { return read_line_fd(from_child_, buffer_); }

void ProcessChannel::write_line(std::string_view line) {
    std::string framed(line);
    framed.push_back('\n');
    write_all(to_child_, framed, false);
}

TcpChannel::TcpChannel(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0) {
        throw Error(Errc::ProviderUnavailable, "cannot resolve " + host);
    }
    for (addrinfo* p = res; p != nullptr; p = p->ai_next) {
        int fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) {
            fd_ = fd;
            break;
        }
        ::close(fd);
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw Error(Errc::ProviderUnavailable, "cannot connect to " + host + ":" + service);
}

TcpChannel::~TcpChannel() {
    if (fd_ >= 0) ::close(fd_);
}

std::optional<std::string> TcpChannel::read_line() { return read_line_fd(fd_, buffer_); }

void TcpChannel::write_line(std::string_view line) {
    std::string framed(line);
    framed.push_back('\n');
    write_all(fd_, framed, true);
}

// ---------------------------------------------------------------------------

ExternalLogitProvider::ExternalLogitProvider(std::unique_ptr<LineChannel> channel,
                                             std::size_t vocab_size)
    : channel_(std::move(channel)), vocab_size_(vocab_size) {
    auto hello = channel_->read_line();
    if (!hello) throw Error(Errc::ProviderUnavailable, "provider closed before handshake");
    json doc = json::parse(*hello, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || doc.value("protocol", "") != kLogitsProtocol) {
        throw Error(Errc::ProviderUnavailable, "unrecognized handshake: " + *hello);
    }
    if (doc.value("version", -1) != kLogitsProtocolVersion) {
        throw Error(Errc::ProviderUnavailable, "unsupported protocol version in " + *hello);
    }
}

LogitVector ExternalLogitProvider::logits(std::span<const TokenId> prefix) {
    json req = {{"prefix", std::vector<TokenId>(prefix.begin(), prefix.end())},
                {"vocab", vocab_size_}};
    channel_->write_line(req.dump());
    auto line = channel_->read_line();
    if (!line) throw Error(Errc::ProviderUnavailable, "provider closed the stream");

    json doc = json::parse(*line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw Error(Errc::ProviderUnavailable, "malformed response");
    }
    if (doc.contains("error")) {
        throw Error(Errc::ProviderUnavailable, "provider error: " + doc["error"].dump());
    }
    auto it = doc.find("logits");
    if (it == doc.end() || !it->is_array() || it->size() != vocab_size_) {
        throw Error(Errc::ProviderUnavailable, "response does not carry " +
                                                   std::to_string(vocab_size_) + " logits");
    }
    LogitVector z;
    z.reserve(vocab_size_);
    for (const auto& v : *it) {
        if (!v.is_number()) throw Error(Errc::ProviderUnavailable, "non-numeric logit");
        double x = v.get<double>();
        if (!std::isfinite(x)) throw Error(Errc::ProviderUnavailable, "non-finite logit");
        z.push_back(x);
    }
    return z;
}

std::size_t serve_logits(LogitProvider& provider, LineChannel& channel) {
    channel.write_line(json{{"protocol", kLogitsProtocol}, {"version", kLogitsProtocolVersion}}.dump());
    std::size_t served = 0;
    while (auto line = channel.read_line()) {
        if (line->empty()) continue;
        json reply;
        try {
            json req = json::parse(*line);
            auto prefix = req.at("prefix").get<std::vector<TokenId>>();
            auto vocab = req.at("vocab").get<std::size_t>();
            if (vocab != provider.vocab_size()) {
                reply = {{"error", "vocab mismatch: provider has " +
                                       std::to_string(provider.vocab_size())}};
            } else {
                reply = {{"logits", provider.logits(prefix)}};
            }
        } catch (const std::exception& e) {
            reply = {{"error", e.what()}};
        }
        channel.write_line(reply.dump());
        ++served;
    }
    return served;
}

}  // namespace odd
