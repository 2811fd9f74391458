#include "odd/vocab.hpp"

#include <cctype>
#include <fstream>
#include <utility>

#include "odd/error.hpp"

namespace odd {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::UnknownToken: return "UnknownToken";
        case Errc::UnknownId: return "UnknownId";
        case Errc::EmptySequence: return "EmptySequence";
        case Errc::TimestampRegression: return "TimestampRegression";
        case Errc::CorruptSnapshot: return "CorruptSnapshot";
        case Errc::VersionMismatch: return "VersionMismatch";
        case Errc::EmptyCandidates: return "EmptyCandidates";
        case Errc::ProviderUnavailable: return "ProviderUnavailable";
        case Errc::EmptyCorpus: return "EmptyCorpus";
        case Errc::NonPositiveTemperature: return "NonPositiveTemperature";
        case Errc::MissingSubstitution: return "MissingSubstitution";
        case Errc::InvalidSchedule: return "InvalidSchedule";
        case Errc::InvalidTemplate: return "InvalidTemplate";
        case Errc::EmptyWindow: return "EmptyWindow";
        case Errc::EmptyReference: return "EmptyReference";
        case Errc::EmptyList: return "EmptyList";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::Io: return "Io";
    }
    return "Unknown";
}

bool VocabRegistry::contains(std::string_view token) const {
    return token_to_id_.find(std::string(token)) != token_to_id_.end();
}

TokenId VocabRegistry::intern(std::string_view token) {
    auto [it, inserted] =
        token_to_id_.try_emplace(std::string(token), static_cast<TokenId>(id_to_token_.size()));
    if (inserted) id_to_token_.emplace_back(token);
    return it->second;
}

TokenId VocabRegistry::id(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    if (it == token_to_id_.end()) {
        throw Error(Errc::UnknownToken, "'" + std::string(token) + "' is not registered");
    }
    return it->second;
}

const std::string& VocabRegistry::token(TokenId id) const {
    if (id >= id_to_token_.size()) {
        throw Error(Errc::UnknownId, "id " + std::to_string(id) + " outside vocabulary of size " +
                                         std::to_string(id_to_token_.size()));
    }
    return id_to_token_[id];
}

void VocabRegistry::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    for (const auto& t : id_to_token_) out << t << '\n';
}

VocabRegistry VocabRegistry::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot read " + path.string());
    VocabRegistry reg;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) throw Error(Errc::Io, "empty vocabulary line in " + path.string());
        if (reg.contains(line)) throw Error(Errc::Io, "duplicate vocabulary entry '" + line + "'");
        reg.intern(line);
    }
    return reg;
}

VocabRegistry VocabRegistry::from_tokens(std::span<const std::string> tokens) {
    VocabRegistry reg;
    for (const auto& t : tokens) {
        if (reg.contains(t)) throw Error(Errc::InvalidConfig, "duplicate vocabulary entry '" + t + "'");
        reg.intern(t);
    }
    return reg;
}

std::vector<std::string_view> split_whitespace(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) out.push_back(text.substr(start, i - start));
    }
    return out;
}

std::string normalize_whitespace(std::string_view text) {
    std::string out;
    for (auto piece : split_whitespace(text)) {
        if (!out.empty()) out.push_back(' ');
        out.append(piece);
    }
    return out;
}

TokenSeq tokenize(std::string_view text, VocabRegistry& registry, bool grow) {
    if (!grow) return tokenize(text, std::as_const(registry));
    auto pieces = split_whitespace(text);
    if (pieces.empty()) throw Error(Errc::EmptyInput, "nothing to tokenize");
    TokenSeq ids;
    ids.reserve(pieces.size());
    for (auto p : pieces) ids.push_back(registry.intern(p));
    return ids;
}

TokenSeq tokenize(std::string_view text, const VocabRegistry& registry) {
    auto pieces = split_whitespace(text);
    if (pieces.empty()) throw Error(Errc::EmptyInput, "nothing to tokenize");
    TokenSeq ids;
    ids.reserve(pieces.size());
    for (auto p : pieces) ids.push_back(registry.id(p));
    return ids;
}

std::string detokenize(std::span<const TokenId> ids, const VocabRegistry& registry) {
    std::string out;
    for (TokenId id : ids) {
        if (!out.empty()) out.push_back(' ');
        out += registry.token(id);
    }
    return out;
}

}  // namespace odd
