#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace odd {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

// Bidirectional surface-form <-> id map shared by the trie, the base LM and
// the fusion engine. Ids are handed out first-come and never change.
//
// Single writer: lookups may run concurrently only while nobody registers.
class VocabRegistry {
public:
    VocabRegistry() = default;

    std::size_t size() const noexcept { return id_to_token_.size(); }
    bool contains(std::string_view token) const;

    // Returns the existing id or registers the token under the next free id.
    TokenId intern(std::string_view token);

    // Throws Errc::UnknownToken.
    TokenId id(std::string_view token) const;
    // Throws Errc::UnknownId.
    const std::string& token(TokenId id) const;

    const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }

    // Newline-delimited UTF-8, line number = id.
    void save(const std::filesystem::path& path) const;
    static VocabRegistry load(const std::filesystem::path& path);
    static VocabRegistry from_tokens(std::span<const std::string> tokens);

private:
    std::unordered_map<std::string, TokenId> token_to_id_;
    std::vector<std::string> id_to_token_;
};

// Splits on whitespace. grow=false requires every token to be registered.
// Throws Errc::EmptyInput for blank text, Errc::UnknownToken for unseen forms.
TokenSeq tokenize(std::string_view text, VocabRegistry& registry, bool grow);
TokenSeq tokenize(std::string_view text, const VocabRegistry& registry);

// Joins surface forms with single spaces. Throws Errc::UnknownId.
std::string detokenize(std::span<const TokenId> ids, const VocabRegistry& registry);

std::vector<std::string_view> split_whitespace(std::string_view text);
std::string normalize_whitespace(std::string_view text);

}  // namespace odd
