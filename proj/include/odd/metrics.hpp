#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace odd::metrics {

// Lexical scores of one hypothesis against one reference. All fields are
// higher-is-better. token_cosine is a bag-of-words proxy, not an embedding
// similarity.
struct MetricBundle {
    double exact_match = 0.0;      // {0, 1}
    double edit_similarity = 0.0;  // 1 - Levenshtein / max length, characters
    double bleu = 0.0;             // [0, 1]
    double rouge_l = 0.0;          // [0, 1]
    double chrf = 0.0;             // [0, 100]
    double token_cosine = 0.0;     // [0, 1]

    static constexpr std::size_t kFields = 6;
    static constexpr std::array<const char*, kFields> kNames = {
        "exact_match", "edit_similarity", "bleu", "rouge_l", "chrf", "token_cosine"};

    std::array<double, kFields> as_array() const;
    static MetricBundle from_array(const std::array<double, kFields>& values);
};

// Parameterization notes emitted in report headers.
inline constexpr const char* kBleuVariant =
    "sentence BLEU, n<=4, uniform weights, add-one smoothing for n>=2, brevity penalty, whitespace tokens";
inline constexpr const char* kChrfVariant =
    "chrF, character n<=6, beta=2, whitespace removed, precision/recall averaged over effective orders";

// Throws Errc::EmptyReference.
MetricBundle evaluate_pair(std::string_view reference, std::string_view hypothesis);

double exact_match(std::string_view reference, std::string_view hypothesis);
double edit_similarity(std::string_view a, std::string_view b);
double bleu(std::string_view reference, std::string_view hypothesis);
double rouge_l(std::string_view reference, std::string_view hypothesis);
double chrf(std::string_view reference, std::string_view hypothesis);
double token_cosine(std::string_view a, std::string_view b);

// Code-point Levenshtein distance.
std::size_t levenshtein(std::string_view a, std::string_view b);
std::u32string utf8_codepoints(std::string_view text);

// Throws Errc::EmptyList.
MetricBundle aggregate(std::span<const MetricBundle> bundles);

struct ConfidenceInterval {
    MetricBundle lower;
    MetricBundle upper;
};

// Percentile bootstrap of the per-field means; deterministic in `seed`.
ConfidenceInterval bootstrap_ci(std::span<const MetricBundle> bundles, std::size_t resamples = 1000,
                                std::uint64_t seed = 0, double level = 0.95);

}  // namespace odd::metrics
