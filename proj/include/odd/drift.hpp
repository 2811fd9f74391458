#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "odd/base_lm.hpp"
#include "odd/fusion.hpp"
#include "odd/metrics.hpp"
#include "odd/prefix_trie.hpp"
#include "odd/trie_prior.hpp"

namespace odd::drift {

// One domain state: placeholder name -> surface value (may span several words).
struct ConceptSpec {
    std::string id;
    std::map<std::string, std::string> substitutions;
};

enum class DriftKind { Abrupt, Incremental, Gradual };

std::string_view kind_name(DriftKind kind) noexcept;
DriftKind parse_kind(std::string_view name);

// Probability of the incoming concept rises linearly from 0 at `start` to 1 at
// `end` (exclusive).
struct Ramp {
    std::size_t start = 0;
    std::size_t end = 0;
};

struct DriftSchedule {
    DriftKind kind = DriftKind::Abrupt;
    std::vector<ConceptSpec> concepts;
    // Abrupt / incremental: concept j+1 takes over at switch_points[j].
    std::vector<std::size_t> switch_points;
    // Gradual: concept j+1 blends in over ramps[j].
    std::vector<Ramp> ramps;
    std::uint64_t seed = 0;

    // Throws Errc::InvalidSchedule.
    void validate() const;
    // Probability that item `index` is drawn from the incoming concept of the
    // ramp it falls in (gradual only), together with that ramp's index.
    std::pair<std::size_t, double> mixing(std::size_t index) const;
};

struct PlaceholderSpan {
    std::string name;
    std::size_t begin = 0;  // token positions in the reference
    std::size_t end = 0;
};

struct StreamItem {
    std::size_t index = 0;
    std::string prompt;
    std::string reference;
    Timestamp timestamp = 0;
    std::string concept_id;
    std::size_t template_index = 0;
    std::vector<PlaceholderSpan> placeholders;
};

struct StreamOptions {
    Timestamp base_time = 1'700'000'000;
    Timestamp time_step = 60;
};

struct Instantiation {
    std::string prompt;
    std::string text;
    std::vector<PlaceholderSpan> placeholders;
};

// Placeholders are whole whitespace-delimited words of the form {NAME}; the
// prompt is everything before the first one. Throws Errc::InvalidTemplate,
// Errc::MissingSubstitution.
Instantiation instantiate(std::string_view templ, const ConceptSpec& concept_spec);

// Item i gets timestamp base_time + (i + 1) * time_step. Deterministic in the
// schedule seed. Throws Errc::MissingSubstitution, Errc::InvalidSchedule,
// Errc::InvalidTemplate.
std::vector<StreamItem> generate_stream(std::span<const std::string> templates,
                                        const DriftSchedule& schedule, std::size_t length,
                                        const StreamOptions& options = {});

// sqrt(JSD) between the unigram distributions of two token windows.
// Throws Errc::EmptyWindow.
double lexical_drift_telemetry(std::span<const std::string> window_a,
                               std::span<const std::string> window_b);

// Distance between consecutive non-overlapping windows of reference tokens;
// entry j compares window j with window j+1.
std::vector<double> drift_profile(std::span<const StreamItem> items, std::size_t window);

// ---------------------------------------------------------------------------

struct Scenario {
    std::vector<std::string> templates;
    DriftSchedule schedule;
    std::size_t length = 0;
    StreamOptions stream;
    std::string lm_concept;     // concept the base LM is trained on
    std::size_t lm_repeats = 1; // copies of each instantiated template
    bool warm_start = false;    // pre-load the trie with the LM corpus
};

// Throws Errc::InvalidConfig on malformed JSON, plus schedule errors.
Scenario parse_scenario(std::string_view json_text);
Scenario load_scenario(const std::filesystem::path& path);

// Every template instantiated with the LM concept, repeated lm_repeats times.
std::vector<std::string> lm_training_corpus(const Scenario& scenario);

// ---------------------------------------------------------------------------

struct OnlineConfig {
    FusionConfig fusion;
    ScoringWeights weights;
    std::size_t max_new_tokens = 64;
    std::string end_marker = "</s>";
    bool trace = false;
};

struct TraceStep {
    std::size_t step = 0;
    TokenId token = 0;
    StepDiagnostics diagnostics;
};

struct DecodeSummary {
    std::size_t steps = 0;
    std::size_t bypass_steps = 0;
    std::size_t clamped_steps = 0;
    double mean_gamma = 1.0;  // over fused (non-bypass) steps
};

struct ItemRecord {
    std::size_t index = 0;
    std::string concept_id;
    std::string prompt;
    std::string reference;
    std::string hypothesis;
    metrics::MetricBundle metrics;
    std::size_t placeholder_tokens = 0;
    std::size_t placeholder_hits = 0;
    DecodeSummary summary;
    std::vector<TraceStep> trace;
};

struct Generation {
    TokenSeq tokens;  // prompt followed by the continuation, end marker dropped
    DecodeSummary summary;
    std::vector<TraceStep> trace;
};

// Decodes a continuation of `prompt` until the end marker or max_new_tokens.
Generation decode(std::span<const TokenId> prompt, const PrefixTrie& trie, LogitProvider& provider,
                  const FusionEngine& engine, const OnlineConfig& config, TokenId end_marker,
                  Timestamp now);

// Prequential loop: every item is decoded with the current trie, scored, and
// only then its reference (plus end marker) is inserted. `vocab` must already
// hold every stream token and the end marker, and match provider.vocab_size().
std::vector<ItemRecord> run_online(std::span<const StreamItem> stream, PrefixTrie& trie,
                                   LogitProvider& provider, const VocabRegistry& vocab,
                                   const OnlineConfig& config);

}  // namespace odd::drift
