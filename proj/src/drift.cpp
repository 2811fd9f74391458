#include "odd/drift.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "odd/error.hpp"

namespace odd::drift {

using json = nlohmann::json;

std::string_view kind_name(DriftKind kind) noexcept {
    switch (kind) {
        case DriftKind::Abrupt: return "abrupt";
        case DriftKind::Incremental: return "incremental";
        case DriftKind::Gradual: return "gradual";
    }
    return "?";
}

DriftKind parse_kind(std::string_view name) {
    if (name == "abrupt") return DriftKind::Abrupt;
    if (name == "incremental") return DriftKind::Incremental;
    if (name == "gradual") return DriftKind::Gradual;
    throw Error(Errc::InvalidSchedule, "unknown drift kind '" + std::string(name) + "'");
}

void DriftSchedule::validate() const {
    if (concepts.empty()) throw Error(Errc::InvalidSchedule, "schedule has no concepts");
    const std::size_t transitions = concepts.size() - 1;
    if (kind == DriftKind::Gradual) {
        if (ramps.size() != transitions) {
            throw Error(Errc::InvalidSchedule, "gradual drift needs one ramp per concept transition");
        }
        for (std::size_t j = 0; j < ramps.size(); ++j) {
            if (ramps[j].end <= ramps[j].start) throw Error(Errc::InvalidSchedule, "empty ramp");
            if (j > 0 && ramps[j].start < ramps[j - 1].end) {
                throw Error(Errc::InvalidSchedule, "ramps overlap or are out of order");
            }
        }
    } else {
        if (switch_points.size() != transitions) {
            throw Error(Errc::InvalidSchedule, "need one switch point per concept transition");
        }
        for (std::size_t j = 0; j < switch_points.size(); ++j) {
            if (j > 0 && switch_points[j] <= switch_points[j - 1]) {
                throw Error(Errc::InvalidSchedule, "switch points must be strictly increasing");
            }
        }
    }
}

std::pair<std::size_t, double> DriftSchedule::mixing(std::size_t index) const {
    std::size_t ramp = 0;
    while (ramp + 1 < ramps.size() && ramps[ramp + 1].start <= index) ++ramp;
    if (ramps.empty() || index < ramps[ramp].start) return {ramp, 0.0};
    if (index >= ramps[ramp].end) return {ramp, 1.0};
    return {ramp, static_cast<double>(index - ramps[ramp].start) /
                      static_cast<double>(ramps[ramp].end - ramps[ramp].start)};
}

Instantiation instantiate(std::string_view templ, const ConceptSpec& concept_spec) {
    Instantiation out;
    std::vector<std::string> words;
    bool seen_placeholder = false;
    for (auto word : split_whitespace(templ)) {
        const bool is_placeholder = word.size() > 2 && word.front() == '{' && word.back() == '}';
        if (!is_placeholder) {
            if (word.find_first_of("{}") != std::string_view::npos) {
                throw Error(Errc::InvalidTemplate, "malformed placeholder in '" + std::string(templ) + "'");
            }
            words.emplace_back(word);
            if (!seen_placeholder) {
                if (!out.prompt.empty()) out.prompt.push_back(' ');
                out.prompt.append(word);
            }
            continue;
        }
        seen_placeholder = true;
        std::string name(word.substr(1, word.size() - 2));
        auto it = concept_spec.substitutions.find(name);
        if (it == concept_spec.substitutions.end()) {
            throw Error(Errc::MissingSubstitution,
                        "concept '" + concept_spec.id + "' has no value for {" + name + "}");
        }
        auto value = split_whitespace(it->second);
        if (value.empty()) {
            throw Error(Errc::MissingSubstitution, "empty value for {" + name + "}");
        }
        PlaceholderSpan span{name, words.size(), words.size() + value.size()};
        for (auto v : value) words.emplace_back(v);
        out.placeholders.push_back(std::move(span));
    }
    if (out.prompt.empty()) {
        throw Error(Errc::InvalidTemplate,
                    "template must start with at least one literal word: '" + std::string(templ) + "'");
    }
    for (const auto& w : words) {
        if (!out.text.empty()) out.text.push_back(' ');
        out.text += w;
    }
    return out;
}

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::vector<StreamItem> generate_stream(std::span<const std::string> templates,
                                        const DriftSchedule& schedule, std::size_t length,
                                        const StreamOptions& options) {
    if (templates.empty()) throw Error(Errc::InvalidTemplate, "no templates");
    if (options.time_step <= 0) throw Error(Errc::InvalidSchedule, "time_step must be positive");
    schedule.validate();
    // Surface template/substitution problems before drawing anything.
    for (const auto& t : templates) {
        for (const auto& c : schedule.concepts) instantiate(t, c);
    }

    std::mt19937_64 rng(schedule.seed);
    std::vector<StreamItem> items;
    items.reserve(length);
    for (std::size_t i = 0; i < length; ++i) {
        const std::size_t templ = static_cast<std::size_t>(rng() % templates.size());
        const double u = uniform01(rng);

        std::size_t concept_index = 0;
        if (schedule.kind == DriftKind::Gradual) {
            auto [ramp, p] = schedule.mixing(i);
            if (!schedule.ramps.empty() && i >= schedule.ramps[0].start) {
                concept_index = u < p ? ramp + 1 : ramp;
            }
        } else {
            concept_index = static_cast<std::size_t>(
                std::upper_bound(schedule.switch_points.begin(), schedule.switch_points.end(), i) -
                schedule.switch_points.begin());
        }
        const auto& concept_spec = schedule.concepts[concept_index];
        auto inst = instantiate(templates[templ], concept_spec);

        StreamItem item;
        item.index = i;
        item.prompt = std::move(inst.prompt);
        item.reference = std::move(inst.text);
        item.timestamp = options.base_time + static_cast<Timestamp>(i + 1) * options.time_step;
        item.concept_id = concept_spec.id;
        item.template_index = templ;
        item.placeholders = std::move(inst.placeholders);
        items.push_back(std::move(item));
    }
    return items;
}

double lexical_drift_telemetry(std::span<const std::string> window_a,
                               std::span<const std::string> window_b) {
    if (window_a.empty() || window_b.empty()) throw Error(Errc::EmptyWindow, "empty drift window");
    std::map<std::string_view, std::pair<double, double>> counts;
    for (const auto& t : window_a) counts[t].first += 1.0;
    for (const auto& t : window_b) counts[t].second += 1.0;
    std::vector<double> p;
    std::vector<double> q;
    p.reserve(counts.size());
    q.reserve(counts.size());
    for (const auto& [_, c] : counts) {
        p.push_back(c.first / static_cast<double>(window_a.size()));
        q.push_back(c.second / static_cast<double>(window_b.size()));
    }
    return std::sqrt(jensen_shannon(p, q));
}

std::vector<double> drift_profile(std::span<const StreamItem> items, std::size_t window) {
    if (window == 0) throw Error(Errc::EmptyWindow, "window must be positive");
    std::vector<std::vector<std::string>> windows;
    for (std::size_t start = 0; start + window <= items.size(); start += window) {
        std::vector<std::string> tokens;
        for (std::size_t i = start; i < start + window; ++i) {
            for (auto w : split_whitespace(items[i].reference)) tokens.emplace_back(w);
        }
        windows.push_back(std::move(tokens));
    }
    std::vector<double> out;
    for (std::size_t j = 0; j + 1 < windows.size(); ++j) {
        out.push_back(lexical_drift_telemetry(windows[j], windows[j + 1]));
    }
    return out;
}

// ---------------------------------------------------------------------------

Scenario parse_scenario(std::string_view json_text) {
    Scenario sc;
    try {
        json doc = json::parse(json_text);
        sc.templates = doc.at("templates").get<std::vector<std::string>>();
        for (const auto& c : doc.at("concepts")) {
            ConceptSpec spec;
            spec.id = c.at("id").get<std::string>();
            spec.substitutions = c.at("substitutions").get<std::map<std::string, std::string>>();
            sc.schedule.concepts.push_back(std::move(spec));
        }
        const auto& sched = doc.at("schedule");
        sc.schedule.kind = parse_kind(sched.at("kind").get<std::string>());
        sc.schedule.switch_points = sched.value("switch_points", std::vector<std::size_t>{});
        for (const auto& r : sched.value("ramps", json::array())) {
            sc.schedule.ramps.push_back(Ramp{r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()});
        }
        sc.schedule.seed = doc.value("seed", std::uint64_t{0});
        sc.length = doc.at("length").get<std::size_t>();
        if (doc.contains("stream")) {
            sc.stream.base_time = doc["stream"].value("base_time", sc.stream.base_time);
            sc.stream.time_step = doc["stream"].value("time_step", sc.stream.time_step);
        }
        const auto lm = doc.value("base_lm_training", json::object());
        sc.lm_concept = lm.value("concept", sc.schedule.concepts.empty() ? std::string{} : sc.schedule.concepts.front().id);
        sc.lm_repeats = lm.value("repeats", std::size_t{1});
        sc.warm_start = lm.value("warm_start_trie", false);
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, std::string("malformed scenario: ") + e.what());
    }
    sc.schedule.validate();
    if (sc.templates.empty()) throw Error(Errc::InvalidTemplate, "scenario has no templates");
    if (sc.lm_repeats == 0) throw Error(Errc::InvalidConfig, "base_lm_training.repeats must be >= 1");
    bool found = false;
    for (const auto& c : sc.schedule.concepts) found = found || c.id == sc.lm_concept;
    if (!found) throw Error(Errc::InvalidConfig, "unknown LM training concept '" + sc.lm_concept + "'");
    return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

std::vector<std::string> lm_training_corpus(const Scenario& scenario) {
    const ConceptSpec* spec = nullptr;
    for (const auto& c : scenario.schedule.concepts) {
        if (c.id == scenario.lm_concept) spec = &c;
    }
    if (spec == nullptr) throw Error(Errc::InvalidConfig, "unknown LM training concept");
    std::vector<std::string> corpus;
    for (std::size_t r = 0; r < scenario.lm_repeats; ++r) {
        for (const auto& t : scenario.templates) corpus.push_back(instantiate(t, *spec).text);
    }
    return corpus;
}

// ---------------------------------------------------------------------------

Generation decode(std::span<const TokenId> prompt, const PrefixTrie& trie, LogitProvider& provider,
                  const FusionEngine& engine, const OnlineConfig& config, TokenId end_marker,
                  Timestamp now) {
    Generation gen;
    gen.tokens.assign(prompt.begin(), prompt.end());
    FusionState state{};
    double gamma_sum = 0.0;
    std::size_t fused_steps = 0;
    const SparseDistribution no_prior;

    for (std::size_t step = 0; step < config.max_new_tokens; ++step) {
        const LogitVector z = provider.logits(gen.tokens);
        if (z.size() != provider.vocab_size()) {
            throw Error(Errc::ProviderUnavailable, "provider returned a mis-sized logit vector");
        }
        const SparseDistribution prior = engine.config().use_prior
                                             ? trie_prior(trie, gen.tokens, now, config.weights)
                                             : no_prior;
        StepResult res = engine.step(z, prior, state);
        state = res.state;

        ++gen.summary.steps;
        if (res.diagnostics.bypass) {
            ++gen.summary.bypass_steps;
        } else {
            gamma_sum += res.diagnostics.gamma;
            ++fused_steps;
        }
        if (res.diagnostics.calibration_clamped) ++gen.summary.clamped_steps;
        if (config.trace) gen.trace.push_back(TraceStep{step, res.token, res.diagnostics});

        if (res.token == end_marker) break;
        gen.tokens.push_back(res.token);
    }
    gen.summary.mean_gamma = fused_steps > 0 ? gamma_sum / static_cast<double>(fused_steps) : 1.0;
    return gen;
}

std::vector<ItemRecord> run_online(std::span<const StreamItem> stream, PrefixTrie& trie,
                                   LogitProvider& provider, const VocabRegistry& vocab,
                                   const OnlineConfig& config) {
    if (provider.vocab_size() != vocab.size()) {
        throw Error(Errc::InvalidConfig, "provider vocabulary (" + std::to_string(provider.vocab_size()) +
                                             ") differs from registry (" + std::to_string(vocab.size()) + ")");
    }
    config.weights.validate();
    const TokenId end = vocab.id(config.end_marker);
    const FusionEngine engine(config.fusion);

    std::vector<ItemRecord> records;
    records.reserve(stream.size());
    for (const auto& item : stream) {
        const TokenSeq prompt = tokenize(item.prompt, vocab);
        TokenSeq reference = tokenize(item.reference, vocab);

        Generation gen = decode(prompt, trie, provider, engine, config, end, item.timestamp);

        ItemRecord rec;
        rec.index = item.index;
        rec.concept_id = item.concept_id;
        rec.prompt = item.prompt;
        rec.reference = item.reference;
        rec.hypothesis = detokenize(gen.tokens, vocab);
        rec.metrics = metrics::evaluate_pair(rec.reference, rec.hypothesis);
        for (const auto& span : item.placeholders) {
            for (std::size_t pos = span.begin; pos < span.end; ++pos) {
                ++rec.placeholder_tokens;
                if (pos < gen.tokens.size() && gen.tokens[pos] == reference[pos]) ++rec.placeholder_hits;
            }
        }
        rec.summary = gen.summary;
        rec.trace = std::move(gen.trace);
        records.push_back(std::move(rec));

        // Train only after the item has been scored.
        reference.push_back(end);
        trie.insert_sequence(reference, item.timestamp);
    }
    return records;
}

}  // namespace odd::drift
