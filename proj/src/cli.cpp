#include "odd/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "odd/base_lm.hpp"
#include "odd/drift.hpp"
#include "odd/error.hpp"
#include "odd/fusion.hpp"
#include "odd/metrics.hpp"
#include "odd/prefix_trie.hpp"
#include "odd/trie_prior.hpp"
#include "odd/vocab.hpp"

namespace odd::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run configuration

struct BaseLmSpec {
    std::string kind = "builtin";  // builtin | external
    std::size_t order = 3;
    double smoothing_k = 0.01;
    std::string command;           // external over a child process
    std::string host;              // external over TCP
    std::uint16_t port = 0;
    std::string vocab;             // external: vocabulary file of the provider
};

struct RunConfig {
    Strategy strategy = Strategy::Odd;
    std::optional<std::uint64_t> seed;
    ScoringWeights weights;
    TrieConfig trie;
    FusionConfig fusion;
    double temp_scaled_temperature = 0.7;
    std::size_t max_new_tokens = 64;
    std::string end_marker = "</s>";
    BaseLmSpec base_lm;
    std::size_t bootstrap_resamples = 1000;
};

RunConfig parse_config(const json& doc) {
    RunConfig cfg;
    if (doc.contains("strategy")) cfg.strategy = parse_strategy(doc["strategy"].get<std::string>());
    if (doc.contains("seed") && !doc["seed"].is_null()) cfg.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("scoring")) {
        const auto& s = doc["scoring"];
        cfg.weights.frequency = s.value("lambda_frequency", cfg.weights.frequency);
        cfg.weights.length = s.value("lambda_length", cfg.weights.length);
        cfg.weights.recency = s.value("lambda_recency", cfg.weights.recency);
        const double total = cfg.weights.frequency + cfg.weights.length + cfg.weights.recency;
        // Config files carry decimals such as 0.3333; accept them and renormalize.
        if (std::abs(total - 1.0) > 1e-3) {
            throw Error(Errc::InvalidConfig, "scoring weights must sum to 1");
        }
        cfg.weights.frequency /= total;
        cfg.weights.length /= total;
        cfg.weights.recency /= total;
        cfg.weights.validate();
    }
    if (doc.contains("trie")) cfg.trie.n_max = doc["trie"].value("n_max", cfg.trie.n_max);
    if (cfg.trie.n_max < 2) throw Error(Errc::InvalidConfig, "trie.n_max must be >= 2");
    if (doc.contains("fusion")) {
        const auto& f = doc["fusion"];
        cfg.fusion.top_k = f.value("top_k", cfg.fusion.top_k);
        cfg.fusion.continuity_scale = f.value("continuity_scale", cfg.fusion.continuity_scale);
        cfg.temp_scaled_temperature = f.value("temp_scaled_temperature", cfg.temp_scaled_temperature);
        if (f.contains("calibration")) {
            const auto& c = f["calibration"];
            auto& o = cfg.fusion.calibration;
            o.t_lo = c.value("t_lo", o.t_lo);
            o.t_hi = c.value("t_hi", o.t_hi);
            o.t_floor = c.value("t_floor", o.t_floor);
            o.t_ceiling = c.value("t_ceiling", o.t_ceiling);
            o.tolerance = c.value("tolerance", o.tolerance);
            o.max_iterations = c.value("max_iterations", o.max_iterations);
        }
    }
    cfg.fusion.validate();
    if (!(cfg.temp_scaled_temperature > 0.0)) {
        throw Error(Errc::InvalidConfig, "fusion.temp_scaled_temperature must be > 0");
    }
    if (doc.contains("decode")) {
        cfg.max_new_tokens = doc["decode"].value("max_new_tokens", cfg.max_new_tokens);
        cfg.end_marker = doc["decode"].value("end_marker", cfg.end_marker);
    }
    if (split_whitespace(cfg.end_marker).size() != 1) {
        throw Error(Errc::InvalidConfig, "decode.end_marker must be a single token");
    }
    if (doc.contains("base_lm")) {
        const auto& b = doc["base_lm"];
        cfg.base_lm.kind = b.value("kind", cfg.base_lm.kind);
        cfg.base_lm.order = b.value("order", cfg.base_lm.order);
        cfg.base_lm.smoothing_k = b.value("smoothing_k", cfg.base_lm.smoothing_k);
        cfg.base_lm.command = b.value("command", cfg.base_lm.command);
        cfg.base_lm.host = b.value("host", cfg.base_lm.host);
        cfg.base_lm.port = b.value("port", cfg.base_lm.port);
        cfg.base_lm.vocab = b.value("vocab", cfg.base_lm.vocab);
        if (cfg.base_lm.kind != "builtin" && cfg.base_lm.kind != "external") {
            throw Error(Errc::InvalidConfig, "base_lm.kind must be builtin or external");
        }
        if (cfg.base_lm.kind == "external") {
            if (cfg.base_lm.command.empty() == cfg.base_lm.host.empty()) {
                throw Error(Errc::InvalidConfig, "external base_lm needs exactly one of command or host");
            }
            if (cfg.base_lm.vocab.empty()) throw Error(Errc::InvalidConfig, "external base_lm needs a vocab file");
        }
    }
    if (doc.contains("bootstrap")) {
        cfg.bootstrap_resamples = doc["bootstrap"].value("resamples", cfg.bootstrap_resamples);
    }
    return cfg;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    return out;
}

RunConfig load_config(const std::string& explicit_path) {
    std::string path = explicit_path;
    if (path.empty()) {
        if (const char* env = std::getenv(kConfigEnv)) path = env;
    }
    if (path.empty()) return RunConfig{};
    try {
        return parse_config(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, "malformed config " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Stream files

json item_to_json(const drift::StreamItem& item) {
    json spans = json::array();
    for (const auto& s : item.placeholders) {
        spans.push_back({{"name", s.name}, {"begin", s.begin}, {"end", s.end}});
    }
    return {{"index", item.index},       {"concept", item.concept_id}, {"template", item.template_index},
            {"timestamp", item.timestamp}, {"prompt", item.prompt},    {"reference", item.reference},
            {"placeholders", std::move(spans)}};
}

std::vector<drift::StreamItem> read_stream(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot read " + path.string());
    std::vector<drift::StreamItem> items;
    std::string line;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            drift::StreamItem item;
            item.index = j.at("index").get<std::size_t>();
            item.concept_id = j.at("concept").get<std::string>();
            item.template_index = j.value("template", std::size_t{0});
            item.timestamp = j.at("timestamp").get<Timestamp>();
            item.prompt = j.at("prompt").get<std::string>();
            item.reference = j.at("reference").get<std::string>();
            for (const auto& s : j.value("placeholders", json::array())) {
                item.placeholders.push_back({s.at("name").get<std::string>(), s.at("begin").get<std::size_t>(),
                                             s.at("end").get<std::size_t>()});
            }
            if (!items.empty() && item.timestamp <= items.back().timestamp) {
                throw Error(Errc::InvalidSchedule, "stream timestamps must increase strictly");
            }
            items.push_back(std::move(item));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, "malformed stream " + path.string() + ": " + e.what());
    }
    return items;
}

// ---------------------------------------------------------------------------
// Session: vocabulary + stream + base LM

struct Source {
    std::string scenario;
    std::string stream;
    std::string lm;
};

struct Session {
    VocabRegistry vocab;
    std::vector<drift::StreamItem> stream;
    std::unique_ptr<LogitProvider> provider;
    std::vector<TokenSeq> warm_corpus;
    Timestamp warm_timestamp = 0;
    std::string label;
    std::uint64_t seed = 0;
};

void intern_stream(VocabRegistry& vocab, const std::vector<drift::StreamItem>& stream) {
    for (const auto& item : stream) {
        tokenize(item.prompt, vocab, true);
        tokenize(item.reference, vocab, true);
    }
}

std::unique_ptr<LogitProvider> connect_external(const BaseLmSpec& spec, std::size_t vocab_size) {
    std::unique_ptr<LineChannel> channel;
    if (!spec.command.empty()) {
        channel = std::make_unique<ProcessChannel>(spec.command);
    } else {
        channel = std::make_unique<TcpChannel>(spec.host, spec.port);
    }
    return std::make_unique<ExternalLogitProvider>(std::move(channel), vocab_size);
}

Session build_session(const RunConfig& cfg, const Source& src) {
    const bool from_scenario = !src.scenario.empty();
    if (from_scenario == !src.stream.empty()) {
        throw Error(Errc::InvalidConfig, "give either --scenario or --stream");
    }
    Session s;
    std::vector<std::string> lm_corpus;
    std::optional<NGramModel> model;

    if (from_scenario) {
        auto sc = drift::load_scenario(src.scenario);
        if (cfg.seed) sc.schedule.seed = *cfg.seed;
        s.seed = sc.schedule.seed;
        s.stream = drift::generate_stream(sc.templates, sc.schedule, sc.length, sc.stream);
        lm_corpus = drift::lm_training_corpus(sc);
        s.warm_timestamp = sc.stream.base_time;
        s.label = fs::path(src.scenario).filename().string();
        if (sc.warm_start) s.warm_corpus.resize(lm_corpus.size());  // tokenized once the vocabulary is final
    } else {
        s.stream = read_stream(src.stream);
        s.seed = cfg.seed.value_or(0);
        s.label = fs::path(src.stream).filename().string();
    }

    if (cfg.base_lm.kind == "external") {
        s.vocab = VocabRegistry::load(cfg.base_lm.vocab);
        const std::size_t before = s.vocab.size();
        s.vocab.intern(cfg.end_marker);
        intern_stream(s.vocab, s.stream);
        for (const auto& text : lm_corpus) tokenize(text, s.vocab, true);
        if (s.vocab.size() != before) {
            throw Error(Errc::UnknownToken, "stream or end marker uses tokens missing from " + cfg.base_lm.vocab);
        }
        s.provider = connect_external(cfg.base_lm, s.vocab.size());
    } else if (from_scenario) {
        std::vector<TokenSeq> seqs;
        for (const auto& text : lm_corpus) seqs.push_back(tokenize(text, s.vocab, true));
        const TokenId end = s.vocab.intern(cfg.end_marker);
        for (auto& seq : seqs) seq.push_back(end);
        intern_stream(s.vocab, s.stream);
        model = train_ngram(seqs, cfg.base_lm.order, cfg.base_lm.smoothing_k, s.vocab.size());
        s.provider = std::make_unique<NGramModel>(std::move(*model));
    } else {
        if (src.lm.empty()) throw Error(Errc::InvalidConfig, "--stream needs --lm for the builtin base LM");
        auto [m, lm_vocab] = load_ngram(src.lm);
        s.vocab = std::move(lm_vocab);
        s.vocab.intern(cfg.end_marker);
        intern_stream(s.vocab, s.stream);
        m.resize_vocab(s.vocab.size());
        s.provider = std::make_unique<NGramModel>(std::move(m));
    }

    if (!s.warm_corpus.empty()) {
        const TokenId end = s.vocab.id(cfg.end_marker);
        for (std::size_t i = 0; i < lm_corpus.size(); ++i) {
            s.warm_corpus[i] = tokenize(lm_corpus[i], s.vocab);
            s.warm_corpus[i].push_back(end);
        }
    }
    if (s.vocab.size() < 2) throw Error(Errc::InvalidConfig, "vocabulary needs at least two tokens");
    return s;
}

drift::OnlineConfig online_config(const RunConfig& cfg, Strategy strategy, bool trace) {
    drift::OnlineConfig oc;
    oc.fusion = preset(strategy, cfg.temp_scaled_temperature, cfg.fusion);
    oc.weights = cfg.weights;
    oc.max_new_tokens = cfg.max_new_tokens;
    oc.end_marker = cfg.end_marker;
    oc.trace = trace;
    return oc;
}

PrefixTrie fresh_trie(const RunConfig& cfg, const Session& s) {
    PrefixTrie trie(cfg.trie);
    for (const auto& seq : s.warm_corpus) trie.insert_sequence(seq, s.warm_timestamp);
    return trie;
}

json metrics_json(const metrics::MetricBundle& m) {
    json j;
    const auto v = m.as_array();
    for (std::size_t i = 0; i < v.size(); ++i) j[metrics::MetricBundle::kNames[i]] = v[i];
    return j;
}

json record_json(const drift::ItemRecord& r, std::string_view strategy) {
    return {{"index", r.index},
            {"strategy", strategy},
            {"concept", r.concept_id},
            {"prompt", r.prompt},
            {"reference", r.reference},
            {"hypothesis", r.hypothesis},
            {"metrics", metrics_json(r.metrics)},
            {"placeholder", {{"tokens", r.placeholder_tokens}, {"hits", r.placeholder_hits}}},
            {"diagnostics",
             {{"steps", r.summary.steps},
              {"bypass_steps", r.summary.bypass_steps},
              {"clamped_steps", r.summary.clamped_steps},
              {"mean_gamma", r.summary.mean_gamma}}}};
}

void write_trace(std::ostream& out, const drift::ItemRecord& r, const VocabRegistry& vocab) {
    for (const auto& t : r.trace) {
        const auto& d = t.diagnostics;
        json j = {{"item", r.index},
                  {"step", t.step},
                  {"token", t.token},
                  {"token_text", vocab.token(t.token)},
                  {"gamma", d.gamma},
                  {"omega", d.omega},
                  {"continuity", d.continuity},
                  {"temperature", d.temperature},
                  {"c_lm", d.c_lm},
                  {"c_trie", d.c_trie},
                  {"c_lm_adj", d.c_lm_adj},
                  {"c_trie_adj", d.c_trie_adj},
                  {"candidates", d.candidates},
                  {"bypass", d.bypass},
                  {"calibration_clamped", d.calibration_clamped},
                  {"degenerate_support", d.degenerate_support}};
        out << j.dump() << '\n';
    }
}

std::string fmt(double v, int precision = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

struct StrategySummary {
    Strategy strategy;
    metrics::MetricBundle mean;
    metrics::ConfidenceInterval ci;
    double placeholder_em = 0.0;
    double drifted_placeholder_em = 0.0;
};

StrategySummary summarize(Strategy strategy, const std::vector<drift::ItemRecord>& records,
                          const std::string& initial_concept, std::size_t resamples, std::uint64_t seed) {
    StrategySummary s{strategy, {}, {}, 0.0, 0.0};
    std::vector<metrics::MetricBundle> bundles;
    std::size_t tokens = 0, hits = 0, d_tokens = 0, d_hits = 0;
    for (const auto& r : records) {
        bundles.push_back(r.metrics);
        tokens += r.placeholder_tokens;
        hits += r.placeholder_hits;
        if (r.concept_id != initial_concept) {
            d_tokens += r.placeholder_tokens;
            d_hits += r.placeholder_hits;
        }
    }
    s.mean = metrics::aggregate(bundles);
    s.ci = metrics::bootstrap_ci(bundles, resamples, seed);
    s.placeholder_em = tokens ? static_cast<double>(hits) / static_cast<double>(tokens) : 0.0;
    s.drifted_placeholder_em = d_tokens ? static_cast<double>(d_hits) / static_cast<double>(d_tokens) : 0.0;
    return s;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_simulate(const std::string& scenario_path, std::optional<std::uint64_t> seed,
                 const std::string& out_path, const std::string& corpus_out, std::size_t window,
                 std::ostream& out) {
    auto sc = drift::load_scenario(scenario_path);
    if (seed) sc.schedule.seed = *seed;
    const auto items = drift::generate_stream(sc.templates, sc.schedule, sc.length, sc.stream);
    auto file = open_out(out_path);
    for (const auto& item : items) file << item_to_json(item).dump() << '\n';
    if (!corpus_out.empty()) {
        auto corpus = open_out(corpus_out);
        for (const auto& line : drift::lm_training_corpus(sc)) corpus << line << '\n';
    }
    out << "items\t" << items.size() << '\n';
    out << "kind\t" << drift::kind_name(sc.schedule.kind) << '\n';
    if (window > 0) {
        const auto profile = drift::drift_profile(items, window);
        for (std::size_t j = 0; j < profile.size(); ++j) {
            out << "lexical_jsd_distance[" << j * window << ".." << (j + 2) * window << ")\t"
                << fmt(profile[j]) << '\n';
        }
    }
    return kOk;
}

int cmd_train_lm(const std::string& scenario_path, const std::string& corpus_path, std::size_t order,
                 double k, const std::string& end_marker, const std::string& out_path, std::ostream& out) {
    if (scenario_path.empty() == corpus_path.empty()) {
        throw Error(Errc::InvalidConfig, "give either --scenario or --corpus");
    }
    std::vector<std::string> lines;
    if (!scenario_path.empty()) {
        lines = drift::lm_training_corpus(drift::load_scenario(scenario_path));
    } else {
        std::istringstream in(read_file(corpus_path));
        std::string line;
        while (std::getline(in, line)) {
            if (!split_whitespace(line).empty()) lines.push_back(line);
        }
    }
    VocabRegistry vocab;
    std::vector<TokenSeq> seqs;
    for (const auto& l : lines) seqs.push_back(tokenize(l, vocab, true));
    const TokenId end = vocab.intern(end_marker);
    for (auto& s : seqs) s.push_back(end);
    auto model = train_ngram(seqs, order, k, vocab.size());
    save_ngram(model, vocab, out_path);
    out << "sentences\t" << seqs.size() << "\nvocab\t" << vocab.size() << "\norder\t" << order << '\n';
    return kOk;
}

int cmd_run(const RunConfig& cfg, const Source& src, const std::string& out_path,
            const std::string& trace_path, const std::string& trie_in, const std::string& snapshot_out,
            const std::string& vocab_out, std::ostream& out) {
    Session s = build_session(cfg, src);
    PrefixTrie trie = trie_in.empty() ? fresh_trie(cfg, s) : PrefixTrie::restore(read_file(trie_in));
    const auto oc = online_config(cfg, cfg.strategy, !trace_path.empty());
    const auto records = drift::run_online(s.stream, trie, *s.provider, s.vocab, oc);

    auto file = open_out(out_path);
    for (const auto& r : records) file << record_json(r, strategy_name(cfg.strategy)).dump() << '\n';
    if (!trace_path.empty()) {
        auto trace = open_out(trace_path);
        for (const auto& r : records) write_trace(trace, r, s.vocab);
    }
    if (!snapshot_out.empty()) open_out(snapshot_out) << trie.snapshot();
    if (!vocab_out.empty()) s.vocab.save(vocab_out);

    const std::string initial = s.stream.empty() ? std::string{} : s.stream.front().concept_id;
    const auto summary = summarize(cfg.strategy, records, initial, 1, s.seed);
    const auto v = summary.mean.as_array();
    out << "strategy\t" << strategy_name(cfg.strategy) << "\nitems\t" << records.size() << '\n';
    for (std::size_t i = 0; i < v.size(); ++i) out << metrics::MetricBundle::kNames[i] << '\t' << fmt(v[i]) << '\n';
    out << "placeholder_em\t" << fmt(summary.placeholder_em) << '\n';
    return kOk;
}

int cmd_compare(const RunConfig& cfg, const Source& src, const std::string& out_path,
                const std::string& records_dir, bool with_ci, std::ostream& out) {
    Session s = build_session(cfg, src);
    const std::string initial = s.stream.empty() ? std::string{} : s.stream.front().concept_id;
    const std::uint64_t seed = s.seed;

    std::vector<StrategySummary> rows;
    for (Strategy strategy : {Strategy::Greedy, Strategy::TempScaled, Strategy::Odd}) {
        PrefixTrie trie = fresh_trie(cfg, s);
        const auto records = drift::run_online(s.stream, trie, *s.provider, s.vocab,
                                               online_config(cfg, strategy, false));
        if (!records_dir.empty()) {
            auto file = open_out(fs::path(records_dir) / (std::string(strategy_name(strategy)) + ".jsonl"));
            for (const auto& r : records) file << record_json(r, strategy_name(strategy)).dump() << '\n';
        }
        rows.push_back(summarize(strategy, records, initial, cfg.bootstrap_resamples, seed));
    }

    std::ostringstream table;
    table << "# odd compare: source=" << s.label << " items=" << s.stream.size() << " seed=" << seed << '\n';
    table << "# bleu: " << metrics::kBleuVariant << '\n';
    table << "# chrf: " << metrics::kChrfVariant << '\n';
    table << "# tokcos: bag-of-words cosine, a lexical proxy and not an embedding similarity\n";
    table << "# ph-em: placeholder token accuracy; ph-em-drifted restricts to items outside concept '"
          << initial << "'\n";
    table << "strategy\tEM\tED\tBLEU\tROUGE-L\tChrF\tTokCos\tPH-EM\tPH-EM-drifted\n";
    for (const auto& r : rows) {
        const auto v = r.mean.as_array();
        table << strategy_name(r.strategy);
        for (std::size_t i = 0; i < v.size(); ++i) table << '\t' << fmt(v[i], i == 4 ? 3 : 4);
        table << '\t' << fmt(r.placeholder_em) << '\t' << fmt(r.drifted_placeholder_em) << '\n';
    }
    if (with_ci) {
        table << "\n# 95% percentile bootstrap CI of the mean, " << cfg.bootstrap_resamples
              << " resamples\nstrategy\tbound\tEM\tED\tBLEU\tROUGE-L\tChrF\tTokCos\n";
        for (const auto& r : rows) {
            for (const auto& [name, b] : {std::pair{"lo", &r.ci.lower}, std::pair{"hi", &r.ci.upper}}) {
                const auto v = b->as_array();
                table << strategy_name(r.strategy) << '\t' << name;
                for (std::size_t i = 0; i < v.size(); ++i) table << '\t' << fmt(v[i], i == 4 ? 3 : 4);
                table << '\n';
            }
        }
    }
    open_out(out_path) << table.str();
    out << table.str();
    return kOk;
}

int cmd_trie(const std::string& action, const std::string& snapshot, const std::string& vocab_path,
             const std::string& corpus_path, std::uint32_t n_max, std::ostream& out) {
    if (action == "build") {
        if (corpus_path.empty() || snapshot.empty()) {
            throw Error(Errc::InvalidConfig, "trie build needs --corpus and a snapshot path");
        }
        VocabRegistry vocab;
        if (!vocab_path.empty() && fs::exists(vocab_path)) vocab = VocabRegistry::load(vocab_path);
        PrefixTrie trie(TrieConfig{n_max});
        std::istringstream in(read_file(corpus_path));
        std::string line;
        Timestamp t = 0;
        while (std::getline(in, line)) {
            // Optional leading "<timestamp>\t".
            auto tab = line.find('\t');
            std::string_view text = line;
            if (tab != std::string::npos) {
                t = std::stoll(line.substr(0, tab));
                text = std::string_view(line).substr(tab + 1);
            } else {
                t += 1;
            }
            if (split_whitespace(text).empty()) continue;
            trie.insert_sequence(tokenize(text, vocab, true), t);
        }
        open_out(snapshot) << trie.snapshot();
        if (!vocab_path.empty()) vocab.save(vocab_path);
        const auto st = trie.stats();
        out << "nodes\t" << st.node_count << "\ninserted_tokens\t" << st.total_insertions << '\n';
        return kOk;
    }
    PrefixTrie trie = PrefixTrie::restore(read_file(snapshot));
    if (action == "inspect") {
        const auto st = trie.stats();
        out << "version\t" << PrefixTrie::kSnapshotVersion << "\nn_max\t" << trie.config().n_max
            << "\nnodes\t" << st.node_count << "\ninserted_tokens\t" << st.total_insertions
            << "\nlast_timestamp\t" << trie.last_timestamp() << '\n';
        return kOk;
    }
    std::optional<VocabRegistry> vocab;
    if (!vocab_path.empty()) vocab = VocabRegistry::load(vocab_path);
    out << trie.dump(vocab ? &*vocab : nullptr);
    return kOk;
}

int cmd_serve_lm(const std::string& lm_path, const std::string& vocab_path) {
    auto [model, lm_vocab] = load_ngram(lm_path);
    if (!vocab_path.empty()) {
        auto vocab = VocabRegistry::load(vocab_path);
        for (std::size_t i = 0; i < lm_vocab.size(); ++i) {
            if (i >= vocab.size() || vocab.tokens()[i] != lm_vocab.tokens()[i]) {
                throw Error(Errc::InvalidConfig, "vocabulary file must extend the model vocabulary");
            }
        }
        model.resize_vocab(vocab.size());
    }
    StreamChannel channel(std::cin, std::cout);
    serve_logits(model, channel);
    return kOk;
}

int exit_code_for(Errc code) {
    switch (code) {
        case Errc::InvalidConfig:
        case Errc::InvalidSchedule:
        case Errc::InvalidTemplate:
        case Errc::MissingSubstitution:
        case Errc::Io:
        case Errc::UnknownToken:
        case Errc::EmptyInput:
        case Errc::CorruptSnapshot:
        case Errc::VersionMismatch:
        case Errc::NonPositiveTemperature:
        case Errc::EmptyCorpus:
            return kConfig;
        default:
            return kRuntime;
    }
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Online domain-aware decoding: trie-prior fusion under concept drift", "odd"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "Run config (JSON); defaults to $ODD_CONFIG");
    app.add_option("--seed", seed, "Override every seed");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a drift stream from a scenario");
    std::string sim_scenario, sim_out, sim_corpus;
    std::size_t sim_window = 0;
    sim->add_option("--scenario", sim_scenario, "Scenario file")->required();
    sim->add_option("--out", sim_out, "Stream output (NDJSON)")->required();
    sim->add_option("--lm-corpus", sim_corpus, "Also write the base-LM training corpus");
    sim->add_option("--telemetry-window", sim_window, "Report lexical JSD distance between windows of this size");

    // train-lm
    auto* train = app.add_subcommand("train-lm", "Train the built-in n-gram base LM");
    std::string tr_scenario, tr_corpus, tr_out, tr_end = "</s>";
    std::size_t tr_order = 3;
    double tr_k = 0.01;
    train->add_option("--scenario", tr_scenario, "Train on the scenario's LM concept");
    train->add_option("--corpus", tr_corpus, "Train on a text file, one sentence per line");
    train->add_option("--order", tr_order, "n-gram order")->check(CLI::PositiveNumber);
    train->add_option("--smoothing-k", tr_k, "Add-k constant")->check(CLI::PositiveNumber);
    train->add_option("--end-marker", tr_end, "End-of-sequence token");
    train->add_option("--out", tr_out, "Model output (JSON)")->required();

    // run / compare share their sources
    Source src;
    std::string strategy_name_opt;
    std::string run_out, run_trace, run_trie_in, run_snapshot, run_vocab_out;
    auto* run = app.add_subcommand("run", "Prequential online loop for one strategy");
    run->add_option("--strategy", strategy_name_opt, "odd | greedy | temp-scaled");
    run->add_option("--scenario", src.scenario, "Scenario file (stream and LM are derived from it)");
    run->add_option("--stream", src.stream, "Stream file from `simulate`");
    run->add_option("--lm", src.lm, "Model file from `train-lm`");
    run->add_option("--out", run_out, "Per-item records (NDJSON)")->required();
    run->add_option("--trace", run_trace, "Per-step diagnostics (NDJSON)");
    run->add_option("--trie-in", run_trie_in, "Start from this trie snapshot");
    run->add_option("--snapshot-out", run_snapshot, "Write the final trie snapshot");
    run->add_option("--vocab-out", run_vocab_out, "Write the session vocabulary");

    auto* cmp = app.add_subcommand("compare", "Run all three strategies on one stream");
    std::string cmp_out, cmp_records;
    bool cmp_ci = false;
    cmp->add_option("--scenario", src.scenario, "Scenario file");
    cmp->add_option("--stream", src.stream, "Stream file from `simulate`");
    cmp->add_option("--lm", src.lm, "Model file from `train-lm`");
    cmp->add_option("--out", cmp_out, "Results table (TSV)")->required();
    cmp->add_option("--records-dir", cmp_records, "Also write per-strategy records here");
    cmp->add_flag("--ci", cmp_ci, "Append bootstrap confidence intervals");

    auto* trie_cmd = app.add_subcommand("trie", "Build, inspect or dump trie snapshots");
    std::string trie_action, trie_snapshot, trie_vocab, trie_corpus;
    std::uint32_t trie_nmax = 5;
    trie_cmd->add_option("action", trie_action, "build | inspect | dump")
        ->required()
        ->check(CLI::IsMember({"build", "inspect", "dump"}));
    trie_cmd->add_option("snapshot", trie_snapshot, "Snapshot file")->required();
    trie_cmd->add_option("--vocab", trie_vocab, "Vocabulary file for readable dumps");
    trie_cmd->add_option("--corpus", trie_corpus, "Corpus for build: one sequence per line, optional '<ts>\\t' prefix");
    trie_cmd->add_option("--n-max", trie_nmax, "Maximum n-gram length for build");

    auto* serve = app.add_subcommand("serve-lm", "Serve a built-in n-gram model over the logits protocol on stdio");
    std::string serve_lm, serve_vocab;
    serve->add_option("--lm", serve_lm, "Model file from `train-lm`")->required();
    serve->add_option("--vocab", serve_vocab, "Session vocabulary extending the model's");

    std::vector<std::string> argv_store;
    argv_store.reserve(args.size() + 1);
    argv_store.emplace_back("odd");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    try {
        if (*sim) return cmd_simulate(sim_scenario, seed, sim_out, sim_corpus, sim_window, out);
        if (*train) return cmd_train_lm(tr_scenario, tr_corpus, tr_order, tr_k, tr_end, tr_out, out);
        if (*serve) return cmd_serve_lm(serve_lm, serve_vocab);
        if (*trie_cmd) return cmd_trie(trie_action, trie_snapshot, trie_vocab, trie_corpus, trie_nmax, out);

        RunConfig cfg = load_config(config_path);
        if (seed) cfg.seed = seed;
        if (*run) {
            if (!strategy_name_opt.empty()) cfg.strategy = parse_strategy(strategy_name_opt);
            return cmd_run(cfg, src, run_out, run_trace, run_trie_in, run_snapshot, run_vocab_out, out);
        }
        if (*cmp) return cmd_compare(cfg, src, cmp_out, cmp_records, cmp_ci, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kUsage;
}

}  // namespace odd::cli
