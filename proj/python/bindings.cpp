#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>
#include <string>
#include <vector>

#include "odd/base_lm.hpp"
#include "odd/cli.hpp"
#include "odd/error.hpp"
#include "odd/fusion.hpp"
#include "odd/metrics.hpp"
#include "odd/prefix_trie.hpp"
#include "odd/trie_prior.hpp"
#include "odd/vocab.hpp"

namespace py = pybind11;
using namespace odd;

namespace {

py::dict candidate_dict(const ScoredCandidate& c) {
    py::dict d;
    d["token"] = c.token;
    d["score"] = c.score;
    d["frequency"] = c.normalized.frequency;
    d["length"] = c.normalized.length;
    d["recency"] = c.normalized.recency;
    d["suffix_len"] = c.source_suffix_len;
    return d;
}

py::dict diagnostics_dict(const StepDiagnostics& d) {
    py::dict out;
    out["gamma"] = d.gamma;
    out["omega"] = d.omega;
    out["continuity"] = d.continuity;
    out["temperature"] = d.temperature;
    out["c_lm"] = d.c_lm;
    out["c_trie"] = d.c_trie;
    out["c_lm_adj"] = d.c_lm_adj;
    out["c_trie_adj"] = d.c_trie_adj;
    out["bypass"] = d.bypass;
    out["calibration_clamped"] = d.calibration_clamped;
    out["degenerate_support"] = d.degenerate_support;
    out["candidates"] = d.candidates;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Online domain-aware decoding core";

    static py::exception<Error> odd_error(m, "OddError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const std::string msg = std::string(errc_name(e.code())) + ": " + e.what();
            py::set_error(odd_error, msg.c_str());
        }
    });

    py::class_<VocabRegistry>(m, "Vocab")
        .def(py::init<>())
        .def("__len__", &VocabRegistry::size)
        .def("__contains__", &VocabRegistry::contains)
        .def("intern", &VocabRegistry::intern)
        .def("id", &VocabRegistry::id)
        .def("token", &VocabRegistry::token)
        .def_property_readonly("tokens", &VocabRegistry::tokens)
        .def("save", &VocabRegistry::save)
        .def_static("load", &VocabRegistry::load)
        .def("encode",
             [](VocabRegistry& v, const std::string& text, bool grow) { return tokenize(text, v, grow); },
             py::arg("text"), py::arg("grow") = true)
        .def("decode", [](const VocabRegistry& v, const TokenSeq& ids) { return detokenize(ids, v); });

    py::class_<PrefixTrie>(m, "PrefixTrie")
        .def(py::init([](std::uint32_t n_max) { return PrefixTrie(TrieConfig{n_max}); }), py::arg("n_max") = 5)
        .def_property_readonly("n_max", [](const PrefixTrie& t) { return t.config().n_max; })
        .def("insert", [](PrefixTrie& t, const TokenSeq& s, Timestamp ts) { return t.insert_sequence(s, ts); },
             py::arg("tokens"), py::arg("timestamp"))
        .def("next_tokens",
             [](const PrefixTrie& t, const TokenSeq& suffix) {
                 std::vector<py::tuple> out;
                 for (const auto& n : t.next_tokens(suffix)) {
                     out.push_back(py::make_tuple(n.token, n.features.frequency, n.features.length,
                                                  n.features.recency));
                 }
                 return out;
             })
        .def_property_readonly("node_count", [](const PrefixTrie& t) { return t.stats().node_count; })
        .def_property_readonly("total_insertions", [](const PrefixTrie& t) { return t.stats().total_insertions; })
        .def("snapshot", [](const PrefixTrie& t) { return py::bytes(t.snapshot()); })
        .def_static("restore", [](const py::bytes& b) { return PrefixTrie::restore(std::string(b)); })
        .def("dump", [](const PrefixTrie& t, const VocabRegistry* v) { return t.dump(v); },
             py::arg("vocab") = nullptr);

    m.def(
        "trie_prior",
        [](const PrefixTrie& trie, const TokenSeq& prefix, Timestamp now, double wf, double wl, double wr) {
            CandidateSet scored;
            const auto dist = trie_prior(trie, prefix, now, ScoringWeights{wf, wl, wr}, &scored);
            std::vector<py::dict> cands;
            for (const auto& c : scored.entries) cands.push_back(candidate_dict(c));
            return py::make_tuple(dist.entries(), cands);
        },
        py::arg("trie"), py::arg("prefix"), py::arg("now"), py::arg("w_frequency") = 1.0 / 3,
        py::arg("w_length") = 1.0 / 3, py::arg("w_recency") = 1.0 / 3,
        "Returns (distribution as [(token, prob)], scored candidates).");

    m.def("softmax", [](const std::vector<double>& z, double t) { return softmax_with_temperature(z, t).probs; },
          py::arg("logits"), py::arg("temperature") = 1.0);
    m.def(
        "calibrate",
        [](const std::vector<double>& z, double target) {
            const auto c = calibrate_temperature(z, target);
            const char* names[] = {"solved", "constant_logits", "target_too_low", "target_too_high"};
            return py::make_tuple(c.temperature, names[static_cast<int>(c.status)], c.iterations);
        },
        py::arg("logits"), py::arg("target"), "Returns (temperature, status, iterations).");
    m.def("continuity", &continuity, py::arg("run_length"), py::arg("scale") = 3.0);

    py::class_<FusionEngine>(m, "FusionEngine")
        .def(py::init([](const std::string& strategy, std::size_t top_k) {
                 FusionConfig base;
                 base.top_k = top_k;
                 return FusionEngine(preset(parse_strategy(strategy), 0.7, base));
             }),
             py::arg("strategy") = "odd", py::arg("top_k") = 5)
        .def(
            "step",
            [](const FusionEngine& e, const std::vector<double>& logits,
               const std::vector<std::pair<TokenId, double>>& prior, std::uint64_t run_length) {
                const auto r = e.step(logits, SparseDistribution(prior), FusionState{run_length});
                return py::make_tuple(r.token, r.state.run_length, r.fused.probs, diagnostics_dict(r.diagnostics));
            },
            py::arg("logits"), py::arg("prior"), py::arg("run_length") = 0,
            "Returns (token, run_length, fused distribution, diagnostics).");

    m.def("evaluate_pair", [](const std::string& ref, const std::string& hyp) {
        const auto b = metrics::evaluate_pair(ref, hyp);
        const auto values = b.as_array();
        py::dict d;
        for (std::size_t i = 0; i < values.size(); ++i) d[metrics::MetricBundle::kNames[i]] = values[i];
        return d;
    });

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = cli::run_command(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs an odd subcommand in-process; returns (exit code, stdout, stderr).");
}
