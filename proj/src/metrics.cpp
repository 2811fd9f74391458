#include "odd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "odd/error.hpp"
#include "odd/vocab.hpp"

namespace odd::metrics {

std::array<double, MetricBundle::kFields> MetricBundle::as_array() const {
    return {exact_match, edit_similarity, bleu, rouge_l, chrf, token_cosine};
}

MetricBundle MetricBundle::from_array(const std::array<double, kFields>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

std::u32string utf8_codepoints(std::string_view text) {
    std::u32string out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto b = static_cast<unsigned char>(text[i]);
        std::size_t len = b < 0x80 ? 1 : (b >> 5) == 0x6 ? 2 : (b >> 4) == 0xE ? 3 : (b >> 3) == 0x1E ? 4 : 0;
        if (len == 0 || i + len > text.size()) {
            out.push_back(b);  // stray byte stands for itself
            ++i;
            continue;
        }
        char32_t cp = len == 1 ? b : (b & (0x7F >> len));
        bool ok = true;
        for (std::size_t j = 1; j < len; ++j) {
            const auto c = static_cast<unsigned char>(text[i + j]);
            if ((c >> 6) != 0x2) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (c & 0x3F);
        }
        if (!ok) {
            out.push_back(b);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

std::size_t levenshtein(std::string_view a_text, std::string_view b_text) {
    const auto a = utf8_codepoints(a_text);
    const auto b = utf8_codepoints(b_text);
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

double exact_match(std::string_view reference, std::string_view hypothesis) {
    return normalize_whitespace(reference) == normalize_whitespace(hypothesis) ? 1.0 : 0.0;
}

double edit_similarity(std::string_view a, std::string_view b) {
    const auto na = normalize_whitespace(a);
    const auto nb = normalize_whitespace(b);
    const std::size_t longest = std::max(utf8_codepoints(na).size(), utf8_codepoints(nb).size());
    if (longest == 0) return 1.0;
    return 1.0 - static_cast<double>(levenshtein(na, nb)) / static_cast<double>(longest);
}

namespace {

using Words = std::vector<std::string_view>;

std::map<std::vector<std::string_view>, std::size_t> ngram_counts(const Words& words, std::size_t n) {
    std::map<std::vector<std::string_view>, std::size_t> counts;
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
        counts[Words(words.begin() + static_cast<std::ptrdiff_t>(i),
                     words.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1;
    }
    return counts;
}

std::map<std::u32string, std::size_t> char_ngrams(const std::u32string& chars, std::size_t n) {
    std::map<std::u32string, std::size_t> counts;
    for (std::size_t i = 0; i + n <= chars.size(); ++i) counts[chars.substr(i, n)] += 1;
    return counts;
}

template <typename Map>
std::size_t clipped_matches(const Map& hyp, const Map& ref) {
    std::size_t m = 0;
    for (const auto& [gram, c] : hyp) {
        auto it = ref.find(gram);
        if (it != ref.end()) m += std::min(c, it->second);
    }
    return m;
}

}  // namespace

double bleu(std::string_view reference, std::string_view hypothesis) {
    constexpr std::size_t kMaxOrder = 4;
    const Words ref = split_whitespace(reference);
    const Words hyp = split_whitespace(hypothesis);
    if (hyp.empty()) return 0.0;

    std::array<double, kMaxOrder> correct{};
    std::array<double, kMaxOrder> total{};
    bool any = false;
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
        auto h = ngram_counts(hyp, n);
        auto r = ngram_counts(ref, n);
        correct[n - 1] = static_cast<double>(clipped_matches(h, r));
        total[n - 1] = static_cast<double>(hyp.size() >= n ? hyp.size() - n + 1 : 0);
        any = any || correct[n - 1] > 0;
    }
    if (!any) return 0.0;

    const double bp = hyp.size() < ref.size()
                          ? std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(hyp.size()))
                          : 1.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
        double c = correct[n - 1];
        double t = total[n - 1];
        if (n > 1) {
            c += 1.0;
            t += 1.0;
        }
        if (c == 0.0) return 0.0;
        log_sum += std::log(c / t);
    }
    return bp * std::exp(log_sum / kMaxOrder);
}

double rouge_l(std::string_view reference, std::string_view hypothesis) {
    const Words ref = split_whitespace(reference);
    const Words hyp = split_whitespace(hypothesis);
    if (ref.empty() || hyp.empty()) return 0.0;
    std::vector<std::size_t> prev(hyp.size() + 1, 0);
    std::vector<std::size_t> cur(hyp.size() + 1, 0);
    for (std::size_t i = 1; i <= ref.size(); ++i) {
        for (std::size_t j = 1; j <= hyp.size(); ++j) {
            cur[j] = ref[i - 1] == hyp[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const double lcs = static_cast<double>(prev[hyp.size()]);
    if (lcs == 0.0) return 0.0;
    const double precision = lcs / static_cast<double>(hyp.size());
    const double recall = lcs / static_cast<double>(ref.size());
    return 2.0 * precision * recall / (precision + recall);
}

double chrf(std::string_view reference, std::string_view hypothesis) {
    constexpr std::size_t kMaxOrder = 6;
    constexpr double kBeta2 = 4.0;
    auto strip = [](std::string_view s) {
        std::u32string out;
        for (char32_t c : utf8_codepoints(s)) {
            if (!(c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v')) out.push_back(c);
        }
        return out;
    };
    const auto ref = strip(reference);
    const auto hyp = strip(hypothesis);

    double avg_p = 0.0;
    double avg_r = 0.0;
    int effective = 0;
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
        auto h = char_ngrams(hyp, n);
        auto r = char_ngrams(ref, n);
        const double n_hyp = hyp.size() >= n ? static_cast<double>(hyp.size() - n + 1) : 0.0;
        const double n_ref = ref.size() >= n ? static_cast<double>(ref.size() - n + 1) : 0.0;
        if (n_hyp > 0 && n_ref > 0) {
            const double m = static_cast<double>(clipped_matches(h, r));
            avg_p += m / n_hyp;
            avg_r += m / n_ref;
            ++effective;
        }
    }
    if (effective == 0) return 0.0;
    avg_p /= effective;
    avg_r /= effective;
    if (avg_p + avg_r == 0.0) return 0.0;
    return 100.0 * (1.0 + kBeta2) * avg_p * avg_r / (kBeta2 * avg_p + avg_r);
}

double token_cosine(std::string_view a, std::string_view b) {
    std::map<std::string_view, double> va;
    std::map<std::string_view, double> vb;
    for (auto w : split_whitespace(a)) va[w] += 1.0;
    for (auto w : split_whitespace(b)) vb[w] += 1.0;
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (const auto& [w, c] : va) {
        na += c * c;
        auto it = vb.find(w);
        if (it != vb.end()) dot += c * it->second;
    }
    for (const auto& [w, c] : vb) nb += c * c;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

MetricBundle evaluate_pair(std::string_view reference, std::string_view hypothesis) {
    if (split_whitespace(reference).empty()) throw Error(Errc::EmptyReference, "reference is empty");
    MetricBundle m;
    m.exact_match = exact_match(reference, hypothesis);
    m.edit_similarity = edit_similarity(reference, hypothesis);
    m.bleu = bleu(reference, hypothesis);
    m.rouge_l = rouge_l(reference, hypothesis);
    m.chrf = chrf(reference, hypothesis);
    m.token_cosine = token_cosine(reference, hypothesis);
    return m;
}

MetricBundle aggregate(std::span<const MetricBundle> bundles) {
    if (bundles.empty()) throw Error(Errc::EmptyList, "nothing to aggregate");
    std::array<double, MetricBundle::kFields> sum{};
    for (const auto& b : bundles) {
        auto v = b.as_array();
        for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
    }
    for (double& s : sum) s /= static_cast<double>(bundles.size());
    return MetricBundle::from_array(sum);
}

ConfidenceInterval bootstrap_ci(std::span<const MetricBundle> bundles, std::size_t resamples,
                                std::uint64_t seed, double level) {
    if (bundles.empty()) throw Error(Errc::EmptyList, "nothing to bootstrap");
    if (resamples == 0 || !(level > 0.0 && level < 1.0)) {
        throw Error(Errc::InvalidConfig, "bootstrap needs resamples > 0 and level in (0, 1)");
    }
    std::mt19937_64 rng(seed);
    const std::uint64_t n = bundles.size();
    std::array<std::vector<double>, MetricBundle::kFields> means;
    for (auto& m : means) m.reserve(resamples);
    for (std::size_t r = 0; r < resamples; ++r) {
        std::array<double, MetricBundle::kFields> sum{};
        for (std::uint64_t i = 0; i < n; ++i) {
            // Plain modulo keeps the draw sequence identical across standard libraries.
            auto v = bundles[static_cast<std::size_t>(rng() % n)].as_array();
            for (std::size_t f = 0; f < v.size(); ++f) sum[f] += v[f];
        }
        for (std::size_t f = 0; f < sum.size(); ++f) means[f].push_back(sum[f] / static_cast<double>(n));
    }
    const double tail = (1.0 - level) / 2.0;
    std::array<double, MetricBundle::kFields> lo{};
    std::array<double, MetricBundle::kFields> hi{};
    for (std::size_t f = 0; f < means.size(); ++f) {
        auto& v = means[f];
        std::sort(v.begin(), v.end());
        auto pick = [&](double q) {
            auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size() - 1) + 0.5));
            return v[std::min(idx, v.size() - 1)];
        };
        lo[f] = pick(tail);
        hi[f] = pick(1.0 - tail);
    }
    return {MetricBundle::from_array(lo), MetricBundle::from_array(hi)};
}

}  // namespace odd::metrics
