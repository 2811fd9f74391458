#include "odd/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "odd/error.hpp"

namespace odd {

double DenseDistribution::max_prob() const {
    return probs.empty() ? 0.0 : *std::max_element(probs.begin(), probs.end());
}

TokenId DenseDistribution::argmax() const { return odd::argmax(probs); }

double DenseDistribution::sum() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

TokenId argmax(std::span<const double> values) {
    if (values.empty()) throw Error(Errc::EmptyInput, "argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return static_cast<TokenId>(best);
}

DenseDistribution softmax_with_temperature(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw Error(Errc::NonPositiveTemperature, "temperature must be > 0");
    }
    if (logits.empty()) throw Error(Errc::EmptyInput, "softmax of an empty vector");
    const double top = *std::max_element(logits.begin(), logits.end());
    DenseDistribution out;
    out.probs.resize(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.probs[i] = std::exp((logits[i] - top) / temperature);
        total += out.probs[i];
    }
    for (double& p : out.probs) p /= total;
    return out;
}

double entropy_confidence(const DenseDistribution& q) {
    if (q.size() < 2) throw Error(Errc::InvalidConfig, "entropy confidence needs |V| >= 2");
    double h = 0.0;
    for (double p : q.probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    const double c = 1.0 - h / std::log(static_cast<double>(q.size()));
    return std::clamp(c, 0.0, 1.0);
}

namespace {

// max softmax(z / T) from gaps d_i = z_i - max z <= 0.
double peak_probability(std::span<const double> gaps, double temperature) {
    double total = 0.0;
    for (double d : gaps) total += std::exp(d / temperature);
    return 1.0 / total;
}

}  // namespace

Calibration calibrate_temperature(std::span<const double> logits, double target_max,
                                  const CalibrationOptions& opt) {
    if (logits.empty()) throw Error(Errc::EmptyInput, "cannot calibrate an empty logit vector");
    if (!(target_max > 0.0) || target_max > 1.0) {
        throw Error(Errc::InvalidConfig, "calibration target must lie in (0, 1]");
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> gaps(logits.size());
    std::size_t ties = 0;
    double lowest = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        gaps[i] = logits[i] - top;
        lowest = std::min(lowest, gaps[i]);
        if (gaps[i] == 0.0) ++ties;
    }
    if (lowest == 0.0) return {1.0, CalibrationStatus::ConstantLogits, 0};

    const double n = static_cast<double>(logits.size());
    if (target_max >= 1.0 / static_cast<double>(ties)) {
        return {opt.t_floor, CalibrationStatus::TargetTooHigh, 0};
    }
    if (target_max <= 1.0 / n) return {opt.t_ceiling, CalibrationStatus::TargetTooLow, 0};

    // f(T) is decreasing: need f(lo) >= target >= f(hi).
    double lo = opt.t_lo;
    double hi = opt.t_hi;
    double f_lo = peak_probability(gaps, lo);
    while (f_lo < target_max && lo > opt.t_floor) {
        hi = lo;
        lo = std::max(lo * 1e-1, opt.t_floor);
        f_lo = peak_probability(gaps, lo);
    }
    if (f_lo < target_max) return {opt.t_floor, CalibrationStatus::TargetTooHigh, 0};
    double f_hi = peak_probability(gaps, hi);
    while (f_hi > target_max && hi < opt.t_ceiling) {
        lo = hi;
        hi = std::min(hi * 10.0, opt.t_ceiling);
        f_hi = peak_probability(gaps, hi);
    }
    if (f_hi > target_max) return {opt.t_ceiling, CalibrationStatus::TargetTooLow, 0};

    double best_t = std::abs(f_lo - target_max) <= std::abs(f_hi - target_max) ? lo : hi;
    double best_err = std::min(std::abs(f_lo - target_max), std::abs(f_hi - target_max));
    int it = 0;
    while (best_err > opt.tolerance && it < opt.max_iterations) {
        ++it;
        const double mid = std::sqrt(lo * hi);
        if (mid <= lo || mid >= hi) break;  // bracket exhausted at double resolution
        const double f_mid = peak_probability(gaps, mid);
        const double err = std::abs(f_mid - target_max);
        if (err < best_err) {
            best_err = err;
            best_t = mid;
        }
        if (f_mid > target_max) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return {best_t, CalibrationStatus::Solved, it};
}

double jensen_shannon(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw Error(Errc::InvalidConfig, "JSD inputs differ in length");
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) total += p[i] * std::log(p[i] / m);
        if (q[i] > 0.0) total += q[i] * std::log(q[i] / m);
    }
    return std::max(0.0, 0.5 * total);
}

Disagreement disagreement(const DenseDistribution& lm, const SparseDistribution& prior,
                          std::size_t k) {
    if (k == 0) throw Error(Errc::InvalidConfig, "top-k must be >= 1");
    auto by_mass = [](const std::pair<TokenId, double>& a, const std::pair<TokenId, double>& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    };

    std::vector<std::pair<TokenId, double>> lm_ranked(lm.size());
    for (std::size_t i = 0; i < lm.size(); ++i) lm_ranked[i] = {static_cast<TokenId>(i), lm.probs[i]};
    const std::size_t k_lm = std::min(k, lm_ranked.size());
    std::partial_sort(lm_ranked.begin(), lm_ranked.begin() + static_cast<std::ptrdiff_t>(k_lm),
                      lm_ranked.end(), by_mass);

    auto prior_ranked = prior.entries();
    const std::size_t k_prior = std::min(k, prior_ranked.size());
    std::partial_sort(prior_ranked.begin(),
                      prior_ranked.begin() + static_cast<std::ptrdiff_t>(k_prior),
                      prior_ranked.end(), by_mass);

    std::vector<TokenId> support;
    for (std::size_t i = 0; i < k_lm; ++i) support.push_back(lm_ranked[i].first);
    for (std::size_t i = 0; i < k_prior; ++i) support.push_back(prior_ranked[i].first);
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());

    std::vector<double> p(support.size());
    std::vector<double> q(support.size());
    double p_total = 0.0;
    double q_total = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) {
        if (support[i] >= lm.size()) throw Error(Errc::UnknownId, "prior token outside vocabulary");
        p[i] = lm.probs[support[i]];
        q[i] = prior.at(support[i]);
        p_total += p[i];
        q_total += q[i];
    }
    if (!(p_total > 0.0) || !(q_total > 0.0)) return {1.0, 0.0, true};
    for (double& v : p) v /= p_total;
    for (double& v : q) v /= q_total;

    Disagreement out;
    out.jsd = jensen_shannon(p, q);
    out.omega = std::min(1.0, std::sqrt(out.jsd));
    return out;
}

double continuity(std::uint64_t run_length, double scale) {
    return 1.0 - std::exp(-static_cast<double>(run_length) / scale);
}

AdjustedConfidences adjust_confidences(double c_lm, double c_trie, double omega, double gamma_cont) {
    return {c_lm * (1.0 - omega * omega), c_trie + (1.0 - c_trie) * c_trie * c_trie * gamma_cont};
}

double interpolation_weight(double c_lm_adj, double c_trie_adj) {
    const double total = c_lm_adj + c_trie_adj;
    return total > 0.0 ? c_lm_adj / total : 0.5;
}

void FusionConfig::validate() const {
    if (top_k == 0) throw Error(Errc::InvalidConfig, "top_k must be >= 1");
    if (!(continuity_scale > 0.0)) throw Error(Errc::InvalidConfig, "continuity scale must be > 0");
    if (fixed_temperature && !(*fixed_temperature > 0.0)) {
        throw Error(Errc::NonPositiveTemperature, "fixed temperature must be > 0");
    }
    if (!(calibration.t_floor > 0.0) || calibration.t_floor > calibration.t_lo ||
        calibration.t_lo >= calibration.t_hi || calibration.t_hi > calibration.t_ceiling) {
        throw Error(Errc::InvalidConfig, "calibration bracket must satisfy 0 < floor <= lo < hi <= ceiling");
    }
}

std::string_view strategy_name(Strategy s) noexcept {
    switch (s) {
        case Strategy::Odd: return "odd";
        case Strategy::Greedy: return "greedy";
        case Strategy::TempScaled: return "temp-scaled";
    }
    return "?";
}

Strategy parse_strategy(std::string_view name) {
    if (name == "odd") return Strategy::Odd;
    if (name == "greedy") return Strategy::Greedy;
    if (name == "temp-scaled") return Strategy::TempScaled;
    throw Error(Errc::InvalidConfig, "unknown strategy '" + std::string(name) + "'");
}

FusionConfig preset(Strategy strategy, double temp_scaled_temperature, FusionConfig base) {
    switch (strategy) {
        case Strategy::Odd:
            base.use_prior = true;
            base.fixed_temperature.reset();
            break;
        case Strategy::Greedy:
            base.use_prior = false;
            base.fixed_temperature.reset();
            break;
        case Strategy::TempScaled:
            base.use_prior = false;
            base.fixed_temperature = temp_scaled_temperature;
            break;
    }
    return base;
}

FusionEngine::FusionEngine(FusionConfig config) : config_(std::move(config)) { config_.validate(); }

StepResult FusionEngine::step(std::span<const double> logits, const SparseDistribution& prior,
                              FusionState state) const {
    StepResult out;
    auto& d = out.diagnostics;
    const DenseDistribution base = softmax_with_temperature(logits, 1.0);
    d.c_lm = base.size() >= 2 ? entropy_confidence(base) : 1.0;
    d.lm_top = argmax(logits);

    if (!config_.use_prior || prior.empty()) {
        d.bypass = true;
        d.temperature = config_.fixed_temperature.value_or(1.0);
        d.gamma = 1.0;
        d.c_lm_adj = d.c_lm;
        out.lm = config_.fixed_temperature ? softmax_with_temperature(logits, d.temperature) : base;
        out.fused = out.lm;
        out.token = d.lm_top;
        out.state.run_length = 0;
        return out;
    }

    if (prior.entries().back().first >= logits.size()) {
        throw Error(Errc::UnknownId, "prior token outside vocabulary");
    }
    const double s_max = prior.max_prob();
    if (config_.fixed_temperature) {
        d.temperature = *config_.fixed_temperature;
    } else {
        const Calibration cal = calibrate_temperature(logits, s_max, config_.calibration);
        d.temperature = cal.temperature;
        d.calibration_clamped = cal.clamped();
    }
    out.lm = softmax_with_temperature(logits, d.temperature);

    d.candidates = prior.size();
    d.c_trie = s_max;
    const Disagreement dis = disagreement(out.lm, prior, config_.top_k);
    d.omega = dis.omega;
    d.degenerate_support = dis.degenerate;
    d.continuity = continuity(state.run_length, config_.continuity_scale);
    const auto adj = adjust_confidences(d.c_lm, d.c_trie, d.omega, d.continuity);
    d.c_lm_adj = adj.lm;
    d.c_trie_adj = adj.trie;
    d.gamma = interpolation_weight(adj.lm, adj.trie);

    out.fused.probs.resize(out.lm.size());
    for (std::size_t i = 0; i < out.lm.size(); ++i) out.fused.probs[i] = d.gamma * out.lm.probs[i];
    for (const auto& [token, p] : prior.entries()) {
        out.fused.probs[token] += (1.0 - d.gamma) * p;
    }
    out.token = out.fused.argmax();

    d.prior_top = prior.argmax();
    out.state.run_length = d.lm_top == d.prior_top ? state.run_length + 1 : 0;
    return out;
}

}  // namespace odd
