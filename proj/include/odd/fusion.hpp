#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "odd/base_lm.hpp"
#include "odd/trie_prior.hpp"

namespace odd {

// Dense distribution over the whole vocabulary.
struct DenseDistribution {
    std::vector<double> probs;

    std::size_t size() const noexcept { return probs.size(); }
    double max_prob() const;
    // Smallest id on ties.
    TokenId argmax() const;
    double sum() const;
};

// Index of the largest logit, smallest id on ties.
TokenId argmax(std::span<const double> values);

// exp((z - max z) / T), normalized. Throws Errc::NonPositiveTemperature.
DenseDistribution softmax_with_temperature(std::span<const double> logits, double temperature);

// 1 - H(q) / log|V| with natural logs and 0 log 0 = 0.
double entropy_confidence(const DenseDistribution& q);

enum class CalibrationStatus {
    Solved,
    ConstantLogits,    // max softmax does not depend on T; T = 1 returned
    TargetTooLow,      // target below the reachable range; hottest temperature returned
    TargetTooHigh,     // target above the reachable range; coldest temperature returned
};

struct Calibration {
    double temperature = 1.0;
    CalibrationStatus status = CalibrationStatus::Solved;
    int iterations = 0;

    bool clamped() const noexcept { return status != CalibrationStatus::Solved; }
};

struct CalibrationOptions {
    double t_lo = 1e-3;
    double t_hi = 1e3;
    double t_floor = 1e-8;   // bracket expansion limits
    double t_ceiling = 1e8;
    double tolerance = 1e-9;
    int max_iterations = 200;
};

// Finds T with max softmax(z / T) = target by bisection on log T. The peak
// probability falls monotonically from 1/m (m = number of tied maxima) at
// T -> 0 to 1/|V| at T -> inf; targets outside that range are clamped.
Calibration calibrate_temperature(std::span<const double> logits, double target_max,
                                  const CalibrationOptions& options = {});

struct Disagreement {
    double omega = 0.0;
    double jsd = 0.0;
    bool degenerate = false;  // a renormalizer was zero; omega forced to 1
};

// Jensen-Shannon disagreement between the two experts restricted to the union
// of their top-k tokens, each renormalized over that union.
Disagreement disagreement(const DenseDistribution& lm, const SparseDistribution& prior,
                          std::size_t k);

// JSD in nats between two distributions given on a shared index set.
double jensen_shannon(std::span<const double> p, std::span<const double> q);

// 1 - exp(-run / scale).
double continuity(std::uint64_t run_length, double scale = 3.0);

struct AdjustedConfidences {
    double lm;
    double trie;
};

AdjustedConfidences adjust_confidences(double c_lm, double c_trie, double omega, double gamma_cont);

// c'_lm / (c'_lm + c'_trie); 0.5 when both are zero.
double interpolation_weight(double c_lm_adj, double c_trie_adj);

struct FusionState {
    std::uint64_t run_length = 0;
};

struct StepDiagnostics {
    double c_lm = 0.0;
    double c_trie = 0.0;
    double c_lm_adj = 0.0;
    double c_trie_adj = 0.0;
    double omega = 0.0;
    double continuity = 0.0;
    double gamma = 1.0;
    double temperature = 1.0;
    bool bypass = false;
    bool calibration_clamped = false;
    bool degenerate_support = false;
    std::size_t candidates = 0;
    TokenId lm_top = 0;
    TokenId prior_top = 0;
};

struct FusionConfig {
    std::size_t top_k = 5;
    double continuity_scale = 3.0;
    // When false every step is a bypass step (greedy family).
    bool use_prior = true;
    // Replaces adaptive calibration with a global temperature.
    std::optional<double> fixed_temperature;
    CalibrationOptions calibration;

    void validate() const;
};

enum class Strategy { Odd, Greedy, TempScaled };

std::string_view strategy_name(Strategy s) noexcept;
// Throws Errc::InvalidConfig.
Strategy parse_strategy(std::string_view name);

// The three decoding strategies as presets over one engine.
FusionConfig preset(Strategy strategy, double temp_scaled_temperature = 0.7,
                    FusionConfig base = {});

struct StepResult {
    TokenId token = 0;
    StepDiagnostics diagnostics;
    FusionState state;
    DenseDistribution lm;     // tempered base distribution
    DenseDistribution fused;  // gamma * lm + (1 - gamma) * prior
};

// Stateless; safe to share across sessions. Each generation owns its FusionState.
class FusionEngine {
public:
    explicit FusionEngine(FusionConfig config = {});

    const FusionConfig& config() const noexcept { return config_; }

    // One decoding step. An empty prior (or use_prior = false) bypasses the
    // trie: the token is argmax z and the run counter resets.
    StepResult step(std::span<const double> logits, const SparseDistribution& prior,
                    FusionState state) const;

private:
    FusionConfig config_;
};

}  // namespace odd
