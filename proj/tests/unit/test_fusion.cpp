#include <doctest.h>

#include <cmath>
#include <random>

#include "odd/fusion.hpp"
#include "support/check.hpp"
#include "support/oracle.hpp"

using namespace odd;

TEST_CASE("softmax with temperature") {
    const auto two = softmax_with_temperature(std::vector<double>{2.0, 0.0}, 1.0);
    CHECK(two.probs[0] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
    CHECK(two.probs[0] == doctest::Approx(0.8808).epsilon(1e-4));
    CHECK(two.probs[1] == doctest::Approx(0.1192).epsilon(1e-3));
    const auto hot = softmax_with_temperature(std::vector<double>{2.0, 0.0}, 1e4);
    CHECK(std::abs(hot.probs[0] - 0.5) < 1e-3);
    const auto flat = softmax_with_temperature(std::vector<double>(6, 3.5), 0.2);
    for (double p : flat.probs) CHECK(p == doctest::Approx(1.0 / 6.0));
    CHECK_ERRC(softmax_with_temperature(std::vector<double>{1.0}, 0.0), Errc::NonPositiveTemperature);
    CHECK_ERRC(softmax_with_temperature(std::vector<double>{1.0}, -2.0), Errc::NonPositiveTemperature);
}

TEST_CASE("entropy confidence") {
    CHECK(entropy_confidence({std::vector<double>(10, 0.1)}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(entropy_confidence({{0.0, 1.0, 0.0}}) == 1.0);
    const double h = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
    CHECK(h == doctest::Approx(0.3251).epsilon(1e-4));
    CHECK(entropy_confidence({{0.9, 0.1}}) == doctest::Approx(1.0 - h / std::log(2.0)).epsilon(1e-12));
    CHECK(entropy_confidence({{0.9, 0.1}}) == doctest::Approx(0.5310).epsilon(1e-4));
    CHECK_ERRC(entropy_confidence({{1.0}}), Errc::InvalidConfig);
}

TEST_CASE("calibration examples") {
    const std::vector<double> z{2.0, 0.0};
    const auto c = calibrate_temperature(z, 0.6);
    CHECK(c.status == CalibrationStatus::Solved);
    CHECK(std::abs(c.temperature - 2.0 / std::log(1.5)) <= 1e-6);
    CHECK(c.temperature == doctest::Approx(4.9326).epsilon(1e-4));
    CHECK(c.iterations <= 200);

    const auto one = calibrate_temperature(z, 1.0 / (1.0 + std::exp(-2.0)));
    CHECK(std::abs(one.temperature - 1.0) <= 1e-6);

    const auto flat = calibrate_temperature(std::vector<double>(5, 1.25), 0.7);
    CHECK(flat.status == CalibrationStatus::ConstantLogits);
    CHECK(flat.temperature == 1.0);
    CHECK(flat.clamped());

    const auto high = calibrate_temperature(z, 1.0);
    CHECK(high.status == CalibrationStatus::TargetTooHigh);
    CHECK(high.temperature == CalibrationOptions{}.t_floor);
    const auto low = calibrate_temperature(z, 0.5);
    CHECK(low.status == CalibrationStatus::TargetTooLow);
    CHECK(low.temperature == CalibrationOptions{}.t_ceiling);
    // Two tied maxima cap the peak at 1/2.
    CHECK(calibrate_temperature(std::vector<double>{1, 1, 0}, 0.6).status == CalibrationStatus::TargetTooHigh);
    CHECK_ERRC(calibrate_temperature(z, 0.0), Errc::InvalidConfig);
    CHECK_ERRC(calibrate_temperature(z, 1.5), Errc::InvalidConfig);
}

TEST_CASE("disagreement") {
    const DenseDistribution p{{0.9, 0.1}};
    const SparseDistribution same({{0, 0.9}, {1, 0.1}});
    CHECK(disagreement(p, same, 5).omega == doctest::Approx(0.0).epsilon(1e-12));

    const SparseDistribution flipped({{0, 0.1}, {1, 0.9}});
    const auto d = disagreement(p, flipped, 5);
    const double m0 = 0.5, m1 = 0.5;
    const double jsd = 0.5 * (0.9 * std::log(0.9 / m0) + 0.1 * std::log(0.1 / m1)) +
                       0.5 * (0.1 * std::log(0.1 / m0) + 0.9 * std::log(0.9 / m1));
    CHECK(d.jsd == doctest::Approx(jsd).epsilon(1e-12));
    CHECK(d.jsd == doctest::Approx(0.3681).epsilon(1e-4));
    CHECK(d.omega == doctest::Approx(0.6067).epsilon(1e-4));

    // Disjoint supports, all mass inside each side's own top-k.
    DenseDistribution lm{std::vector<double>(12, 0.0)};
    for (int i = 0; i < 5; ++i) lm.probs[i] = 0.2;
    const SparseDistribution prior({{7, 0.6}, {8, 0.4}});
    const auto dj = disagreement(lm, prior, 5);
    CHECK(std::abs(dj.jsd - std::log(2.0)) <= 1e-12);
    CHECK(std::abs(dj.omega - std::min(1.0, std::sqrt(std::log(2.0)))) <= 1e-9);

    // The LM puts no mass anywhere on the union.
    const DenseDistribution blind{{1.0, 0.0, 0.0}};
    const SparseDistribution elsewhere({{1, 1.0}});
    const auto dg = disagreement(blind, elsewhere, 1);
    CHECK(dg.degenerate == false);
    const DenseDistribution zero{{0.0, 0.0, 0.0}};
    const auto dz = disagreement(zero, elsewhere, 1);
    CHECK(dz.degenerate);
    CHECK(dz.omega == 1.0);
}

TEST_CASE("continuity and confidence adjustment") {
    CHECK(continuity(0) == 0.0);
    CHECK(std::abs(continuity(3) - (1.0 - std::exp(-1.0))) <= 1e-12);
    CHECK(continuity(30) > 0.9999);
    const auto same = adjust_confidences(0.4, 0.7, 0.0, 0.0);
    CHECK(same.lm == 0.4);
    CHECK(same.trie == 0.7);
    CHECK(adjust_confidences(0.8, 0.5, 1.0, 0.0).lm == 0.0);
    CHECK(adjust_confidences(0.5, 0.8, 0.0, 0.6321).trie == doctest::Approx(0.8 + 0.2 * 0.64 * 0.6321));
    CHECK(adjust_confidences(0.5, 0.8, 0.0, 0.6321).trie == doctest::Approx(0.8809).epsilon(1e-4));
    CHECK(interpolation_weight(0.0, 0.0) == 0.5);
    CHECK(interpolation_weight(0.0, 0.3) == 0.0);
    CHECK(interpolation_weight(0.3, 0.1) == doctest::Approx(0.75));
}

TEST_CASE("bypass on an empty prior") {
    const FusionEngine engine;
    const auto r = engine.step(std::vector<double>{2, 0, 1}, SparseDistribution{}, FusionState{4});
    CHECK(r.token == 0);
    CHECK(r.diagnostics.bypass);
    CHECK(r.diagnostics.gamma == 1.0);
    CHECK(r.state.run_length == 0);
}

TEST_CASE("two-token step traced by hand") {
    // Base softmax [0.6, 0.4]; prior puts everything on token 1, so S_max = 1.
    const std::vector<double> z{std::log(0.6), std::log(0.4)};
    const SparseDistribution prior({{1, 1.0}});
    const auto r = FusionEngine{}.step(z, prior, FusionState{});

    const double c_lm = 1.0 - (-(0.6 * std::log(0.6) + 0.4 * std::log(0.4))) / std::log(2.0);
    CHECK(r.diagnostics.c_lm == doctest::Approx(c_lm).epsilon(1e-12));
    CHECK(r.diagnostics.c_lm == doctest::Approx(0.029).epsilon(1e-2));
    // A peak of 1 is out of reach, so the LM is frozen at the coldest temperature:
    // one-hot on token 0, disjoint from the prior.
    CHECK(r.diagnostics.calibration_clamped);
    CHECK(r.lm.probs[0] == doctest::Approx(1.0).epsilon(1e-12));
    const double omega = std::sqrt(std::log(2.0));
    CHECK(r.diagnostics.omega == doctest::Approx(omega).epsilon(1e-12));
    const double c_lm_adj = c_lm * (1.0 - omega * omega);
    const double gamma = c_lm_adj / (c_lm_adj + 1.0);
    CHECK(r.diagnostics.c_trie_adj == 1.0);
    CHECK(r.diagnostics.gamma == doctest::Approx(gamma).epsilon(1e-12));
    CHECK(r.fused.probs[1] == doctest::Approx(1.0 - gamma).epsilon(1e-12));
    CHECK(r.token == 1);
    CHECK(r.state.run_length == 0);
}

TEST_CASE("run length counts agreement") {
    const FusionEngine engine;
    const std::vector<double> z{3.0, 1.0, 0.0};
    const SparseDistribution agree({{0, 0.7}, {2, 0.3}});
    FusionState s{};
    for (std::uint64_t i = 1; i <= 4; ++i) {
        s = engine.step(z, agree, s).state;
        CHECK(s.run_length == i);
    }
    const SparseDistribution disagree({{1, 0.7}, {2, 0.3}});
    CHECK(engine.step(z, disagree, s).state.run_length == 0);
    CHECK_ERRC(engine.step(z, SparseDistribution({{5, 1.0}}), s), Errc::UnknownId);
}

TEST_CASE("presets") {
    CHECK(preset(Strategy::Odd).use_prior);
    CHECK_FALSE(preset(Strategy::Greedy).use_prior);
    CHECK(*preset(Strategy::TempScaled, 0.7).fixed_temperature == 0.7);
    CHECK(parse_strategy("temp-scaled") == Strategy::TempScaled);
    CHECK_ERRC(parse_strategy("beam"), Errc::InvalidConfig);
    CHECK_ERRC(FusionEngine(preset(Strategy::TempScaled, 0.0)), Errc::NonPositiveTemperature);
    FusionConfig bad;
    bad.top_k = 0;
    CHECK_ERRC(FusionEngine{bad}, Errc::InvalidConfig);
}

TEST_CASE("property: argmax is temperature invariant") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<double> z(2 + rng() % 30);
        for (auto& v : z) v = oracle::uniform(rng, -8, 8);
        const double t = std::exp(oracle::uniform(rng, -5, 5));
        CHECK(softmax_with_temperature(z, t).argmax() == argmax(z));
    }
}

TEST_CASE("property: omega is symmetric, bounded and zero on itself") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + rng() % 12;
        std::vector<double> a(n), b(n);
        double sa = 0, sb = 0;
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = oracle::uniform(rng, 0, 1);
            b[i] = oracle::uniform(rng, 0, 1);
            sa += a[i];
            sb += b[i];
        }
        std::vector<std::pair<TokenId, double>> as, bs;
        for (std::size_t i = 0; i < n; ++i) {
            a[i] /= sa;
            b[i] /= sb;
            as.push_back({static_cast<TokenId>(i), a[i]});
            bs.push_back({static_cast<TokenId>(i), b[i]});
        }
        const auto ab = disagreement({a}, SparseDistribution(bs), n);
        const auto ba = disagreement({b}, SparseDistribution(as), n);
        CHECK(ab.omega == doctest::Approx(ba.omega).epsilon(1e-12));
        CHECK(ab.omega >= 0.0);
        CHECK(ab.omega <= 1.0);
        CHECK(disagreement({a}, SparseDistribution(as), 1 + rng() % n).omega <= 1e-7);
    }
}

TEST_CASE("property: gamma is monotone") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 1000; ++trial) {
        const double l = oracle::uniform(rng, 0, 1), t = oracle::uniform(rng, 1e-3, 1);
        const double dl = oracle::uniform(rng, 0, 1 - l), dt = oracle::uniform(rng, 0, 1 - t);
        CHECK(interpolation_weight(l + dl, t) >= interpolation_weight(l, t) - 1e-15);
        CHECK(interpolation_weight(l, t + dt) <= interpolation_weight(l, t) + 1e-15);
    }
}
