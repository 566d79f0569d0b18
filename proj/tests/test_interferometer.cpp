#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "quopt/demod.hpp"
#include "quopt/interferometer.hpp"

using namespace quopt;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

TransmissionImage uniform(std::size_t rows, std::size_t cols, double t) {
    return {Detector{rows, cols, 0.05}, 0.0, Grid2<double>(rows, cols, t), std::nullopt};
}

ScanConfig flat_phase() {
    ScanConfig cfg;
    cfg.phase_tilt_x = cfg.phase_tilt_y = cfg.phase_curvature = 0;
    return cfg;
}

std::vector<double> series(const FringeStack& s, std::size_t r, std::size_t c) {
    std::vector<double> out(s.steps);
    for (std::size_t k = 0; k < s.steps; ++k) out[k] = s.at(k, r, c);
    return out;
}

}  // namespace

TEST_CASE("default scan spans 4 um and five fringe periods") {
    const ScanConfig cfg;
    CHECK_THAT(cfg.scan_length_um(), WithinAbs(4.0, 1e-12));
    CHECK_THAT(cfg.periods(), WithinAbs(5.0, 1e-12));
    CHECK(cfg.n_steps == 40);
    CHECK(cfg.v_sys == 0.3);
    CHECK(cfg.n0 == 1e4);
}

TEST_CASE("full transmission at unit system visibility swings from 0 to 2 n0") {
    ScanConfig cfg = flat_phase();
    cfg.v_sys = 1.0;
    const auto img = uniform(3, 4, 1.0);
    const auto stack = synthesize_fvs(img, cfg, Grid2<double>(3, 4, 0.0));
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            const auto s = series(stack, r, c);
            CHECK_THAT(*std::max_element(s.begin(), s.end()), WithinRel(2 * cfg.n0, 1e-12));
            CHECK_THAT(*std::min_element(s.begin(), s.end()), WithinAbs(0.0, 1e-9 * cfg.n0));
        }
}

TEST_CASE("opaque pixels give constant counts") {
    const ScanConfig cfg;
    auto img = uniform(2, 2, 1.0);
    img.T(1, 0) = 0.0;
    const auto stack = synthesize_fvs(img, cfg, default_phase_map(2, 2, cfg));
    for (std::size_t k = 0; k < cfg.n_steps; ++k) CHECK(stack.at(k, 1, 0) == cfg.n0);
    CHECK(stack.truth_visibility(1, 0) == 0.0);
}

TEST_CASE("minmax recovers 5% visibility when samples hit the extrema") {
    ScanConfig cfg = flat_phase();
    // v_sys sqrt(T) = 0.05
    const double T = std::pow(0.05 / cfg.v_sys, 2);
    const auto stack = synthesize_fvs(uniform(2, 3, T), cfg, Grid2<double>(2, 3, 0.0));
    CHECK_THAT(stack.truth_visibility(0, 0), WithinAbs(0.05, 1e-15));
    CHECK_THAT(visibility_minmax(series(stack, 1, 2)), WithinAbs(0.05, 1e-9));
}

TEST_CASE("visibility follows amplitude or intensity transmission") {
    ScanConfig cfg;
    CHECK_THAT(visibility_for(0.25, cfg), WithinAbs(0.15, 1e-15));
    cfg.transmission_exponent = TransmissionExponent::intensity;
    CHECK_THAT(visibility_for(0.25, cfg), WithinAbs(0.075, 1e-15));
}

TEST_CASE("counts follow the raised-cosine model with the phase map") {
    const ScanConfig cfg;
    auto img = uniform(5, 7, 0.6);
    const auto phase = default_phase_map(5, 7, cfg);
    const auto stack = synthesize_fvs(img, cfg, phase);
    const double v = cfg.v_sys * std::sqrt(0.6);
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 7; ++c) {
            const auto expected = [&] {
                std::vector<double> s(cfg.n_steps);
                for (std::size_t k = 0; k < cfg.n_steps; ++k)
                    s[k] = cfg.n0 * (1 + v * std::cos(2 * std::numbers::pi * 5.0 * k / 40.0 + phase(r, c)));
                return s;
            }();
            const auto got = series(stack, r, c);
            for (std::size_t k = 0; k < cfg.n_steps; ++k) REQUIRE_THAT(got[k], WithinAbs(expected[k], 1e-9));
        }
}

TEST_CASE("noiseless counts scale linearly with n0") {
    ScanConfig a;
    ScanConfig b = a;
    b.n0 = 7.3 * a.n0;
    auto img = uniform(4, 4, 0.3);
    img.T(2, 1) = 0.9;
    const auto phase = default_phase_map(4, 4, a);
    const auto sa = synthesize_fvs(img, a, phase);
    const auto sb = synthesize_fvs(img, b, phase);
    for (std::size_t i = 0; i < sa.counts.size(); ++i) REQUIRE_THAT(sb.counts[i], WithinRel(7.3 * sa.counts[i], 1e-14));
}

TEST_CASE("poisson noise gives integer counts with the expected mean") {
    ScanConfig cfg;
    cfg.noise = NoiseModel::poisson;
    cfg.n0 = 100;
    const auto stack = synthesize_fvs(uniform(32, 32, 0.5), cfg, default_phase_map(32, 32, cfg));
    double sum = 0;
    for (double v : stack.counts) {
        REQUIRE(v == std::floor(v));
        sum += v;
    }
    // The fringe averages out over whole periods.
    const double mean = sum / static_cast<double>(stack.counts.size());
    CHECK_THAT(mean, WithinAbs(100.0, 0.5));
}

TEST_CASE("gaussian read noise is clamped at zero") {
    ScanConfig cfg;
    cfg.noise = NoiseModel::poisson_gaussian;
    cfg.n0 = 1;
    cfg.read_sigma = 5;
    const auto stack = synthesize_fvs(uniform(8, 8, 1.0), cfg, default_phase_map(8, 8, cfg));
    for (double v : stack.counts) REQUIRE(v >= 0);
    CHECK(std::any_of(stack.counts.begin(), stack.counts.end(), [](double v) { return v != std::floor(v); }));
}

TEST_CASE("noise is deterministic in the seed and independent of jobs") {
    ScanConfig cfg;
    cfg.noise = NoiseModel::poisson;
    const auto img = uniform(16, 16, 0.4);
    const auto phase = default_phase_map(16, 16, cfg);
    const auto a = synthesize_fvs(img, cfg, phase, 1);
    const auto b = synthesize_fvs(img, cfg, phase, 3);
    CHECK(a.counts == b.counts);
    cfg.seed = 2;
    const auto c = synthesize_fvs(img, cfg, phase, 1);
    CHECK(a.counts != c.counts);
}

TEST_CASE("phase map shape must match the image") {
    const ScanConfig cfg;
    CHECK_THROWS_AS(synthesize_fvs(uniform(4, 4, 1.0), cfg, Grid2<double>(4, 5, 0.0)), Error);
}

TEST_CASE("invalid configurations are rejected") {
    ScanConfig cfg;
    cfg.v_sys = 1.5;
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg = ScanConfig{};
    cfg.n_steps = 4;
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg = ScanConfig{};
    cfg.n0 = 0;
    CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("default protocol produces one stack per angle") {
    const std::vector shapes{AnalyticShape::sphere({}, 0.2, 1.0)};
    const Phantom ph = rasterize(shapes, 16, 16, 12, 0.05);
    const auto angles = default_angles();
    REQUIRE(angles.size() == 180);
    CHECK_THAT(angles[179], WithinAbs(179 * std::numbers::pi / 180, 1e-15));
    const auto stacks = run_simulation(ph, ScanConfig{}, angles);
    REQUIRE(stacks.size() == 180);
    for (std::size_t a = 0; a < stacks.size(); ++a) {
        CHECK(stacks[a].steps == 40);
        CHECK(stacks[a].rows == 12);
        CHECK(stacks[a].cols == 16);
        CHECK(stacks[a].angle == angles[a]);
    }
}

TEST_CASE("empty phantom gives spatially uniform counts") {
    const Phantom ph = detail::empty_grid(10, 10, 6, 0.1);
    const std::vector<double> angle{0.4};
    const auto stacks = run_simulation(ph, flat_phase(), angle);
    const auto& s = stacks.front();
    for (std::size_t k = 0; k < s.steps; ++k) {
        const auto f = s.frame(k);
        for (double v : f) REQUIRE(v == f[0]);
    }
}

TEST_CASE("simulation with a fixed seed is reproducible across jobs") {
    const Phantom ph = wire_figurine(1.4, 0.06, GridSpec{52, 52, 52, 0.03});
    ScanConfig cfg;
    cfg.noise = NoiseModel::poisson_gaussian;
    cfg.read_sigma = 2;
    cfg.seed = 77;
    const auto angles = default_angles(6, 30);
    const auto a = run_simulation(ph, cfg, angles, 1);
    const auto b = run_simulation(ph, cfg, angles, 4);
    const auto c = run_simulation(ph, cfg, angles, 1);
    for (std::size_t i = 0; i < angles.size(); ++i) {
        CHECK(a[i].counts == b[i].counts);
        CHECK(a[i].counts == c[i].counts);
    }
}

TEST_CASE("psf in the config blurs the transmission") {
    const std::vector shapes{AnalyticShape::sphere({}, 0.3, 3.0)};
    const Phantom ph = rasterize(shapes, 24, 24, 24, 0.05);
    ScanConfig sharp;
    ScanConfig blurred = sharp;
    blurred.psf_fwhm_mm = 0.2;
    const std::vector<double> angle{0.0};
    const auto a = run_simulation(ph, sharp, angle).front();
    const auto b = run_simulation(ph, blurred, angle).front();
    // Blur raises the darkest visibility.
    CHECK(*std::min_element(b.truth_visibility.values().begin(), b.truth_visibility.values().end()) >
          *std::min_element(a.truth_visibility.values().begin(), a.truth_visibility.values().end()) + 0.01);
}

TEST_CASE("angles outside one turn are rejected") {
    const Phantom ph = detail::empty_grid(8, 8, 8, 0.1);
    const std::vector<double> bad{-0.1};
    CHECK_THROWS_AS(run_simulation(ph, ScanConfig{}, bad), Error);
    CHECK_THROWS_AS(run_simulation(ph, ScanConfig{}, std::vector<double>{}), Error);
}
