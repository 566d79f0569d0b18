#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "quopt/error.hpp"
#include "quopt/grid.hpp"
#include "quopt/parallel.hpp"
#include "quopt/phantom.hpp"
#include "quopt/projection.hpp"

namespace quopt {

enum class TransmissionExponent { amplitude, intensity };
enum class NoiseModel { none, poisson, poisson_gaussian };

/// Acquisition parameters of one fringe visibility scan.
///
/// The defaults give a 4 um scan of 40 steps containing exactly five fringe
/// periods, so the fringe lands in DFT bin 5.
struct ScanConfig {
    double lambda_pump_nm = 532;
    double lambda_signal_nm = 810;
    double lambda_idler_nm = 1550;
    std::size_t n_steps = 40;
    double step_size_um = 0.1;
    double fringe_period_um = 0.8;
    double v_sys = 0.3;
    double n0 = 1e4;
    TransmissionExponent transmission_exponent = TransmissionExponent::amplitude;
    NoiseModel noise = NoiseModel::none;
    double read_sigma = 0;
    std::uint64_t seed = 1;
    double psf_fwhm_mm = 0;
    // Smooth wavefront phase across the field, in radians at the field edge.
    double phase_tilt_x = 1.5;
    double phase_tilt_y = 0.8;
    double phase_curvature = 0.6;

    [[nodiscard]] double scan_length_um() const noexcept { return static_cast<double>(n_steps) * step_size_um; }
    /// Number of fringe periods spanned by the scan.
    [[nodiscard]] double periods() const noexcept { return scan_length_um() / fringe_period_um; }

    bool operator==(const ScanConfig&) const = default;
};

inline void validate(const ScanConfig& cfg) {
    require(cfg.n_steps >= 8, ErrorCode::InvalidArgument, "scan needs at least 8 phase steps");
    require(cfg.step_size_um > 0 && std::isfinite(cfg.step_size_um), ErrorCode::InvalidArgument,
            "step size must be positive");
    require(cfg.fringe_period_um > 0 && std::isfinite(cfg.fringe_period_um), ErrorCode::InvalidArgument,
            "fringe period must be positive");
    require(cfg.v_sys > 0 && cfg.v_sys <= 1, ErrorCode::InvalidArgument, "system visibility must be in (0, 1]");
    require(cfg.n0 > 0 && std::isfinite(cfg.n0), ErrorCode::InvalidArgument, "n0 must be positive");
    require(cfg.read_sigma >= 0 && std::isfinite(cfg.read_sigma), ErrorCode::InvalidArgument,
            "read noise sigma must be >= 0");
    require(cfg.psf_fwhm_mm >= 0 && std::isfinite(cfg.psf_fwhm_mm), ErrorCode::InvalidArgument,
            "psf fwhm must be >= 0");
}

/// Camera counts versus mirror step for one rotation angle.
struct FringeStack {
    std::size_t steps = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    double angle = 0;
    double pixel_pitch = 1.0;  // mm at the sample plane
    ScanConfig config;
    std::vector<double> counts;  // (step, row, col), col fastest
    // Ground truth kept for testing; empty when loaded from disk.
    Grid2<double> truth_visibility;
    Grid2<double> truth_phase;

    FringeStack() = default;
    FringeStack(std::size_t m, std::size_t r, std::size_t c, double ang, ScanConfig cfg)
        : steps(m), rows(r), cols(c), angle(ang), config(cfg), counts(m * r * c, 0.0) {}

    [[nodiscard]] std::size_t frame_size() const noexcept { return rows * cols; }
    double& at(std::size_t k, std::size_t r, std::size_t c) noexcept { return counts[(k * rows + r) * cols + c]; }
    [[nodiscard]] double at(std::size_t k, std::size_t r, std::size_t c) const noexcept {
        return counts[(k * rows + r) * cols + c];
    }
    [[nodiscard]] std::span<const double> frame(std::size_t k) const noexcept {
        return {counts.data() + k * frame_size(), frame_size()};
    }
};

/// Low-order polynomial wavefront phase, coordinates normalized to [-1, 1].
inline Grid2<double> default_phase_map(std::size_t rows, std::size_t cols, const ScanConfig& cfg) {
    Grid2<double> phase(rows, cols);
    const auto norm = [](std::size_t i, std::size_t n) {
        return n > 1 ? 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0 : 0.0;
    };
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const double x = norm(c, cols);
            const double y = norm(r, rows);
            phase(r, c) = cfg.phase_tilt_x * x + cfg.phase_tilt_y * y + cfg.phase_curvature * (x * x + y * y);
        }
    return phase;
}

/// Fringe visibility a pixel of transmission T reaches.
inline double visibility_for(double T, const ScanConfig& cfg) {
    const double t = cfg.transmission_exponent == TransmissionExponent::amplitude ? std::sqrt(T) : T;
    return cfg.v_sys * t;
}

namespace detail {

/// Independent generator per pixel, derived from (seed, angle, row, col) only.
inline std::mt19937_64 pixel_rng(std::uint64_t seed, double angle, std::size_t r, std::size_t c) {
    const auto angle_bits = std::bit_cast<std::uint64_t>(angle);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(angle_bits), static_cast<std::uint32_t>(angle_bits >> 32),
                      static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)};
    return std::mt19937_64(seq);
}

}  // namespace detail

/// Induced-coherence fringe model:
///   counts(k, r, c) = n0 * (1 + V(r, c) * cos(2 pi k step / period + phase(r, c)))
/// with V = v_sys * sqrt(T) (amplitude) or v_sys * T (intensity), followed by
/// optional Poisson and Gaussian read noise.
inline FringeStack synthesize_fvs(const TransmissionImage& img, const ScanConfig& cfg, const Grid2<double>& phase_map,
                                  int jobs = 1) {
    validate(cfg);
    require(phase_map.rows() == img.rows() && phase_map.cols() == img.cols(), ErrorCode::ConfigMismatch,
            "phase map shape does not match the transmission image");
    require(img.T.rows() == img.rows() && img.T.cols() == img.cols(), ErrorCode::ConfigMismatch,
            "transmission grid does not match its detector");
    for (double t : img.T.values())
        require(t >= 0 && t <= 1, ErrorCode::InvalidArgument, "transmission outside [0, 1]");
    for (double p : phase_map.values()) require(std::isfinite(p), ErrorCode::InvalidArgument, "phase map not finite");

    FringeStack stack(cfg.n_steps, img.rows(), img.cols(), img.angle, cfg);
    stack.pixel_pitch = img.detector.pixel_pitch;
    stack.truth_visibility = Grid2<double>(img.rows(), img.cols());
    stack.truth_phase = phase_map;
    const double omega = 2 * std::numbers::pi * cfg.step_size_um / cfg.fringe_period_um;

    parallel_for(img.rows(), jobs, [&](std::size_t r) {
        for (std::size_t c = 0; c < img.cols(); ++c) {
            const double v = visibility_for(img.T(r, c), cfg);
            stack.truth_visibility(r, c) = v;
            for (std::size_t k = 0; k < cfg.n_steps; ++k)
                stack.at(k, r, c) = cfg.n0 * (1 + v * std::cos(omega * static_cast<double>(k) + phase_map(r, c)));
            if (cfg.noise == NoiseModel::none) continue;
            auto rng = detail::pixel_rng(cfg.seed, img.angle, r, c);
            std::normal_distribution<double> read(0.0, cfg.read_sigma > 0 ? cfg.read_sigma : 1.0);
            for (std::size_t k = 0; k < cfg.n_steps; ++k) {
                double& n = stack.at(k, r, c);
                const double mean = n;
                n = mean > 0 ? static_cast<double>(std::poisson_distribution<std::int64_t>(mean)(rng)) : 0.0;
                if (cfg.noise == NoiseModel::poisson_gaussian && cfg.read_sigma > 0)
                    n = std::max(0.0, n + read(rng));
            }
        }
    });
    return stack;
}

/// 0 to 179 degrees in 1 degree steps.
inline std::vector<double> default_angles(std::size_t count = 180, double step_deg = 1.0) {
    std::vector<double> angles(count);
    for (std::size_t i = 0; i < count; ++i) angles[i] = static_cast<double>(i) * step_deg * std::numbers::pi / 180.0;
    return angles;
}

inline void check_angles(std::span<const double> angles) {
    require(!angles.empty(), ErrorCode::InvalidArgument, "angle list is empty");
    for (double a : angles)
        require(a >= 0 && a < 2 * std::numbers::pi, ErrorCode::InvalidArgument, "angles must lie in [0, 2 pi)");
}

/// One angle of the acquisition: project, optional blur, fringe synthesis.
/// Expects check_coverage to have been done by the caller.
inline FringeStack simulate_angle(const Phantom& ph, const ScanConfig& cfg, double angle, const Detector& det,
                                  const Grid2<double>& phase_map, int jobs = 1) {
    TransmissionImage img = detail::to_transmission(detail::line_integrals(ph, angle, det, jobs), angle, det);
    if (cfg.psf_fwhm_mm > 0) img = apply_psf(img, cfg.psf_fwhm_mm);
    return synthesize_fvs(img, cfg, phase_map, jobs);
}

/// Full acquisition, one stack per angle. Output does not depend on `jobs`.
inline std::vector<FringeStack> run_simulation(const Phantom& ph, const ScanConfig& cfg, std::span<const double> angles,
                                               const Detector& det, int jobs = 1) {
    validate(cfg);
    check_angles(angles);
    detail::check_coverage(ph, det);
    const Grid2<double> phase = default_phase_map(det.rows, det.cols, cfg);
    std::vector<FringeStack> stacks(angles.size());
    parallel_for(angles.size(), jobs,
                 [&](std::size_t a) { stacks[a] = simulate_angle(ph, cfg, angles[a], det, phase); });
    return stacks;
}

inline std::vector<FringeStack> run_simulation(const Phantom& ph, const ScanConfig& cfg,
                                               std::span<const double> angles, int jobs = 1) {
    return run_simulation(ph, cfg, angles, matched_detector(ph), jobs);
}

}  // namespace quopt
