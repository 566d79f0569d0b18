#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "quopt/error.hpp"
#include "quopt/fft.hpp"
#include "quopt/grid.hpp"
#include "quopt/interferometer.hpp"
#include "quopt/parallel.hpp"

namespace quopt {

enum class DemodMethod { fft, minmax };
enum class Window { none, hann };

/// Per-pixel fringe parameters extracted from one stack.
struct VisibilityImage {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double angle = 0;
    Grid2<double> visibility;
    Grid2<double> amplitude;      // mean counts
    Grid2<double> phase;          // wrapped to (-pi, pi]
    Grid2<std::uint8_t> phase_valid;
    std::size_t bin_used = 0;     // 0-based DFT bin; 0 for minmax
    DemodMethod method = DemodMethod::fft;
    bool leakage_warning = false;

    VisibilityImage() = default;
    VisibilityImage(std::size_t r, std::size_t c, double ang)
        : rows(r), cols(c), angle(ang), visibility(r, c), amplitude(r, c), phase(r, c), phase_valid(r, c, 0) {}
};

/// (max - min) / (max + min) of a fringe series.
inline double visibility_minmax(std::span<const double> series) {
    require(series.size() >= 2, ErrorCode::InvalidArgument, "visibility needs at least two samples");
    const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
    const double sum = *hi + *lo;
    require(sum != 0, ErrorCode::DegenerateSeries, "max + min of the fringe series is zero");
    return (*hi - *lo) / sum;
}

inline double wrap_phase(double p) {
    const double w = std::remainder(p, 2 * std::numbers::pi);
    return w <= -std::numbers::pi ? w + 2 * std::numbers::pi : w;
}

/// True when the scan does not span a whole number of fringe periods to
/// within 2% of a period.
inline bool has_leakage(const ScanConfig& cfg) {
    const double periods = cfg.periods();
    return std::abs(periods - std::round(periods)) > 0.02;
}

/// Fringe bin implied by the acquisition parameters.
inline std::size_t select_fringe_bin(const ScanConfig& cfg) {
    require(cfg.n_steps >= 8, ErrorCode::InvalidArgument, "scan needs at least 8 phase steps");
    const double n = std::round(cfg.periods());
    require(n >= 1 && n < 0.5 * static_cast<double>(cfg.n_steps), ErrorCode::BinOutOfRange,
            "configured scan puts the fringe outside the resolvable bins");
    return static_cast<std::size_t>(n);
}

/// Spatial mean of |F(k)| for every DFT bin k of the stack.
inline std::vector<double> mean_spectrum(const FringeStack& stack) {
    const std::size_t m = stack.steps;
    const std::size_t pixels = stack.frame_size();
    const fft::InterleavedTransform transform(m, pixels, pixels);
    std::vector<std::complex<double>> spectrum(transform.bins() * pixels);
    transform.forward(stack.counts.data(), spectrum);
    std::vector<double> mean(transform.bins(), 0.0);
    for (std::size_t f = 0; f < transform.bins(); ++f) {
        double acc = 0;
        for (std::size_t p = 0; p < pixels; ++p) acc += std::abs(spectrum[f * pixels + p]);
        mean[f] = acc / static_cast<double>(pixels);
    }
    return mean;
}

/// Fringe bin found from the data alone: the strongest spatially averaged
/// bin in [2, M/2). Fails with NoFringeDetected when no bin stands out (peak
/// numerically zero or below twice the median of the candidate bins).
inline std::size_t detect_fringe_bin(const FringeStack& stack) {
    require(stack.steps >= 8, ErrorCode::InvalidArgument, "scan needs at least 8 phase steps");
    require(stack.frame_size() > 0, ErrorCode::InvalidArgument, "empty stack");
    const auto mean = mean_spectrum(stack);
    const std::size_t hi = (stack.steps + 1) / 2;  // exclusive upper bound, k < M/2
    std::vector<double> candidates(mean.begin() + 2, mean.begin() + static_cast<long>(hi));
    const auto peak = std::max_element(candidates.begin(), candidates.end());
    const std::size_t bin = static_cast<std::size_t>(peak - candidates.begin()) + 2;
    const double peak_value = *peak;
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<long>(candidates.size() / 2),
                     candidates.end());
    const double median = candidates[candidates.size() / 2];
    if (peak_value <= 1e-9 * mean[0] || peak_value < 2 * median)
        fail(ErrorCode::NoFringeDetected, "no fringe harmonic stands out of the spectrum");
    return bin;
}

/// Fringe bin for a stack: the configured bin, cross-checked against the
/// data-driven argmax. Pass use_config = false when the config is unknown.
inline std::size_t select_fringe_bin(const FringeStack& stack, bool use_config = true) {
    const std::size_t detected = detect_fringe_bin(stack);
    if (!use_config) return detected;
    const std::size_t configured = select_fringe_bin(stack.config);
    if (configured != detected)
        fail(ErrorCode::BinMismatch, "configured fringe bin " + std::to_string(configured) +
                                         " disagrees with spectral peak at bin " + std::to_string(detected));
    return configured;
}

struct DemodOptions {
    DemodMethod method = DemodMethod::fft;
    std::optional<std::size_t> bin;  // nullopt selects automatically
    Window window = Window::none;
};

namespace detail {

inline void check_bin(std::size_t n, std::size_t m) {
    if (n == 0 || 2 * n >= m || m < 2 * n + 2)
        fail(ErrorCode::BinOutOfRange,
             "fringe bin " + std::to_string(n) + " is not resolvable with " + std::to_string(m) + " steps");
}

inline VisibilityImage demodulate_minmax(const FringeStack& stack, int jobs) {
    VisibilityImage out(stack.rows, stack.cols, stack.angle);
    out.method = DemodMethod::minmax;
    parallel_for(stack.rows, jobs, [&](std::size_t r) {
        std::vector<double> series(stack.steps);
        for (std::size_t c = 0; c < stack.cols; ++c) {
            for (std::size_t k = 0; k < stack.steps; ++k) series[k] = stack.at(k, r, c);
            const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
            out.visibility(r, c) = visibility_minmax(series);
            out.amplitude(r, c) = 0.5 * (*hi + *lo);
        }
    });
    return out;
}

}  // namespace detail

/// Per-pixel DFT demodulation: V = 2 |F(n)| / |F(0)|, amplitude = |F(0)| / M,
/// phase = arg F(n).
///
/// F(0) is the DC term; in 1-based DFT indexing it is the first component,
/// which is why the ratio against "the first component" reproduces the
/// min/max visibility of a raised cosine.
inline VisibilityImage demodulate_stack(const FringeStack& stack, const DemodOptions& opts = {}, int jobs = 1) {
    require(stack.counts.size() == stack.steps * stack.frame_size(), ErrorCode::ConfigMismatch,
            "stack counts do not match its dimensions");
    for (double v : stack.counts) require(std::isfinite(v), ErrorCode::InvalidArgument, "stack contains non-finite counts");
    if (opts.method == DemodMethod::minmax) {
        VisibilityImage out = detail::demodulate_minmax(stack, jobs);
        out.leakage_warning = has_leakage(stack.config);
        return out;
    }
    const std::size_t m = stack.steps;
    require(m >= 2, ErrorCode::InvalidArgument, "stack needs at least two steps");
    if (opts.bin) detail::check_bin(*opts.bin, m);
    const std::size_t n = opts.bin ? *opts.bin : select_fringe_bin(stack);
    detail::check_bin(n, m);

    VisibilityImage out(stack.rows, stack.cols, stack.angle);
    out.bin_used = n;
    out.method = DemodMethod::fft;
    out.leakage_warning = has_leakage(stack.config);

    std::vector<double> window(m, 1.0);
    double gain = 1.0;
    if (opts.window == Window::hann) {
        for (std::size_t k = 0; k < m; ++k)
            window[k] = 0.5 * (1 - std::cos(2 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(m)));
        gain = 2.0;  // coherent gain of the periodic Hann window is 1/2
    }

    const std::size_t frame = stack.frame_size();
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, stack.rows);
    parallel_for(workers, jobs, [&](std::size_t w) {
        const std::size_t r0 = stack.rows * w / workers;
        const std::size_t r1 = stack.rows * (w + 1) / workers;
        if (r0 == r1) return;
        const std::size_t count = (r1 - r0) * stack.cols;
        const std::size_t p0 = r0 * stack.cols;
        std::vector<std::complex<double>> spectrum((m / 2 + 1) * count);
        if (opts.window == Window::none) {
            const fft::InterleavedTransform transform(m, count, frame);
            transform.forward(stack.counts.data() + p0, spectrum);
        } else {
            std::vector<double> buffer(m * count);
            for (std::size_t k = 0; k < m; ++k)
                for (std::size_t p = 0; p < count; ++p) buffer[k * count + p] = window[k] * stack.counts[k * frame + p0 + p];
            const fft::InterleavedTransform transform(m, count, count);
            transform.forward(buffer.data(), spectrum);
        }
        for (std::size_t p = 0; p < count; ++p) {
            const std::size_t r = r0 + p / stack.cols;
            const std::size_t c = p % stack.cols;
            const double dc = std::abs(spectrum[p]);
            const std::complex<double> fringe = spectrum[n * count + p];
            const double mag = std::abs(fringe);
            out.amplitude(r, c) = gain * dc / static_cast<double>(m);
            out.visibility(r, c) = dc > 0 ? 2 * mag / dc : 0.0;
            const bool valid = dc > 0 && mag > 1e-12 * dc;
            out.phase_valid(r, c) = valid ? 1 : 0;
            out.phase(r, c) = valid ? wrap_phase(std::arg(fringe)) : 0.0;
        }
    });
    return out;
}

}  // namespace quopt
