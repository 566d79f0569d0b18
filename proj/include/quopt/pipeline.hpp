#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quopt/demod.hpp"
#include "quopt/interferometer.hpp"
#include "quopt/metrics.hpp"
#include "quopt/parallel.hpp"
#include "quopt/phantom.hpp"
#include "quopt/projection.hpp"
#include "quopt/tomo.hpp"

namespace quopt {

/// Fraction of the line integral that -ln(V / v_sys) recovers.
inline double pathlen_fraction(TransmissionExponent e) { return e == TransmissionExponent::amplitude ? 0.5 : 1.0; }

/// Field-of-view radius used by default: one pixel inside the detector half-width.
inline double default_fov_radius(std::size_t cols) { return 0.5 * static_cast<double>(cols) - 1.0; }

struct ReconstructOptions {
    OpacityMode mode = OpacityMode::log;
    Filter filter = Filter::ramp;
    std::optional<double> cor_offset;  // nullopt estimates it from the data
    std::optional<double> v_ref;       // defaults to the scan's v_sys
    std::optional<double> fov_radius_px;
};

/// Wall-clock durations of the named stages in seconds.
using StageTimings = std::map<std::string, double>;

class StageTimer {
public:
    explicit StageTimer(StageTimings& sink) : sink_(sink) {}
    void mark(const std::string& stage) {
        const auto now = std::chrono::steady_clock::now();
        sink_[stage] = std::chrono::duration<double>(now - last_).count();
        last_ = now;
    }

private:
    StageTimings& sink_;
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

/// Preprocessing, COR handling and FBP shared by the CLI and the round trip.
inline Volume reconstruct_from_visibility(std::span<const VisibilityImage> vis, const ScanConfig& cfg,
                                          double pixel_pitch, const ReconstructOptions& opts, int jobs = 1) {
    PreprocessOptions pre;
    pre.mode = opts.mode;
    pre.v_ref = opts.v_ref.value_or(cfg.v_sys);
    pre.pathlen_fraction = pathlen_fraction(cfg.transmission_exponent);
    const std::size_t cols = vis.empty() ? 0 : vis.front().cols;
    const double fov = opts.fov_radius_px.value_or(default_fov_radius(cols));
    double cor = 0;
    if (opts.cor_offset) {
        cor = *opts.cor_offset;
    } else {
        cor = estimate_cor(preprocess(vis, pre, pixel_pitch));
    }
    pre.cor_offset = cor;
    pre.fov_radius_px = fov;
    return reconstruct_volume(preprocess(vis, pre, pixel_pitch), opts.filter, std::nullopt, jobs);
}

struct RoundtripOptions {
    ScanConfig scan;
    std::vector<double> angles = default_angles();
    ReconstructOptions recon;
    DemodOptions demod;
};

struct RoundtripReport {
    double nrmse = 0;
    double support_iou = 0;
    double otsu_threshold = 0;
    double peak_position_error_px = 0;
    double cor_offset = 0;
    std::size_t fringe_bin = 0;
    StageTimings timings;

    // Thresholds of the desk-scale protocol check.
    static constexpr double max_nrmse = 0.10;
    static constexpr double min_iou = 0.75;
    [[nodiscard]] bool passed() const { return nrmse < max_nrmse && support_iou > min_iou; }
};

/// Compares a reconstruction against its source phantom inside the
/// field-of-view cylinder.
inline RoundtripReport compare_to_phantom(const Volume& vol, const Phantom& ph) {
    RoundtripReport rep;
    const auto mask = metrics::fov_mask(ph.nx(), ph.ny(), ph.nz());
    rep.nrmse = metrics::nrmse(vol.data, ph.mu, mask);
    rep.otsu_threshold = metrics::otsu_threshold(vol.data, mask);
    double peak = 0;
    for (double v : ph.mu.values()) peak = std::max(peak, v);
    rep.support_iou = metrics::support_iou(vol.data, rep.otsu_threshold, ph.mu, 0.5 * peak, mask);
    const auto a = metrics::centroid(vol.data, mask);
    const auto b = metrics::centroid(ph.mu, mask);
    rep.peak_position_error_px = std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    rep.cor_offset = vol.cor_offset;
    return rep;
}

/// Phantom -> projection -> fringe scan -> demodulation -> FBP, streamed one
/// angle at a time so only visibility images are held in memory.
inline RoundtripReport run_roundtrip(const Phantom& ph, const RoundtripOptions& opts, Volume* volume_out = nullptr,
                                     int jobs = 1) {
    validate(opts.scan);
    check_angles(opts.angles);
    StageTimings timings;
    StageTimer timer(timings);
    const Detector det = matched_detector(ph);
    detail::check_coverage(ph, det);
    const Grid2<double> phase = default_phase_map(det.rows, det.cols, opts.scan);

    std::vector<VisibilityImage> vis(opts.angles.size());
    parallel_for(opts.angles.size(), jobs, [&](std::size_t a) {
        const FringeStack stack = simulate_angle(ph, opts.scan, opts.angles[a], det, phase);
        vis[a] = demodulate_stack(stack, opts.demod);
    });
    timer.mark("simulate+extract");

    Volume vol = reconstruct_from_visibility(vis, opts.scan, det.pixel_pitch, opts.recon, jobs);
    timer.mark("reconstruct");

    RoundtripReport rep = compare_to_phantom(vol, ph);
    rep.fringe_bin = vis.front().bin_used;
    timer.mark("metrics");
    rep.timings = std::move(timings);
    if (volume_out != nullptr) *volume_out = std::move(vol);
    return rep;
}

}  // namespace quopt
