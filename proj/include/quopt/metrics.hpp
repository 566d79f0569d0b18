#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "quopt/error.hpp"
#include "quopt/grid.hpp"

namespace quopt::metrics {

/// Voxels inside the cylinder inscribed in the x-y extent of the grid.
inline std::vector<std::uint8_t> fov_mask(std::size_t nx, std::size_t ny, std::size_t nz) {
    std::vector<std::uint8_t> mask(nx * ny * nz, 0);
    const double cx = 0.5 * static_cast<double>(nx - 1);
    const double cy = 0.5 * static_cast<double>(ny - 1);
    const double r = 0.5 * static_cast<double>(std::min(nx, ny));
    for (std::size_t k = 0; k < nz; ++k)
        for (std::size_t j = 0; j < ny; ++j)
            for (std::size_t i = 0; i < nx; ++i) {
                const double dx = static_cast<double>(i) - cx;
                const double dy = static_cast<double>(j) - cy;
                if (dx * dx + dy * dy <= r * r) mask[i + nx * (j + ny * k)] = 1;
            }
    return mask;
}

inline void check_same_shape(const Grid3<double>& a, const Grid3<double>& b) {
    require(a.nx() == b.nx() && a.ny() == b.ny() && a.nz() == b.nz(), ErrorCode::GeometryMismatch,
            "reconstruction and reference grids differ in shape");
}

/// RMS error over the masked voxels divided by the reference's value range.
inline double nrmse(const Grid3<double>& recon, const Grid3<double>& truth, const std::vector<std::uint8_t>& mask) {
    check_same_shape(recon, truth);
    double sum2 = 0;
    std::size_t count = 0;
    double lo = 0;
    double hi = 0;
    bool first = true;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!mask[i]) continue;
        const double t = truth.values()[i];
        const double d = recon.values()[i] - t;
        sum2 += d * d;
        ++count;
        lo = first ? t : std::min(lo, t);
        hi = first ? t : std::max(hi, t);
        first = false;
    }
    require(count > 0 && hi > lo, ErrorCode::InvalidArgument, "reference is constant inside the mask");
    return std::sqrt(sum2 / static_cast<double>(count)) / (hi - lo);
}

/// Otsu threshold over a 256-bin histogram of the masked values.
inline double otsu_threshold(const Grid3<double>& vol, const std::vector<std::uint8_t>& mask) {
    double lo = 0;
    double hi = 0;
    bool first = true;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (!mask[i]) continue;
        const double v = vol.values()[i];
        lo = first ? v : std::min(lo, v);
        hi = first ? v : std::max(hi, v);
        first = false;
    }
    require(!first && hi > lo, ErrorCode::InvalidArgument, "cannot threshold a constant volume");
    constexpr std::size_t bins = 256;
    std::array<double, bins> hist{};
    const double width = (hi - lo) / bins;
    double total = 0;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (!mask[i]) continue;
        const auto b = std::min(bins - 1, static_cast<std::size_t>((vol.values()[i] - lo) / width));
        hist[b] += 1;
        total += 1;
    }
    double sum_all = 0;
    for (std::size_t b = 0; b < bins; ++b) sum_all += static_cast<double>(b) * hist[b];
    double w0 = 0;
    double sum0 = 0;
    double best = -1;
    std::size_t best_bin = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        w0 += hist[b];
        sum0 += static_cast<double>(b) * hist[b];
        const double w1 = total - w0;
        if (w0 == 0 || w1 == 0) continue;
        const double m0 = sum0 / w0;
        const double m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_bin = b;
        }
    }
    return lo + width * static_cast<double>(best_bin + 1);
}

/// Intersection over union of {recon > threshold} and {truth > truth_level}.
inline double support_iou(const Grid3<double>& recon, double threshold, const Grid3<double>& truth, double truth_level,
                          const std::vector<std::uint8_t>& mask) {
    check_same_shape(recon, truth);
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!mask[i]) continue;
        const bool a = recon.values()[i] > threshold;
        const bool b = truth.values()[i] > truth_level;
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Value-weighted centroid (voxel units) of the positive part of the masked volume.
inline std::array<double, 3> centroid(const Grid3<double>& vol, const std::vector<std::uint8_t>& mask) {
    std::array<double, 3> acc{};
    double mass = 0;
    for (std::size_t k = 0; k < vol.nz(); ++k)
        for (std::size_t j = 0; j < vol.ny(); ++j)
            for (std::size_t i = 0; i < vol.nx(); ++i) {
                const std::size_t idx = vol.index(i, j, k);
                if (!mask[idx]) continue;
                const double w = std::max(vol.values()[idx], 0.0);
                acc[0] += w * static_cast<double>(i);
                acc[1] += w * static_cast<double>(j);
                acc[2] += w * static_cast<double>(k);
                mass += w;
            }
    require(mass > 0, ErrorCode::InvalidArgument, "volume has no positive mass");
    for (auto& v : acc) v /= mass;
    return acc;
}

}  // namespace quopt::metrics
