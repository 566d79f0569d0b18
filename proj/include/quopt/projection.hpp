#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "quopt/error.hpp"
#include "quopt/grid.hpp"
#include "quopt/parallel.hpp"
#include "quopt/phantom.hpp"

namespace quopt {

/// Parallel-beam detector. Pixel (r, c) sits at lateral offset
/// s = (c - (cols-1)/2) * pixel_pitch and height z = (r - (rows-1)/2) * pixel_pitch.
struct Detector {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double pixel_pitch = 1.0;

    [[nodiscard]] double s_of(std::size_t c) const noexcept {
        return (static_cast<double>(c) - 0.5 * static_cast<double>(cols - 1)) * pixel_pitch;
    }
    [[nodiscard]] double z_of(std::size_t r) const noexcept {
        return (static_cast<double>(r) - 0.5 * static_cast<double>(rows - 1)) * pixel_pitch;
    }
    bool operator==(const Detector&) const = default;
};

/// Detector matching the phantom grid one-to-one (cols = nx, rows = nz).
inline Detector matched_detector(const Phantom& ph) { return {ph.nz(), ph.nx(), ph.pitch}; }

struct TransmissionImage {
    Detector detector;
    double angle = 0;  // radians
    Grid2<double> T;
    std::optional<Grid2<double>> pathlen;

    [[nodiscard]] std::size_t rows() const noexcept { return detector.rows; }
    [[nodiscard]] std::size_t cols() const noexcept { return detector.cols; }
};

namespace detail {

/// Walks the Joseph interpolation weights of one ray through an nx*ny slice.
///
/// The sample sits at stage angle `angle`: the beam is fixed along +y, and the
/// ray hitting detector offset s passes through the object points
/// s*(cos, -sin) + t*(sin, cos). fn(flat_index, weight) receives voxel indices
/// with weights in mm, so sum(weight * mu) is the line integral.
template <typename Fn>
void joseph_walk(std::size_t nx, std::size_t ny, double pitch, double s, double cos_a, double sin_a, Fn&& fn) {
    const double cx = 0.5 * static_cast<double>(nx - 1);
    const double cy = 0.5 * static_cast<double>(ny - 1);
    // Ray origin (t = 0) and direction in voxel index units.
    const double ox = s * cos_a / pitch + cx;
    const double oy = -s * sin_a / pitch + cy;
    const double dx = sin_a;
    const double dy = cos_a;
    if (std::abs(dy) >= std::abs(dx)) {
        const double weight = pitch / std::abs(dy);
        const double slope = dx / dy;
        for (std::size_t j = 0; j < ny; ++j) {
            const double fx = ox + (static_cast<double>(j) - oy) * slope;
            const double f0 = std::floor(fx);
            const auto i0 = static_cast<long>(f0);
            const double w1 = fx - f0;
            if (i0 >= 0 && i0 < static_cast<long>(nx)) fn(j * nx + static_cast<std::size_t>(i0), weight * (1 - w1));
            if (i0 + 1 >= 0 && i0 + 1 < static_cast<long>(nx) && w1 > 0)
                fn(j * nx + static_cast<std::size_t>(i0 + 1), weight * w1);
        }
    } else {
        const double weight = pitch / std::abs(dx);
        const double slope = dy / dx;
        for (std::size_t i = 0; i < nx; ++i) {
            const double fy = oy + (static_cast<double>(i) - ox) * slope;
            const double f0 = std::floor(fy);
            const auto j0 = static_cast<long>(f0);
            const double w1 = fy - f0;
            if (j0 >= 0 && j0 < static_cast<long>(ny)) fn(static_cast<std::size_t>(j0) * nx + i, weight * (1 - w1));
            if (j0 + 1 >= 0 && j0 + 1 < static_cast<long>(ny) && w1 > 0)
                fn(static_cast<std::size_t>(j0 + 1) * nx + i, weight * w1);
        }
    }
}

/// Rays per detector pixel, spread evenly across its width. One ray per pixel
/// lets the Joseph weights alias on wires a few voxels thick, so the column
/// sum of a row drifts with angle by a few percent.
inline constexpr int rays_per_pixel = 4;

/// Calls fn(s) for each sub-ray offset of detector column c.
template <typename Fn>
void for_each_subray(const Detector& det, std::size_t c, Fn&& fn) {
    const double s0 = det.s_of(c);
    for (int q = 0; q < rays_per_pixel; ++q)
        fn(s0 + ((q + 0.5) / rays_per_pixel - 0.5) * det.pixel_pitch);
}

/// Linear interpolation weights of detector height z between phantom slices.
struct ZTap {
    long k0 = 0;
    double w1 = 0;
};

inline ZTap z_tap(double z, const Phantom& ph) {
    const double fz = z / ph.pitch + 0.5 * static_cast<double>(ph.nz() - 1);
    const double f0 = std::floor(fz);
    return {static_cast<long>(f0), fz - f0};
}

struct Support {
    bool empty = true;
    double radial = 0;
    double zmin = 0;
    double zmax = 0;
};

inline Support support_of(const Phantom& ph) {
    Support sp;
    const double half = 0.5 * ph.pitch;
    for (std::size_t k = 0; k < ph.nz(); ++k)
        for (std::size_t j = 0; j < ph.ny(); ++j)
            for (std::size_t i = 0; i < ph.nx(); ++i) {
                if (ph.mu(i, j, k) == 0) continue;
                const Vec3 c = ph.voxel_center(i, j, k);
                const double r = std::hypot(std::abs(c.x) + half, std::abs(c.y) + half);
                if (sp.empty) {
                    sp.zmin = c.z - half;
                    sp.zmax = c.z + half;
                }
                sp.empty = false;
                sp.radial = std::max(sp.radial, r);
                sp.zmin = std::min(sp.zmin, c.z - half);
                sp.zmax = std::max(sp.zmax, c.z + half);
            }
    return sp;
}

inline void check_coverage(const Phantom& ph, const Detector& det) {
    require(det.rows > 0 && det.cols > 0, ErrorCode::InvalidArgument, "detector must have pixels");
    require(det.pixel_pitch > 0 && std::isfinite(det.pixel_pitch), ErrorCode::InvalidArgument,
            "pixel pitch must be positive");
    const Support sp = support_of(ph);
    if (sp.empty) return;
    const double half_width = 0.5 * static_cast<double>(det.cols) * det.pixel_pitch;
    const double half_height = 0.5 * static_cast<double>(det.rows) * det.pixel_pitch;
    require(sp.radial <= half_width + 1e-9, ErrorCode::GeometryMismatch,
            "detector width does not cover the phantom support at every angle");
    require(sp.zmin >= -half_height - 1e-9 && sp.zmax <= half_height + 1e-9, ErrorCode::GeometryMismatch,
            "detector height does not cover the phantom z-extent");
}

inline Grid2<double> line_integrals(const Phantom& ph, double angle, const Detector& det, int jobs) {
    Grid2<double> out(det.rows, det.cols, 0.0);
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    const long nz = static_cast<long>(ph.nz());
    parallel_for(det.rows, jobs, [&](std::size_t r) {
        const ZTap tap = z_tap(det.z_of(r), ph);
        auto row = out.row(r);
        for (int side = 0; side < 2; ++side) {
            const long k = tap.k0 + side;
            const double wz = side == 0 ? 1 - tap.w1 : tap.w1;
            if (k < 0 || k >= nz || wz == 0) continue;
            const auto slice = ph.mu.slice(static_cast<std::size_t>(k));
            if (std::all_of(slice.begin(), slice.end(), [](double v) { return v == 0; })) continue;
            for (std::size_t c = 0; c < det.cols; ++c) {
                double acc = 0;
                for_each_subray(det, c, [&](double s) {
                    joseph_walk(ph.nx(), ph.ny(), ph.pitch, s, ca, sa,
                                [&](std::size_t idx, double w) { acc += w * slice[idx]; });
                });
                row[c] += wz * acc / rays_per_pixel;
            }
        }
    });
    return out;
}

inline TransmissionImage to_transmission(Grid2<double> pathlen, double angle, const Detector& det) {
    TransmissionImage img{det, angle, Grid2<double>(det.rows, det.cols), std::nullopt};
    auto t = img.T.values();
    const auto p = pathlen.values();
    for (std::size_t i = 0; i < p.size(); ++i) t[i] = std::exp(-p[i]);
    img.pathlen = std::move(pathlen);
    return img;
}

}  // namespace detail

/// Parallel-beam Beer-Lambert projection of the phantom with the sample
/// rotated by `angle` radians about z. pathlen holds the Joseph line
/// integrals averaged over the sub-rays of each pixel, T = exp(-pathlen).
inline TransmissionImage project(const Phantom& ph, double angle, const Detector& det, int jobs = 1) {
    detail::check_coverage(ph, det);
    return detail::to_transmission(detail::line_integrals(ph, angle, det, jobs), angle, det);
}

/// Exact transpose of the line-integral operator used by project(): for any
/// phantom x and detector image y, <pathlen(x), y> == <x, backproject(y)>.
inline Phantom backproject_adjoint(const Grid2<double>& values, double angle, const Detector& det,
                                   const GridSpec& grid) {
    require(values.rows() == det.rows && values.cols() == det.cols, ErrorCode::GeometryMismatch,
            "detector image shape does not match detector");
    Phantom ph = detail::empty_grid(grid.nx, grid.ny, grid.nz, grid.pitch);
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    const long nz = static_cast<long>(grid.nz);
    for (std::size_t r = 0; r < det.rows; ++r) {
        const detail::ZTap tap = detail::z_tap(det.z_of(r), ph);
        for (int side = 0; side < 2; ++side) {
            const long k = tap.k0 + side;
            const double wz = side == 0 ? 1 - tap.w1 : tap.w1;
            if (k < 0 || k >= nz || wz == 0) continue;
            auto slice = ph.mu.slice(static_cast<std::size_t>(k));
            for (std::size_t c = 0; c < det.cols; ++c) {
                const double y = wz * values(r, c) / detail::rays_per_pixel;
                detail::for_each_subray(det, c, [&](double s) {
                    detail::joseph_walk(grid.nx, grid.ny, grid.pitch, s, ca, sa,
                                        [&](std::size_t idx, double w) { slice[idx] += w * y; });
                });
            }
        }
    }
    return ph;
}

/// Gaussian blur of T with the given full width at half maximum (mm).
/// Edges replicate the border pixel; the result is clamped to [0, 1] and the
/// line integrals are dropped since they no longer match T.
inline TransmissionImage apply_psf(const TransmissionImage& img, double fwhm_mm) {
    require(fwhm_mm >= 0 && std::isfinite(fwhm_mm), ErrorCode::InvalidArgument, "fwhm must be >= 0");
    TransmissionImage out{img.detector, img.angle, img.T, std::nullopt};
    if (fwhm_mm == 0) {
        out.pathlen = img.pathlen;
        return out;
    }
    const double sigma = fwhm_mm / (2 * std::sqrt(2 * std::numbers::ln2)) / img.detector.pixel_pitch;
    const auto radius = static_cast<long>(std::ceil(4 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double norm = 0;
    for (long i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        norm += v;
    }
    for (auto& v : kernel) v /= norm;

    const long rows = static_cast<long>(img.rows());
    const long cols = static_cast<long>(img.cols());
    Grid2<double> tmp(img.rows(), img.cols());
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) {
            double acc = 0;
            for (long i = -radius; i <= radius; ++i)
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       img.T(static_cast<std::size_t>(r), static_cast<std::size_t>(std::clamp(c + i, 0L, cols - 1)));
            tmp(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
        }
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) {
            double acc = 0;
            for (long i = -radius; i <= radius; ++i)
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       tmp(static_cast<std::size_t>(std::clamp(r + i, 0L, rows - 1)), static_cast<std::size_t>(c));
            out.T(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = std::clamp(acc, 0.0, 1.0);
        }
    return out;
}

}  // namespace quopt
