#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "quopt/error.hpp"
#include "quopt/grid.hpp"
#include "quopt/parallel.hpp"

namespace quopt {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    [[nodiscard]] double dot(Vec3 o) const { return x * o.x + y * o.y + z * o.z; }
    [[nodiscard]] double norm() const { return std::sqrt(dot(*this)); }
    bool operator==(const Vec3&) const = default;
};

/// Voxel attenuation map (mm^-1) centered on the z rotation axis.
///
/// Voxel (i, j, k) has its center at ((i - (nx-1)/2) * pitch, (j - (ny-1)/2) * pitch,
/// (k - (nz-1)/2) * pitch) in mm.
struct Phantom {
    Grid3<double> mu;
    double pitch = 1.0;

    [[nodiscard]] std::size_t nx() const noexcept { return mu.nx(); }
    [[nodiscard]] std::size_t ny() const noexcept { return mu.ny(); }
    [[nodiscard]] std::size_t nz() const noexcept { return mu.nz(); }

    [[nodiscard]] Vec3 voxel_center(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return {(static_cast<double>(i) - 0.5 * static_cast<double>(nx() - 1)) * pitch,
                (static_cast<double>(j) - 0.5 * static_cast<double>(ny() - 1)) * pitch,
                (static_cast<double>(k) - 0.5 * static_cast<double>(nz() - 1)) * pitch};
    }

    /// Radius (mm) of the cylinder every nonzero voxel must lie inside.
    [[nodiscard]] double support_radius() const noexcept {
        return (0.5 * static_cast<double>(std::min(nx(), ny())) - 2.0) * pitch;
    }
};

/// Throws unless pitch > 0, all mu >= 0 and the nonzero support sits inside
/// the inscribed cylinder.
inline void validate(const Phantom& ph) {
    require(ph.pitch > 0 && std::isfinite(ph.pitch), ErrorCode::InvalidArgument, "phantom pitch must be positive");
    const double limit = ph.support_radius();
    for (std::size_t k = 0; k < ph.nz(); ++k) {
        for (std::size_t j = 0; j < ph.ny(); ++j) {
            for (std::size_t i = 0; i < ph.nx(); ++i) {
                const double v = ph.mu(i, j, k);
                require(std::isfinite(v) && v >= 0, ErrorCode::InvalidArgument, "attenuation must be finite and >= 0");
                if (v == 0) continue;
                const Vec3 c = ph.voxel_center(i, j, k);
                require(std::hypot(c.x, c.y) < limit, ErrorCode::ShapeOutOfBounds,
                        "nonzero voxel outside the inscribed support cylinder");
            }
        }
    }
}

enum class ShapeKind { sphere, cylinder, helix_wire, disk_slab };

/// Analytic solid with closed-form geometry.
///
///  - sphere:     `center`, `radius`.
///  - cylinder:   flat-ended segment from `center` to `end`, `radius`.
///  - helix_wire: tube of radius `wire_radius` around a helix whose axis is
///                parallel to z through `center` (midpoint of the helix);
///                `radius` is the helix radius, `helix_pitch` the rise per turn,
///                `turns` the number of turns and `phase` the start angle.
///  - disk_slab:  z-aligned disk of `radius` and thickness 2 * `half_height`.
struct AnalyticShape {
    ShapeKind kind = ShapeKind::sphere;
    Vec3 center{};
    Vec3 end{};
    double radius = 0;
    double half_height = 0;
    double helix_pitch = 0;
    double wire_radius = 0;
    double turns = 0;
    double phase = 0;
    double mu0 = 1.0;

    static AnalyticShape sphere(Vec3 c, double r, double mu0) {
        AnalyticShape s;
        s.kind = ShapeKind::sphere;
        s.center = c;
        s.radius = r;
        s.mu0 = mu0;
        return s;
    }
    static AnalyticShape cylinder(Vec3 a, Vec3 b, double r, double mu0) {
        AnalyticShape s;
        s.kind = ShapeKind::cylinder;
        s.center = a;
        s.end = b;
        s.radius = r;
        s.mu0 = mu0;
        return s;
    }
    static AnalyticShape helix(Vec3 c, double helix_radius, double helix_pitch, double turns, double wire_radius,
                               double phase, double mu0) {
        AnalyticShape s;
        s.kind = ShapeKind::helix_wire;
        s.center = c;
        s.radius = helix_radius;
        s.helix_pitch = helix_pitch;
        s.turns = turns;
        s.wire_radius = wire_radius;
        s.phase = phase;
        s.mu0 = mu0;
        return s;
    }
    static AnalyticShape disk(Vec3 c, double r, double half_height, double mu0) {
        AnalyticShape s;
        s.kind = ShapeKind::disk_slab;
        s.center = c;
        s.radius = r;
        s.half_height = half_height;
        s.mu0 = mu0;
        return s;
    }
};

namespace detail {

struct Extent {
    double radial = 0;  // max distance from the z axis
    double zmin = 0;
    double zmax = 0;
    Vec3 lo{};
    Vec3 hi{};
};

inline Vec3 helix_point(const AnalyticShape& s, double u) {
    const double z0 = s.center.z - 0.5 * s.helix_pitch * s.turns;
    return {s.center.x + s.radius * std::cos(u + s.phase), s.center.y + s.radius * std::sin(u + s.phase),
            z0 + s.helix_pitch * u / (2 * std::numbers::pi)};
}

inline Extent extent(const AnalyticShape& s) {
    Extent e;
    switch (s.kind) {
        case ShapeKind::sphere:
            e.radial = std::hypot(s.center.x, s.center.y) + s.radius;
            e.lo = s.center - Vec3{s.radius, s.radius, s.radius};
            e.hi = s.center + Vec3{s.radius, s.radius, s.radius};
            break;
        case ShapeKind::cylinder: {
            e.radial = std::max(std::hypot(s.center.x, s.center.y), std::hypot(s.end.x, s.end.y)) + s.radius;
            // Flat end caps: along unit axis u the box half-width is r * sqrt(1 - u_i^2).
            const Vec3 axis = s.end - s.center;
            const double len = axis.norm();
            const auto reach = [&](double u) { return s.radius * std::sqrt(std::max(0.0, 1 - u * u / (len * len))); };
            const Vec3 r{reach(axis.x), reach(axis.y), reach(axis.z)};
            e.lo = Vec3{std::min(s.center.x, s.end.x), std::min(s.center.y, s.end.y), std::min(s.center.z, s.end.z)} - r;
            e.hi = Vec3{std::max(s.center.x, s.end.x), std::max(s.center.y, s.end.y), std::max(s.center.z, s.end.z)} + r;
            break;
        }
        case ShapeKind::helix_wire: {
            const double reach = s.radius + s.wire_radius;
            e.radial = std::hypot(s.center.x, s.center.y) + reach;
            const double half = 0.5 * s.helix_pitch * s.turns + s.wire_radius;
            e.lo = s.center - Vec3{reach, reach, half};
            e.hi = s.center + Vec3{reach, reach, half};
            break;
        }
        case ShapeKind::disk_slab:
            e.radial = std::hypot(s.center.x, s.center.y) + s.radius;
            e.lo = s.center - Vec3{s.radius, s.radius, s.half_height};
            e.hi = s.center + Vec3{s.radius, s.radius, s.half_height};
            break;
    }
    e.zmin = e.lo.z;
    e.zmax = e.hi.z;
    return e;
}

/// Distance from p to the helix centre line.
inline double helix_distance(const AnalyticShape& s, Vec3 p) {
    const double umax = 2 * std::numbers::pi * s.turns;
    const double z0 = s.center.z - 0.5 * s.helix_pitch * s.turns;
    const double uz = (p.z - z0) * 2 * std::numbers::pi / s.helix_pitch;
    const auto dist2 = [&](double u) {
        const Vec3 d = p - helix_point(s, std::clamp(u, 0.0, umax));
        return d.dot(d);
    };
    // Coarse scan over one turn either side of the height-matched parameter,
    // then golden-section refinement around the best sample.
    constexpr int samples = 48;
    const double lo = std::clamp(uz - 2 * std::numbers::pi, 0.0, umax);
    const double hi = std::clamp(uz + 2 * std::numbers::pi, 0.0, umax);
    const double step = (hi - lo) / samples;
    double best_u = lo;
    double best = dist2(lo);
    for (int i = 1; i <= samples; ++i) {
        const double u = lo + step * i;
        const double d = dist2(u);
        if (d < best) {
            best = d;
            best_u = u;
        }
    }
    double a = std::max(lo, best_u - step);
    double b = std::min(hi, best_u + step);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    double fc = dist2(c);
    double fd = dist2(d);
    for (int it = 0; it < 40; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = dist2(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = dist2(d);
        }
    }
    return std::sqrt(std::min({best, fc, fd}));
}

inline bool contains(const AnalyticShape& s, Vec3 p) {
    switch (s.kind) {
        case ShapeKind::sphere:
            return (p - s.center).dot(p - s.center) <= s.radius * s.radius;
        case ShapeKind::cylinder: {
            const Vec3 axis = s.end - s.center;
            const double len2 = axis.dot(axis);
            const double t = (p - s.center).dot(axis);
            if (t < 0 || t > len2) return false;
            const Vec3 radial = (p - s.center) - (t / len2) * axis;
            return radial.dot(radial) <= s.radius * s.radius;
        }
        case ShapeKind::helix_wire:
            return helix_distance(s, p) <= s.wire_radius;
        case ShapeKind::disk_slab:
            return std::abs(p.z - s.center.z) <= s.half_height &&
                   std::hypot(p.x - s.center.x, p.y - s.center.y) <= s.radius;
    }
    return false;
}

inline void check_shape(const AnalyticShape& s) {
    const bool ok = [&] {
        switch (s.kind) {
            case ShapeKind::sphere: return s.radius > 0;
            case ShapeKind::cylinder: return s.radius > 0 && (s.end - s.center).norm() > 0;
            case ShapeKind::helix_wire:
                return s.radius >= 0 && s.helix_pitch > 0 && s.turns > 0 && s.wire_radius > 0;
            case ShapeKind::disk_slab: return s.radius > 0 && s.half_height > 0;
        }
        return false;
    }();
    require(ok, ErrorCode::InvalidArgument, "degenerate shape parameters");
    require(std::isfinite(s.mu0) && s.mu0 >= 0, ErrorCode::InvalidArgument, "shape mu0 must be >= 0");
}

inline void check_bounds(const AnalyticShape& s, const Phantom& grid) {
    const Extent e = extent(s);
    const double zlimit = 0.5 * static_cast<double>(grid.nz()) * grid.pitch + 1e-9;
    if (e.radial >= grid.support_radius()) {
        fail(ErrorCode::ShapeOutOfBounds, "shape extends past the inscribed support cylinder (radial extent " +
                                              std::to_string(e.radial) + " mm, limit " +
                                              std::to_string(grid.support_radius()) + " mm)");
    }
    if (e.zmin < -zlimit || e.zmax > zlimit) {
        fail(ErrorCode::ShapeOutOfBounds, "shape extends past the grid along z (z extent " + std::to_string(e.zmin) +
                                              " to " + std::to_string(e.zmax) + " mm, limit +-" +
                                              std::to_string(zlimit) + " mm)");
    }
}

/// Calls fn(i, j, k, covered_samples) for every voxel whose supersampled
/// 2x2x2 footprint may intersect the shape's bounding box.
template <typename Fn>
void for_each_covered_voxel(const AnalyticShape& s, const Phantom& ph, std::size_t k, Fn&& fn) {
    const Extent e = extent(s);
    const double h = ph.pitch;
    const auto index_range = [&](double lo, double hi, std::size_t n) {
        const double c = 0.5 * static_cast<double>(n - 1);
        const auto first = static_cast<long>(std::floor(lo / h + c - 0.5));
        const auto last = static_cast<long>(std::ceil(hi / h + c + 0.5));
        return std::pair{static_cast<std::size_t>(std::max(first, 0L)),
                         static_cast<std::size_t>(std::clamp(last, -1L, static_cast<long>(n) - 1) + 1)};
    };
    const Vec3 ck = ph.voxel_center(0, 0, k);
    if (ck.z + 0.5 * h < e.zmin || ck.z - 0.5 * h > e.zmax) return;
    const auto [i0, i1] = index_range(e.lo.x, e.hi.x, ph.nx());
    const auto [j0, j1] = index_range(e.lo.y, e.hi.y, ph.ny());
    for (std::size_t j = j0; j < j1; ++j) {
        for (std::size_t i = i0; i < i1; ++i) {
            const Vec3 c = ph.voxel_center(i, j, k);
            int covered = 0;
            for (int dz = -1; dz <= 1; dz += 2)
                for (int dy = -1; dy <= 1; dy += 2)
                    for (int dx = -1; dx <= 1; dx += 2)
                        covered += contains(s, c + 0.25 * h * Vec3{double(dx), double(dy), double(dz)}) ? 1 : 0;
            if (covered > 0) fn(i, j, covered);
        }
    }
}

inline Phantom empty_grid(std::size_t nx, std::size_t ny, std::size_t nz, double pitch) {
    require(nx > 0 && ny > 0 && nz > 0, ErrorCode::InvalidArgument, "grid dimensions must be positive");
    require(pitch > 0 && std::isfinite(pitch), ErrorCode::InvalidArgument, "pitch must be positive");
    return Phantom{Grid3<double>(nx, ny, nz, 0.0), pitch};
}

}  // namespace detail

/// Voxelizes the shapes; each voxel gets sum(mu0 * covered fraction) over a
/// 2x2x2 supersampling of its volume.
inline Phantom rasterize(std::span<const AnalyticShape> shapes, std::size_t nx, std::size_t ny, std::size_t nz,
                         double pitch, int jobs = 1) {
    require(!shapes.empty(), ErrorCode::InvalidArgument, "shape list is empty");
    Phantom ph = detail::empty_grid(nx, ny, nz, pitch);
    for (const auto& s : shapes) {
        detail::check_shape(s);
        detail::check_bounds(s, ph);
    }
    parallel_for(nz, jobs, [&](std::size_t k) {
        for (const auto& s : shapes) {
            detail::for_each_covered_voxel(s, ph, k, [&](std::size_t i, std::size_t j, int covered) {
                ph.mu(i, j, k) += s.mu0 * covered / 8.0;
            });
        }
    });
    return ph;
}

/// Same shape rotated by `angle` radians about the z axis.
inline AnalyticShape rotated_about_z(const AnalyticShape& s, double angle) {
    const double c = std::cos(angle);
    const double sn = std::sin(angle);
    const auto rot = [&](Vec3 p) { return Vec3{c * p.x - sn * p.y, sn * p.x + c * p.y, p.z}; };
    AnalyticShape out = s;
    out.center = rot(s.center);
    out.end = rot(s.end);
    out.phase = s.phase + angle;
    return out;
}

struct GridSpec {
    std::size_t nx = 128;
    std::size_t ny = 128;
    std::size_t nz = 128;
    double pitch = 0.05;
};

/// Stick-figure wire pieces scaled to `height_mm`: two legs, a double-helix
/// torso, shoulder bar, arms, neck and a coiled head, with ball joints.
inline std::vector<AnalyticShape> wire_figurine_shapes(double height_mm, double wire_radius_mm, double mu0 = 2.0) {
    const double h = height_mm;
    const double a = wire_radius_mm;
    const double torso_r = 0.06 * h;
    const double hip_z = -0.1 * h;
    const double shoulder_z = 0.25 * h;
    const double torso_turns = 1.5;
    const double head_r = 0.08 * h;
    const double head_turns = 2.0;
    const double head_pitch = std::max(2.4 * a, 0.04 * h);
    // The coil is lowered when needed so the figure spans exactly [-h/2, h/2].
    const double head_z0 = std::min(0.34 * h, 0.5 * h - a - head_turns * head_pitch);
    require(head_z0 >= shoulder_z, ErrorCode::InvalidArgument, "wire radius too large for the figurine height");
    const double foot_z = -0.5 * h + a;

    std::vector<AnalyticShape> parts;
    const auto joint = [&](Vec3 p) { parts.push_back(AnalyticShape::sphere(p, a, mu0)); };
    const auto wire = [&](Vec3 p, Vec3 q) {
        parts.push_back(AnalyticShape::cylinder(p, q, a, mu0));
        joint(p);
        joint(q);
    };

    // Legs from the feet to the bottom ends of the two torso strands.
    wire({-0.18 * h, -0.04 * h, foot_z}, {-torso_r, 0, hip_z});
    wire({0.18 * h, 0.04 * h, foot_z}, {torso_r, 0, hip_z});

    // Twisted torso: two strands half a turn apart.
    const double torso_pitch = (shoulder_z - hip_z) / torso_turns;
    const Vec3 torso_center{0, 0, 0.5 * (hip_z + shoulder_z)};
    parts.push_back(AnalyticShape::helix(torso_center, torso_r, torso_pitch, torso_turns, a, 0.0, mu0));
    parts.push_back(AnalyticShape::helix(torso_center, torso_r, torso_pitch, torso_turns, a, std::numbers::pi, mu0));

    // Shoulder bar, arms, neck.
    wire({-torso_r, 0, shoulder_z}, {torso_r, 0, shoulder_z});
    wire({-torso_r, 0, shoulder_z}, {-0.3 * h, 0.08 * h, 0.05 * h});
    wire({torso_r, 0, shoulder_z}, {0.3 * h, -0.08 * h, 0.05 * h});
    const Vec3 head_start{head_r, 0, head_z0};
    wire({0, 0, shoulder_z}, head_start);

    // Coiled head starting where the neck ends.
    const Vec3 head_center{0, 0, head_z0 + 0.5 * head_pitch * head_turns};
    parts.push_back(AnalyticShape::helix(head_center, head_r, head_pitch, head_turns, a, 0.0, mu0));
    return parts;
}

/// Binary (0 or mu0) wire figurine; a voxel is set when at least half of its
/// supersamples fall inside the union of the wire pieces.
inline Phantom wire_figurine(double height_mm, double wire_radius_mm, const GridSpec& grid, double mu0 = 2.0,
                             int jobs = 1) {
    require(height_mm > 0, ErrorCode::InvalidArgument, "figurine height must be positive");
    require(wire_radius_mm >= 2 * grid.pitch, ErrorCode::InvalidArgument,
            "wire radius must be at least two voxel pitches");
    require(mu0 > 0, ErrorCode::InvalidArgument, "mu0 must be positive");
    const auto parts = wire_figurine_shapes(height_mm, wire_radius_mm, mu0);
    Phantom ph = detail::empty_grid(grid.nx, grid.ny, grid.nz, grid.pitch);
    for (const auto& s : parts) {
        detail::check_shape(s);
        detail::check_bounds(s, ph);
    }
    parallel_for(grid.nz, jobs, [&](std::size_t k) {
        // Union over parts: per-voxel bitmask of covered supersamples.
        std::vector<std::uint8_t> mask(grid.nx * grid.ny, 0);
        for (const auto& s : parts) {
            const double h = ph.pitch;
            detail::for_each_covered_voxel(s, ph, k, [&](std::size_t i, std::size_t j, int) {
                const Vec3 c = ph.voxel_center(i, j, k);
                int bit = 0;
                for (int dz = -1; dz <= 1; dz += 2)
                    for (int dy = -1; dy <= 1; dy += 2)
                        for (int dx = -1; dx <= 1; dx += 2, ++bit)
                            if (detail::contains(s, c + 0.25 * h * Vec3{double(dx), double(dy), double(dz)}))
                                mask[j * grid.nx + i] |= static_cast<std::uint8_t>(1u << bit);
            });
        }
        for (std::size_t j = 0; j < grid.ny; ++j)
            for (std::size_t i = 0; i < grid.nx; ++i)
                if (std::popcount(mask[j * grid.nx + i]) >= 4) ph.mu(i, j, k) = mu0;
    });
    return ph;
}

}  // namespace quopt
