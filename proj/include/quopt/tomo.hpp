#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "quopt/demod.hpp"
#include "quopt/error.hpp"
#include "quopt/fft.hpp"
#include "quopt/grid.hpp"
#include "quopt/parallel.hpp"

namespace quopt {

enum class OpacityMode { log, linear };
enum class Filter { ramp, shepp_logan, hann };

constexpr std::string_view to_string(OpacityMode m) { return m == OpacityMode::log ? "log" : "linear"; }
constexpr std::string_view to_string(Filter f) {
    switch (f) {
        case Filter::ramp: return "ramp";
        case Filter::shepp_logan: return "shepp-logan";
        case Filter::hann: return "hann";
    }
    return "ramp";
}

/// Visibility of the empty scene: one value for the whole field or one per pixel.
using VisibilityReference = std::variant<double, Grid2<double>>;

struct PreprocessOptions {
    OpacityMode mode = OpacityMode::log;
    std::optional<VisibilityReference> v_ref;
    std::optional<double> fov_radius_px;  // nullopt keeps every column
    double cor_offset = 0;                // rotation axis column minus central column
    double epsilon = 1e-4;                // floor of the normalized transmission
    // Ratio of the log opacity to the line integral: 1/2 when the fringe
    // visibility follows the transmitted amplitude, 1 for intensity.
    double pathlen_fraction = 0.5;
};

/// Angle-indexed opacity images ready for sinogram assembly.
struct ProjectionSet {
    std::vector<double> angles;
    std::vector<Grid2<double>> images;
    OpacityMode mode = OpacityMode::log;
    std::optional<double> fov_radius_px;
    double cor_offset = 0;
    double pixel_pitch = 1.0;
    double pathlen_fraction = 0.5;

    [[nodiscard]] std::size_t rows() const noexcept { return images.empty() ? 0 : images.front().rows(); }
    [[nodiscard]] std::size_t cols() const noexcept { return images.empty() ? 0 : images.front().cols(); }
};

inline void validate(const ProjectionSet& ps) {
    require(ps.angles.size() == ps.images.size(), ErrorCode::ConfigMismatch, "one image per angle required");
    for (std::size_t a = 0; a < ps.images.size(); ++a) {
        require(ps.images[a].rows() == ps.rows() && ps.images[a].cols() == ps.cols(), ErrorCode::ConfigMismatch,
                "projection images differ in size");
        if (a > 0)
            require(ps.angles[a] > ps.angles[a - 1], ErrorCode::InvalidArgument, "angles must be strictly increasing");
    }
}

namespace detail {

/// out(c) = in(c + shift), linear interpolation, zero outside.
inline void shift_row(std::span<const double> in, std::span<double> out, double shift) {
    const long n = static_cast<long>(in.size());
    const double f0 = std::floor(shift);
    const long whole = static_cast<long>(f0);
    const double frac = shift - f0;
    for (long c = 0; c < n; ++c) {
        const long a = c + whole;
        const double va = (a >= 0 && a < n) ? in[static_cast<std::size_t>(a)] : 0.0;
        const double vb = (a + 1 >= 0 && a + 1 < n) ? in[static_cast<std::size_t>(a + 1)] : 0.0;
        out[static_cast<std::size_t>(c)] = frac == 0 ? va : (1 - frac) * va + frac * vb;
    }
}

inline void apply_fov(Grid2<double>& img, double radius_px) {
    const double center = 0.5 * static_cast<double>(img.cols() - 1);
    for (std::size_t r = 0; r < img.rows(); ++r)
        for (std::size_t c = 0; c < img.cols(); ++c)
            if (std::abs(static_cast<double>(c) - center) > radius_px) img(r, c) = 0;
}

}  // namespace detail

/// Shifts every image so column (cols-1)/2 + offset lands on the central column.
inline ProjectionSet with_cor(ProjectionSet ps, double offset) {
    for (auto& img : ps.images) {
        Grid2<double> shifted(img.rows(), img.cols());
        for (std::size_t r = 0; r < img.rows(); ++r) detail::shift_row(img.row(r), shifted.row(r), offset);
        img = std::move(shifted);
        if (ps.fov_radius_px) detail::apply_fov(img, *ps.fov_radius_px);
    }
    ps.cor_offset += offset;
    return ps;
}

/// Normalizes visibility to transmission, converts to opacity (-ln t or 1 - t),
/// recentres on the rotation axis and zeroes columns outside the field of view.
inline ProjectionSet preprocess(std::span<const VisibilityImage> vis, const PreprocessOptions& opts,
                                double pixel_pitch = 1.0) {
    if (opts.mode == OpacityMode::log && !opts.v_ref)
        fail(ErrorCode::MissingReference, "log opacity needs a visibility reference");
    require(opts.epsilon > 0 && opts.epsilon < 1, ErrorCode::InvalidArgument, "epsilon must be in (0, 1)");
    require(pixel_pitch > 0, ErrorCode::InvalidArgument, "pixel pitch must be positive");
    ProjectionSet ps;
    ps.mode = opts.mode;
    ps.fov_radius_px = opts.fov_radius_px;
    ps.pixel_pitch = pixel_pitch;
    ps.pathlen_fraction = opts.pathlen_fraction;
    if (vis.empty()) return ps;

    const std::size_t rows = vis.front().rows;
    const std::size_t cols = vis.front().cols;
    if (opts.v_ref) {
        if (const auto* scalar = std::get_if<double>(&*opts.v_ref)) {
            require(*scalar > 0, ErrorCode::InvalidArgument, "visibility reference must be positive");
        } else {
            const auto& map = std::get<Grid2<double>>(*opts.v_ref);
            require(map.rows() == rows && map.cols() == cols, ErrorCode::ConfigMismatch,
                    "reference visibility map has the wrong shape");
            for (double v : map.values())
                require(v > 0, ErrorCode::InvalidArgument, "visibility reference must be positive");
        }
    }
    const auto reference = [&](std::size_t r, std::size_t c) {
        if (!opts.v_ref) return 1.0;
        if (const auto* scalar = std::get_if<double>(&*opts.v_ref)) return *scalar;
        return std::get<Grid2<double>>(*opts.v_ref)(r, c);
    };

    for (const auto& v : vis) {
        require(v.rows == rows && v.cols == cols, ErrorCode::ConfigMismatch, "visibility images differ in size");
        Grid2<double> opacity(rows, cols);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const double t = std::clamp(v.visibility(r, c) / reference(r, c), opts.epsilon, 1.0);
                opacity(r, c) = opts.mode == OpacityMode::log ? -std::log(t) : 1.0 - t;
            }
        ps.angles.push_back(v.angle);
        ps.images.push_back(std::move(opacity));
    }
    validate(ps);
    return with_cor(std::move(ps), opts.cor_offset);
}

namespace detail {

/// Column of the mass centre of each projection.
inline std::vector<std::pair<double, double>> mass_centres(const ProjectionSet& ps) {
    std::vector<std::pair<double, double>> out;  // (centre column, mass)
    for (const auto& img : ps.images) {
        double mass = 0;
        double moment = 0;
        for (std::size_t r = 0; r < img.rows(); ++r)
            for (std::size_t c = 0; c < img.cols(); ++c) {
                mass += img(r, c);
                moment += static_cast<double>(c) * img(r, c);
            }
        out.emplace_back(mass != 0 ? moment / mass : 0.0, mass);
    }
    return out;
}

/// Least-squares fit of centre(theta) = a + b cos(theta) + c sin(theta); returns a.
inline double sinusoid_offset(std::span<const double> angles, std::span<const double> centres) {
    double m[3][4] = {};
    for (std::size_t i = 0; i < angles.size(); ++i) {
        const double basis[3] = {1.0, std::cos(angles[i]), std::sin(angles[i])};
        for (int p = 0; p < 3; ++p) {
            for (int q = 0; q < 3; ++q) m[p][q] += basis[p] * basis[q];
            m[p][3] += basis[p] * centres[i];
        }
    }
    // Gaussian elimination with partial pivoting.
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
        require(std::abs(m[pivot][col]) > 1e-12, ErrorCode::CorUndetermined, "singular centre-of-mass fit");
        std::swap(m[col], m[pivot]);
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double f = m[r][col] / m[col][col];
            for (int q = col; q < 4; ++q) m[r][q] -= f * m[col][q];
        }
    }
    return m[0][3] / m[0][0];
}

/// Offset minimizing the L2 distance between image a and the mirror of image b
/// about column centre + offset; sub-pixel by a parabola through the best
/// half-pixel sample and its neighbours.
inline double mirror_offset(const Grid2<double>& a, const Grid2<double>& b) {
    const long cols = static_cast<long>(a.cols());
    const long reach = cols / 4;
    const auto cost = [&](long twice_offset) {
        // Mirror about (cols-1)/2 + twice_offset/2 maps c to (cols-1) + twice_offset - c.
        double acc = 0;
        for (std::size_t r = 0; r < a.rows(); ++r)
            for (long c = 0; c < cols; ++c) {
                const long m = cols - 1 + twice_offset - c;
                const double vb = (m >= 0 && m < cols) ? b(r, static_cast<std::size_t>(m)) : 0.0;
                const double d = a(r, static_cast<std::size_t>(c)) - vb;
                acc += d * d;
            }
        return acc;
    };
    long best = 0;
    double best_cost = cost(0);
    std::vector<double> costs(static_cast<std::size_t>(4 * reach + 1));
    for (long d = -2 * reach; d <= 2 * reach; ++d) {
        const double v = cost(d);
        costs[static_cast<std::size_t>(d + 2 * reach)] = v;
        if (v < best_cost) {
            best_cost = v;
            best = d;
        }
    }
    double refined = static_cast<double>(best);
    if (best > -2 * reach && best < 2 * reach) {
        const double l = costs[static_cast<std::size_t>(best - 1 + 2 * reach)];
        const double c = costs[static_cast<std::size_t>(best + 2 * reach)];
        const double r = costs[static_cast<std::size_t>(best + 1 + 2 * reach)];
        const double denom = l - 2 * c + r;
        if (denom > 0) refined += 0.5 * (l - r) / denom;
    }
    return 0.5 * refined;
}

}  // namespace detail

/// Column offset of the rotation axis from the central column.
///
/// When some projection has a partner within 0.1 degree of the opposite
/// direction, the mirror-matching estimate over all such pairs is used;
/// otherwise (half-turn data) the projection mass centres are fitted with a
/// sinusoid whose constant term is the axis position.
inline double estimate_cor(const ProjectionSet& ps) {
    validate(ps);
    require(ps.images.size() >= 3, ErrorCode::InsufficientAngularRange, "need at least three projections");
    const double span = ps.angles.back() - ps.angles.front();
    require(span >= 170.0 * std::numbers::pi / 180.0, ErrorCode::InsufficientAngularRange,
            "angles must span at least 170 degrees");

    const auto centres = detail::mass_centres(ps);
    double max_mass = 0;
    for (const auto& [c, m] : centres) max_mass = std::max(max_mass, std::abs(m));
    require(max_mass > 1e-9, ErrorCode::CorUndetermined, "projections are featureless");

    constexpr double pair_tolerance = 0.1 * std::numbers::pi / 180.0;
    double pair_sum = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < ps.angles.size(); ++i) {
        const auto partner = std::lower_bound(ps.angles.begin(), ps.angles.end(), ps.angles[i] + std::numbers::pi - pair_tolerance);
        if (partner == ps.angles.end() || std::abs(*partner - ps.angles[i] - std::numbers::pi) > pair_tolerance) continue;
        const std::size_t j = static_cast<std::size_t>(partner - ps.angles.begin());
        if (std::abs(centres[i].second) < 1e-9 * max_mass) continue;
        pair_sum += detail::mirror_offset(ps.images[i], ps.images[j]);
        ++pairs;
    }
    if (pairs > 0) return pair_sum / static_cast<double>(pairs);

    std::vector<double> angles;
    std::vector<double> cols;
    for (std::size_t i = 0; i < centres.size(); ++i) {
        if (std::abs(centres[i].second) < 1e-6 * max_mass) continue;
        angles.push_back(ps.angles[i]);
        cols.push_back(centres[i].first);
    }
    require(angles.size() >= 3, ErrorCode::CorUndetermined, "too few projections carry signal");
    return detail::sinusoid_offset(angles, cols) - 0.5 * static_cast<double>(ps.cols() - 1);
}

/// One detector row across all angles.
struct Sinogram {
    std::size_t row = 0;
    std::vector<double> angles;
    Grid2<double> values;  // angles x cols
};

inline std::vector<Sinogram> build_sinograms(const ProjectionSet& ps) {
    validate(ps);
    std::vector<Sinogram> out;
    if (ps.images.empty()) return out;
    out.reserve(ps.rows());
    for (std::size_t r = 0; r < ps.rows(); ++r) {
        Sinogram s{r, ps.angles, Grid2<double>(ps.angles.size(), ps.cols())};
        for (std::size_t a = 0; a < ps.angles.size(); ++a) {
            const auto src = ps.images[a].row(r);
            std::copy(src.begin(), src.end(), s.values.row(a).begin());
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// Frequency response of the band-limited ramp filter (sampled from its
/// spatial-domain kernel) times the apodization window, for padded length n.
inline std::vector<double> ramp_filter_response(std::size_t n, Filter filter) {
    std::vector<double> kernel(n, 0.0);
    kernel[0] = 0.25;
    for (std::size_t i = 1; i < n / 2; i += 2) {
        const double v = -1.0 / (std::numbers::pi * std::numbers::pi * static_cast<double>(i * i));
        kernel[i] = v;
        kernel[n - i] = v;
    }
    if ((n / 2) % 2 == 1) kernel[n / 2] = -1.0 / (std::numbers::pi * std::numbers::pi * static_cast<double>(n * n / 4));
    const fft::RealTransform transform(n);
    fft::AlignedBuffer<double> input(n);
    std::copy(kernel.begin(), kernel.end(), input.data());
    fft::AlignedBuffer<std::complex<double>> spectrum(transform.bins());
    transform.forward(input.span(), spectrum.span());
    std::vector<double> response(transform.bins());
    for (std::size_t f = 0; f < response.size(); ++f) {
        const double freq = static_cast<double>(f) / static_cast<double>(n);  // cycles per sample, [0, 0.5]
        double window = 1.0;
        if (filter == Filter::shepp_logan && f > 0) {
            const double w = std::numbers::pi * freq;
            window = std::sin(w) / w;
        } else if (filter == Filter::hann) {
            window = 0.5 * (1 + std::cos(2 * std::numbers::pi * freq));
        }
        response[f] = spectrum[f].real() * window;
    }
    return response;
}

/// Smallest power of two at least twice `cols`.
inline std::size_t padded_length(std::size_t cols) { return std::bit_ceil(std::max<std::size_t>(2 * cols, 2)); }

/// Ramp-filters each angle's row of the sinogram.
inline Grid2<double> filter_sinogram(const Grid2<double>& sino, Filter filter) {
    const std::size_t cols = sino.cols();
    const std::size_t n = padded_length(cols);
    const auto response = ramp_filter_response(n, filter);
    const fft::RealTransform transform(n);
    Grid2<double> out(sino.rows(), cols);
    fft::AlignedBuffer<double> buffer(n);
    fft::AlignedBuffer<std::complex<double>> spectrum(transform.bins());
    for (std::size_t a = 0; a < sino.rows(); ++a) {
        std::fill(buffer.data(), buffer.data() + n, 0.0);
        std::copy(sino.row(a).begin(), sino.row(a).end(), buffer.data());
        transform.forward(buffer.span(), spectrum.span());
        for (std::size_t f = 0; f < spectrum.size(); ++f) spectrum[f] *= response[f] / static_cast<double>(n);
        transform.inverse(spectrum.span(), buffer.span());
        std::copy(buffer.data(), buffer.data() + cols, out.row(a).begin());
    }
    return out;
}

/// Pixel-driven back-projection with linear detector interpolation, scaled by
/// pi / angles. Output pixel (j, i) sits at x = i - (size-1)/2, y = j - (size-1)/2
/// in detector pixels; pixels outside the inscribed circle are zero.
inline Grid2<double> backproject_slice(const Grid2<double>& sino, std::span<const double> angles, std::size_t out_size) {
    require(sino.rows() == angles.size(), ErrorCode::ConfigMismatch, "sinogram rows must match the angle list");
    Grid2<double> out(out_size, out_size, 0.0);
    if (angles.empty()) return out;
    const long cols = static_cast<long>(sino.cols());
    const double det_centre = 0.5 * static_cast<double>(cols - 1);
    const double centre = 0.5 * static_cast<double>(out_size - 1);
    const double radius2 = 0.25 * static_cast<double>(out_size * out_size);
    std::vector<double> cs(angles.size());
    std::vector<double> sn(angles.size());
    for (std::size_t a = 0; a < angles.size(); ++a) {
        cs[a] = std::cos(angles[a]);
        sn[a] = std::sin(angles[a]);
    }
    for (std::size_t j = 0; j < out_size; ++j) {
        const double y = static_cast<double>(j) - centre;
        for (std::size_t i = 0; i < out_size; ++i) {
            const double x = static_cast<double>(i) - centre;
            if (x * x + y * y > radius2) continue;
            double acc = 0;
            for (std::size_t a = 0; a < angles.size(); ++a) {
                const double pos = x * cs[a] - y * sn[a] + det_centre;
                const double f0 = std::floor(pos);
                const long c0 = static_cast<long>(f0);
                const double w = pos - f0;
                const auto row = sino.row(a);
                if (c0 >= 0 && c0 < cols) acc += (1 - w) * row[static_cast<std::size_t>(c0)];
                if (c0 + 1 >= 0 && c0 + 1 < cols) acc += w * row[static_cast<std::size_t>(c0 + 1)];
            }
            out(j, i) = acc;
        }
    }
    const double scale = std::numbers::pi / static_cast<double>(angles.size());
    for (auto& v : out.values()) v *= scale;
    return out;
}

/// Filtered back-projection of half-turn parallel-beam data, in units of the
/// sinogram per detector pixel.
inline Grid2<double> fbp_slice(const Sinogram& s, Filter filter, std::size_t out_size) {
    if (s.angles.size() < 2) fail(ErrorCode::TooFewAngles, "filtered back-projection needs at least two angles");
    require(out_size >= 1 && out_size <= s.values.cols(), ErrorCode::InvalidArgument,
            "output size must be between 1 and the detector width");
    return backproject_slice(filter_sinogram(s.values, filter), s.angles, out_size);
}

/// Reconstructed attenuation volume; voxel (i, j, k) matches phantom voxel
/// (i, j, k) when the detector was matched to the phantom grid.
struct Volume {
    Grid3<double> data;
    double pitch = 1.0;
    Filter filter = Filter::ramp;
    OpacityMode mode = OpacityMode::log;
    double cor_offset = 0;
};

/// FBP of every detector row. In log mode the values are calibrated to mm^-1
/// (divided by the pixel pitch and by the opacity-to-line-integral fraction).
inline Volume reconstruct_volume(const ProjectionSet& ps, Filter filter = Filter::ramp,
                                 std::optional<std::size_t> out_size = std::nullopt, int jobs = 1) {
    validate(ps);
    const std::size_t size = out_size.value_or(ps.cols());
    Volume vol{Grid3<double>(size, size, ps.rows(), 0.0), ps.pixel_pitch, filter, ps.mode, ps.cor_offset};
    if (ps.images.empty()) return vol;
    double scale = 1.0 / ps.pixel_pitch;
    if (ps.mode == OpacityMode::log) scale /= ps.pathlen_fraction;
    const auto sinograms = build_sinograms(ps);
    parallel_for(sinograms.size(), jobs, [&](std::size_t r) {
        const Grid2<double> slice = fbp_slice(sinograms[r], filter, size);
        auto plane = vol.data.slice(r);
        const auto src = slice.values();
        for (std::size_t i = 0; i < src.size(); ++i) plane[i] = scale * src[i];
    });
    return vol;
}

}  // namespace quopt
