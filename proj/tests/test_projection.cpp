#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "quopt/phantom.hpp"
#include "quopt/projection.hpp"
#include "support.hpp"

using namespace quopt;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Phantom one(const AnalyticShape& s, std::size_t nxy, std::size_t nz, double pitch) {
    const std::vector shapes{s};
    return rasterize(shapes, nxy, nxy, nz, pitch);
}

std::vector<double> flat(const Grid2<double>& g) { return {g.values().begin(), g.values().end()}; }

Grid2<double> pathlen(const Phantom& ph, double angle) {
    return detail::line_integrals(ph, angle, matched_detector(ph), 1);
}

}  // namespace

TEST_CASE("empty phantom is fully transparent") {
    const Phantom ph = detail::empty_grid(16, 16, 8, 0.1);
    for (double a : {0.0, 1.0, 3.0}) {
        const auto img = project(ph, a, matched_detector(ph));
        for (double t : img.T.values()) REQUIRE(t == 1.0);
    }
}

TEST_CASE("disk chord lengths follow 2 mu0 sqrt(r^2 - s^2)") {
    const double r = 2.5, mu0 = 1.3, pitch = 0.025;
    const Phantom ph = one(AnalyticShape::disk({}, r, 2 * pitch, mu0), 256, 8, pitch);
    const Detector det = matched_detector(ph);
    for (double angle : {0.0, 0.3, std::numbers::pi / 4, 2.0}) {
        const auto p = detail::line_integrals(ph, angle, det, 1);
        double worst = 0;
        for (std::size_t c = 0; c < det.cols; ++c) {
            const double s = det.s_of(c);
            if (std::abs(s) >= 0.9 * r) continue;
            const double expected = 2 * mu0 * std::sqrt(r * r - s * s);
            worst = std::max(worst, std::abs(p(4, c) - expected) / expected);
        }
        INFO("angle " << angle);
        CHECK(worst < 0.01);
    }
}

TEST_CASE("central ray through a sphere has the diameter chord") {
    const double r = 0.8, mu0 = 1.5, pitch = 0.05;
    const Phantom ph = one(AnalyticShape::sphere({}, r, mu0), 41, 41, pitch);
    const auto img = project(ph, 0.7, matched_detector(ph));
    REQUIRE(img.pathlen);
    CHECK_THAT((*img.pathlen)(20, 20), WithinRel(2 * r * mu0, 0.02));
    CHECK_THAT(img.T(20, 20), WithinRel(std::exp(-(*img.pathlen)(20, 20)), 1e-12));
}

TEST_CASE("row mass is independent of the angle") {
    const Phantom ph = wire_figurine(2.4, 0.1, GridSpec{64, 64, 64, 0.04});
    const auto ref = pathlen(ph, 0.0);
    for (double angle : {0.2, 0.9, 1.6, 2.7}) {
        const auto p = pathlen(ph, angle);
        for (std::size_t r = 0; r < p.rows(); ++r) {
            double a = 0, b = 0;
            for (std::size_t c = 0; c < p.cols(); ++c) {
                a += ref(r, c);
                b += p(r, c);
            }
            if (a < 1e-6) continue;
            INFO("angle " << angle << " row " << r);
            REQUIRE_THAT(b, WithinRel(a, 0.005));
        }
    }
}

TEST_CASE("half-turn rotation mirrors the projection left to right") {
    const Phantom ph = wire_figurine(2.4, 0.1, GridSpec{64, 64, 64, 0.04});
    for (double angle : {0.0, 0.4, 1.3}) {
        const auto p = pathlen(ph, angle);
        const auto q = pathlen(ph, angle + std::numbers::pi);
        Grid2<double> mirrored(p.rows(), p.cols());
        for (std::size_t r = 0; r < p.rows(); ++r)
            for (std::size_t c = 0; c < p.cols(); ++c) mirrored(r, c) = q(r, p.cols() - 1 - c);
        CHECK(oracle::rel_l2(flat(mirrored), flat(p)) < 1e-3);
    }
}

TEST_CASE("rotating shape parameters equals rotating the stage") {
    const double pitch = 0.04;
    const auto helix = AnalyticShape::helix({0.1, -0.05, 0}, 0.6, 0.5, 2.0, 0.16, 0.2, 1.0);
    const double alpha = 0.5;
    const Phantom orig = one(helix, 64, 40, pitch);
    const Phantom turned = one(rotated_about_z(helix, alpha), 64, 40, pitch);
    for (double theta : {0.0, 0.8}) {
        const auto expected = pathlen(orig, theta + alpha);
        const auto got = pathlen(turned, theta);
        const double err = oracle::rel_l2(flat(got), flat(expected));
        INFO("theta " << theta << " relative L2 " << err);
        CHECK(err < 1e-3);
    }
}

TEST_CASE("shape rotation mismatch shrinks as the grid is refined") {
    const auto helix = AnalyticShape::helix({0.1, -0.05, 0}, 0.6, 0.5, 2.0, 0.16, 0.2, 1.0);
    const double alpha = 0.5;
    std::vector<double> errors;
    for (const double pitch : {0.08, 0.04, 0.02}) {
        const auto n = static_cast<std::size_t>(std::lround(2.56 / pitch));
        const auto nz = static_cast<std::size_t>(std::lround(1.6 / pitch));
        const Phantom orig = one(helix, n, nz, pitch);
        const Phantom turned = one(rotated_about_z(helix, alpha), n, nz, pitch);
        errors.push_back(oracle::rel_l2(flat(pathlen(turned, 0.3)), flat(pathlen(orig, 0.3 + alpha))));
    }
    INFO("errors " << errors[0] << " " << errors[1] << " " << errors[2]);
    CHECK(errors[1] < 0.75 * errors[0]);
    CHECK(errors[2] < 0.75 * errors[1]);
}

TEST_CASE("projection spectrum is a central slice of the object spectrum") {
    const std::size_t n = 256;
    const double pitch = 0.02;
    Phantom ph = detail::empty_grid(n, n, 1, pitch);
    struct Blob { double x, y, sigma, amp; };
    const std::vector<Blob> blobs{{0.3, -0.2, 0.12, 1.0}, {-0.5, 0.4, 0.2, 0.6}, {0.1, 0.6, 0.09, 1.4}};
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 p = ph.voxel_center(i, j, 0);
            double v = 0;
            for (const auto& b : blobs)
                v += b.amp * std::exp(-((p.x - b.x) * (p.x - b.x) + (p.y - b.y) * (p.y - b.y)) / (2 * b.sigma * b.sigma));
            ph.mu(i, j, 0) = v > 1e-13 ? v : 0.0;
        }
    const Detector det{1, n, pitch};
    for (double theta : {0.0, 0.35, 1.2, 2.5}) {
        const auto p = detail::line_integrals(ph, theta, det, 1);
        const double ux = std::cos(theta), uy = -std::sin(theta);
        std::vector<double> slice_re, slice_im, proj_re, proj_im;
        for (std::size_t m = 0; m <= n / 4; ++m) {
            const double w = static_cast<double>(m) / (static_cast<double>(n) * pitch);
            std::complex<double> P = 0;
            for (std::size_t c = 0; c < n; ++c) P += p(0, c) * std::polar(pitch, -2 * std::numbers::pi * w * det.s_of(c));
            std::complex<double> F = 0;
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t i = 0; i < n; ++i) {
                    const double v = ph.mu(i, j, 0);
                    if (v == 0) continue;
                    const Vec3 q = ph.voxel_center(i, j, 0);
                    F += v * std::polar(pitch * pitch, -2 * std::numbers::pi * w * (ux * q.x + uy * q.y));
                }
            proj_re.push_back(P.real());
            proj_im.push_back(P.imag());
            slice_re.push_back(F.real());
            slice_im.push_back(F.imag());
        }
        proj_re.insert(proj_re.end(), proj_im.begin(), proj_im.end());
        slice_re.insert(slice_re.end(), slice_im.begin(), slice_im.end());
        const double err = oracle::rel_l2(proj_re, slice_re);
        INFO("theta " << theta << " relative L2 " << err);
        CHECK(err < 1e-2);
    }
}

TEST_CASE("backprojection is the adjoint of projection") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t nxy = 12 + 2 * static_cast<std::size_t>(trial), nz = 5 + static_cast<std::size_t>(trial);
        const double pitch = 0.1;
        Phantom x = detail::empty_grid(nxy, nxy, nz, pitch);
        for (std::size_t k = 0; k < nz; ++k)
            for (std::size_t j = 0; j < nxy; ++j)
                for (std::size_t i = 0; i < nxy; ++i) {
                    const Vec3 c = x.voxel_center(i, j, k);
                    if (std::hypot(c.x, c.y) < x.support_radius()) x.mu(i, j, k) = u(rng);
                }
        // Detector rows off the voxel centres exercise the z interpolation.
        const Detector det{nz + 2, nxy + 3, pitch * 0.9};
        const double angle = u(rng) * 2 * std::numbers::pi;
        Grid2<double> y(det.rows, det.cols);
        for (auto& v : y.values()) v = u(rng) - 0.5;
        const auto px = detail::line_integrals(x, angle, det, 1);
        const Phantom bty = backproject_adjoint(y, angle, det, GridSpec{nxy, nxy, nz, pitch});
        double lhs = 0, rhs = 0;
        for (std::size_t i = 0; i < y.values().size(); ++i) lhs += px.values()[i] * y.values()[i];
        for (std::size_t i = 0; i < x.mu.values().size(); ++i) rhs += x.mu.values()[i] * bty.mu.values()[i];
        INFO("trial " << trial);
        CHECK_THAT(lhs, WithinRel(rhs, 1e-3));
    }
}

TEST_CASE("detector narrower than the support is a geometry mismatch") {
    const Phantom ph = one(AnalyticShape::sphere({}, 0.5, 1.0), 32, 32, 0.05);
    CHECK_THROWS_AS(project(ph, 0.0, Detector{32, 10, 0.05}), Error);
    CHECK_NOTHROW(project(ph, 0.0, Detector{32, 32, 0.05}));
}

TEST_CASE("zero-width psf is the identity") {
    const Phantom ph = one(AnalyticShape::sphere({}, 0.5, 1.0), 32, 32, 0.05);
    const auto img = project(ph, 0.2, matched_detector(ph));
    const auto out = apply_psf(img, 0.0);
    CHECK(out.T == img.T);
}

TEST_CASE("psf blur preserves the mean of padded images") {
    const std::size_t n = 96;
    const double pitch = 0.01;
    TransmissionImage img{Detector{n, n, pitch}, 0.0, Grid2<double>(n, n, 1.0), std::nullopt};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // fwhm 0.1 mm -> sigma 4.25 px; a 20 px border of ones exceeds 3 sigma.
    for (std::size_t r = 20; r < n - 20; ++r)
        for (std::size_t c = 20; c < n - 20; ++c) img.T(r, c) = u(rng);
    const auto out = apply_psf(img, 0.1);
    double a = 0, b = 0;
    for (std::size_t i = 0; i < n * n; ++i) {
        a += img.T.values()[i];
        b += out.T.values()[i];
    }
    CHECK_THAT(b / (n * n), WithinAbs(a / (n * n), 1e-6));
}

TEST_CASE("blurred step edge has the Gaussian 10-90% width") {
    const std::size_t n = 200;
    const double pitch = 0.005, fwhm = 0.3;
    TransmissionImage img{Detector{4, n, pitch}, 0.0, Grid2<double>(4, n, 0.0), std::nullopt};
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = n / 2; c < n; ++c) img.T(r, c) = 1.0;
    const auto out = apply_psf(img, fwhm);
    const auto crossing = [&](double level) {
        for (std::size_t c = 1; c < n; ++c) {
            const double a = out.T(1, c - 1), b = out.T(1, c);
            if (a < level && b >= level) return (static_cast<double>(c - 1) + (level - a) / (b - a)) * pitch;
        }
        return -1.0;
    };
    // 10-90% rise of an erf edge spans 2 * 1.28155 sigma.
    const double sigma = fwhm / (2 * std::sqrt(2 * std::log(2.0)));
    CHECK_THAT(crossing(0.9) - crossing(0.1), WithinRel(2 * 1.2815515655 * sigma, 0.05));
}
