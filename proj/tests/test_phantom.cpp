#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "quopt/phantom.hpp"

using namespace quopt;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double total(const Phantom& ph) {
    double s = 0;
    for (double v : ph.mu.values()) s += v;
    return s;
}

Phantom one(const AnalyticShape& s, std::size_t n, double pitch) {
    const std::vector shapes{s};
    return rasterize(shapes, n, n, n, pitch);
}

}  // namespace

TEST_CASE("sphere centre voxel is fully covered and far voxels are empty") {
    const Phantom ph = one(AnalyticShape::sphere({}, 1.0, 1.0), 31, 0.1);
    CHECK(ph.mu(15, 15, 15) == 1.0);
    CHECK(ph.mu(0, 0, 0) == 0.0);
    CHECK(ph.mu(15, 15, 2) == 0.0);
}

TEST_CASE("sphere volume matches 4/3 pi r^3 within 1%") {
    for (double pitch : {0.1, 0.05}) {
        const double r = 1.0;
        const double mu0 = 2.5;
        const auto n = static_cast<std::size_t>(std::ceil(2 * r / pitch)) + 8;
        const Phantom ph = one(AnalyticShape::sphere({}, r, mu0), n, pitch);
        const double expected = 4.0 / 3.0 * std::numbers::pi * r * r * r * mu0;
        CHECK_THAT(total(ph) * std::pow(pitch, 3), WithinRel(expected, 0.01));
    }
}

TEST_CASE("cylinder and disk volumes match their closed forms") {
    const double pitch = 0.05;
    const Phantom cyl = one(AnalyticShape::cylinder({-0.6, 0, -0.5}, {0.6, 0, 0.5}, 0.4, 1.0), 48, pitch);
    const double len = std::hypot(1.2, 1.0);
    CHECK_THAT(total(cyl) * std::pow(pitch, 3), WithinRel(std::numbers::pi * 0.16 * len, 0.015));

    const Phantom disk = one(AnalyticShape::disk({0, 0, 0.1}, 0.9, 0.3, 1.0), 48, pitch);
    CHECK_THAT(total(disk) * std::pow(pitch, 3), WithinRel(std::numbers::pi * 0.81 * 0.6, 0.01));
}

TEST_CASE("helix wire volume is tube length times cross-section") {
    const double pitch = 0.025;
    const double R = 0.5, rise = 0.4, turns = 2.0, a = 0.08;
    const Phantom ph = one(AnalyticShape::helix({}, R, rise, turns, a, 0.3, 1.0), 64, pitch);
    const double length = turns * std::hypot(2 * std::numbers::pi * R, rise);
    // Flat-ended tube; the end caps add nothing at first order.
    CHECK_THAT(total(ph) * std::pow(pitch, 3), WithinRel(length * std::numbers::pi * a * a, 0.03));
}

TEST_CASE("rasterization is additive over disjoint shapes") {
    const auto a = AnalyticShape::sphere({-0.5, 0, 0}, 0.3, 1.0);
    const auto b = AnalyticShape::cylinder({0.4, -0.3, -0.5}, {0.4, 0.3, 0.5}, 0.2, 3.0);
    const std::vector both{a, b};
    const Phantom ab = rasterize(both, 40, 40, 40, 0.05);
    const Phantom pa = one(a, 40, 0.05);
    const Phantom pb = one(b, 40, 0.05);
    for (std::size_t i = 0; i < ab.mu.values().size(); ++i)
        REQUIRE(ab.mu.values()[i] == pa.mu.values()[i] + pb.mu.values()[i]);
}

TEST_CASE("rasterization does not depend on the job count") {
    const auto shapes = wire_figurine_shapes(2.4, 0.1);
    const Phantom p1 = rasterize(shapes, 48, 48, 48, 0.05, 1);
    const Phantom p4 = rasterize(shapes, 48, 48, 48, 0.05, 4);
    CHECK(p1.mu == p4.mu);
}

TEST_CASE("shapes leaving the support cylinder are rejected") {
    const auto big = AnalyticShape::sphere({}, 1.5, 1.0);
    const std::vector shapes{big};
    CHECK_THROWS_MATCHES(rasterize(shapes, 32, 32, 32, 0.05), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::ShapeOutOfBounds; }));
    const auto off = AnalyticShape::sphere({0.6, 0.0, 0}, 0.2, 1.0);
    const std::vector shifted{off};
    CHECK_THROWS_AS(rasterize(shifted, 32, 32, 32, 0.05), Error);
}

TEST_CASE("cylinder extent follows its flat end caps") {
    const auto upright = detail::extent(AnalyticShape::cylinder({0.3, 0, -0.6}, {0.3, 0, 0.6}, 0.2, 1.0));
    CHECK_THAT(upright.zmin, WithinAbs(-0.6, 1e-12));
    CHECK_THAT(upright.zmax, WithinAbs(0.6, 1e-12));
    CHECK_THAT(upright.radial, WithinAbs(0.5, 1e-12));
    const auto tilted = detail::extent(AnalyticShape::cylinder({0, 0, 0}, {0, 0.3, 0.4}, 0.1, 1.0));
    CHECK_THAT(tilted.zmax, WithinAbs(0.4 + 0.1 * 0.6, 1e-12));
    CHECK_THAT(tilted.lo.x, WithinAbs(-0.1, 1e-12));
}

TEST_CASE("validate rejects negative attenuation and bad pitch") {
    Phantom ph = detail::empty_grid(8, 8, 8, 0.1);
    CHECK_NOTHROW(validate(ph));
    ph.mu(4, 4, 4) = -1;
    CHECK_THROWS_AS(validate(ph), Error);
    ph.mu(4, 4, 4) = 0;
    ph.pitch = 0;
    CHECK_THROWS_AS(validate(ph), Error);
}

TEST_CASE("rotating a shape about z moves its centre on a circle") {
    const auto s = AnalyticShape::sphere({1.0, 0.0, 0.3}, 0.2, 1.0);
    const auto r = rotated_about_z(s, std::numbers::pi / 2);
    CHECK_THAT(std::hypot(r.center.x, r.center.y), WithinAbs(1.0, 1e-12));
    CHECK_THAT(r.center.z, WithinAbs(0.3, 1e-12));
    CHECK_THAT(std::abs(r.center.y), WithinAbs(1.0, 1e-12));
}

TEST_CASE("wire figurine at the reference protocol size") {
    const Phantom ph = wire_figurine(5.0, 0.15, GridSpec{128, 128, 128, 0.05});
    std::size_t nonzero = 0;
    for (double v : ph.mu.values()) nonzero += v > 0;
    const double fraction = static_cast<double>(nonzero) / static_cast<double>(ph.mu.values().size());
    CHECK(fraction > 0.001);
    CHECK(fraction < 0.05);
    CHECK_NOTHROW(validate(ph));
}

TEST_CASE("wire figurine spans its nominal height") {
    double zmin = 1e9, zmax = -1e9;
    for (const auto& s : wire_figurine_shapes(5.0, 0.15)) {
        const auto e = detail::extent(s);
        zmin = std::min(zmin, e.zmin);
        zmax = std::max(zmax, e.zmax);
    }
    CHECK_THAT(zmin, WithinAbs(-2.5, 1e-12));
    CHECK(zmax <= 2.5 + 1e-12);
    CHECK(zmax > 2.4);
    CHECK_THROWS_AS(wire_figurine_shapes(1.0, 0.1), Error);
}

TEST_CASE("figurines taller than the grid are rejected") {
    CHECK_THROWS_MATCHES(wire_figurine(2.4, 0.1, GridSpec{64, 64, 40, 0.05}), Error,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("along z")));
}

TEST_CASE("wire figurine rejects wires thinner than two voxels") {
    CHECK_THROWS_AS(wire_figurine(5.0, 0.09, GridSpec{128, 128, 128, 0.05}), Error);
    CHECK_THROWS_AS(wire_figurine(5.0, 0.15, GridSpec{64, 64, 64, 0.1}), Error);
}
