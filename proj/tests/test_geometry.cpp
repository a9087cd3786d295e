#include <catch2/catch_amalgamated.hpp>

#include "mproj/geometry/geometry.hpp"

using namespace mproj;
using namespace mproj::geom;

TEST_CASE("wavelength conversion") {
    CHECK(wavelength_from_energy(12.3984) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(wavelength_from_energy(10.0) == Catch::Approx(1.23984).epsilon(1e-12));
    CHECK(wavelength_from_energy(1.0) == Catch::Approx(12.3984).epsilon(1e-12));
    CHECK_THROWS_AS(wavelength_from_energy(0.0), domain_error);
    CHECK_THROWS_AS(wavelength_from_energy(-3.0), domain_error);
}

TEST_CASE("bragg deflection reproduces the diamond splitter angles") {
    CrystalReflection c111{3.567, {1, 1, 1}};
    CrystalReflection c220{3.567, {2, 2, 0}};
    const double t111 = bragg_deflection_deg(c111, 10.0);
    const double t220 = bragg_deflection_deg(c220, 10.0);
    CHECK(t111 == Catch::Approx(35.0).margin(0.1));
    CHECK(t220 == Catch::Approx(58.8).margin(0.1));
    CHECK(t220 - t111 == Catch::Approx(23.8).margin(0.2));
}

TEST_CASE("inaccessible reflection names d and lambda") {
    CrystalReflection c111{3.567, {1, 1, 1}};
    // lambda(2 keV) = 6.2 A > 2d = 4.12 A
    try {
        bragg_deflection_deg(c111, 2.0);
        FAIL("expected domain_error");
    } catch (const domain_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2.0594") != std::string::npos);  // d_111 of diamond
        CHECK(msg.find("6.1992") != std::string::npos);  // lambda at 2 keV
    }
}

TEST_CASE("bragg angle identity and monotonicity") {
    CrystalReflection c220{3.567, {2, 2, 0}};
    const double d = c220.d_spacing_angstrom();
    double prev = 180.0;
    for (double e = 5.0; e <= 25.0; e += 0.5) {
        const double tt = bragg_deflection_deg(c220, e);
        const double lhs = std::sin(deg_to_rad(tt) / 2.0);
        const double rhs = wavelength_from_energy(e) / (2.0 * d);
        CHECK(std::abs(lhs - rhs) < 1e-12);
        CHECK(tt < prev);  // strictly decreasing in E
        prev = tt;
    }
}

TEST_CASE("polarization factor") {
    CHECK(polarization_factor(58.8, Polarization::sigma) == 1.0);
    CHECK(polarization_factor(90.0, Polarization::pi) == Catch::Approx(0.0).margin(1e-12));
    CHECK(polarization_factor(35.0, Polarization::pi) == Catch::Approx(0.671).margin(1e-3));
    CHECK_THROWS_AS(polarization_factor(-1.0, Polarization::pi), domain_error);
    CHECK_THROWS_AS(polarization_factor(181.0, Polarization::sigma), domain_error);
}

TEST_CASE("air transmission") {
    CHECK(air_transmission(0.0, 10.0) == 1.0);
    CHECK(air_transmission(2.0, 10.0) == Catch::Approx(0.29).margin(0.03));
    CHECK(air_transmission(1.0, 10.0) ==
          Catch::Approx(std::sqrt(air_transmission(2.0, 10.0))).epsilon(1e-6));
    CHECK_THROWS_AS(air_transmission(1.0, 2.0), range_error);
    CHECK_THROWS_AS(air_transmission(1.0, 80.0), range_error);
    CHECK_THROWS_AS(air_transmission(-0.5, 10.0), domain_error);
}

TEST_CASE("air transmission is multiplicative over path splits") {
    for (double a : {0.1, 0.7, 1.3}) {
        for (double b : {0.2, 1.1, 2.5}) {
            const double lhs = air_transmission(a + b, 10.0);
            const double rhs = air_transmission(a, 10.0) * air_transmission(b, 10.0);
            CHECK(std::abs(lhs - rhs) < 1e-9);
        }
    }
}

TEST_CASE("beamlet geometry for the paper configuration") {
    const auto config = default_beamline();
    const auto beams = beamlet_geometry(config);
    REQUIRE(beams.size() == 2);
    const double cosang = beams[0].direction.dot(beams[1].direction);
    CHECK(rad_to_deg(std::acos(cosang)) == Catch::Approx(23.8).margin(0.2));
    for (const auto& b : beams) {
        CHECK(std::abs(b.direction.norm() - 1.0) < 1e-12);
        CHECK(std::abs(b.frame.axis_u.norm() - 1.0) < 1e-12);
        CHECK(std::abs(b.frame.axis_u.dot(b.frame.axis_v)) < 1e-12);
        CHECK(std::abs(b.frame.axis_u.dot(b.direction)) < 1e-12);
        CHECK(b.flux_factor > 0.0);
        CHECK(b.flux_factor <= 1.0);
    }
    // pairwise angle equals the difference of the 2theta values
    const double dt = beams[1].two_theta_deg - beams[0].two_theta_deg;
    CHECK(std::abs(rad_to_deg(std::acos(cosang)) - dt) < 1e-9);
}

TEST_CASE("single splitter direction is the direct beam rotated by 2theta") {
    BeamlineConfig config;
    config.splitters = {SplitterSpec{"s", CrystalReflection{3.567, {1, 1, 1}}, 1.0, 0.25, 3.2}};
    const auto beams = beamlet_geometry(config);
    REQUIRE(beams.size() == 1);
    const double tt = deg_to_rad(beams[0].two_theta_deg);
    const Vec3 expect = rotate_horizontal(Vec3{0, 0, 1}, tt);
    CHECK(std::abs((beams[0].direction - expect).norm()) < 1e-12);
}

TEST_CASE("pi-polarized 220 beamlet is fainter than 111 at equal efficiency") {
    BeamlineConfig config;
    config.splitters = {
        SplitterSpec{"c111", CrystalReflection{3.567, {1, 1, 1}, CrystalGeometry::symmetric_laue,
                                               Polarization::pi},
                     1.0, 0.25, 3.2},
        SplitterSpec{"c220", CrystalReflection{3.567, {2, 2, 0}, CrystalGeometry::symmetric_laue,
                                               Polarization::pi},
                     1.0, 0.25, 6.4},
    };
    const auto beams = beamlet_geometry(config);
    CHECK(beams[1].flux_factor < beams[0].flux_factor);
}

TEST_CASE("water attenuation matches the tabulated value at 10 keV") {
    // 5.329 cm^2/g * 0.998 g/cm^3 ~ 5.32 1/cm
    CHECK(water_mu_per_um(10.0) * 1e4 == Catch::Approx(5.33).margin(0.03));
}
