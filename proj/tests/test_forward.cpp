#include <catch2/catch_amalgamated.hpp>

#include "mproj/forward/acquisition.hpp"
#include "mproj/forward/projector.hpp"
#include "mproj/forward/shot_model.hpp"
#include "mproj/phantom/phantom.hpp"

using namespace mproj;
using namespace mproj::fwd;

namespace {

/// Static sphere of radius R at the origin with a near-hard edge.
phantom::ScalarField4D sphere_field(double radius_um, double mu) {
    phantom::CollisionPhantom ph;
    ph.droplet_a = {{0, 0, 0}, radius_um, {0, 0, 0}};
    ph.droplet_b = {{10.0 * radius_um, 0, 0}, 1e-3, {0, 0, 0}};
    ph.mu_water_per_um = mu;
    ph.boundary_width_um = 1e-3;
    return phantom::DropletField(ph).as_field(0.0, 1e9);
}

ShotRecord unit_shot(int n_beamlets = 1) {
    ShotRecord s;
    s.intensity_scale.assign(n_beamlets, 1.0);
    s.beam_displacement_um.assign(n_beamlets, {0.0, 0.0});
    return s;
}

geom::BeamletGeometry straight_beamlet() {
    geom::BeamletGeometry g;
    g.id = "test";
    g.direction = {0, 0, 1};
    g.two_theta_deg = 0.0;
    g.flux_factor = 1.0;
    g.frame.origin = {0, 0, 2.5e5};
    g.frame.axis_u = {1, 0, 0};
    g.frame.axis_v = {0, 1, 0};
    g.pixel_pitch_um = 3.2;
    return g;
}

DetectorModel clean_detector(int h, int w, double pitch = 3.2) {
    DetectorModel det;
    det.height = h;
    det.width = w;
    det.pixel_pitch_um = pitch;
    det.read_noise_sigma = 0.0;
    det.dark_level = 0.0;
    det.prnu_sigma = 0.0;
    det.illum_sigma_frac = 0.0;
    return det;
}

}  // namespace

TEST_CASE("empty field projects to a uniform flux image") {
    auto field = phantom::ScalarField4D::empty();
    auto beam = straight_beamlet();
    beam.flux_factor = 0.37;
    auto shot = unit_shot();
    shot.intensity_scale[0] = 1.7;
    const auto img = project_view(field, beam, clean_detector(8, 10), 0.0, shot);
    for (double v : img.data) REQUIRE(v == Catch::Approx(0.37 * 1.7).epsilon(1e-12));
}

TEST_CASE("sphere projection matches the analytic chord attenuation") {
    const double R = 37.5, mu = 5.33e-4;
    const auto field = sphere_field(R, mu);
    const auto det = clean_detector(128, 128, 1.0);
    ProjectorOptions opt;
    opt.step_um = 0.25;
    const auto img = project_view(field, straight_beamlet(), det, 0.0, unit_shot(), 0, opt);
    double max_err = 0.0;
    for (int r = 0; r < det.height; ++r)
        for (int c = 0; c < det.width; ++c) {
            const double u = (c - 63.5) * det.pixel_pitch_um;
            const double v = (63.5 - r) * det.pixel_pitch_um;
            const double rho2 = u * u + v * v;
            const double expected = rho2 < R * R ? std::exp(-2.0 * mu * std::sqrt(R * R - rho2)) : 1.0;
            max_err = std::max(max_err, std::abs(img(r, c) - expected) / expected);
        }
    CHECK(max_err < 0.005);
}

TEST_CASE("two views of a centered sphere are identical") {
    // identical up to quadrature error: the two views sample the bounding box
    // with different ray partitions, so equality holds at the step tolerance
    auto ph = phantom::CollisionPhantom{};
    ph.droplet_a = {{0, 0, 0}, 30.0, {0, 0, 0}};
    ph.droplet_b = {{300.0, 0, 0}, 1e-3, {0, 0, 0}};
    ph.mu_water_per_um = 2e-3;
    ph.boundary_width_um = 2.0;
    const auto field = phantom::DropletField(ph).as_field(0.0, 1e9);
    auto config = geom::default_beamline();
    const auto beams = geom::beamlet_geometry(config);
    auto det = clean_detector(48, 48, 2.0);
    const auto shot = unit_shot(2);
    ProjectorOptions opt;
    opt.step_um = 0.25;
    auto a = project_view(field, beams[0], det, 0.0, shot, 0, opt);
    auto b = project_view(field, beams[1], det, 0.0, shot, 1, opt);
    // normalize out the flux factors before comparing images
    for (auto& v : a.data) v /= beams[0].flux_factor;
    for (auto& v : b.data) v /= beams[1].flux_factor;
    for (size_t i = 0; i < a.data.size(); ++i)
        REQUIRE(a.data[i] == Catch::Approx(b.data[i]).margin(2e-4));
}

TEST_CASE("projection time outside the field range raises") {
    const auto field = phantom::DropletField(phantom::default_collision_phantom()).as_field(0.0, 1e5);
    CHECK_THROWS_AS(project_view(field, straight_beamlet(), clean_detector(4, 4), 2e5, unit_shot()),
                    mproj::range_error);
}

TEST_CASE("adding absorber never increases noiseless intensity") {
    const auto thin = sphere_field(20.0, 1e-4);
    const auto thick = sphere_field(20.0, 4e-4);
    const auto det = clean_detector(32, 32, 2.0);
    const auto a = project_view(thin, straight_beamlet(), det, 0.0, unit_shot());
    const auto b = project_view(thick, straight_beamlet(), det, 0.0, unit_shot());
    for (size_t i = 0; i < a.data.size(); ++i) REQUIRE(b.data[i] <= a.data[i] + 1e-15);
}

TEST_CASE("halving the quadrature step changes the projection by < 0.1%") {
    const auto field = sphere_field(30.0, 5.33e-4);
    const auto det = clean_detector(64, 64, 1.2);
    ProjectorOptions coarse, fine;
    coarse.step_um = 0.6;
    fine.step_um = 0.3;
    const auto a = project_view(field, straight_beamlet(), det, 0.0, unit_shot(), 0, coarse);
    const auto b = project_view(field, straight_beamlet(), det, 0.0, unit_shot(), 0, fine);
    for (size_t i = 0; i < a.data.size(); ++i)
        REQUIRE(std::abs(a.data[i] - b.data[i]) / b.data[i] < 1e-3);
}

TEST_CASE("projection is exactly linear in intensity_scale") {
    const auto field = sphere_field(25.0, 3e-4);
    const auto det = clean_detector(16, 16, 4.0);
    auto s1 = unit_shot();
    auto s2 = unit_shot();
    s2.intensity_scale[0] = 2.75;
    const auto a = project_view(field, straight_beamlet(), det, 0.0, s1);
    const auto b = project_view(field, straight_beamlet(), det, 0.0, s2);
    for (size_t i = 0; i < a.data.size(); ++i) REQUIRE(b.data[i] == 2.75 * a.data[i]);
}

TEST_CASE("shot model statistics") {
    SaseParams params;
    params.jitter_sigma_um = 0.0;
    params.multi_peak_prob = 0.0;
    const auto shots = sase_shot_model(123, 100000, params, 2);
    double mean = 0.0;
    for (const auto& s : shots) {
        REQUIRE(s.beam_displacement_um[0][0] == 0.0);
        REQUIRE(s.beam_displacement_um[1][1] == 0.0);
        REQUIRE_FALSE(s.multi_peak_event);
        mean += s.intensity_scale[0];
    }
    mean /= shots.size();
    CHECK(mean == Catch::Approx(1.0).margin(0.01));
}

TEST_CASE("shot model validates parameters") {
    SaseParams params;
    params.gamma_shape = 0.0;
    CHECK_THROWS_AS(sase_shot_model(1, 10, params, 1), config_error);
    params = SaseParams{};
    params.multi_peak_prob = 1.5;
    CHECK_THROWS_AS(sase_shot_model(1, 10, params, 1), config_error);
}

TEST_CASE("detector capture basics") {
    auto det = clean_detector(6, 6);
    det.dark_level = 30.0;
    Rng rng(5);
    SECTION("zero intensity with noise off gives uniform dark level") {
        const auto frame = detector_capture(ImageD(6, 6, 0.0), det, 1, rng);
        for (auto v : frame.data) REQUIRE(v == 30);
    }
    SECTION("saturated input clips to 1023") {
        const auto frame = detector_capture(ImageD(6, 6, 10.0), det, 1, rng);  // 40000 counts
        for (auto v : frame.data) REQUIRE(v == 1023);
    }
    SECTION("negative intensity is rejected") {
        CHECK_THROWS_AS(detector_capture(ImageD(6, 6, -0.1), det, 1, rng), domain_error);
    }
}

TEST_CASE("capture variance matches Poisson plus read noise") {
    auto det = clean_detector(1, 1);
    det.photon_scale = 2000.0;
    det.read_noise_sigma = 5.0;
    det.dark_level = 40.0;
    const double intensity = 0.2;  // 400 photon counts, far from both clip edges
    const int n = 10000;
    Rng rng(77);
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto f = detector_capture(ImageD(1, 1, intensity), det, 1, rng);
        sum += f.data[0];
        sum2 += static_cast<double>(f.data[0]) * f.data[0];
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    const double expected = det.photon_scale * intensity + det.read_noise_sigma * det.read_noise_sigma;
    CHECK(var == Catch::Approx(expected).epsilon(0.05));
}

TEST_CASE("acquisition timing model") {
    AcquisitionConfig config;
    config.detector = clean_detector(12, 16);
    config.detector.illum_sigma_frac = 0.6;
    config.detector.prnu_sigma = 0.03;
    config.n_flats = 9;
    config.n_darks = 4;
    const auto field = sphere_field(30.0, 5e-4);
    const auto result = simulate_acquisition(field, config, 2024);

    REQUIRE(result.sample.size() == 2);
    for (const auto& stack : result.sample) {
        CHECK(stack.frames.size() == 127);  // 128-pulse train minus the dropped frame
        CHECK(stack.cumulative_drift_ns == Catch::Approx(508.0));
        CHECK(stack.frame_to_pulse_drift_ns == Catch::Approx(4.0));
        CHECK(stack.timestamps_ns.front() == Catch::Approx(886.0));
    }
    REQUIRE(result.flats.size() == 2);
    CHECK(result.flats[0].frames.size() == 9);
    REQUIRE(result.darks.size() == 2);
    CHECK(result.darks[0].frames.size() == 4);
}

TEST_CASE("identical seeds give bit-identical acquisitions") {
    AcquisitionConfig config;
    config.beamline.frames_per_train = 6;
    config.detector = clean_detector(10, 12);
    config.detector.read_noise_sigma = 4.0;
    config.n_flats = 3;
    config.n_darks = 2;
    const auto field = sphere_field(25.0, 5e-4);
    const auto a = simulate_acquisition(field, config, 99);
    auto config2 = config;
    config2.threads = 2;  // scheduling must not change results
    const auto b = simulate_acquisition(field, config2, 99);
    REQUIRE(a.sample.size() == b.sample.size());
    for (size_t s = 0; s < a.sample.size(); ++s) {
        REQUIRE(a.sample[s].frames.size() == b.sample[s].frames.size());
        for (size_t k = 0; k < a.sample[s].frames.size(); ++k)
            REQUIRE(a.sample[s].frames[k].data == b.sample[s].frames[k].data);
        for (size_t k = 0; k < a.flats[s].frames.size(); ++k)
            REQUIRE(a.flats[s].frames[k].data == b.flats[s].frames[k].data);
    }
}
