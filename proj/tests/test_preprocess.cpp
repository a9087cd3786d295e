#include <catch2/catch_amalgamated.hpp>

#include "mproj/preprocess/denoise.hpp"
#include "mproj/preprocess/flatfield.hpp"
#include "mproj/preprocess/harmonize.hpp"
#include "mproj/preprocess/pipeline.hpp"
#include "mproj/preprocess/registration.hpp"
#include "mproj/preprocess/segment.hpp"
#include "mproj/util/rng.hpp"

using namespace mproj;
using namespace mproj::prep;

namespace {

/// Smooth synthetic flat: broad Gaussian envelope.
ImageD synthetic_mean_flat(int h, int w, double level = 600.0) {
    ImageD img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double u = (x - 0.5 * w) / (0.6 * w), v = (y - 0.5 * h) / (0.6 * h);
            img(y, x) = level * std::exp(-(u * u + v * v));
        }
    return img;
}

/// Two orthogonal smooth modes for flat-field synthesis (the x- and y-
/// derivatives of the beam envelope, i.e. what pointing jitter produces).
std::pair<ImageD, ImageD> synthetic_modes(int h, int w) {
    ImageD m1(h, w), m2(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double u = (x - 0.5 * w) / (0.6 * w), v = (y - 0.5 * h) / (0.6 * h);
            const double g = std::exp(-(u * u + v * v));
            m1(y, x) = -2.0 * u * g;
            m2(y, x) = -2.0 * v * g;
        }
    return {m1, m2};
}

ImageD sphere_transmission(int h, int w, double radius_px, double depth = 0.3) {
    ImageD img(h, w, 1.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double dx = x - 0.5 * (w - 1), dy = y - 0.5 * (h - 1);
            const double r2 = dx * dx + dy * dy;
            if (r2 < radius_px * radius_px)
                img(y, x) = std::exp(-depth * std::sqrt(1.0 - r2 / (radius_px * radius_px)));
        }
    return img;
}

double psnr(const ImageD& a, const ImageD& b, double peak = 1.0) {
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace

TEST_CASE("flat-field fit recovers a known 2-mode subspace") {
    const int h = 64, w = 96;
    const ImageD mean = synthetic_mean_flat(h, w);
    const auto [m1, m2] = synthetic_modes(h, w);
    Rng rng(42);
    std::vector<ImageD> flats;
    for (int i = 0; i < 24; ++i) {
        ImageD f = mean;
        const double a = 30.0 * rng.normal(), b = 30.0 * rng.normal();
        for (int j = 0; j < h * w; ++j) f.data[j] += a * m1.data[j] + b * m2.data[j];
        flats.push_back(std::move(f));
    }
    FlatFieldOptions opt;
    opt.n_components = 2;
    const FlatFieldBasis basis = fit_flatfield_basis(flats, opt);
    REQUIRE(basis.n_components() == 2);

    // orthonormality at the downsampled resolution
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            double dot = 0.0;
            for (size_t j = 0; j < basis.components[a].data.size(); ++j)
                dot += basis.components[a].data[j] * basis.components[b].data[j];
            CHECK(dot == Catch::Approx(a == b ? 1.0 : 0.0).margin(1e-6));
        }

    // principal angles: the fitted 2D subspace must match the true one
    const ImageD m1d = block_downsample(m1, opt.downsample_y, opt.downsample_x);
    const ImageD m2d = block_downsample(m2, opt.downsample_y, opt.downsample_x);
    auto normalize = [](ImageD img) {
        double n = 0.0;
        for (double v : img.data) n += v * v;
        n = std::sqrt(n);
        for (double& v : img.data) v /= n;
        return img;
    };
    const ImageD t1 = normalize(m1d), t2 = normalize(m2d);
    // projection of each true mode onto the fitted subspace should be ~1
    for (const ImageD* t : {&t1, &t2}) {
        double proj2 = 0.0;
        for (int c = 0; c < 2; ++c) {
            double dot = 0.0;
            for (size_t j = 0; j < t->data.size(); ++j) dot += t->data[j] * basis.components[c].data[j];
            proj2 += dot * dot;
        }
        const double angle = std::acos(std::min(1.0, std::sqrt(proj2)));
        CHECK(angle < 1e-3);
    }
}

TEST_CASE("flat-field fit requires enough flats") {
    std::vector<ImageD> flats(5, ImageD(8, 8, 1.0));
    FlatFieldOptions opt;
    opt.n_components = 7;
    try {
        fit_flatfield_basis(flats, opt);
        FAIL("expected usage_error");
    } catch (const usage_error& e) {
        CHECK(std::string(e.what()).find("8") != std::string::npos);  // names the required count
    }
}

TEST_CASE("identical flats give near-zero component weights") {
    const ImageD mean = synthetic_mean_flat(32, 48);
    std::vector<ImageD> flats(10, mean);
    FlatFieldOptions opt;
    opt.n_components = 3;
    const FlatFieldBasis basis = fit_flatfield_basis(flats, opt);
    for (size_t i = 0; i < basis.mean_flat.data.size(); ++i)
        REQUIRE(basis.mean_flat.data[i] == Catch::Approx(mean.data[i]).margin(1e-9));
    const ImageD corrected = flatfield_correct(mean, basis, opt);
    for (double v : corrected.data) REQUIRE(v == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("flat-field correction recovers transmission from a composed frame") {
    const int h = 64, w = 96;
    const ImageD mean = synthetic_mean_flat(h, w);
    const auto [m1, m2] = synthetic_modes(h, w);
    Rng rng(7);
    std::vector<ImageD> flats;
    for (int i = 0; i < 20; ++i) {
        ImageD f = mean;
        const double a = 25.0 * rng.normal(), b = 25.0 * rng.normal();
        for (int j = 0; j < h * w; ++j) f.data[j] += a * m1.data[j] + b * m2.data[j];
        flats.push_back(std::move(f));
    }
    FlatFieldOptions opt;
    opt.n_components = 7;
    const FlatFieldBasis basis = fit_flatfield_basis(flats, opt);

    const double radius = 12.0;
    const ImageD trans = sphere_transmission(h, w, radius, 0.5);
    ImageD frame(h, w);
    for (int j = 0; j < h * w; ++j)
        frame.data[j] = (mean.data[j] + 0.3 * 25.0 * m1.data[j]) * trans.data[j];
    const ImageD corrected = flatfield_correct(frame, basis, opt);

    // RMS outside the sphere edge band (the transmission itself is
    // discontinuous there at pixel granularity)
    double rms = 0.0;
    int n = 0;
    for (int y = 2; y < h - 2; ++y)
        for (int x = 2; x < w - 2; ++x) {
            const double r = std::hypot(x - 0.5 * (w - 1), y - 0.5 * (h - 1));
            if (std::abs(r - radius) < 2.5) continue;
            const double d = corrected(y, x) - trans(y, x);
            rms += d * d;
            ++n;
        }
    rms = std::sqrt(rms / n);
    CHECK(rms < 0.01);
}

TEST_CASE("k = 0 basis reduces to division by the mean flat") {
    const ImageD mean = synthetic_mean_flat(24, 24);
    std::vector<ImageD> flats(3, mean);
    FlatFieldOptions opt;
    opt.n_components = 0;
    const FlatFieldBasis basis = fit_flatfield_basis(flats, opt);
    ImageD doubled = mean;
    for (auto& v : doubled.data) v *= 2.0;
    const ImageD corrected = flatfield_correct(doubled, basis, opt);
    for (double v : corrected.data) REQUIRE(v == Catch::Approx(2.0).epsilon(1e-12));

    // exact scale equivariance in the k = 0 case
    ImageD f(24, 24);
    Rng rng(3);
    for (auto& v : f.data) v = 100.0 + 10.0 * rng.uniform();
    const ImageD c1 = flatfield_correct(f, basis, opt);
    ImageD f3 = f;
    for (auto& v : f3.data) v *= 3.0;
    const ImageD c3 = flatfield_correct(f3, basis, opt);
    // equivariance is exact up to one rounding of the division
    for (size_t i = 0; i < c1.data.size(); ++i)
        REQUIRE(c3.data[i] == Catch::Approx(3.0 * c1.data[i]).epsilon(1e-14));
}

TEST_CASE("degenerate flat raises") {
    std::vector<ImageD> flats(3, ImageD(16, 16, 0.0));  // all-zero flats
    FlatFieldOptions opt;
    opt.n_components = 0;
    const FlatFieldBasis basis = fit_flatfield_basis(flats, opt);
    CHECK_THROWS_AS(flatfield_correct(ImageD(16, 16, 1.0), basis, opt), stage_error);
}

TEST_CASE("denoising a constant frame is a no-op") {
    const ImageD frame(40, 56, 3.7);
    const ImageD out = denoise_frame(frame);
    for (double v : out.data) REQUIRE(v == Catch::Approx(3.7).margin(1e-9));
}

TEST_CASE("TV never increases under denoising") {
    Rng rng(11);
    for (int trial = 0; trial < 3; ++trial) {
        ImageD frame(32, 32);
        for (auto& v : frame.data) v = rng.uniform(0, 1);
        const ImageD out = denoise_frame(frame);
        REQUIRE(total_variation(out) <= total_variation(frame) + 1e-12);
    }
}

TEST_CASE("denoiser gains at least 3 dB on the noisy sphere") {
    const int h = 96, w = 96;
    const ImageD clean = sphere_transmission(h, w, 30.0, 0.5);
    Rng rng(2025);
    // SNR 5 on the absorption signal: signal depth ~0.39, sigma = depth/5
    ImageD noisy = clean;
    const double sigma = 0.39 / 5.0;
    for (auto& v : noisy.data) v += sigma * rng.normal();
    const ImageD den = denoise_frame(noisy);
    const double before = psnr(noisy, clean);
    const double after = psnr(den, clean);
    INFO("PSNR " << before << " -> " << after);
    CHECK(after - before >= 3.0);
}

TEST_CASE("denoising is nearly idempotent") {
    const ImageD clean = sphere_transmission(64, 64, 20.0, 0.5);
    Rng rng(5);
    ImageD noisy = clean;
    for (auto& v : noisy.data) v += 0.05 * rng.normal();
    const ImageD once = denoise_frame(noisy);
    const ImageD twice = denoise_frame(once);
    double d1 = 0.0, d2 = 0.0;
    for (size_t i = 0; i < noisy.data.size(); ++i) {
        d1 += (once.data[i] - noisy.data[i]) * (once.data[i] - noisy.data[i]);
        d2 += (twice.data[i] - once.data[i]) * (twice.data[i] - once.data[i]);
    }
    CHECK(std::sqrt(d2) < 0.1 * std::sqrt(d1));
}

TEST_CASE("registration recovers a known shift") {
    const ImageD ref = sphere_transmission(96, 96, 22.0, 0.6);
    AffineTransform2D shift;
    shift.translation = {3.5, -2.25};
    const ImageD moved = prep::detail::warp_bilinear(ref, shift);
    // moved(x) = ref(x + t); registering moved back to ref must find t
    RegistrationOptions opt;
    opt.allow_scale_shear = false;
    bool improved = false;
    const AffineTransform2D found = register_frame(ref, moved, opt, &improved);
    CHECK(improved);
    CHECK(std::abs(found.translation[0] - (-3.5)) < 0.25);
    CHECK(std::abs(found.translation[1] - 2.25) < 0.25);
}

TEST_CASE("frame registered to itself is identity") {
    const ImageD ref = sphere_transmission(64, 64, 18.0, 0.5);
    const auto result = register_stack({ref, ref}, 0);
    CHECK(result.transforms[0].linear == std::array<double, 4>{1, 0, 0, 1});
    CHECK(std::abs(result.transforms[1].translation[0]) < 0.1);
    CHECK(std::abs(result.transforms[1].translation[1]) < 0.1);
}

TEST_CASE("registration never lowers mutual information") {
    const ImageD ref = sphere_transmission(80, 80, 20.0, 0.5);
    Rng rng(9);
    std::vector<ImageD> frames{ref};
    for (int i = 0; i < 3; ++i) {
        AffineTransform2D t;
        t.translation = {rng.uniform(-5, 5), rng.uniform(-5, 5)};
        ImageD f = prep::detail::warp_bilinear(ref, t);
        for (auto& v : f.data) v += 0.01 * rng.normal();
        frames.push_back(std::move(f));
    }
    RegistrationOptions opt;
    const auto result = register_stack(frames, 0, opt);
    double rlo, rhi;
    prep::detail::min_max(ref, rlo, rhi);
    for (size_t i = 1; i < frames.size(); ++i) {
        double mlo, mhi;
        prep::detail::min_max(frames[i], mlo, mhi);
        const double mi_before = prep::detail::mutual_information(
            ref, frames[i], AffineTransform2D::identity(), opt.bins, rlo, rhi, mlo, mhi);
        const double mi_after = prep::detail::mutual_information(ref, frames[i], result.transforms[i],
                                                           opt.bins, rlo, rhi, mlo, mhi);
        REQUIRE(mi_after >= mi_before - 1e-9);
    }
}

TEST_CASE("segmentation finds a low-contrast disk") {
    const int h = 128, w = 128;
    Rng rng(31);
    ImageD frame(h, w);
    const double r = 20.0, cx = 70.0, cy = 58.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double inside =
                (x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r ? 0.9 : 1.0;  // 10% contrast
            frame(y, x) = inside + 0.01 * rng.normal();                          // 1% noise
        }
    const Mask mask = segment_droplets(frame);
    int inter = 0, uni = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool truth = (x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r;
            const bool found = mask(y, x) != 0;
            inter += truth && found;
            uni += truth || found;
        }
    const double iou = static_cast<double>(inter) / std::max(1, uni);
    INFO("IoU " << iou);
    CHECK(iou >= 0.9);
}

TEST_CASE("segmentation of a constant frame is empty") {
    const Mask mask = segment_droplets(ImageD(64, 64, 0.5));
    for (auto v : mask.data) REQUIRE(v == 0);
}

TEST_CASE("segmentation is invariant to affine intensity changes") {
    const ImageD frame = sphere_transmission(96, 96, 25.0, 0.4);
    ImageD scaled(96, 96);
    for (size_t i = 0; i < frame.data.size(); ++i) scaled.data[i] = 2.5 * frame.data[i] + 7.0;
    const Mask a = segment_droplets(frame);
    const Mask b = segment_droplets(scaled);
    REQUIRE(a.data == b.data);
}

TEST_CASE("harmonize crops to the exact patch size and upsamples by the pitch ratio") {
    // build two tiny processed stacks at factor-2 pitches
    auto make_stack = [](int h, int w, double pitch) {
        fwd::FrameStack s;
        s.pixel_pitch_um = pitch;
        s.stages = {"raw", "flatfield", "denoise", "register"};
        s.value_scale = prep::processed_value_scale;
        for (int i = 0; i < 2; ++i) {
            ImageD f(h, w, 1.0);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if (std::hypot(x - 0.5 * w, y - 0.5 * h) < 0.2 * h) f(y, x) = 0.7;
            s.frames.push_back(fwd::FrameStack::encode(f, 0.0, prep::processed_value_scale));
            s.timestamps_ns.push_back(i * 886.0);
            s.shots.emplace_back();
        }
        return s;
    };
    const auto fine = make_stack(200, 200, 3.2);
    const auto coarse = make_stack(200, 200, 6.4);
    PipelineOptions opt;
    opt.harmonize.crop_size = 128;
    const auto views = harmonize_views(fine, coarse, opt);
    CHECK(views.fine.height() == 128);
    CHECK(views.fine.width() == 128);
    CHECK(views.coarse.height() == 128);
    CHECK(views.coarse.width() == 128);
    CHECK(views.coarse.pixel_pitch_um == 3.2);

    SECTION("equal pitches pass through except for the crop") {
        const auto views2 = harmonize_views(fine, make_stack(200, 200, 3.2), opt);
        CHECK(views2.coarse.height() == 128);
    }
    SECTION("ROI outside the frame raises") {
        PipelineOptions bad = opt;
        bad.harmonize.roi_center_px = {{5.0, 5.0}};
        CHECK_THROWS_AS(harmonize_views(fine, coarse, bad), mproj::range_error);
    }
}

TEST_CASE("pipeline stage order is enforced") {
    fwd::FrameStack raw;
    raw.stages = {"raw"};
    raw.frames = {ImageU16(8, 8)};
    raw.timestamps_ns = {0.0};
    raw.shots = {fwd::ShotRecord{}};
    PipelineOptions opt;
    CHECK_THROWS_AS(denoise_stack(raw, opt), usage_error);       // needs flatfield first
    CHECK_THROWS_AS(register_stage(raw, true, opt), usage_error);
    CHECK_THROWS_AS(segment_stack(raw, opt), usage_error);
}
