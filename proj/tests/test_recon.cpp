#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mproj/recon/evaluate.hpp"
#include "mproj/recon/extract.hpp"
#include "mproj/recon/losses.hpp"
#include "mproj/recon/patches.hpp"
#include "mproj/recon/render.hpp"
#include "mproj/recon/trainer.hpp"

using namespace mproj;
using namespace mproj::recon;

namespace {

ImplicitField tiny_field(double output_bias, int levels_space = 4, int levels_time = 2,
                         int latent_dim = 0, std::vector<int64_t> hidden = {16, 16},
                         uint64_t seed = 5) {
    Rng rng(seed);
    FieldNormalization norm;
    norm.half_size_um = 100.0;
    norm.t_half_ns = 1000.0;
    return ImplicitField::create(levels_space, levels_time, latent_dim, hidden, norm, rng,
                                 output_bias);
}

/// Supervised overfit of the field to a smooth analytic sphere of normalized
/// radius and normalized absorption level.
void overfit_sphere(ImplicitField& field, double radius_n, double mu_n, int steps, uint64_t seed) {
    auto gen = recon::detail::generator_params(field);
    ad::AdamState adam;
    adam.lr = 3e-3;
    Rng rng(seed);
    for (int it = 0; it < steps; ++it) {
        if (it == steps / 4) adam.lr = 1e-3;
        if (it == steps / 2) adam.lr = 3e-4;
        if (it == 3 * steps / 4) adam.lr = 1e-4;
        const int n_pts = 3072;
        std::vector<std::array<double, 4>> coords(n_pts);
        ad::Tensor target({n_pts, 1});
        for (int i = 0; i < n_pts; ++i) {
            // alternate cube-uniform and sphere-region samples
            const double span = i % 2 == 0 ? 1.0 : 0.65;
            const double x = rng.uniform(-span, span), y = rng.uniform(-span, span),
                         z = rng.uniform(-span, span);
            coords[i] = {x, y, z, 0.0};
            const double r = std::sqrt(x * x + y * y + z * z);
            // smooth edge of width 0.1
            const double h = std::clamp((radius_n + 0.05 - r) / 0.1, 0.0, 1.0);
            target.v[i] = mu_n * h * h * (3 - 2 * h);
        }
        ad::Graph g;
        g.threads = 2;
        auto nodes = ad::mlp_nodes(g, field.trunk, true);
        const int latent_node = field.latent_dim > 0 ? g.input(field.latent, true)
                                                     : g.constant(field.latent);
        const int out = field.forward_on_graph(g, coords, nodes, latent_node);
        const int diff = g.sub(out, g.constant(target));
        const int loss = g.mean(g.mul(diff, diff));
        g.backward(loss);
        std::vector<int> flat;
        for (int id : nodes.weights) flat.push_back(id);
        for (int id : nodes.biases) flat.push_back(id);
        if (field.latent_dim > 0) flat.push_back(latent_node);
        auto grads = recon::detail::collect_grads(g, flat);
        auto vals = gen.values();
        ad::adam_step(vals, grads, adam);
        gen.assign(vals);
    }
}

}  // namespace

TEST_CASE("fresh field with strongly negative output bias renders unity") {
    const auto field = tiny_field(-30.0);
    const ImageD img = render_projection(field, 0.2, 0.0, 16, 10.0, 8);
    for (double v : img.data) REQUIRE(v == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("overfit sphere renders the analytic chord attenuation") {
    auto field = tiny_field(-8.0, 6, 2, 0, {48, 48, 48}, 11);
    const double radius_n = 0.5, mu_n = 1.2;
    overfit_sphere(field, radius_n, mu_n, 1200, 21);

    const int size = 33;  // odd: center pixel exactly on the axis
    const double pitch = 2.0 * field.norm.half_size_um / size;
    const ImageD img = render_projection(field, 0.0, 0.0, size, pitch, 256);
    const double expected = std::exp(-2.0 * mu_n * radius_n);
    CHECK(img(16, 16) == Catch::Approx(expected).epsilon(0.02));

    SECTION("doubling samples per ray changes the converged image by < 0.2%") {
        const ImageD a = render_projection(field, 0.35, 0.0, 16, 4.0 * pitch / 2, 256);
        const ImageD b = render_projection(field, 0.35, 0.0, 16, 4.0 * pitch / 2, 512);
        for (size_t i = 0; i < a.data.size(); ++i)
            REQUIRE(std::abs(a.data[i] - b.data[i]) / b.data[i] < 0.002);
    }
}

TEST_CASE("patch sampling") {
    SECTION("unit scale and stride at the center is the literal crop") {
        ImageD img(64, 64);
        Rng rng(3);
        for (auto& v : img.data) v = rng.uniform(0, 1);
        PatchSpec spec;
        spec.center_x = 31.5;
        spec.center_y = 31.5;
        spec.scale = 1.0;
        spec.stride = 1;
        const ImageD patch = sample_patch(img, spec);
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) REQUIRE(patch(i, j) == img(16 + i, 16 + j));
    }
    SECTION("100k random draws stay in bounds") {
        Rng rng(17);
        int violations = 0;
        for (int k = 0; k < 100000; ++k) {
            const int w = 32 + static_cast<int>(rng.uniform_index(100));
            const int h = 32 + static_cast<int>(rng.uniform_index(100));
            const PatchSpec spec = random_patch_spec(rng, w, h);
            if (!spec.in_bounds(w, h)) ++violations;
        }
        REQUIRE(violations == 0);
    }
    SECTION("fixed seed gives an identical patch sequence") {
        ImageD img(48, 48, 0.5);
        img(10, 12) = 2.0;
        Rng a(99), b(99);
        const auto pa = sample_patches({img}, a, 5);
        const auto pb = sample_patches({img}, b, 5);
        for (size_t i = 0; i < pa.size(); ++i) {
            REQUIRE(pa[i].first.center_x == pb[i].first.center_x);
            REQUIRE(pa[i].first.scale == pb[i].first.scale);
            REQUIRE(pa[i].second.data == pb[i].second.data);
        }
    }
    SECTION("too-small image is a usage error") {
        Rng rng(1);
        CHECK_THROWS_AS(random_patch_spec(rng, 16, 40), usage_error);
    }
}

TEST_CASE("adversarial losses at zero logits") {
    ad::Graph g;
    const int lr = g.constant(ad::Tensor({4, 1}));  // zeros
    const int lf = g.constant(ad::Tensor({4, 1}));
    const auto losses = adversarial_losses(g, lr, lf);
    CHECK(g.value(losses.d_loss).v[0] == Catch::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(g.value(losses.g_loss).v[0] == Catch::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("adversarial losses saturate at the guard bounds") {
    ad::Graph g;
    const int lr = g.constant(ad::Tensor({2, 1}, {1e9, 1e9}));    // perfect on reals
    const int lf = g.constant(ad::Tensor({2, 1}, {-1e9, -1e9}));  // perfect on fakes
    const auto losses = adversarial_losses(g, lr, lf, 30.0);
    const double floor = 2.0 * std::log1p(std::exp(-30.0));
    CHECK(g.value(losses.d_loss).v[0] == Catch::Approx(floor).epsilon(1e-9));
    CHECK(g.value(losses.g_loss).v[0] == Catch::Approx(30.0).epsilon(1e-6));
}

TEST_CASE("generator gradients through render-and-discriminate match finite differences") {
    // tiny everything: 2 fake patches through a 1-hidden-layer trunk and a
    // 2-conv discriminator
    Rng rng(7);
    FieldNormalization norm;
    norm.half_size_um = 50.0;
    ImplicitField field = ImplicitField::create(2, 1, 2, {8}, norm, rng, -1.0);
    ad::ConvNetSpec dspec;
    dspec.channels = {4, 8};
    dspec.input_hw = 32;
    ad::ConvNetParams disc = ad::ConvNetParams::init(dspec, rng);

    std::vector<std::array<double, 2>> pixels;
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) pixels.push_back({static_cast<double>(j), static_cast<double>(i)});
    const RaySet rays = make_rays(norm, 0.3, 0.0, pixels, 32, 3.0);

    auto build = [&](const ImplicitField& f) {
        ad::Graph g;
        auto nodes = ad::mlp_nodes(g, f.trunk, true);
        const int latent_node = g.input(f.latent, true);
        const int fake = render_rays_on_graph(g, f, nodes, latent_node, rays, 4, nullptr);
        const int fake4d = g.reshape(fake, {1, 1, 32, 32});
        auto dn = ad::convnet_nodes(g, disc, false);
        const int logits = ad::convnet_forward(g, dspec, dn, fake4d);
        const auto losses = adversarial_losses(g, g.constant(ad::Tensor({1, 1}, {0.5})), logits);
        g.backward(losses.g_loss);
        std::vector<int> flat;
        for (int id : nodes.weights) flat.push_back(id);
        for (int id : nodes.biases) flat.push_back(id);
        flat.push_back(latent_node);
        return std::make_pair(g.value(losses.g_loss).v[0], recon::detail::collect_grads(g, flat));
    };
    const auto [loss0, analytic] = build(field);
    (void)loss0;

    auto params = recon::detail::generator_params(field);
    const double h = 1e-5;
    double max_rel = 0.0;
    for (size_t t = 0; t < params.tensors.size(); ++t) {
        for (size_t j = 0; j < params.tensors[t]->v.size(); ++j) {
            const double orig = params.tensors[t]->v[j];
            params.tensors[t]->v[j] = orig + h;
            const double lp = build(field).first;
            params.tensors[t]->v[j] = orig - h;
            const double lm = build(field).first;
            params.tensors[t]->v[j] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = analytic[t].v[j];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-7});
            max_rel = std::max(max_rel, std::abs(fd - an) / denom);
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("zero-length training renders uniform transmission") {
    TrainView view;
    view.frames = {ImageD(32, 32, 1.0)};
    view.timestamps_ns = {0.0};
    view.angle_rad = 0.0;
    TrainConfig config;
    config.epochs = 0;
    config.trunk_hidden = {16, 16};
    config.levels_space = 3;
    config.levels_time = 1;
    FieldNormalization norm;
    const auto result = train_reconstruction({view}, norm, config);
    const ImageD img = render_projection(result.field, 0.0, 0.0, 8, 40.0, 8);
    for (double v : img.data) REQUIRE(v == Catch::Approx(1.0).margin(5e-3));
}

TEST_CASE("training is seed-reproducible") {
    Rng noise(5);
    TrainView view;
    for (int f = 0; f < 4; ++f) {
        ImageD frame(32, 32, 1.0);
        for (auto& v : frame.data) v += 0.02 * noise.normal();
        frame(15, 15) = 0.7;
        view.frames.push_back(frame);
        view.timestamps_ns.push_back(f * 886.0);
    }
    view.angle_rad = -0.2;
    TrainConfig config;
    config.epochs = 2;
    config.warmup_epochs = 1;
    config.trunk_hidden = {12, 12};
    config.levels_space = 3;
    config.levels_time = 2;
    config.rays_per_view = 32;
    config.samples_per_ray = 6;
    config.batch_size = 2;
    config.seed = 31;
    FieldNormalization norm;
    const auto a = train_reconstruction({view}, norm, config);
    const auto b = train_reconstruction({view}, norm, config);
    REQUIRE(a.log.size() == b.log.size());
    for (size_t i = 0; i < a.log.size(); ++i) {
        REQUIRE(a.log[i].mse == b.log[i].mse);
        REQUIRE(a.log[i].d_loss == b.log[i].d_loss);
        REQUIRE(a.log[i].g_loss == b.log[i].g_loss);
    }
}

TEST_CASE("warmup-only training leaves the discriminator at initialization") {
    TrainView view;
    view.frames = {ImageD(32, 32, 1.0), ImageD(32, 32, 0.9)};
    view.timestamps_ns = {0.0, 886.0};
    TrainConfig config;
    config.trunk_hidden = {8};
    config.levels_space = 2;
    config.levels_time = 1;
    config.rays_per_view = 16;
    config.samples_per_ray = 4;
    config.seed = 7;

    auto cfg_a = config;
    cfg_a.epochs = 3;
    cfg_a.warmup_epochs = 3;  // never adversarial
    const auto a = train_reconstruction({view}, FieldNormalization{}, cfg_a);
    auto cfg_b = config;
    cfg_b.epochs = 0;  // discriminator stays at its initial draw
    const auto b = train_reconstruction({view}, FieldNormalization{}, cfg_b);
    REQUIRE(a.disc.head_w.v == b.disc.head_w.v);
    for (size_t i = 0; i < a.disc.conv_w.size(); ++i)
        REQUIRE(a.disc.conv_w[i].v == b.disc.conv_w[i].v);
}

TEST_CASE("non-finite inputs abort training with the last good checkpoint") {
    TrainView view;
    ImageD bad(32, 32, 1.0);
    bad(3, 3) = std::numeric_limits<double>::quiet_NaN();
    view.frames = {bad};
    view.timestamps_ns = {0.0};
    TrainConfig config;
    config.epochs = 2;
    config.warmup_epochs = 2;
    config.trunk_hidden = {8};
    config.levels_space = 2;
    config.levels_time = 1;
    config.rays_per_view = 512;  // guarantee the NaN pixel is sampled
    config.samples_per_ray = 4;
    const auto result = train_reconstruction({view}, FieldNormalization{}, config);
    CHECK(result.aborted);
    CHECK_FALSE(result.abort_reason.empty());
    // restored field must still render cleanly
    const ImageD img = render_projection(result.field, 0.0, 0.0, 8, 30.0, 4);
    for (double v : img.data) REQUIRE(std::isfinite(v));
}

TEST_CASE("extraction preserves constants at both resolutions") {
    auto field = tiny_field(1.0, 2, 1, 0, {4});
    // zero all weights: output = softplus(1.0) everywhere
    for (auto& w : field.trunk.weights)
        for (auto& v : w.v) v = 0.0;
    for (size_t i = 0; i + 1 < field.trunk.biases.size(); ++i)
        for (auto& v : field.trunk.biases[i].v) v = 0.0;
    const double c_norm = std::log1p(std::exp(1.0));
    const double c_phys = c_norm / field.norm.half_size_um;

    ExtractOptions opt;
    opt.n = 32;
    opt.downsample = 4;
    const auto grid = extract_volume(field, 0.0, opt);
    REQUIRE(grid.n == 8);
    for (float v : grid.values) REQUIRE(v == Catch::Approx(c_phys).epsilon(1e-6));
}

TEST_CASE("extraction tiling is an evaluation-order detail") {
    auto field = tiny_field(-2.0, 3, 1, 2, {12, 12}, 29);
    ExtractOptions a;
    a.n = 24;
    a.downsample = 4;
    a.tile_points = 500;
    ExtractOptions b = a;
    b.tile_points = 1 << 30;
    const auto ga = extract_volume(field, 0.0, a);
    const auto gb = extract_volume(field, 0.0, b);
    REQUIRE(ga.values == gb.values);  // bit-identical
}

TEST_CASE("extraction respects the memory cap") {
    const auto field = tiny_field(-2.0);
    ExtractOptions opt;
    opt.n = 2048;
    opt.memory_cap_bytes = size_t{1} << 30;
    try {
        extract_volume(field, 0.0, opt);
        FAIL("expected capacity_error");
    } catch (const capacity_error& e) {
        CHECK(std::string(e.what()).find("tile") != std::string::npos);
    }
}

TEST_CASE("extraction contract shapes: 512 -> 128 cubed") {
    ExtractOptions opt;  // defaults are the full-scale contract
    CHECK(opt.n == 512);
    CHECK(opt.gaussian_sigma == 2.0);
    CHECK(opt.n / opt.downsample == 128);
}

TEST_CASE("evaluation metrics") {
    // truth: centered sphere R = 16 voxels on a 64-cube
    phantom::GriddedField truth;
    truth.n = 64;
    truth.voxel_pitch_um = 2.0;
    truth.times_ns = {0.0};
    truth.values.assign(truth.cube_size(), 0.0f);
    auto fill_sphere = [](phantom::GriddedField& g, double cx, double r) {
        for (int z = 0; z < g.n; ++z)
            for (int y = 0; y < g.n; ++y)
                for (int x = 0; x < g.n; ++x) {
                    const double dx = x - cx, dy = y - 31.5, dz = z - 31.5;
                    g.at(0, z, y, x) = dx * dx + dy * dy + dz * dz < r * r ? 1.0f : 0.0f;
                }
    };
    fill_sphere(truth, 31.5, 16.0);

    SECTION("identical grids give IoU 1 and zero volume error") {
        const auto report = evaluate_reconstruction(truth, truth);
        CHECK(report.per_time[0].iou == 1.0);
        CHECK(report.per_time[0].volume_error_percent == 0.0);
    }
    SECTION("empty reconstruction gives IoU 0") {
        phantom::GriddedField empty = truth;
        std::fill(empty.values.begin(), empty.values.end(), 0.0f);
        const auto report = evaluate_reconstruction(empty, truth);
        CHECK(report.per_time[0].iou == 0.0);
    }
    SECTION("one-voxel shift matches the brute-force voxel-count oracle") {
        phantom::GriddedField shifted = truth;
        fill_sphere(shifted, 32.5, 16.0);
        const auto report = evaluate_reconstruction(shifted, truth);
        // independent voxel-count oracle
        int64_t inter = 0, uni = 0;
        for (int z = 0; z < 64; ++z)
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 64; ++x) {
                    const bool a = shifted.at(0, z, y, x) > 0.5f;
                    const bool b = truth.at(0, z, y, x) > 0.5f;
                    inter += a && b;
                    uni += a || b;
                }
        CHECK(report.per_time[0].iou ==
              Catch::Approx(static_cast<double>(inter) / uni).epsilon(1e-12));
    }
    SECTION("grid mismatch is a usage error") {
        phantom::GriddedField small;
        small.n = 32;
        small.times_ns = {0.0};
        small.values.assign(small.cube_size(), 0.0f);
        CHECK_THROWS_AS(evaluate_reconstruction(small, truth), usage_error);
    }
}

TEST_CASE("implicit field checkpoints round-trip") {
    auto field = tiny_field(-3.0, 4, 2, 6, {20, 20}, 41);
    const auto ckpt = field.to_checkpoint();
    const auto restored = ImplicitField::from_checkpoint(ckpt);
    CHECK(restored.levels_space == field.levels_space);
    CHECK(restored.latent_dim == field.latent_dim);
    CHECK(restored.latent.v == field.latent.v);
    CHECK(restored.norm.half_size_um == field.norm.half_size_um);
    for (size_t i = 0; i < field.trunk.weights.size(); ++i)
        REQUIRE(restored.trunk.weights[i].v == field.trunk.weights[i].v);
    // same function after the round trip
    const ImageD a = render_projection(field, 0.1, 0.0, 8, 20.0, 4);
    const ImageD b = render_projection(restored, 0.1, 0.0, 8, 20.0, 4);
    REQUIRE(a.data == b.data);
}
