#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "mproj/ad/adam.hpp"
#include "mproj/forward/detector.hpp"
#include "mproj/recon/implicit_field.hpp"
#include "mproj/recon/losses.hpp"
#include "mproj/recon/patches.hpp"
#include "mproj/recon/render.hpp"
#include "mproj/util/errors.hpp"
#include "mproj/util/rng.hpp"

namespace mproj::recon {

struct TrainConfig {
    int batch_size = 6;
    double lr = 1e-4;            // all networks
    int warmup_epochs = 5;       // MSE-only epochs before the adversarial loss
    int epochs = 50;
    int rays_per_view = 256;     // MSE rays per batch element per step
    int samples_per_ray = 16;
    int levels_space = 10;
    int levels_time = 6;
    int latent_dim = 8;
    std::vector<int64_t> trunk_hidden = {128, 128, 128, 128, 128, 128, 128, 128};
    std::vector<int64_t> disc_channels = {16, 32, 64, 64};
    double gan_weight = 0.05;        // generator loss = mse + gan_weight * g_loss
    double mask_bg_weight = 0.2;     // MSE weight outside the droplet mask
    double query_angle_half_range_deg = 90.0;  // fake views about the bisector
    double logit_cap = 30.0;
    PatchSampleOptions patch;
    double output_bias = -8.0;
    uint64_t seed = 0;
    int threads = 1;

    void validate() const {
        if (batch_size < 1 || epochs < 0 || warmup_epochs < 0 || rays_per_view < 1 ||
            samples_per_ray < 1 || levels_space < 1 || levels_time < 1 || latent_dim < 0)
            throw config_error("train: all counts must be >= 1 (latent_dim >= 0)");
        if (!(lr > 0.0)) throw config_error("train.lr must be positive");
    }
};

/// One measured view: harmonized transmission frames at a known in-plane
/// angle (relative to the reconstruction z axis, i.e. the view bisector).
struct TrainView {
    std::vector<ImageD> frames;
    std::vector<ImageD> masks;  // optional droplet masks, same count as frames
    std::vector<double> timestamps_ns;
    double angle_rad = 0.0;
    double pixel_pitch_um = 3.2;
    double u_offset_um = 0.0;  // ROI offset of the crop in the detector plane
    double v_offset_um = 0.0;
};

struct StepRecord {
    int epoch = 0;
    int step = 0;
    double mse = 0.0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    ImplicitField field;
    ad::ConvNetSpec disc_spec;
    ad::ConvNetParams disc;
    std::vector<StepRecord> log;
    std::vector<double> epoch_mse;  // mean measured-view MSE per epoch
    bool aborted = false;           // divergence: field holds the last good state
    std::string abort_reason;
};

namespace detail {

struct ParamSet {
    std::vector<ad::Tensor*> tensors;

    std::vector<ad::Tensor> values() const {
        std::vector<ad::Tensor> out;
        out.reserve(tensors.size());
        for (const auto* t : tensors) out.push_back(*t);
        return out;
    }
    void assign(const std::vector<ad::Tensor>& values) {
        for (size_t i = 0; i < tensors.size(); ++i) *tensors[i] = values[i];
    }
};

inline ParamSet generator_params(ImplicitField& field) {
    ParamSet set;
    for (auto& w : field.trunk.weights) set.tensors.push_back(&w);
    for (auto& b : field.trunk.biases) set.tensors.push_back(&b);
    if (field.latent_dim > 0) set.tensors.push_back(&field.latent);
    return set;
}

inline ParamSet discriminator_params(ad::ConvNetParams& disc) {
    ParamSet set;
    for (auto& w : disc.conv_w) set.tensors.push_back(&w);
    for (auto& b : disc.conv_b) set.tensors.push_back(&b);
    set.tensors.push_back(&disc.head_w);
    set.tensors.push_back(&disc.head_b);
    return set;
}

/// Insert generator parameters into a graph (trainable) and mirror the
/// node layout of ParamSet for gradient collection.
struct GenNodes {
    ad::MlpNodes trunk;
    int latent = -1;
    std::vector<int> flat;  // same order as generator_params
};

inline GenNodes add_generator_nodes(ad::Graph& g, const ImplicitField& field) {
    GenNodes n;
    n.trunk = ad::mlp_nodes(g, field.trunk, true);
    n.latent = field.latent_dim > 0 ? g.input(field.latent, true) : g.constant(field.latent);
    for (int id : n.trunk.weights) n.flat.push_back(id);
    for (int id : n.trunk.biases) n.flat.push_back(id);
    if (field.latent_dim > 0) n.flat.push_back(n.latent);
    return n;
}

struct DiscNodes {
    ad::ConvNetNodes nodes;
    std::vector<int> flat;
};

inline DiscNodes add_discriminator_nodes(ad::Graph& g, const ad::ConvNetParams& disc) {
    DiscNodes n;
    n.nodes = ad::convnet_nodes(g, disc, true);
    for (int id : n.nodes.conv_w) n.flat.push_back(id);
    for (int id : n.nodes.conv_b) n.flat.push_back(id);
    n.flat.push_back(n.nodes.head_w);
    n.flat.push_back(n.nodes.head_b);
    return n;
}

inline std::vector<ad::Tensor> collect_grads(const ad::Graph& g, const std::vector<int>& nodes) {
    std::vector<ad::Tensor> out;
    out.reserve(nodes.size());
    for (int id : nodes) out.push_back(g.grad(id));
    return out;
}

}  // namespace detail

/// Trains the implicit field from the measured views: MSE-only warmup, then
/// simultaneous GAN updates where fake patches are rendered at random
/// in-plane angles and real patches come from the measured images. The
/// droplet mask weights the MSE toward the droplets. Divergence restores the
/// last epoch checkpoint and aborts.
inline TrainResult train_reconstruction(const std::vector<TrainView>& views,
                                        const FieldNormalization& norm, const TrainConfig& config) {
    config.validate();
    if (views.empty()) throw usage_error("training needs at least one view");
    for (const auto& v : views) {
        if (v.frames.empty()) throw usage_error("every view needs at least one frame");
        if (v.frames.size() != v.timestamps_ns.size())
            throw usage_error("view frames/timestamps length mismatch");
        if (!v.masks.empty() && v.masks.size() != v.frames.size())
            throw usage_error("view masks must match the frame count");
        if (v.frames.front().width < PatchSpec::size && config.epochs > config.warmup_epochs)
            throw usage_error("frames smaller than a 32x32 patch cannot feed the discriminator");
    }

    TrainResult result;
    Rng init_rng = Rng::stream(config.seed, {0x1217u});
    result.field = ImplicitField::create(config.levels_space, config.levels_time, config.latent_dim,
                                         config.trunk_hidden, norm, init_rng, config.output_bias);
    result.disc_spec.channels = config.disc_channels;
    result.disc = ad::ConvNetParams::init(result.disc_spec, init_rng);

    auto gen_params = detail::generator_params(result.field);
    auto disc_params = detail::discriminator_params(result.disc);
    ad::AdamState gen_adam, disc_adam;
    gen_adam.lr = config.lr;
    disc_adam.lr = config.lr;

    // (view, frame) pairs enumerated once; epochs shuffle them
    std::vector<std::pair<int, int>> items;
    for (size_t v = 0; v < views.size(); ++v)
        for (size_t f = 0; f < views[v].frames.size(); ++f)
            items.push_back({static_cast<int>(v), static_cast<int>(f)});
    const int steps_per_epoch =
        static_cast<int>((items.size() + config.batch_size - 1) / config.batch_size);

    std::vector<ad::Tensor> good_gen = gen_params.values();
    std::vector<ad::Tensor> good_disc = disc_params.values();

    const auto t_start = std::chrono::steady_clock::now();
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const bool adversarial = epoch > config.warmup_epochs;
        // deterministic epoch shuffle
        std::vector<std::pair<int, int>> order = items;
        Rng shuffle_rng = Rng::stream(config.seed, {0x0e0eu, static_cast<uint64_t>(epoch)});
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

        double epoch_mse_sum = 0.0;
        int epoch_mse_count = 0;
        try {
            for (int step = 0; step < steps_per_epoch; ++step) {
                const auto t_step = std::chrono::steady_clock::now();
                Rng rng = Rng::stream(config.seed,
                                      {0x57e9u, static_cast<uint64_t>(epoch), static_cast<uint64_t>(step)});

                ad::Graph g;
                g.threads = config.threads;
                auto gen_nodes = detail::add_generator_nodes(g, result.field);

                // ---- measured-view MSE over the batch ----
                std::vector<int> view_preds;
                std::vector<ad::Tensor> view_targets, view_weights;
                double weight_total = 0.0;
                for (int b = 0; b < config.batch_size; ++b) {
                    const auto [vi, fi] = order[(step * config.batch_size + b) % order.size()];
                    const TrainView& view = views[vi];
                    const ImageD& target = view.frames[fi];
                    const ImageD* mask = view.masks.empty() ? nullptr : &view.masks[fi];

                    std::vector<std::array<double, 2>> pixels(config.rays_per_view);
                    ad::Tensor tgt({static_cast<int64_t>(config.rays_per_view), 1});
                    ad::Tensor wgt({static_cast<int64_t>(config.rays_per_view), 1});
                    for (int r = 0; r < config.rays_per_view; ++r) {
                        const int px = static_cast<int>(rng.uniform_index(target.width));
                        const int py = static_cast<int>(rng.uniform_index(target.height));
                        pixels[r] = {static_cast<double>(px), static_cast<double>(py)};
                        tgt.v[r] = target(py, px);
                        const double w =
                            mask ? ((*mask)(py, px) > 0.5 ? 1.0 : config.mask_bg_weight) : 1.0;
                        wgt.v[r] = w;
                        weight_total += w;
                    }
                    const RaySet rays =
                        make_rays(norm, view.angle_rad, view.timestamps_ns[fi], pixels,
                                  target.width, view.pixel_pitch_um, view.u_offset_um,
                                  view.v_offset_um);
                    view_preds.push_back(render_rays_on_graph(g, result.field, gen_nodes.trunk,
                                                              gen_nodes.latent, rays,
                                                              config.samples_per_ray, &rng));
                    view_targets.push_back(std::move(tgt));
                    view_weights.push_back(std::move(wgt));
                }
                int sq_sum = -1;
                for (size_t b = 0; b < view_preds.size(); ++b) {
                    const int diff = g.sub(view_preds[b], g.constant(view_targets[b]));
                    const int wsq = g.mul(g.mul(diff, diff), g.constant(view_weights[b]));
                    const int s = g.sum(wsq);
                    sq_sum = sq_sum < 0 ? s : g.add(sq_sum, s);
                }
                const int mse_node = g.scale(sq_sum, 1.0 / std::max(weight_total, 1e-12));

                // ---- adversarial part ----
                int g_total = mse_node;
                AdversarialLossNodes gan{};
                detail::DiscNodes disc_nodes;
                if (adversarial) {
                    disc_nodes = detail::add_discriminator_nodes(g, result.disc);
                    // real patches from measured frames
                    ad::Tensor real({static_cast<int64_t>(config.batch_size), 1, PatchSpec::size,
                                     PatchSpec::size});
                    size_t ridx = 0;
                    for (int b = 0; b < config.batch_size; ++b) {
                        const auto [vi, fi] = order[rng.uniform_index(order.size())];
                        const PatchSpec spec = random_patch_spec(
                            rng, views[vi].frames[fi].width, views[vi].frames[fi].height, config.patch);
                        const ImageD patch = sample_patch(views[vi].frames[fi], spec);
                        for (double val : patch.data) real.v[ridx++] = val;
                    }
                    // fake patches rendered at random angles/times
                    std::vector<int> fake_parts;
                    for (int b = 0; b < config.batch_size; ++b) {
                        const double angle =
                            deg_to_rad(rng.uniform(-config.query_angle_half_range_deg,
                                                   config.query_angle_half_range_deg));
                        const auto [vi, fi] = order[rng.uniform_index(order.size())];
                        const TrainView& view = views[vi];
                        const PatchSpec spec = random_patch_spec(rng, view.frames[fi].width,
                                                                 view.frames[fi].height, config.patch);
                        std::vector<std::array<double, 2>> pixels;
                        pixels.reserve(PatchSpec::size * PatchSpec::size);
                        for (int i = 0; i < PatchSpec::size; ++i)
                            for (int j = 0; j < PatchSpec::size; ++j)
                                pixels.push_back(spec.grid_position(i, j));
                        const RaySet rays = make_rays(norm, angle, view.timestamps_ns[fi], pixels,
                                                      view.frames[fi].width, view.pixel_pitch_um,
                                                      view.u_offset_um, view.v_offset_um);
                        fake_parts.push_back(render_rays_on_graph(g, result.field, gen_nodes.trunk,
                                                                  gen_nodes.latent, rays,
                                                                  config.samples_per_ray, &rng));
                    }
                    // each part is [1024, 1]; lay them out batch-major and fold to NCHW
                    int fake2d =
                        g.reshape(fake_parts[0], {1, PatchSpec::size * PatchSpec::size});
                    for (size_t p = 1; p < fake_parts.size(); ++p)
                        fake2d = g.concat_cols(
                            fake2d, g.reshape(fake_parts[p], {1, PatchSpec::size * PatchSpec::size}));
                    const int fake4d = g.reshape(fake2d, {config.batch_size, 1, PatchSpec::size,
                                                          PatchSpec::size});
                    const int real_node = g.constant(std::move(real));
                    const int real4d = g.reshape(real_node, {config.batch_size, 1, PatchSpec::size,
                                                             PatchSpec::size});
                    gan = adversarial_losses_on_patches(g, result.disc_spec, disc_nodes.nodes, real4d,
                                                        fake4d, config.logit_cap);
                    g_total = g.add(mse_node, g.scale(gan.g_loss, config.gan_weight));
                }

                // ---- gradients and simultaneous updates ----
                StepRecord rec;
                rec.epoch = epoch;
                rec.step = step;
                rec.mse = g.value(mse_node).v[0];
                if (adversarial) {
                    rec.d_loss = g.value(gan.d_loss).v[0];
                    rec.g_loss = g.value(gan.g_loss).v[0];
                    g.backward(gan.d_loss);
                    const auto d_grads = detail::collect_grads(g, disc_nodes.flat);
                    g.backward(g_total);
                    const auto g_grads = detail::collect_grads(g, gen_nodes.flat);
                    auto gvals = gen_params.values();
                    auto dvals = disc_params.values();
                    ad::adam_step(gvals, g_grads, gen_adam);
                    ad::adam_step(dvals, d_grads, disc_adam);
                    gen_params.assign(gvals);
                    disc_params.assign(dvals);
                } else {
                    g.backward(g_total);
                    const auto g_grads = detail::collect_grads(g, gen_nodes.flat);
                    auto gvals = gen_params.values();
                    ad::adam_step(gvals, g_grads, gen_adam);
                    gen_params.assign(gvals);
                }
                epoch_mse_sum += rec.mse;
                epoch_mse_count += 1;
                rec.wall_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t_step)
                                  .count();
                result.log.push_back(rec);
            }
        } catch (const stage_error& e) {
            gen_params.assign(good_gen);
            disc_params.assign(good_disc);
            result.aborted = true;
            result.abort_reason = std::string("training diverged in epoch ") +
                                  std::to_string(epoch) + ": " + e.what() +
                                  "; restored the last epoch checkpoint";
            break;
        }
        result.epoch_mse.push_back(epoch_mse_count ? epoch_mse_sum / epoch_mse_count : 0.0);
        good_gen = gen_params.values();
        good_disc = disc_params.values();
    }
    (void)t_start;
    return result;
}

}  // namespace mproj::recon
