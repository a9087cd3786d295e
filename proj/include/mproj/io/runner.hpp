#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "mproj/io/config.hpp"
#include "mproj/io/framestack_io.hpp"
#include "mproj/io/manifest.hpp"
#include "mproj/io/visuals.hpp"
#include "mproj/io/volume_io.hpp"
#include "mproj/recon/evaluate.hpp"
#include "mproj/recon/extract.hpp"
#include "mproj/recon/trainer.hpp"

namespace mproj::io {

struct RunContext {
    Config config;
    std::string config_text;
    std::string out_dir = "out";
    uint64_t seed = 0;
    int threads = 1;
    bool deterministic = true;
    std::ostream* err = &std::cerr;
    std::ostream* out = &std::cout;

    std::string path(const std::string& rel) const { return out_dir + "/" + rel; }
    void mkdir(const std::string& rel) const {
        std::filesystem::create_directories(path(rel));
    }
    void note(const std::string& msg) const { (*err) << "[mproj] " << msg << "\n"; }
};

namespace stage {

inline std::vector<std::string> beamlet_ids(const Config& c) {
    std::vector<std::string> ids;
    for (const auto& s : c.acq.beamline.splitters) ids.push_back(s.id);
    return ids;
}

inline void simulate(RunContext& ctx, RunManifest& manifest) {
    ctx.note("simulate: rendering the pulse train");
    Config& c = ctx.config;
    c.acq.threads = ctx.threads;
    const double duration =
        c.acq.beamline.frames_per_train * c.acq.beamline.pulse_period_ns + 1000.0;
    const phantom::DropletField droplet_field(c.collision);
    const auto field = droplet_field.as_field(0.0, duration);
    const auto result = fwd::simulate_acquisition(field, c.acq, ctx.seed);

    ctx.mkdir("sim");
    for (size_t b = 0; b < result.sample.size(); ++b) {
        const std::string id = result.sample[b].beamlet_id;
        store_framestack(ctx.path("sim/stack_" + id + ".mps"), result.sample[b]);
        store_framestack(ctx.path("sim/flats_" + id + ".mps"), result.flats[b]);
        store_framestack(ctx.path("sim/darks_" + id + ".mps"), result.darks[b]);
        for (const std::string kind : {"stack_", "flats_", "darks_"}) {
            manifest.record_output("simulate", ctx.out_dir, "sim/" + kind + id + ".mps");
            manifest.record_output("simulate", ctx.out_dir, "sim/" + kind + id + ".mps.json");
        }
    }
    (*ctx.out) << R"({"stage":"simulate","beamlets":)" << result.sample.size() << ",\"frames\":"
               << (result.sample.empty() ? 0 : result.sample[0].frames.size()) << "}\n";
}

inline void preprocess(RunContext& ctx, RunManifest& manifest) {
    ctx.note("preprocess: flat-field, denoise, register, harmonize, segment");
    Config& c = ctx.config;
    c.prep.threads = ctx.threads;
    const auto ids = beamlet_ids(c);
    if (ids.size() != 2) throw stage_error("the preprocessing pair needs exactly two beamlets");

    std::vector<fwd::FrameStack> processed;
    for (const auto& id : ids) {
        const std::string rel = "sim/stack_" + id + ".mps";
        manifest.record_input("preprocess", rel, manifest.verify_input("simulate", ctx.out_dir, rel));
        const auto stack = load_framestack(ctx.path(rel));
        const auto flats = load_framestack(ctx.path("sim/flats_" + id + ".mps"));
        const auto darks = load_framestack(ctx.path("sim/darks_" + id + ".mps"));
        ctx.note("preprocess: " + id + " flat-field");
        auto s = prep::flatfield_stack(stack, flats, &darks, c.prep);
        ctx.note("preprocess: " + id + " denoise");
        s = prep::denoise_stack(s, c.prep);
        bool do_register = false;
        for (const auto& r : c.register_views) do_register |= r == id;
        ctx.note("preprocess: " + id + (do_register ? " register" : " register (pass-through)"));
        s = prep::register_stage(s, do_register, c.prep);
        processed.push_back(std::move(s));
    }

    const auto views = prep::harmonize_views(processed[0], processed[1], c.prep);
    const fwd::FrameStack& fine = views.fine;
    const fwd::FrameStack& coarse = views.coarse;
    const auto fine_mask = prep::segment_stack(fine, c.prep);
    const auto coarse_mask = prep::segment_stack(coarse, c.prep);

    // the original (pre-crop) fine grid defines the detector-plane ROI offset
    const fwd::FrameStack& fine_src =
        processed[0].pixel_pitch_um <= processed[1].pixel_pitch_um ? processed[0] : processed[1];
    nlohmann::json meta;
    meta["roi_center_px"] = {views.roi_center_x, views.roi_center_y};
    meta["u_offset_um"] =
        (views.roi_center_x - 0.5 * (fine_src.width() - 1)) * fine_src.pixel_pitch_um;
    meta["v_offset_um"] =
        (0.5 * (fine_src.height() - 1) - views.roi_center_y) * fine_src.pixel_pitch_um;

    ctx.mkdir("prep");
    store_framestack(ctx.path("prep/view_" + fine.beamlet_id + ".mps"), fine);
    store_framestack(ctx.path("prep/view_" + coarse.beamlet_id + ".mps"), coarse);
    store_framestack(ctx.path("prep/mask_" + fine.beamlet_id + ".mps"), fine_mask);
    store_framestack(ctx.path("prep/mask_" + coarse.beamlet_id + ".mps"), coarse_mask);
    write_file_atomic(ctx.path("prep/prep_meta.json"), meta.dump(2));
    for (const auto& id : ids) {
        manifest.record_output("preprocess", ctx.out_dir, "prep/view_" + id + ".mps");
        manifest.record_output("preprocess", ctx.out_dir, "prep/view_" + id + ".mps.json");
        manifest.record_output("preprocess", ctx.out_dir, "prep/mask_" + id + ".mps");
        manifest.record_output("preprocess", ctx.out_dir, "prep/mask_" + id + ".mps.json");
    }
    manifest.record_output("preprocess", ctx.out_dir, "prep/prep_meta.json");
    (*ctx.out) << R"({"stage":"preprocess","crop":)" << c.prep.harmonize.crop_size << "}\n";
}

/// View angles relative to their bisector, in the splitter order.
inline std::vector<double> relative_view_angles_rad(const Config& c) {
    const auto beams = geom::beamlet_geometry(c.acq.beamline);
    double mean = 0.0;
    for (const auto& b : beams) mean += b.two_theta_deg;
    mean /= static_cast<double>(beams.size());
    std::vector<double> out;
    for (const auto& b : beams) out.push_back(deg_to_rad(b.two_theta_deg - mean));
    return out;
}

inline recon::FieldNormalization make_normalization(const Config& c, double u_offset_um,
                                                    double v_offset_um, double pitch_um,
                                                    const std::vector<double>& timestamps,
                                                    const std::vector<double>& angles_rad) {
    recon::FieldNormalization norm;
    norm.half_size_um = 0.5 * c.prep.harmonize.crop_size * pitch_um;
    // cube center: the world point whose detector-plane coordinate is
    // (u_offset, v_offset) in both views
    const auto u1 = recon::view_u_axis(angles_rad.front());
    const auto u2 = recon::view_u_axis(angles_rad.back());
    const double det = u1[0] * u2[2] - u2[0] * u1[2];
    if (std::abs(det) > 1e-9 && angles_rad.front() != angles_rad.back()) {
        const double px = (u_offset_um * u2[2] - u_offset_um * u1[2]) / det;
        const double pz = (u1[0] * u_offset_um - u2[0] * u_offset_um) / det;
        norm.center_um = {px, v_offset_um, pz};
    } else {
        norm.center_um = {u_offset_um * u1[0], v_offset_um, u_offset_um * u1[2]};
    }
    const double t0 = timestamps.front(), t1 = timestamps.back();
    norm.t_center_ns = 0.5 * (t0 + t1);
    norm.t_half_ns = std::max(0.5 * (t1 - t0), 1.0);
    return norm;
}

inline void train(RunContext& ctx, RunManifest& manifest) {
    ctx.note("train: fitting the implicit representation");
    Config& c = ctx.config;
    c.train.threads = ctx.threads;
    c.train.seed = ctx.seed;
    const auto ids = beamlet_ids(c);
    const auto angles = relative_view_angles_rad(c);

    nlohmann::json meta = nlohmann::json::parse(
        read_file(ctx.path("prep/prep_meta.json")));
    const double u_off = meta.at("u_offset_um").get<double>();
    const double v_off = meta.at("v_offset_um").get<double>();

    std::vector<recon::TrainView> views;
    double pitch = 3.2;
    std::vector<double> timestamps;
    for (size_t i = 0; i < ids.size(); ++i) {
        const std::string rel = "prep/view_" + ids[i] + ".mps";
        manifest.record_input("train", rel, manifest.verify_input("preprocess", ctx.out_dir, rel));
        const auto stack = load_framestack(ctx.path(rel));
        const auto masks = load_framestack(ctx.path("prep/mask_" + ids[i] + ".mps"));
        recon::TrainView view;
        view.angle_rad = angles[i];
        view.pixel_pitch_um = stack.pixel_pitch_um;
        view.u_offset_um = u_off;
        view.v_offset_um = v_off;
        view.timestamps_ns = stack.timestamps_ns;
        for (size_t f = 0; f < stack.frames.size(); ++f) {
            view.frames.push_back(stack.decode_frame(f));
            view.masks.push_back(masks.decode_frame(f));
        }
        pitch = stack.pixel_pitch_um;
        timestamps = stack.timestamps_ns;
        views.push_back(std::move(view));
    }

    const auto norm = make_normalization(c, u_off, v_off, pitch, timestamps, angles);
    const auto result = recon::train_reconstruction(views, norm, c.train);
    if (result.aborted) ctx.note("train: " + result.abort_reason);

    ctx.mkdir("train");
    save_checkpoint(ctx.path("train/field.mpck"), result.field.to_checkpoint());
    std::string log;
    for (const auto& r : result.log) {
        nlohmann::json j{{"epoch", r.epoch}, {"step", r.step},     {"mse", r.mse},
                         {"d_loss", r.d_loss}, {"g_loss", r.g_loss}, {"wall_ms", r.wall_ms}};
        log += j.dump() + "\n";
    }
    write_file_atomic(ctx.path("train/log.jsonl"), log);
    manifest.record_output("train", ctx.out_dir, "train/field.mpck");
    manifest.record_diagnostic("train", "train/log.jsonl");
    (*ctx.out) << R"({"stage":"train","steps":)" << result.log.size() << ",\"final_mse\":"
               << (result.epoch_mse.empty() ? 0.0 : result.epoch_mse.back())
               << ",\"aborted\":" << (result.aborted ? "true" : "false") << "}\n";
}

/// Time points to extract: evenly spaced frame timestamps (count = 0: all).
inline std::vector<double> extraction_times(const std::vector<double>& timestamps, int count) {
    if (count <= 0 || count >= static_cast<int>(timestamps.size())) return timestamps;
    std::vector<double> out;
    for (int i = 0; i < count; ++i) {
        const size_t idx = count == 1 ? 0
                                      : static_cast<size_t>(std::llround(
                                            static_cast<double>(i) * (timestamps.size() - 1) /
                                            (count - 1)));
        out.push_back(timestamps[idx]);
    }
    return out;
}

inline void extract(RunContext& ctx, RunManifest& manifest) {
    ctx.note("extract: sampling volume grids");
    Config& c = ctx.config;
    const std::string rel = "train/field.mpck";
    manifest.record_input("extract", rel, manifest.verify_input("train", ctx.out_dir, rel));
    const auto field = recon::ImplicitField::from_checkpoint(load_checkpoint(ctx.path(rel)));

    const auto ids = beamlet_ids(c);
    const auto stack = load_framestack(ctx.path("prep/view_" + ids[0] + ".mps"));
    const auto times = extraction_times(stack.timestamps_ns, c.io.extract_count);

    recon::ExtractOptions opt;
    opt.n = c.io.extract_n;
    opt.gaussian_sigma = c.io.extract_sigma;
    opt.downsample = c.io.extract_downsample;
    opt.tile_points = c.io.volume_tile_points;
    opt.memory_cap_bytes = c.io.memory_cap_mb << 20;
    opt.threads = ctx.threads;

    ctx.mkdir("vols");
    nlohmann::json index = nlohmann::json::array();
    for (size_t i = 0; i < times.size(); ++i) {
        const auto grid = recon::extract_volume(field, times[i], opt);
        char name[64];
        std::snprintf(name, sizeof(name), "vols/vol_%04zu.mpvl", i);
        store_volume(ctx.path(name), grid);
        manifest.record_output("extract", ctx.out_dir, name);
        index.push_back({{"path", name}, {"t_ns", times[i]}});
        ctx.note("extract: wrote " + std::string(name));
    }
    write_file_atomic(ctx.path("vols/index.json"), index.dump(2));
    manifest.record_output("extract", ctx.out_dir, "vols/index.json");
    (*ctx.out) << R"({"stage":"extract","volumes":)" << times.size() << "}\n";
}

inline void evaluate(RunContext& ctx, RunManifest& manifest) {
    ctx.note("evaluate: comparing against the phantom");
    Config& c = ctx.config;
    const std::string index_rel = "vols/index.json";
    manifest.record_input("evaluate", index_rel,
                          manifest.verify_input("extract", ctx.out_dir, index_rel));
    const auto index = nlohmann::json::parse(read_file(ctx.path(index_rel)));
    const auto field_ckpt = recon::ImplicitField::from_checkpoint(
        load_checkpoint(ctx.path("train/field.mpck")));
    const phantom::DropletField truth_field(c.collision);
    const auto angles = relative_view_angles_rad(c);
    const auto ids = beamlet_ids(c);

    std::vector<fwd::FrameStack> measured;
    for (const auto& id : ids) measured.push_back(load_framestack(ctx.path("prep/view_" + id + ".mps")));

    nlohmann::json report = nlohmann::json::array();
    double iou_sum = 0.0, iou_min = 1.0;
    for (const auto& entry : index) {
        const auto grid = load_volume(ctx.path(entry.at("path").get<std::string>()));
        const double t = entry.at("t_ns").get<double>();
        // rasterized truth on the same grid
        const auto truth = phantom::rasterize_phantom(truth_field, grid.n, grid.voxel_pitch_um, {t},
                                                      grid.center_um, size_t{8} << 30, ctx.threads);
        const auto metrics = recon::evaluate_reconstruction(grid, truth);
        double heldout = 0.0;
        {
            // held-out mid-angle: render the reconstruction and the truth at
            // the bisector and compare
            const int size = c.prep.harmonize.crop_size;
            const double pitch = measured[0].pixel_pitch_um;
            const ImageD recon_img = recon::render_projection(
                field_ckpt, 0.0, t, size, pitch, 2 * c.train.samples_per_ray, ctx.threads,
                field_ckpt.norm.center_um.x, field_ckpt.norm.center_um.y);
            geom::BeamletGeometry mid;
            mid.direction = {0, 0, 1};
            mid.frame.axis_u = {1, 0, 0};
            mid.frame.axis_v = {0, 1, 0};
            mid.flux_factor = 1.0;
            fwd::DetectorModel det;
            det.height = size;
            det.width = size;
            det.pixel_pitch_um = pitch;
            fwd::ShotRecord shot;
            shot.intensity_scale = {1.0};
            shot.beam_displacement_um = {{-field_ckpt.norm.center_um.x, -field_ckpt.norm.center_um.y}};
            const auto truth_full = truth_field.as_field(t - 1.0, t + 1.0);
            const ImageD truth_img = fwd::project_view(truth_full, mid, det, t, shot, 0);
            heldout = recon::psnr_db(recon_img, truth_img);
        }
        double measured_psnr = 0.0;
        {
            // closest measured frame at the first view angle
            const auto& stack = measured[0];
            size_t best = 0;
            for (size_t f = 1; f < stack.timestamps_ns.size(); ++f)
                if (std::abs(stack.timestamps_ns[f] - t) <
                    std::abs(stack.timestamps_ns[best] - t))
                    best = f;
            const ImageD frame = stack.decode_frame(best);
            const ImageD render = recon::render_projection(
                field_ckpt, angles[0], stack.timestamps_ns[best], frame.width,
                stack.pixel_pitch_um, 2 * c.train.samples_per_ray, ctx.threads,
                nlohmann::json::parse(read_file(ctx.path("prep/prep_meta.json")))
                    .at("u_offset_um")
                    .get<double>(),
                nlohmann::json::parse(read_file(ctx.path("prep/prep_meta.json")))
                    .at("v_offset_um")
                    .get<double>());
            measured_psnr = recon::psnr_db(render, frame);
        }
        nlohmann::json j;
        j["t_ns"] = t;
        j["iou"] = metrics.per_time[0].iou;
        j["volume_error_percent"] = metrics.per_time[0].volume_error_percent;
        j["measured_view_psnr_db"] = measured_psnr;
        j["heldout_view_psnr_db"] = heldout;
        report.push_back(j);
        iou_sum += metrics.per_time[0].iou;
        iou_min = std::min(iou_min, metrics.per_time[0].iou);
    }
    nlohmann::json summary;
    summary["per_time"] = report;
    summary["mean_iou"] = report.empty() ? 0.0 : iou_sum / report.size();
    summary["min_iou"] = report.empty() ? 0.0 : iou_min;
    ctx.mkdir("eval");
    write_file_atomic(ctx.path("eval/metrics.json"), summary.dump(2) + "\n");
    manifest.record_output("evaluate", ctx.out_dir, "eval/metrics.json");
    (*ctx.out) << R"({"stage":"evaluate","mean_iou":)" << summary["mean_iou"].dump() << "}\n";
}

inline void export_stage(RunContext& ctx, RunManifest& manifest) {
    ctx.note("export: writing visual products");
    Config& c = ctx.config;
    const std::string index_rel = "vols/index.json";
    manifest.record_input("export", index_rel,
                          manifest.verify_input("extract", ctx.out_dir, index_rel));
    const auto index = nlohmann::json::parse(read_file(ctx.path(index_rel)));
    std::vector<phantom::GriddedField> volumes;
    std::vector<double> times;
    for (const auto& entry : index) {
        volumes.push_back(load_volume(ctx.path(entry.at("path").get<std::string>())));
        times.push_back(entry.at("t_ns").get<double>());
    }

    ExportOptions opt;
    opt.modes = c.io.export_modes;
    opt.mip_axis = c.io.mip_axis;
    opt.iso_level = c.io.iso_threshold_per_um > 0 ? c.io.iso_threshold_per_um
                                                  : 0.5 * c.collision.mu_water_per_um;

    // montage panels: measured views and re-renders at the measured angles
    if (std::filesystem::exists(ctx.path("train/field.mpck"))) {
        const auto field = recon::ImplicitField::from_checkpoint(
            load_checkpoint(ctx.path("train/field.mpck")));
        const auto ids = beamlet_ids(c);
        const auto angles = relative_view_angles_rad(c);
        std::vector<fwd::FrameStack> measured;
        for (const auto& id : ids)
            measured.push_back(load_framestack(ctx.path("prep/view_" + id + ".mps")));
        const auto meta = nlohmann::json::parse(read_file(ctx.path("prep/prep_meta.json")));
        const double u_off = meta.at("u_offset_um").get<double>();
        const double v_off = meta.at("v_offset_um").get<double>();
        for (double t : times) {
            std::array<ImageD, 4> panels;
            for (int v = 0; v < 2; ++v) {
                const auto& stack = measured[v];
                size_t best = 0;
                for (size_t f = 1; f < stack.timestamps_ns.size(); ++f)
                    if (std::abs(stack.timestamps_ns[f] - t) <
                        std::abs(stack.timestamps_ns[best] - t))
                        best = f;
                panels[v] = stack.decode_frame(best);
                panels[2 + v] = recon::render_projection(field, angles[v], t, panels[v].width,
                                                         stack.pixel_pitch_um,
                                                         c.train.samples_per_ray, ctx.threads,
                                                         u_off, v_off);
            }
            opt.montage_panels.push_back(panels);
        }
    }

    ctx.mkdir("export");
    const auto written = export_visuals(volumes, ctx.path("export"), opt);
    for (const auto& name : written) manifest.record_output("export", ctx.out_dir, "export/" + name);
    (*ctx.out) << R"({"stage":"export","files":)" << written.size() << "}\n";
}

}  // namespace stage

/// Entry point shared by the CLI binary and the tests. argv excludes the
/// program name. Exit codes: 0 success, 1 stage failure, 2 usage,
/// 3 config/format error.
inline int run_command(const std::vector<std::string>& argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
    CLI::App app{"desk-scale multi-projection imaging laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    uint64_t seed = 0;
    int threads = 1;
    bool deterministic = false;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "configuration file");
    app.add_option("--seed", seed, "master random seed");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--threads", threads, "worker threads");
    app.add_flag("--deterministic", deterministic, "force the single-threaded deterministic mode");
    app.add_option("--set", overrides, "override a config key: section.key=value");

    const std::vector<std::string> names = {"simulate", "preprocess", "train", "extract",
                                            "evaluate", "export", "all"};
    for (const auto& n : names) app.add_subcommand(n);

    // CLI11 wants argc/argv ordering
    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        RunContext ctx;
        ctx.out = &out;
        ctx.err = &err;
        ctx.out_dir = out_dir;
        ctx.seed = seed;
        ctx.threads = deterministic ? 1 : std::max(1, threads);
        ctx.deterministic = deterministic;

        std::string text;
        if (!config_path.empty()) text = read_file(config_path);
        for (const auto& o : overrides) apply_override(text, o);
        ctx.config_text = text;
        ctx.config = parse_config_text(text);

        std::filesystem::create_directories(ctx.out_dir);
        RunManifest manifest;
        const std::string manifest_path = ctx.out_dir + "/" + RunManifest::filename;
        const std::string sub = app.get_subcommands().front()->get_name();
        if (sub != "simulate" && sub != "all" && std::filesystem::exists(manifest_path))
            manifest = RunManifest::load(ctx.out_dir);
        manifest.set_run(ctx.config_text, ctx.seed);

        if (sub == "simulate" || sub == "all") stage::simulate(ctx, manifest);
        if (sub == "preprocess" || sub == "all") stage::preprocess(ctx, manifest);
        if (sub == "train" || sub == "all") stage::train(ctx, manifest);
        if (sub == "extract" || sub == "all") stage::extract(ctx, manifest);
        if (sub == "evaluate" || sub == "all") stage::evaluate(ctx, manifest);
        if (sub == "export" || sub == "all") stage::export_stage(ctx, manifest);
        manifest.save(ctx.out_dir);
        return 0;
    } catch (const config_error& e) {
        err << "config error: " << e.what() << "\n";
        return 3;
    } catch (const format_error& e) {
        err << "format error: " << e.what() << "\n";
        return 3;
    } catch (const usage_error& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace mproj::io
