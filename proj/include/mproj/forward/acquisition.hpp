#pragma once

#include <string>
#include <vector>

#include "mproj/forward/detector.hpp"
#include "mproj/forward/projector.hpp"
#include "mproj/forward/shot_model.hpp"
#include "mproj/geometry/geometry.hpp"
#include "mproj/phantom/field4d.hpp"
#include "mproj/util/parallel.hpp"

namespace mproj::fwd {

struct AcquisitionConfig {
    geom::BeamlineConfig beamline = geom::default_beamline();
    DetectorModel detector;
    SaseParams sase;
    ProjectorOptions projector;
    int n_flats = 64;
    int n_darks = 32;
    int threads = 1;
};

struct AcquisitionResult {
    std::vector<FrameStack> sample;  // one per beamlet, frame 0 dropped
    std::vector<FrameStack> flats;   // one per beamlet
    std::vector<FrameStack> darks;   // one per beamlet
};

namespace detail {

/// Fixed-pattern gain times a jittering Gaussian beam envelope. The same
/// displacement that shifts the sample image shifts the envelope, which is
/// what the PCA flat-field stage has to undo.
inline ImageD illumination(const DetectorModel& det, const std::array<double, 2>& disp_um,
                           uint64_t beamlet_key) {
    ImageD gain(det.height, det.width, 1.0);
    if (det.prnu_sigma > 0.0) {
        Rng rng = Rng::stream(det.prnu_seed, {0x9a1au, beamlet_key});
        for (auto& g : gain.data) g = std::max(0.0, 1.0 + det.prnu_sigma * rng.normal());
    }
    if (det.illum_sigma_frac > 0.0) {
        const double cu = 0.5 * (det.width - 1), cv = 0.5 * (det.height - 1);
        const double sigma_um =
            det.illum_sigma_frac * 0.5 * std::min(det.height, det.width) * det.pixel_pitch_um;
        const double inv2s2 = 1.0 / (2.0 * sigma_um * sigma_um);
        for (int r = 0; r < det.height; ++r)
            for (int c = 0; c < det.width; ++c) {
                const double u = (c - cu) * det.pixel_pitch_um - disp_um[0];
                const double v = (cv - r) * det.pixel_pitch_um - disp_um[1];
                gain(r, c) *= std::exp(-(u * u + v * v) * inv2s2);
            }
    }
    return gain;
}

inline ImageD apply_gain(const ImageD& img, const ImageD& gain) {
    ImageD out = img;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= gain.data[i];
    return out;
}

}  // namespace detail

/// Renders the full MHz train for every beamlet: pulse k fires at
/// k * pulse_period while camera frame k opens at k * camera_frame_period, so
/// the frame-to-pulse offset grows by the period difference every frame.
/// Frame 0 contains amplified electronic noise and is dropped, leaving
/// frames_per_train - 1 usable frames. Flats repeat the shot model with an
/// empty field; darks are beam-off captures.
inline AcquisitionResult simulate_acquisition(const phantom::ScalarField4D& field,
                                              const AcquisitionConfig& config, uint64_t seed) {
    config.beamline.validate();
    config.detector.validate();
    const auto beams = geom::beamlet_geometry(config.beamline);
    if (beams.empty()) throw config_error("acquisition needs at least one splitter");
    const int n_pulses = config.beamline.frames_per_train;
    const double drift_ns = config.beamline.camera_frame_period_ns - config.beamline.pulse_period_ns;

    const auto shots = sase_shot_model(seed, n_pulses, config.sase, static_cast<int>(beams.size()),
                                       config.beamline.pulse_period_ns);

    AcquisitionResult result;
    for (size_t b = 0; b < beams.size(); ++b) {
        DetectorModel det = config.detector;
        det.pixel_pitch_um = beams[b].pixel_pitch_um;

        FrameStack stack;
        stack.beamlet_id = beams[b].id;
        stack.pixel_pitch_um = det.pixel_pitch_um;
        stack.frame_to_pulse_drift_ns = drift_ns;
        stack.cumulative_drift_ns = (n_pulses - 1) * drift_ns;
        stack.stages = {"raw"};
        stack.frames.resize(n_pulses);
        stack.timestamps_ns.resize(n_pulses);
        stack.shots.resize(n_pulses);

        parallel_for(n_pulses, config.threads, [&](int64_t k) {
            const ShotRecord& shot = shots[k];
            ImageD img = project_view(field, beams[b], det, shot.timestamp_ns, shot,
                                      static_cast<int>(b), config.projector);
            img = detail::apply_gain(img, detail::illumination(det, shot.beam_displacement_um[b],
                                                               static_cast<uint64_t>(b)));
            if (det.blur_sigma_px > 0.0)
                img = gaussian_blur(img, det.blur_sigma_px);
            Rng rng = Rng::stream(seed, {0xca11u, static_cast<uint64_t>(b), static_cast<uint64_t>(k)});
            stack.frames[k] = detector_capture(img, det, static_cast<int>(k), rng);
            stack.timestamps_ns[k] = shot.timestamp_ns;
            stack.shots[k] = shot;
        });

        // drop the unusable first frame
        stack.frames.erase(stack.frames.begin());
        stack.timestamps_ns.erase(stack.timestamps_ns.begin());
        stack.shots.erase(stack.shots.begin());
        stack.validate();
        result.sample.push_back(std::move(stack));

        // flats: same shot statistics, no sample in the beam
        const auto flat_shots = sase_shot_model(seed ^ 0xf1a75ULL, config.n_flats, config.sase,
                                                static_cast<int>(beams.size()),
                                                config.beamline.pulse_period_ns);
        FrameStack flats;
        flats.beamlet_id = beams[b].id;
        flats.pixel_pitch_um = det.pixel_pitch_um;
        flats.stages = {"raw"};
        flats.frames.resize(config.n_flats);
        flats.timestamps_ns.resize(config.n_flats);
        flats.shots.resize(config.n_flats);
        const auto empty = phantom::ScalarField4D::empty();
        parallel_for(config.n_flats, config.threads, [&](int64_t k) {
            const ShotRecord& shot = flat_shots[k];
            ImageD img = project_view(empty, beams[b], det, shot.timestamp_ns, shot,
                                      static_cast<int>(b), config.projector);
            img = detail::apply_gain(img, detail::illumination(det, shot.beam_displacement_um[b],
                                                               static_cast<uint64_t>(b)));
            Rng rng = Rng::stream(seed, {0xf1a7u, static_cast<uint64_t>(b), static_cast<uint64_t>(k)});
            flats.frames[k] = detector_capture(img, det, 1, rng);
            flats.timestamps_ns[k] = shot.timestamp_ns;
            flats.shots[k] = shot;
        });
        flats.validate();
        result.flats.push_back(std::move(flats));

        // darks: beam off
        FrameStack darks;
        darks.beamlet_id = beams[b].id;
        darks.pixel_pitch_um = det.pixel_pitch_um;
        darks.stages = {"raw"};
        darks.frames.resize(config.n_darks);
        darks.timestamps_ns.resize(config.n_darks);
        darks.shots.resize(config.n_darks);
        const ImageD zero(det.height, det.width, 0.0);
        parallel_for(config.n_darks, config.threads, [&](int64_t k) {
            Rng rng = Rng::stream(seed, {0xda2bu, static_cast<uint64_t>(b), static_cast<uint64_t>(k)});
            darks.frames[k] = detector_capture(zero, det, 1, rng);
            darks.timestamps_ns[k] = k * config.beamline.pulse_period_ns;
        });
        darks.validate();
        result.darks.push_back(std::move(darks));
    }
    return result;
}

}  // namespace mproj::fwd
