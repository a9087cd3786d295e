#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mproj/util/errors.hpp"
#include "mproj/util/image.hpp"
#include "mproj/util/rng.hpp"

namespace mproj::fwd {

/// Per-pulse stochastic state of the source, one record per camera frame.
struct ShotRecord {
    int pulse_index = 0;
    double timestamp_ns = 0.0;
    std::vector<double> intensity_scale;                    // per beamlet, mean 1
    std::vector<std::array<double, 2>> beam_displacement_um;  // per beamlet, detector (u, v)
    bool multi_peak_event = false;
};

/// 10-bit MHz camera model.
struct DetectorModel {
    int height = 250;
    int width = 400;
    double pixel_pitch_um = 3.2;
    double read_noise_sigma = 6.0;   // counts
    double photon_scale = 4000.0;    // counts per unit fluence
    double dark_level = 30.0;        // counts
    double first_frame_noise_fraction = 0.5;  // of the dynamic range, frame 0 only
    double blur_sigma_px = 0.0;      // optional optics blur
    // illumination model used by the acquisition loop: a jittering Gaussian
    // envelope on top of a fixed per-pixel gain pattern
    double illum_sigma_frac = 0.6;   // Gaussian sigma as fraction of the half field of view
    double prnu_sigma = 0.03;        // fixed-pattern gain spread
    uint64_t prnu_seed = 42;

    static constexpr int full_scale = 1023;  // 10-bit

    void validate() const {
        if (height < 1 || width < 1) throw config_error("detector shape must be >= 1x1");
        if (pixel_pitch_um <= 0.0) throw config_error("detector.pixel_pitch_um must be positive");
        if (read_noise_sigma < 0.0) throw config_error("detector.read_noise_sigma must be >= 0");
        if (photon_scale < 0.0) throw config_error("detector.photon_scale must be >= 0");
    }
};

/// Quantize an intensity image to 10-bit counts. Frame 0 carries the
/// amplified electronic noise that makes it unusable.
inline ImageU16 detector_capture(const ImageD& intensity, const DetectorModel& det, int frame_index,
                                 Rng& rng) {
    det.validate();
    ImageU16 out(intensity.height, intensity.width);
    const double extra_sigma =
        frame_index == 0 ? det.first_frame_noise_fraction * DetectorModel::full_scale : 0.0;
    for (size_t i = 0; i < intensity.data.size(); ++i) {
        const double fluence = intensity.data[i];
        if (fluence < 0.0) throw domain_error("detector intensity must be non-negative");
        double counts = det.dark_level + static_cast<double>(rng.poisson(det.photon_scale * fluence));
        if (det.read_noise_sigma > 0.0) counts += rng.normal(0.0, det.read_noise_sigma);
        if (extra_sigma > 0.0) counts += rng.normal(0.0, extra_sigma);
        counts = std::round(std::clamp(counts, 0.0, static_cast<double>(DetectorModel::full_scale)));
        out.data[i] = static_cast<uint16_t>(counts);
    }
    return out;
}

/// Time-ordered frames of one beamlet plus everything needed to interpret
/// them. Raw stacks hold detector counts (value map identity); processed
/// stacks store physical values encoded as offset + scale * counts.
struct FrameStack {
    std::string beamlet_id;
    double pixel_pitch_um = 3.2;
    std::vector<ImageU16> frames;
    std::vector<double> timestamps_ns;
    std::vector<ShotRecord> shots;
    double frame_to_pulse_drift_ns = 0.0;   // per-frame camera drift
    double cumulative_drift_ns = 0.0;       // (n_frames_per_train - 1) * drift
    double value_offset = 0.0;
    double value_scale = 1.0;
    std::vector<std::string> stages;        // provenance, e.g. {"raw", "flatfield"}

    void validate() const {
        if (frames.size() != timestamps_ns.size() || frames.size() != shots.size())
            throw usage_error("frame stack arrays must have equal length");
        for (const auto& f : frames)
            if (!f.same_shape(frames.front())) throw usage_error("all frames must share one shape");
    }

    int height() const { return frames.empty() ? 0 : frames.front().height; }
    int width() const { return frames.empty() ? 0 : frames.front().width; }

    ImageD decode_frame(size_t i) const {
        const auto& f = frames[i];
        ImageD out(f.height, f.width);
        for (size_t j = 0; j < f.data.size(); ++j)
            out.data[j] = value_offset + value_scale * static_cast<double>(f.data[j]);
        return out;
    }

    /// Quantize a physical-valued image into the stack's u16 encoding.
    static ImageU16 encode(const ImageD& img, double offset, double scale) {
        ImageU16 out(img.height, img.width);
        for (size_t j = 0; j < img.data.size(); ++j) {
            const double q = std::round((img.data[j] - offset) / scale);
            out.data[j] = static_cast<uint16_t>(std::clamp(q, 0.0, 65535.0));
        }
        return out;
    }

    bool has_stage(const std::string& name) const {
        for (const auto& s : stages)
            if (s == name) return true;
        return false;
    }
};

}  // namespace mproj::fwd
