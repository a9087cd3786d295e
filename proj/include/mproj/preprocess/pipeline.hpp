#pragma once

#include <string>
#include <vector>

#include "mproj/forward/detector.hpp"
#include "mproj/preprocess/denoise.hpp"
#include "mproj/preprocess/flatfield.hpp"
#include "mproj/preprocess/harmonize.hpp"
#include "mproj/preprocess/registration.hpp"
#include "mproj/preprocess/segment.hpp"
#include "mproj/util/parallel.hpp"

namespace mproj::prep {

/// Encoding used for processed stacks: transmissions live in [0, ~3.2] with
/// ~5e-5 quantization, far below the shot noise.
constexpr double processed_value_scale = 5e-5;

struct PipelineOptions {
    FlatFieldOptions flatfield;
    DenoiseOptions denoise;
    RegistrationOptions registration;
    SegmentOptions segment;
    HarmonizeOptions harmonize;
    bool subtract_dark = true;
    int threads = 1;
};

namespace detail {

inline void require_stage(const fwd::FrameStack& stack, const std::string& prev,
                          const std::string& next) {
    if (stack.stages.empty() || stack.stages.back() != prev)
        throw usage_error("pipeline order violation: stage '" + next + "' requires '" + prev +
                          "' to run first (stack is at '" +
                          (stack.stages.empty() ? "<none>" : stack.stages.back()) + "')");
}

inline fwd::FrameStack encode_stack(const fwd::FrameStack& proto, const std::vector<ImageD>& frames,
                                    const std::string& stage) {
    fwd::FrameStack out = proto;
    out.value_offset = 0.0;
    out.value_scale = processed_value_scale;
    out.frames.clear();
    for (const auto& f : frames) out.frames.push_back(fwd::FrameStack::encode(f, 0.0, processed_value_scale));
    out.stages.push_back(stage);
    out.validate();
    return out;
}

inline ImageD mean_frame(const fwd::FrameStack& stack) {
    ImageD acc(stack.height(), stack.width(), 0.0);
    for (size_t i = 0; i < stack.frames.size(); ++i) {
        const ImageD f = stack.decode_frame(i);
        for (size_t j = 0; j < acc.data.size(); ++j) acc.data[j] += f.data[j];
    }
    for (auto& v : acc.data) v /= static_cast<double>(stack.frames.size());
    return acc;
}

}  // namespace detail

/// Stage 1: PCA flat-field correction (optionally dark-subtracted), producing
/// a transmission-valued stack.
inline fwd::FrameStack flatfield_stack(const fwd::FrameStack& stack, const fwd::FrameStack& flats,
                                       const fwd::FrameStack* darks, const PipelineOptions& opt) {
    detail::require_stage(stack, "raw", "flatfield");
    ImageD dark_mean(stack.height(), stack.width(), 0.0);
    if (darks != nullptr && opt.subtract_dark && !darks->frames.empty())
        dark_mean = detail::mean_frame(*darks);

    std::vector<ImageD> flat_frames;
    for (size_t i = 0; i < flats.frames.size(); ++i) {
        ImageD f = flats.decode_frame(i);
        for (size_t j = 0; j < f.data.size(); ++j) f.data[j] -= dark_mean.data[j];
        flat_frames.push_back(std::move(f));
    }
    const FlatFieldBasis basis = fit_flatfield_basis(flat_frames, opt.flatfield);

    std::vector<ImageD> corrected(stack.frames.size());
    parallel_for(static_cast<int64_t>(stack.frames.size()), opt.threads, [&](int64_t i) {
        ImageD f = stack.decode_frame(i);
        for (size_t j = 0; j < f.data.size(); ++j) f.data[j] -= dark_mean.data[j];
        corrected[i] = flatfield_correct(f, basis, opt.flatfield);
    });
    return detail::encode_stack(stack, corrected, "flatfield");
}

/// Stage 2: wavelet + TV denoising, frame by frame.
inline fwd::FrameStack denoise_stack(const fwd::FrameStack& stack, const PipelineOptions& opt) {
    detail::require_stage(stack, "flatfield", "denoise");
    std::vector<ImageD> out(stack.frames.size());
    parallel_for(static_cast<int64_t>(stack.frames.size()), opt.threads, [&](int64_t i) {
        out[i] = denoise_frame(stack.decode_frame(i), opt.denoise);
    });
    return detail::encode_stack(stack, out, "denoise");
}

/// Stage 3: jitter registration against the first frame. When disabled (the
/// coarse view in the reference experiment) frames pass through unchanged but
/// the stage is still recorded.
inline fwd::FrameStack register_stage(const fwd::FrameStack& stack, bool enabled,
                                      const PipelineOptions& opt) {
    detail::require_stage(stack, "denoise", "register");
    if (!enabled || stack.frames.size() < 2) {
        fwd::FrameStack out = stack;
        out.stages.push_back("register");
        return out;
    }
    std::vector<ImageD> frames;
    for (size_t i = 0; i < stack.frames.size(); ++i) frames.push_back(stack.decode_frame(i));
    const RegistrationResult reg = register_stack(frames, 0, opt.registration);
    return detail::encode_stack(stack, reg.warped, "register");
}

struct HarmonizedViews {
    fwd::FrameStack fine;    // the finer-pitch stack, cropped
    fwd::FrameStack coarse;  // the coarser stack, upsampled to the fine pitch and cropped
    double roi_center_x = 0.0;
    double roi_center_y = 0.0;
};

/// Stage 4: bring both views onto one pixel grid and crop to the ROI.
inline HarmonizedViews harmonize_views(const fwd::FrameStack& a, const fwd::FrameStack& b,
                                       const PipelineOptions& opt) {
    detail::require_stage(a, "register", "harmonize");
    detail::require_stage(b, "register", "harmonize");
    if (!(a.pixel_pitch_um > 0.0) || !(b.pixel_pitch_um > 0.0))
        throw usage_error("harmonize needs positive pixel pitches");

    const bool a_fine = a.pixel_pitch_um <= b.pixel_pitch_um;
    const fwd::FrameStack& fine = a_fine ? a : b;
    const fwd::FrameStack& coarse = a_fine ? b : a;
    const double pitch = fine.pixel_pitch_um;

    // upsample the coarse stack onto the fine pitch
    std::vector<ImageD> coarse_up(coarse.frames.size());
    parallel_for(static_cast<int64_t>(coarse.frames.size()), opt.threads, [&](int64_t i) {
        coarse_up[i] = resample_to_pitch(coarse.decode_frame(i), coarse.pixel_pitch_um, pitch);
    });

    double cx, cy;
    if (opt.harmonize.roi_center_px) {
        cx = opt.harmonize.roi_center_px->first;
        cy = opt.harmonize.roi_center_px->second;
    } else {
        // auto ROI: centroid of the segmented mid-sequence fine frame
        const ImageD mid = fine.decode_frame(fine.frames.size() / 2);
        const Mask mask = segment_droplets(mid, opt.segment);
        if (!mask_centroid(mask, cx, cy)) {
            cx = 0.5 * (fine.width() - 1);
            cy = 0.5 * (fine.height() - 1);
        }
    }

    const int crop = opt.harmonize.crop_size;
    std::vector<ImageD> fine_c(fine.frames.size()), coarse_c(coarse_up.size());
    for (size_t i = 0; i < fine.frames.size(); ++i)
        fine_c[i] = crop_about(fine.decode_frame(i), cx, cy, crop);
    // the upsampled coarse grid shares the fine pitch; its center maps to the
    // same world point, so the ROI transfers by the size difference
    for (size_t i = 0; i < coarse_up.size(); ++i) {
        const double off_x = 0.5 * (coarse_up[i].width - 1) - 0.5 * (fine.width() - 1);
        const double off_y = 0.5 * (coarse_up[i].height - 1) - 0.5 * (fine.height() - 1);
        coarse_c[i] = crop_about(coarse_up[i], cx + off_x, cy + off_y, crop);
    }

    HarmonizedViews out;
    out.fine = detail::encode_stack(fine, fine_c, "harmonize");
    fwd::FrameStack coarse_proto = coarse;
    coarse_proto.pixel_pitch_um = pitch;
    out.coarse = detail::encode_stack(coarse_proto, coarse_c, "harmonize");
    out.roi_center_x = cx;
    out.roi_center_y = cy;
    return out;
}

/// Stage 5: droplet masks for every frame (stored as a 0/1 stack).
inline fwd::FrameStack segment_stack(const fwd::FrameStack& stack, const PipelineOptions& opt) {
    detail::require_stage(stack, "harmonize", "segment");
    fwd::FrameStack out = stack;
    out.value_offset = 0.0;
    out.value_scale = 1.0;
    out.frames.assign(stack.frames.size(), ImageU16());
    parallel_for(static_cast<int64_t>(stack.frames.size()), opt.threads, [&](int64_t i) {
        const Mask mask = segment_droplets(stack.decode_frame(i), opt.segment);
        ImageU16 m(mask.height, mask.width);
        for (size_t j = 0; j < mask.data.size(); ++j) m.data[j] = mask.data[j];
        out.frames[i] = std::move(m);
    });
    out.stages.push_back("segment");
    out.validate();
    return out;
}

}  // namespace mproj::prep
