#pragma once

#include <array>
#include <vector>

#include "mproj/util/errors.hpp"
#include "mproj/util/image.hpp"
#include "mproj/util/rng.hpp"

namespace mproj::recon {

/// One 32x32 sampling grid on an image: position, scale and stride define
/// the grid spacing scale * stride pixels about the center.
struct PatchSpec {
    static constexpr int size = 32;
    double center_x = 0.0;
    double center_y = 0.0;
    double scale = 1.0;
    int stride = 1;

    double spacing() const { return scale * stride; }
    /// Pixel position of grid element (i, j), row i, column j.
    std::array<double, 2> grid_position(int i, int j) const {
        const double half = 0.5 * (size - 1);
        return {center_x + (j - half) * spacing(), center_y + (i - half) * spacing()};
    }
    bool in_bounds(int width, int height) const {
        const double half_span = 0.5 * (size - 1) * spacing();
        return center_x - half_span >= 0.0 && center_y - half_span >= 0.0 &&
               center_x + half_span <= width - 1 && center_y + half_span <= height - 1;
    }
};

struct PatchSampleOptions {
    double scale_min = 0.7;
    double scale_max = 2.0;
    int stride_max = 2;
};

/// Uniform random spec with the whole grid inside a width x height frame.
inline PatchSpec random_patch_spec(Rng& rng, int width, int height,
                                   const PatchSampleOptions& opt = {}) {
    if (width < PatchSpec::size || height < PatchSpec::size)
        throw usage_error("image too small for a 32x32 patch grid");
    for (int attempt = 0; attempt < 64; ++attempt) {
        PatchSpec spec;
        spec.stride = 1 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(opt.stride_max)));
        const double max_scale_fit =
            static_cast<double>(std::min(width, height) - 1) / ((PatchSpec::size - 1) * spec.stride);
        const double hi = std::min(opt.scale_max, max_scale_fit);
        const double lo = std::min(opt.scale_min, hi);
        spec.scale = rng.uniform(lo, hi);
        const double half_span = 0.5 * (PatchSpec::size - 1) * spec.spacing();
        spec.center_x = rng.uniform(half_span, width - 1 - half_span);
        spec.center_y = rng.uniform(half_span, height - 1 - half_span);
        if (spec.in_bounds(width, height)) return spec;
    }
    // degenerate sizes: fall back to the tightest centered grid
    PatchSpec spec;
    spec.stride = 1;
    spec.scale = 1.0;
    spec.center_x = 0.5 * (width - 1);
    spec.center_y = 0.5 * (height - 1);
    return spec;
}

/// Bilinear 32x32 patch extraction.
inline ImageD sample_patch(const ImageD& img, const PatchSpec& spec) {
    ImageD out(PatchSpec::size, PatchSpec::size);
    for (int i = 0; i < PatchSpec::size; ++i)
        for (int j = 0; j < PatchSpec::size; ++j) {
            const auto p = spec.grid_position(i, j);
            out(i, j) = bilinear_sample(img, p[1], p[0]);
        }
    return out;
}

/// n random (spec, patch) draws over an image set; the same sampler serves
/// real (measured) patches and the ray grids of rendered ones.
inline std::vector<std::pair<PatchSpec, ImageD>> sample_patches(const std::vector<ImageD>& images,
                                                                Rng& rng, int n,
                                                                const PatchSampleOptions& opt = {}) {
    if (images.empty()) throw usage_error("sample_patches needs at least one image");
    std::vector<std::pair<PatchSpec, ImageD>> out;
    out.reserve(n);
    for (int k = 0; k < n; ++k) {
        const auto& img = images[rng.uniform_index(images.size())];
        const PatchSpec spec = random_patch_spec(rng, img.width, img.height, opt);
        out.emplace_back(spec, sample_patch(img, spec));
    }
    return out;
}

}  // namespace mproj::recon
