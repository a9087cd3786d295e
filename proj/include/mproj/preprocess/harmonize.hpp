#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include "mproj/util/errors.hpp"
#include "mproj/util/image.hpp"

namespace mproj::prep {

struct HarmonizeOptions {
    int crop_size = 128;
    std::optional<std::pair<double, double>> roi_center_px;  // on the finer grid; auto when unset
};

/// Crop about a center with bounds checking.
inline ImageD crop_about(const ImageD& img, double cx, double cy, int size) {
    const int x0 = static_cast<int>(std::lround(cx)) - size / 2;
    const int y0 = static_cast<int>(std::lround(cy)) - size / 2;
    if (x0 < 0 || y0 < 0 || x0 + size > img.width || y0 + size > img.height)
        throw range_error("crop ROI [" + std::to_string(x0) + "," + std::to_string(y0) + "]+" +
                          std::to_string(size) + " outside frame " + std::to_string(img.width) + "x" +
                          std::to_string(img.height));
    ImageD out(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) out(y, x) = img(y0 + y, x0 + x);
    return out;
}

/// Upsample the coarser-pitch image onto the finer pitch (bilinear).
inline ImageD resample_to_pitch(const ImageD& img, double pitch_from, double pitch_to) {
    if (pitch_from == pitch_to) return img;
    const double ratio = pitch_from / pitch_to;
    const int oh = static_cast<int>(std::lround(img.height * ratio));
    const int ow = static_cast<int>(std::lround(img.width * ratio));
    return resize_bilinear(img, oh, ow);
}

}  // namespace mproj::prep
