#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mproj/util/errors.hpp"

namespace mproj {

/// Dense row-major 2D image. Indexing is (row y, column x).
template <typename T>
struct Image {
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Image() = default;
    Image(int h, int w, T fill = T{}) : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

    T& operator()(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    const T& operator()(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

using ImageD = Image<double>;
using ImageU16 = Image<uint16_t>;

template <typename T, typename U>
Image<U> convert_image(const Image<T>& src, U (*f)(T)) {
    Image<U> out(src.height, src.width);
    for (size_t i = 0; i < src.data.size(); ++i) out.data[i] = f(src.data[i]);
    return out;
}

inline ImageD to_double(const ImageU16& src) {
    ImageD out(src.height, src.width);
    for (size_t i = 0; i < src.data.size(); ++i) out.data[i] = static_cast<double>(src.data[i]);
    return out;
}

/// Bilinear sample at fractional (y, x); coordinates are clamped to the frame.
template <typename T>
double bilinear_sample(const Image<T>& img, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    const int y0 = std::min(static_cast<int>(y), img.height - 2 >= 0 ? img.height - 2 : 0);
    const int x0 = std::min(static_cast<int>(x), img.width - 2 >= 0 ? img.width - 2 : 0);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const double fy = y - y0, fx = x - x0;
    return (1 - fy) * ((1 - fx) * img(y0, x0) + fx * img(y0, x1)) +
           fy * ((1 - fx) * img(y1, x0) + fx * img(y1, x1));
}

/// Block-mean downsample by integer factors (fy, fx). Trailing rows/columns
/// that do not fill a whole block are dropped.
inline ImageD block_downsample(const ImageD& img, int fy, int fx) {
    if (fy < 1 || fx < 1) throw usage_error("downsample factors must be >= 1");
    const int h = img.height / fy, w = img.width / fx;
    if (h < 1 || w < 1) throw usage_error("image too small for downsample factors");
    ImageD out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int dy = 0; dy < fy; ++dy)
                for (int dx = 0; dx < fx; ++dx) acc += img(y * fy + dy, x * fx + dx);
            out(y, x) = acc / (fy * fx);
        }
    return out;
}

/// Bilinear resize to an explicit shape; pixel centers are mapped so that the
/// image corners align.
inline ImageD resize_bilinear(const ImageD& img, int out_h, int out_w) {
    ImageD out(out_h, out_w);
    const double sy = out_h > 1 ? static_cast<double>(img.height - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(img.width - 1) / (out_w - 1) : 0.0;
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) out(y, x) = bilinear_sample(img, y * sy, x * sx);
    return out;
}

namespace detail {
inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& v : k) v /= sum;
    return k;
}

inline int reflect_index(int i, int n) {
    // symmetric boundary: -1 -> 0, n -> n-1
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}
}  // namespace detail

/// Separable Gaussian blur with symmetric boundary handling. sigma <= 0 is a no-op.
inline ImageD gaussian_blur(const ImageD& img, double sigma) {
    if (sigma <= 0.0) return img;
    const auto k = detail::gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    ImageD tmp(img.height, img.width), out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * img(y, detail::reflect_index(x + i, img.width));
            tmp(y, x) = acc;
        }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * tmp(detail::reflect_index(y + i, img.height), x);
            out(y, x) = acc;
        }
    return out;
}

/// Value below which `pct` percent of the pixels fall (nearest-rank).
inline double percentile(const ImageD& img, double pct) {
    if (img.data.empty()) throw usage_error("percentile of empty image");
    std::vector<double> v = img.data;
    const size_t k = std::min(v.size() - 1, static_cast<size_t>(pct / 100.0 * (v.size() - 1) + 0.5));
    std::nth_element(v.begin(), v.begin() + k, v.end());
    return v[k];
}

inline double mean_value(const ImageD& img) {
    double s = 0.0;
    for (double v : img.data) s += v;
    return img.data.empty() ? 0.0 : s / img.data.size();
}

}  // namespace mproj
