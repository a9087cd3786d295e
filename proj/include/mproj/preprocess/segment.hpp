#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "mproj/util/image.hpp"
#include "mproj/util/vec3.hpp"

namespace mproj::prep {

struct SegmentOptions {
    double highpass_sigma = 16.0;    // background estimate width
    double canny_sigma = 1.5;
    double low_percentile = 70.0;    // hysteresis thresholds on gradient magnitude
    double high_percentile = 90.0;
    int closing_iterations = 2;
};

using Mask = Image<uint8_t>;

namespace detail {

inline Mask dilate3(const Mask& m) {
    Mask out(m.height, m.width, 0);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            if (!m(y, x)) continue;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny >= 0 && nx >= 0 && ny < m.height && nx < m.width) out(ny, nx) = 1;
                }
        }
    return out;
}

inline Mask erode3(const Mask& m) {
    Mask out(m.height, m.width, 0);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            bool all = true;
            for (int dy = -1; dy <= 1 && all; ++dy)
                for (int dx = -1; dx <= 1 && all; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || nx < 0 || ny >= m.height || nx >= m.width || !m(ny, nx)) all = false;
                }
            out(y, x) = all ? 1 : 0;
        }
    return out;
}

/// Fill enclosed holes: everything not reachable from the border through
/// zero pixels becomes foreground.
inline Mask fill_holes(const Mask& m) {
    Mask outside(m.height, m.width, 0);
    std::deque<std::pair<int, int>> queue;
    auto push = [&](int y, int x) {
        if (y < 0 || x < 0 || y >= m.height || x >= m.width) return;
        if (outside(y, x) || m(y, x)) return;
        outside(y, x) = 1;
        queue.push_back({y, x});
    };
    for (int x = 0; x < m.width; ++x) {
        push(0, x);
        push(m.height - 1, x);
    }
    for (int y = 0; y < m.height; ++y) {
        push(y, 0);
        push(y, m.width - 1);
    }
    while (!queue.empty()) {
        auto [y, x] = queue.front();
        queue.pop_front();
        push(y - 1, x);
        push(y + 1, x);
        push(y, x - 1);
        push(y, x + 1);
    }
    Mask out(m.height, m.width, 0);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = outside.data[i] ? 0 : 1;
    return out;
}

/// Canny edges with percentile hysteresis thresholds.
inline Mask canny(const ImageD& img, double sigma, double low_pct, double high_pct) {
    const ImageD smooth = gaussian_blur(img, sigma);
    const int h = img.height, w = img.width;
    ImageD gx(h, w, 0.0), gy(h, w, 0.0), mag(h, w, 0.0);
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            gx(y, x) = (smooth(y - 1, x + 1) + 2 * smooth(y, x + 1) + smooth(y + 1, x + 1) -
                        smooth(y - 1, x - 1) - 2 * smooth(y, x - 1) - smooth(y + 1, x - 1)) / 8.0;
            gy(y, x) = (smooth(y + 1, x - 1) + 2 * smooth(y + 1, x) + smooth(y + 1, x + 1) -
                        smooth(y - 1, x - 1) - 2 * smooth(y - 1, x) - smooth(y - 1, x + 1)) / 8.0;
            mag(y, x) = std::hypot(gx(y, x), gy(y, x));
        }

    // non-maximum suppression along the quantized gradient direction
    Mask thin(h, w, 0);
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            const double m = mag(y, x);
            if (m <= 0.0) continue;
            const double angle = std::atan2(gy(y, x), gx(y, x));
            const double a = std::fmod(angle + pi, pi);  // fold to [0, pi)
            double m1, m2;
            if (a < pi / 8 || a >= 7 * pi / 8) {
                m1 = mag(y, x - 1);
                m2 = mag(y, x + 1);
            } else if (a < 3 * pi / 8) {
                m1 = mag(y - 1, x - 1);
                m2 = mag(y + 1, x + 1);
            } else if (a < 5 * pi / 8) {
                m1 = mag(y - 1, x);
                m2 = mag(y + 1, x);
            } else {
                m1 = mag(y - 1, x + 1);
                m2 = mag(y + 1, x - 1);
            }
            if (m >= m1 && m >= m2) thin(y, x) = 1;
        }

    // percentiles over the edge-candidate set (magnitudes above twice the
    // median, i.e. above the noise floor); exposure-invariant since every
    // quantity scales with the normalized input
    std::vector<double> cand;
    {
        std::vector<double> sorted = mag.data;
        std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
        const double med = sorted[sorted.size() / 2];
        for (double m : mag.data)
            if (m > 2.0 * med) cand.push_back(m);
    }
    if (cand.empty()) return Mask(h, w, 0);
    std::sort(cand.begin(), cand.end());
    auto cand_pct = [&](double p) {
        return cand[static_cast<size_t>(p / 100.0 * (cand.size() - 1) + 0.5)];
    };
    const double lo = cand_pct(low_pct);
    const double hi = cand_pct(high_pct);
    Mask edges(h, w, 0);
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (thin(y, x) && mag(y, x) >= hi && hi > 0.0) {
                edges(y, x) = 1;
                queue.push_back({y, x});
            }
    while (!queue.empty()) {
        auto [y, x] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int ny = y + dy, nx = x + dx;
                if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
                if (edges(ny, nx) || !thin(ny, nx) || mag(ny, nx) < lo) continue;
                edges(ny, nx) = 1;
                queue.push_back({ny, nx});
            }
    }
    return edges;
}

}  // namespace detail

namespace detail {

/// Keep only filled regions that a closed contour actually enclosed: a
/// component survives when its interior (pixels gained by hole filling) is a
/// reasonable fraction of its area. Open noise curves gain no interior.
inline Mask keep_closed_contours(const Mask& filled, const Mask& edges, double min_interior_frac,
                                 int min_interior_px) {
    Mask out(filled.height, filled.width, 0);
    Mask seen(filled.height, filled.width, 0);
    std::deque<std::pair<int, int>> queue;
    std::vector<std::pair<int, int>> comp;
    for (int sy = 0; sy < filled.height; ++sy)
        for (int sx = 0; sx < filled.width; ++sx) {
            if (!filled(sy, sx) || seen(sy, sx)) continue;
            comp.clear();
            seen(sy, sx) = 1;
            queue.push_back({sy, sx});
            int interior = 0;
            while (!queue.empty()) {
                auto [y, x] = queue.front();
                queue.pop_front();
                comp.push_back({y, x});
                if (!edges(y, x)) ++interior;
                const int ny[4] = {y - 1, y + 1, y, y};
                const int nx[4] = {x, x, x - 1, x + 1};
                for (int k = 0; k < 4; ++k) {
                    if (ny[k] < 0 || nx[k] < 0 || ny[k] >= filled.height || nx[k] >= filled.width)
                        continue;
                    if (!filled(ny[k], nx[k]) || seen(ny[k], nx[k])) continue;
                    seen(ny[k], nx[k]) = 1;
                    queue.push_back({ny[k], nx[k]});
                }
            }
            if (interior >= min_interior_px &&
                interior >= min_interior_frac * static_cast<double>(comp.size()))
                for (auto [y, x] : comp) out(y, x) = 1;
        }
    return out;
}

}  // namespace detail

/// High-pass + Canny + closing + hole filling of closed contours. The input
/// is min-max normalized first, so the mask is invariant to affine intensity
/// changes. An empty mask is a valid result.
inline Mask segment_droplets(const ImageD& frame, const SegmentOptions& opt = {}) {
    double lo = frame.data[0], hi = frame.data[0];
    for (double v : frame.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo <= 0.0) return Mask(frame.height, frame.width, 0);  // constant frame

    ImageD norm(frame.height, frame.width);
    for (size_t i = 0; i < frame.data.size(); ++i) norm.data[i] = (frame.data[i] - lo) / (hi - lo);

    const ImageD background = gaussian_blur(norm, opt.highpass_sigma);
    ImageD high(frame.height, frame.width);
    for (size_t i = 0; i < high.data.size(); ++i) high.data[i] = norm.data[i] - background.data[i];

    Mask edges = detail::canny(high, opt.canny_sigma, opt.low_percentile, opt.high_percentile);
    Mask closed = edges;
    for (int i = 0; i < opt.closing_iterations; ++i) closed = detail::dilate3(closed);
    for (int i = 0; i < opt.closing_iterations; ++i) closed = detail::erode3(closed);
    const Mask filled = detail::fill_holes(closed);
    Mask kept = detail::keep_closed_contours(filled, closed, 0.3, 9);
    // one erosion compensates the outward half-width of the edge band
    return detail::erode3(kept);
}

/// Centroid of a mask in (x, y) pixels; false when the mask is empty.
inline bool mask_centroid(const Mask& mask, double& cx, double& cy) {
    double sx = 0.0, sy = 0.0, n = 0.0;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask(y, x)) {
                sx += x;
                sy += y;
                n += 1.0;
            }
    if (n == 0.0) return false;
    cx = sx / n;
    cy = sy / n;
    return true;
}

}  // namespace mproj::prep
