#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "mproj/util/errors.hpp"
#include "mproj/util/image.hpp"
#include "mproj/util/vec3.hpp"

namespace mproj::prep {

/// 2x2 linear part plus translation, applied about the image center.
struct AffineTransform2D {
    std::array<double, 4> linear{1, 0, 0, 1};  // row-major [a b; c d]
    std::array<double, 2> translation{0, 0};   // pixels

    static AffineTransform2D identity() { return {}; }

    double det() const { return linear[0] * linear[3] - linear[1] * linear[2]; }

    void validate() const {
        if (std::abs(det()) <= 1e-9) throw domain_error("affine linear part is singular");
    }

    /// Map (x, y) in output coordinates to source coordinates, rotating about
    /// the given center.
    std::array<double, 2> apply(double x, double y, double cx, double cy) const {
        const double dx = x - cx, dy = y - cy;
        return {linear[0] * dx + linear[1] * dy + cx + translation[0],
                linear[2] * dx + linear[3] * dy + cy + translation[1]};
    }
};

struct RegistrationOptions {
    int bins = 64;
    int pyramid_levels = 3;
    int max_iterations = 60;     // hill-climb rounds per level
    bool allow_rotation = true;
    bool allow_scale_shear = true;
};

struct RegistrationResult {
    std::vector<AffineTransform2D> transforms;
    std::vector<ImageD> warped;
    std::vector<bool> warning;  // optimizer made no improvement for this frame
};

namespace detail {

/// Parameter vector (tx, ty, angle, log sx, log sy, shear) -> transform.
inline AffineTransform2D params_to_transform(const std::array<double, 6>& p) {
    const double c = std::cos(p[2]), s = std::sin(p[2]);
    const double sx = std::exp(p[3]), sy = std::exp(p[4]), sh = p[5];
    AffineTransform2D t;
    // R(angle) * [sx, sh; 0, sy]
    t.linear = {c * sx, c * sh - s * sy, s * sx, s * sh + c * sy};
    t.translation = {p[0], p[1]};
    return t;
}

/// Mutual information between ref and mov(T(x)) with a partial-volume joint
/// histogram: each warped sample spreads its bilinear weights over the four
/// neighboring moving-image bins. Sample positions carry a fixed pseudo-random
/// subpixel jitter; without it the partial-volume weights collapse at integer
/// translations and MI grows sawtooth maxima on the pixel grid.
inline double mutual_information(const ImageD& ref, const ImageD& mov, const AffineTransform2D& t,
                                 int bins, double ref_lo, double ref_hi, double mov_lo,
                                 double mov_hi) {
    const int h = ref.height, w = ref.width;
    const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
    std::vector<double> joint(static_cast<size_t>(bins) * bins, 0.0);
    const double ref_scale = ref_hi > ref_lo ? (bins - 1) / (ref_hi - ref_lo) : 0.0;
    const double mov_scale = mov_hi > mov_lo ? (bins - 1) / (mov_hi - mov_lo) : 0.0;
    double total = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            // deterministic per-pixel jitter in [0, 1)^2
            uint64_t hash = (static_cast<uint64_t>(y) << 32) ^ static_cast<uint64_t>(x) ^
                            0x9e3779b97f4a7c15ULL;
            hash ^= hash >> 33;
            hash *= 0xff51afd7ed558ccdULL;
            hash ^= hash >> 33;
            const double jx = static_cast<double>(hash & 0xffff) / 65536.0;
            const double jy = static_cast<double>((hash >> 16) & 0xffff) / 65536.0;
            const double px = x + jx, py = y + jy;
            if (px > w - 1 || py > h - 1) continue;
            const auto src = t.apply(px, py, cx, cy);
            if (src[0] < 0.0 || src[1] < 0.0 || src[0] > w - 1 || src[1] > h - 1) continue;
            const double rval = bilinear_sample(ref, py, px);
            const int rbin = std::clamp(static_cast<int>((rval - ref_lo) * ref_scale), 0, bins - 1);
            const int x0 = static_cast<int>(src[0]);
            const int y0 = static_cast<int>(src[1]);
            const double fx = src[0] - x0, fy = src[1] - y0;
            const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const double w00 = (1 - fx) * (1 - fy), w01 = fx * (1 - fy), w10 = (1 - fx) * fy,
                         w11 = fx * fy;
            auto deposit = [&](double val, double wt) {
                const int mbin = std::clamp(static_cast<int>((val - mov_lo) * mov_scale), 0, bins - 1);
                joint[static_cast<size_t>(rbin) * bins + mbin] += wt;
            };
            deposit(mov(y0, x0), w00);
            deposit(mov(y0, x1), w01);
            deposit(mov(y1, x0), w10);
            deposit(mov(y1, x1), w11);
            total += 1.0;
        }
    if (total <= 0.0) return -1e30;
    std::vector<double> pr(bins, 0.0), pm(bins, 0.0);
    for (int a = 0; a < bins; ++a)
        for (int b = 0; b < bins; ++b) {
            const double p = joint[static_cast<size_t>(a) * bins + b] / total;
            pr[a] += p;
            pm[b] += p;
        }
    double mi = 0.0;
    for (int a = 0; a < bins; ++a)
        for (int b = 0; b < bins; ++b) {
            const double p = joint[static_cast<size_t>(a) * bins + b] / total;
            if (p > 0.0) mi += p * std::log(p / (pr[a] * pm[b]));
        }
    return mi;
}

inline ImageD warp_bilinear(const ImageD& mov, const AffineTransform2D& t) {
    ImageD out(mov.height, mov.width);
    const double cx = 0.5 * (mov.width - 1), cy = 0.5 * (mov.height - 1);
    for (int y = 0; y < mov.height; ++y)
        for (int x = 0; x < mov.width; ++x) {
            const auto src = t.apply(x, y, cx, cy);
            out(y, x) = bilinear_sample(mov, src[1], src[0]);
        }
    return out;
}

inline void min_max(const ImageD& img, double& lo, double& hi) {
    lo = img.data[0];
    hi = img.data[0];
    for (double v : img.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
}

}  // namespace detail

/// Register one frame to the reference by maximizing mutual information over
/// affine parameters with a multi-resolution coordinate hill climb. Only
/// MI-improving steps are ever accepted.
inline AffineTransform2D register_frame(const ImageD& ref, const ImageD& mov,
                                        const RegistrationOptions& opt, bool* improved_out = nullptr) {
    if (!ref.same_shape(mov)) throw usage_error("registration frames must share one shape");

    // image pyramid, coarse to fine
    std::vector<ImageD> ref_pyr{ref}, mov_pyr{mov};
    for (int l = 1; l < opt.pyramid_levels; ++l) {
        if (ref_pyr.back().height < 16 || ref_pyr.back().width < 16) break;
        ref_pyr.push_back(block_downsample(ref_pyr.back(), 2, 2));
        mov_pyr.push_back(block_downsample(mov_pyr.back(), 2, 2));
    }

    std::array<double, 6> p{0, 0, 0, 0, 0, 0};
    bool improved_any = false;
    const int coarsest = static_cast<int>(ref_pyr.size()) - 1;
    for (int level = coarsest; level >= 0; --level) {
        const ImageD& r = ref_pyr[level];
        const ImageD& m = mov_pyr[level];
        double rlo, rhi, mlo, mhi;
        detail::min_max(r, rlo, rhi);
        detail::min_max(m, mlo, mhi);
        auto mi_of = [&](const std::array<double, 6>& q) {
            return detail::mutual_information(r, m, detail::params_to_transform(q), opt.bins, rlo,
                                              rhi, mlo, mhi);
        };
        // translations live in level pixels; entering a finer level doubles them
        if (level != coarsest) {
            p[0] *= 2.0;
            p[1] *= 2.0;
        }

        const double t0 = level == coarsest ? 3.0 : 1.0;
        std::array<double, 6> step{t0, t0, 0.02, 0.01, 0.01, 0.01};
        const std::array<double, 6> min_step{0.02, 0.02, 3e-4, 5e-4, 5e-4, 5e-4};
        double best = mi_of(p);
        for (int it = 0; it < opt.max_iterations; ++it) {
            bool any = false;
            for (int k = 0; k < 6; ++k) {
                if (k == 2 && !opt.allow_rotation) continue;
                if (k >= 3 && !opt.allow_scale_shear) continue;
                for (double sign : {+1.0, -1.0}) {
                    auto q = p;
                    q[k] += sign * step[k];
                    const double mi = mi_of(q);
                    if (mi > best + 1e-12) {
                        best = mi;
                        p = q;
                        any = true;
                        improved_any = true;
                    }
                }
            }
            if (!any) {
                bool all_min = true;
                for (int k = 0; k < 6; ++k) {
                    step[k] = std::max(step[k] * 0.5, min_step[k]);
                    if (step[k] > min_step[k]) all_min = false;
                }
                if (all_min) break;
            }
        }
    }

    if (improved_out) *improved_out = improved_any;
    if (!improved_any) return AffineTransform2D::identity();

    // never return a transform that scores below identity at full resolution
    double rlo, rhi, mlo, mhi;
    detail::min_max(ref, rlo, rhi);
    detail::min_max(mov, mlo, mhi);
    const AffineTransform2D cand = detail::params_to_transform(p);
    const double mi_cand =
        detail::mutual_information(ref, mov, cand, opt.bins, rlo, rhi, mlo, mhi);
    const double mi_id = detail::mutual_information(ref, mov, AffineTransform2D::identity(),
                                                    opt.bins, rlo, rhi, mlo, mhi);
    if (mi_cand + 1e-12 < mi_id) {
        if (improved_out) *improved_out = false;
        return AffineTransform2D::identity();
    }
    return cand;
}

/// Register every frame of a stack to the reference frame. The reference maps
/// to the identity by construction.
inline RegistrationResult register_stack(const std::vector<ImageD>& frames, int reference_index = 0,
                                         const RegistrationOptions& opt = {}) {
    if (frames.empty()) throw usage_error("register_stack needs at least one frame");
    if (reference_index < 0 || reference_index >= static_cast<int>(frames.size()))
        throw usage_error("reference index out of range");
    RegistrationResult result;
    result.transforms.resize(frames.size());
    result.warped.resize(frames.size());
    result.warning.assign(frames.size(), false);
    for (size_t i = 0; i < frames.size(); ++i) {
        if (static_cast<int>(i) == reference_index) {
            result.transforms[i] = AffineTransform2D::identity();
            result.warped[i] = frames[i];
            continue;
        }
        bool improved = false;
        result.transforms[i] = register_frame(frames[reference_index], frames[i], opt, &improved);
        result.warning[i] = !improved;
        result.warped[i] = detail::warp_bilinear(frames[i], result.transforms[i]);
    }
    return result;
}

}  // namespace mproj::prep
