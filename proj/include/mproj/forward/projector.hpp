#pragma once

#include <algorithm>
#include <cmath>

#include "mproj/forward/detector.hpp"
#include "mproj/geometry/geometry.hpp"
#include "mproj/phantom/field4d.hpp"

namespace mproj::fwd {

struct ProjectorOptions {
    double step_um = 0.0;       // quadrature step; 0 = auto (half the relevant pitch)
    double ghost_offset_um = 30.0;
    double ghost_weight = 0.4;
};

namespace detail {

/// Slab intersection of a ray with an axis-aligned box; false if it misses.
inline bool ray_box(const Vec3& origin, const Vec3& dir, const phantom::Aabb& box, double& s0,
                    double& s1) {
    s0 = -1e30;
    s1 = 1e30;
    const double o[3] = {origin.x, origin.y, origin.z};
    const double d[3] = {dir.x, dir.y, dir.z};
    const double lo[3] = {box.lo.x, box.lo.y, box.lo.z};
    const double hi[3] = {box.hi.x, box.hi.y, box.hi.z};
    for (int i = 0; i < 3; ++i) {
        if (std::abs(d[i]) < 1e-15) {
            if (o[i] < lo[i] || o[i] > hi[i]) return false;
            continue;
        }
        double a = (lo[i] - o[i]) / d[i];
        double b = (hi[i] - o[i]) / d[i];
        if (a > b) std::swap(a, b);
        s0 = std::max(s0, a);
        s1 = std::min(s1, b);
    }
    return s1 > s0;
}

/// Midpoint-rule line integral of mu along origin + s * dir.
inline double optical_depth(const phantom::ScalarField4D& field, const Vec3& origin, const Vec3& dir,
                            double t_ns, double step_um) {
    double s0, s1;
    if (!ray_box(origin, dir, field.bounds(), s0, s1)) return 0.0;
    const double len = s1 - s0;
    const int n = std::max(1, static_cast<int>(std::ceil(len / step_um)));
    const double h = len / n;
    double tau = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vec3 p = origin + dir * (s0 + (i + 0.5) * h);
        tau += field.mu(p, t_ns);
    }
    return tau * h;
}

}  // namespace detail

/// Noiseless transmission image of one beamlet: per pixel,
/// I/I0 = flux_factor * intensity_scale * exp(-integral of mu ds) with the
/// field sampled along parallel rays displaced by the shot jitter.
inline ImageD project_view(const phantom::ScalarField4D& field, const geom::BeamletGeometry& beamlet,
                           const DetectorModel& det, double t_ns, const ShotRecord& shot,
                           int beamlet_index = 0, const ProjectorOptions& opt = {}) {
    if (!field.time_in_range(t_ns))
        throw range_error("projection time " + std::to_string(t_ns) +
                          " ns outside the field's time range");
    double step = opt.step_um;
    if (step <= 0.0)
        step = 0.5 * (field.is_gridded() ? field.grid().voxel_pitch_um : det.pixel_pitch_um);

    const double scale =
        beamlet_index < static_cast<int>(shot.intensity_scale.size()) ? shot.intensity_scale[beamlet_index] : 1.0;
    std::array<double, 2> disp{0.0, 0.0};
    if (beamlet_index < static_cast<int>(shot.beam_displacement_um.size()))
        disp = shot.beam_displacement_um[beamlet_index];

    const double amplitude = beamlet.flux_factor * scale;
    const double w_main = shot.multi_peak_event ? 1.0 - opt.ghost_weight : 1.0;

    ImageD img(det.height, det.width);
    const double cu = 0.5 * (det.width - 1), cv = 0.5 * (det.height - 1);
    for (int r = 0; r < det.height; ++r) {
        for (int c = 0; c < det.width; ++c) {
            const double u = (c - cu) * det.pixel_pitch_um - disp[0];
            const double v = (cv - r) * det.pixel_pitch_um - disp[1];
            const Vec3 origin = beamlet.frame.axis_u * u + beamlet.frame.axis_v * v;
            double val = w_main * std::exp(-detail::optical_depth(field, origin, beamlet.direction,
                                                                  t_ns, step));
            if (shot.multi_peak_event) {
                const Vec3 gorigin = origin - beamlet.frame.axis_u * opt.ghost_offset_um;
                val += opt.ghost_weight *
                       std::exp(-detail::optical_depth(field, gorigin, beamlet.direction, t_ns, step));
            }
            img(r, c) = amplitude * val;
        }
    }
    return img;
}

}  // namespace mproj::fwd
