#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mproj/phantom/field4d.hpp"
#include "mproj/util/errors.hpp"
#include "mproj/util/parallel.hpp"
#include "mproj/util/vec3.hpp"

namespace mproj::phantom {

struct FluidProperties {
    double density_kg_m3 = 998.0;
    double surface_tension_n_m = 0.072;
};

/// One droplet at t = 0. Velocity in m/s equals um/us, so displacement in um
/// over t nanoseconds is velocity * t * 1e-3.
struct DropletState {
    Vec3 center_um;
    double radius_um = 37.5;
    Vec3 velocity_m_s;

    Vec3 center_at(double t_ns) const { return center_um + velocity_m_s * (t_ns * 1e-3); }
    double volume_um3() const { return 4.0 / 3.0 * pi * radius_um * radius_um * radius_um; }
};

/// Analytic two-droplet collision phantom. Droplets fly ballistically until
/// geometric contact; afterwards the pair relaxes toward a single
/// volume-conserving sphere with the given time constant. This is a kinematic
/// imaging phantom, not a hydrodynamic model.
struct CollisionPhantom {
    DropletState droplet_a;
    DropletState droplet_b;
    double mu_water_per_um = 5.33e-4;
    double merge_smoothness_um = 8.0;       // smooth-union blend width after contact
    double coalescence_tau_us = 20.0;
    double boundary_width_um = 1.6;         // half-width of the smooth mu edge
    FluidProperties fluid;

    void validate() const {
        if (!(droplet_a.radius_um > 0.0) || !(droplet_b.radius_um > 0.0))
            throw domain_error("droplet radius must be positive");
        if (mu_water_per_um < 0.0) throw domain_error("mu_water must be non-negative");
        if (!(merge_smoothness_um > 0.0)) throw domain_error("merge_smoothness must be positive");
        if (!(boundary_width_um > 0.0)) throw domain_error("boundary width must be positive");
    }
};

struct CollisionKinematics {
    double weber = 0.0;
    double impact_parameter = 0.0;
    double displacement_per_frame_um = 0.0;
};

/// We = rho |v_rel|^2 Dbar / sigma with Dbar the mean diameter; the impact
/// parameter is the center-to-center offset perpendicular to v_rel over Dbar.
inline CollisionKinematics collision_kinematics(const CollisionPhantom& phantom,
                                                double pulse_period_ns = 886.0) {
    phantom.validate();
    const Vec3 v_rel = phantom.droplet_b.velocity_m_s - phantom.droplet_a.velocity_m_s;
    const double speed = v_rel.norm();
    if (speed <= 0.0)
        throw domain_error("impact parameter undefined: droplets have zero relative speed");
    const double dbar_um = phantom.droplet_a.radius_um + phantom.droplet_b.radius_um;
    const Vec3 offset = phantom.droplet_b.center_um - phantom.droplet_a.center_um;
    const Vec3 vhat = v_rel / speed;
    const Vec3 perp = offset - vhat * offset.dot(vhat);

    CollisionKinematics k;
    k.weber = phantom.fluid.density_kg_m3 * speed * speed * (dbar_um * 1e-6) /
              phantom.fluid.surface_tension_n_m;
    k.impact_parameter = perp.norm() / dbar_um;
    k.displacement_per_frame_um = speed * pulse_period_ns * 1e-3;
    return k;
}

namespace detail {

/// Polynomial smooth minimum; exact min for |a - b| >= k, and for k <= 0.
inline double smooth_min(double a, double b, double k) {
    if (k <= 0.0) return std::min(a, b);
    const double h = std::clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
    return b + (a - b) * h - k * h * (1.0 - h);
}

/// Smoothstep edge profile: 1 deep inside (sd <= -w), 0 outside (sd >= w).
inline double edge_profile(double signed_distance, double w) {
    if (signed_distance >= w) return 0.0;
    if (signed_distance <= -w) return 1.0;
    const double h = (w - signed_distance) / (2.0 * w);
    return h * h * (3.0 - 2.0 * h);
}

struct MergeKnot {
    double t_ns;
    Vec3 offset_a, offset_b;  // sphere centers relative to the merged centroid
    double radius_a, radius_b;
    double blend_k;
};

/// Precomputed coalescence schedule. Knots store the two-sphere configuration
/// relative to the (ballistically moving) merged centroid; radii are rescaled
/// per knot so the smooth-union volume stays at the sum of the initial
/// volumes.
struct MergeSchedule {
    bool merges = false;
    double contact_t_ns = 0.0;
    double end_t_ns = 0.0;
    Vec3 merged_origin_um;     // merged centroid position at contact time
    Vec3 merged_velocity;      // m/s
    std::vector<MergeKnot> knots;

    Vec3 centroid_at(double t_ns) const {
        return merged_origin_um + merged_velocity * ((t_ns - contact_t_ns) * 1e-3);
    }
};

/// Volume of { x : smooth_min(d_a(x), d_b(x), k) < 0 } for two spheres, by
/// integrating the axisymmetric cross-section along the center line.
inline double smooth_union_volume(const Vec3& ca, double ra, const Vec3& cb, double rb, double k) {
    const Vec3 axis = cb - ca;
    const double dist = axis.norm();
    const Vec3 ahat = dist > 1e-12 ? axis / dist : Vec3{1, 0, 0};
    const double z0 = -ra - k, z1 = dist + rb + k;
    const int nz = 400;
    const double dz = (z1 - z0) / nz;
    const double rho_max = std::max(ra, rb) + k;
    auto sdf = [&](double rho, double z) {
        const double da = std::sqrt(rho * rho + z * z) - ra;
        const double zb = z - dist;
        const double db = std::sqrt(rho * rho + zb * zb) - rb;
        return smooth_min(da, db, k);
    };
    (void)ahat;
    double vol = 0.0;
    for (int i = 0; i < nz; ++i) {
        const double z = z0 + (i + 0.5) * dz;
        if (sdf(0.0, z) >= 0.0) continue;  // axis outside the body: empty slice
        double lo = 0.0, hi = rho_max;
        for (int it = 0; it < 40; ++it) {
            const double mid = 0.5 * (lo + hi);
            (sdf(mid, z) < 0.0 ? lo : hi) = mid;
        }
        const double rho = 0.5 * (lo + hi);
        vol += pi * rho * rho * dz;
    }
    return vol;
}

inline MergeSchedule build_merge_schedule(const CollisionPhantom& ph) {
    MergeSchedule sched;
    const Vec3 p0 = ph.droplet_b.center_um - ph.droplet_a.center_um;
    const Vec3 dv = (ph.droplet_b.velocity_m_s - ph.droplet_a.velocity_m_s) * 1e-3;  // um/ns
    const double rsum = ph.droplet_a.radius_um + ph.droplet_b.radius_um;
    const double a = dv.dot(dv);
    const double b = 2.0 * p0.dot(dv);
    const double c = p0.dot(p0) - rsum * rsum;
    if (c <= 0.0) {
        sched.merges = true;
        sched.contact_t_ns = 0.0;  // already touching at t = 0
    } else if (a > 0.0) {
        const double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0) {
            const double t = (-b - std::sqrt(disc)) / (2.0 * a);
            if (t >= 0.0) {
                sched.merges = true;
                sched.contact_t_ns = t;
            }
        }
    }
    if (!sched.merges) return sched;

    const double va = ph.droplet_a.volume_um3(), vb = ph.droplet_b.volume_um3();
    const double v_total = va + vb;
    const double r_merged = std::cbrt((3.0 / (4.0 * pi)) * v_total);
    const double wa = va / v_total, wb = vb / v_total;
    sched.merged_velocity = ph.droplet_a.velocity_m_s * wa + ph.droplet_b.velocity_m_s * wb;
    sched.merged_origin_um = ph.droplet_a.center_at(sched.contact_t_ns) * wa +
                             ph.droplet_b.center_at(sched.contact_t_ns) * wb;

    const double tau_ns = std::max(1e-6, ph.coalescence_tau_us) * 1e3;
    const int n_knots = 121;
    sched.end_t_ns = sched.contact_t_ns + 12.0 * tau_ns;
    sched.knots.resize(n_knots);
    for (int i = 0; i < n_knots; ++i) {
        const double t = sched.contact_t_ns + (12.0 * tau_ns) * i / (n_knots - 1);
        const double alpha = 1.0 - std::exp(-(t - sched.contact_t_ns) / tau_ns);
        const Vec3 centroid = sched.merged_origin_um + sched.merged_velocity * ((t - sched.contact_t_ns) * 1e-3);
        Vec3 off_a = (ph.droplet_a.center_at(t) - centroid) * (1.0 - alpha);
        Vec3 off_b = (ph.droplet_b.center_at(t) - centroid) * (1.0 - alpha);
        double ra = ph.droplet_a.radius_um + (r_merged - ph.droplet_a.radius_um) * alpha;
        double rb = ph.droplet_b.radius_um + (r_merged - ph.droplet_b.radius_um) * alpha;
        const double k = ph.merge_smoothness_um * alpha;
        // rescale radii so the smooth union conserves the initial volume
        for (int it = 0; it < 4; ++it) {
            const double vol = smooth_union_volume(off_a, ra, off_b, rb, k);
            const double scale = std::cbrt(v_total / std::max(vol, 1e-12));
            ra *= scale;
            rb *= scale;
            if (std::abs(scale - 1.0) < 1e-5) break;
        }
        sched.knots[i] = {t, off_a, off_b, ra, rb, k};
    }
    return sched;
}

}  // namespace detail

/// Callable evaluator for a collision phantom. Construction precomputes the
/// coalescence schedule; evaluation is pure and reentrant.
class DropletField {
  public:
    explicit DropletField(const CollisionPhantom& phantom)
        : phantom_(phantom), schedule_(detail::build_merge_schedule(phantom)) {
        phantom.validate();
    }

    double operator()(const Vec3& p_um, double t_ns) const { return mu(p_um, t_ns); }

    double mu(const Vec3& p_um, double t_ns) const {
        const double w = phantom_.boundary_width_um;
        if (!schedule_.merges || t_ns < schedule_.contact_t_ns) {
            // exact max of the two isolated droplet fields
            const double da = (p_um - phantom_.droplet_a.center_at(t_ns)).norm() - phantom_.droplet_a.radius_um;
            const double db = (p_um - phantom_.droplet_b.center_at(t_ns)).norm() - phantom_.droplet_b.radius_um;
            return phantom_.mu_water_per_um * detail::edge_profile(std::min(da, db), w);
        }
        const detail::MergeKnot state = knot_at(t_ns);
        const Vec3 centroid = schedule_.centroid_at(t_ns);
        const double da = (p_um - (centroid + state.offset_a)).norm() - state.radius_a;
        const double db = (p_um - (centroid + state.offset_b)).norm() - state.radius_b;
        return phantom_.mu_water_per_um * detail::edge_profile(detail::smooth_min(da, db, state.blend_k), w);
    }

    /// Axis-aligned bounds of everything the phantom occupies in [t0, t1].
    Aabb bounds(double t0_ns, double t1_ns) const {
        Vec3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
        auto extend = [&](const Vec3& c, double r) {
            lo = {std::min(lo.x, c.x - r), std::min(lo.y, c.y - r), std::min(lo.z, c.z - r)};
            hi = {std::max(hi.x, c.x + r), std::max(hi.y, c.y + r), std::max(hi.z, c.z + r)};
        };
        const double margin = phantom_.boundary_width_um + phantom_.merge_smoothness_um;
        const double r_max = std::cbrt(phantom_.droplet_a.radius_um * phantom_.droplet_a.radius_um *
                                           phantom_.droplet_a.radius_um +
                                       phantom_.droplet_b.radius_um * phantom_.droplet_b.radius_um *
                                           phantom_.droplet_b.radius_um) +
                             margin;
        for (double t : {t0_ns, 0.5 * (t0_ns + t1_ns), t1_ns}) {
            extend(phantom_.droplet_a.center_at(t), std::max(phantom_.droplet_a.radius_um, r_max));
            extend(phantom_.droplet_b.center_at(t), std::max(phantom_.droplet_b.radius_um, r_max));
            if (schedule_.merges && t >= schedule_.contact_t_ns) extend(schedule_.centroid_at(t), r_max);
        }
        return {lo, hi};
    }

    const CollisionPhantom& phantom() const { return phantom_; }

    ScalarField4D as_field(double t0_ns, double t1_ns) const {
        DropletField copy = *this;
        return ScalarField4D::analytic(
            [copy](const Vec3& p, double t) { return copy.mu(p, t); }, bounds(t0_ns, t1_ns), t0_ns,
            t1_ns);
    }

  private:
    detail::MergeKnot knot_at(double t_ns) const {
        const auto& ks = schedule_.knots;
        if (t_ns >= schedule_.end_t_ns) return ks.back();
        const double f = (t_ns - schedule_.contact_t_ns) /
                         (schedule_.end_t_ns - schedule_.contact_t_ns) * (ks.size() - 1);
        const int i = std::min(static_cast<int>(f), static_cast<int>(ks.size()) - 2);
        const double u = f - i;
        const auto& k0 = ks[i];
        const auto& k1 = ks[i + 1];
        detail::MergeKnot out;
        out.t_ns = t_ns;
        out.offset_a = k0.offset_a + (k1.offset_a - k0.offset_a) * u;
        out.offset_b = k0.offset_b + (k1.offset_b - k0.offset_b) * u;
        out.radius_a = k0.radius_a + (k1.radius_a - k0.radius_a) * u;
        out.radius_b = k0.radius_b + (k1.radius_b - k0.radius_b) * u;
        out.blend_k = k0.blend_k + (k1.blend_k - k0.blend_k) * u;
        return out;
    }

    CollisionPhantom phantom_;
    detail::MergeSchedule schedule_;
};

/// Voxel-center sampling of the analytic field on an n^3 grid.
inline GriddedField rasterize_phantom(const DropletField& field, int n, double voxel_pitch_um,
                                      const std::vector<double>& times_ns, const Vec3& center_um,
                                      size_t memory_cap_bytes = size_t{4} << 30, int threads = 1) {
    if (n < 2) throw usage_error("rasterize grid must have n >= 2");
    if (!std::is_sorted(times_ns.begin(), times_ns.end()))
        throw usage_error("rasterize times must be sorted");
    const size_t need = static_cast<size_t>(n) * n * n * times_ns.size() * sizeof(float);
    if (need > memory_cap_bytes)
        throw capacity_error("rasterized grid needs " + std::to_string(need) +
                             " bytes, above the cap of " + std::to_string(memory_cap_bytes));
    GriddedField grid;
    grid.n = n;
    grid.voxel_pitch_um = voxel_pitch_um;
    grid.center_um = center_um;
    grid.times_ns = times_ns;
    grid.frame_period_ns = times_ns.size() > 1 ? times_ns[1] - times_ns[0] : 0.0;
    grid.values.resize(need / sizeof(float));
    parallel_for(static_cast<int64_t>(times_ns.size()), threads, [&](int64_t ti) {
        const double t = times_ns[ti];
        for (int z = 0; z < n; ++z)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x)
                    grid.at(static_cast<int>(ti), z, y, x) =
                        static_cast<float>(field.mu(grid.voxel_center(x, y, z), t));
    });
    return grid;
}

/// Default paper-like collision: ~75 um droplets, 2.4 m/s closing speed,
/// impact parameter 0.12.
inline CollisionPhantom default_collision_phantom(double mu_water_per_um = 5.33e-4) {
    CollisionPhantom ph;
    ph.droplet_a = {{-90.0, 4.5, 0.0}, 36.0, {1.2, 0.0, 0.0}};
    ph.droplet_b = {{90.0, -4.5, 0.0}, 39.0, {-1.2, 0.0, 0.0}};
    ph.mu_water_per_um = mu_water_per_um;
    return ph;
}

}  // namespace mproj::phantom
