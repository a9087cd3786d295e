#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "mproj/recon/implicit_field.hpp"
#include "mproj/util/errors.hpp"
#include "mproj/util/image.hpp"
#include "mproj/util/rng.hpp"

namespace mproj::recon {

/// Half-length of the ray segment marched through the normalized cube; 1.5
/// covers any in-plane rotation of the [-1,1]^3 cube with margin.
constexpr double ray_span = 1.5;

/// One parallel ray in normalized coordinates: origin in the detector plane,
/// direction in the horizontal plane at `angle` from the +z axis.
struct RaySet {
    std::vector<std::array<double, 3>> origins;  // normalized (x, y, z)
    double angle_rad = 0.0;
    double t_normalized = 0.0;  // shared time of the view
};

/// Detector-plane basis for an in-plane view angle.
inline std::array<double, 3> view_direction(double angle_rad) {
    return {std::sin(angle_rad), 0.0, std::cos(angle_rad)};
}
inline std::array<double, 3> view_u_axis(double angle_rad) {
    return {std::cos(angle_rad), 0.0, -std::sin(angle_rad)};
}

/// Rays for pixel coordinates (px, py) on a crop of `size` pixels with pitch
/// `pitch_um`. u/v offsets are the world detector-plane coordinates of the
/// crop center; the cube center's own in-plane coordinates are subtracted so
/// ray origins come out in normalized cube coordinates.
inline RaySet make_rays(const FieldNormalization& norm, double angle_rad, double t_ns,
                        const std::vector<std::array<double, 2>>& pixels, int size, double pitch_um,
                        double u_offset_um = 0.0, double v_offset_um = 0.0) {
    RaySet rays;
    rays.angle_rad = angle_rad;
    rays.t_normalized = norm.time_to_normalized(t_ns);
    const auto u_axis = view_u_axis(angle_rad);
    const double center_u = norm.center_um.x * u_axis[0] + norm.center_um.z * u_axis[2];
    const double center_v = norm.center_um.y;
    const double c = 0.5 * (size - 1);
    rays.origins.reserve(pixels.size());
    for (const auto& p : pixels) {
        const double u = ((p[0] - c) * pitch_um + u_offset_um - center_u) / norm.half_size_um;
        const double v = ((c - p[1]) * pitch_um + v_offset_um - center_v) / norm.half_size_um;
        rays.origins.push_back({u * u_axis[0], v, u * u_axis[2]});
    }
    return rays;
}

/// Differentiable transmission rendering: stratified samples along each ray,
/// quadrature sum of the (in-cube) absorption, exp(-tau). Returns the
/// [n_rays, 1] node. A null rng gives deterministic midpoint samples.
inline int render_rays_on_graph(ad::Graph& g, const ImplicitField& field,
                                const ad::MlpNodes& trunk_nodes, int latent_node, const RaySet& rays,
                                int samples_per_ray, Rng* rng) {
    if (samples_per_ray < 1) throw usage_error("samples_per_ray must be >= 1");
    const int64_t n_rays = static_cast<int64_t>(rays.origins.size());
    const double ds = 2.0 * ray_span / samples_per_ray;
    const auto dir = view_direction(rays.angle_rad);

    std::vector<std::array<double, 4>> coords;
    coords.reserve(static_cast<size_t>(n_rays) * samples_per_ray);
    ad::Tensor inside({n_rays, samples_per_ray});
    size_t idx = 0;
    for (int64_t r = 0; r < n_rays; ++r) {
        const auto& o = rays.origins[r];
        for (int k = 0; k < samples_per_ray; ++k) {
            const double jitter = rng ? rng->uniform() : 0.5;
            const double s = -ray_span + (k + jitter) * ds;
            const double x = o[0] + s * dir[0];
            const double y = o[1] + s * dir[1];
            const double z = o[2] + s * dir[2];
            coords.push_back({x, y, z, rays.t_normalized});
            const bool in = x >= -1.0 && x <= 1.0 && y >= -1.0 && y <= 1.0 && z >= -1.0 && z <= 1.0;
            inside.v[idx++] = in ? 1.0 : 0.0;
        }
    }

    const int mu = field.forward_on_graph(g, coords, trunk_nodes, latent_node);  // [N, 1]
    const int mu_mat = g.reshape(mu, {n_rays, samples_per_ray});
    const int masked = g.mul(mu_mat, g.constant(std::move(inside)));
    const int tau = g.matmul(masked, g.constant(ad::Tensor({samples_per_ray, 1},
                                                           std::vector<double>(samples_per_ray, ds))));
    return g.exp(g.neg(tau));  // [n_rays, 1]
}

/// Forward-only rendering of a full image at a view angle.
inline ImageD render_projection(const ImplicitField& field, double angle_rad, double t_ns, int size,
                                double pitch_um, int samples_per_ray, int threads = 1,
                                double u_offset_um = 0.0, double v_offset_um = 0.0) {
    std::vector<std::array<double, 2>> pixels;
    pixels.reserve(static_cast<size_t>(size) * size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            pixels.push_back({static_cast<double>(x), static_cast<double>(y)});
    const RaySet rays =
        make_rays(field.norm, angle_rad, t_ns, pixels, size, pitch_um, u_offset_um, v_offset_um);
    ad::Graph g;
    g.threads = threads;
    const auto nodes = ad::mlp_nodes(g, field.trunk, false);
    const int latent_node = g.constant(field.latent);
    const int out = render_rays_on_graph(g, field, nodes, latent_node, rays, samples_per_ray, nullptr);
    ImageD img(size, size);
    img.data = g.value(out).v;
    return img;
}

}  // namespace mproj::recon
