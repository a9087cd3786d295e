#pragma once

#include <cmath>
#include <vector>

#include "mproj/phantom/field4d.hpp"
#include "mproj/recon/implicit_field.hpp"
#include "mproj/util/errors.hpp"
#include "mproj/util/parallel.hpp"

namespace mproj::recon {

struct ExtractOptions {
    int n = 512;                 // dense evaluation grid per axis
    double gaussian_sigma = 2.0; // in dense-grid voxels
    int downsample = 4;          // block-mean factor to the output grid
    int64_t tile_points = 65536; // network evaluation chunk
    size_t memory_cap_bytes = size_t{4} << 30;
    int threads = 1;
};

namespace detail {

/// Separable 3D Gaussian on an n^3 float grid (symmetric boundaries).
inline void gaussian3d(std::vector<float>& v, int n, double sigma) {
    if (sigma <= 0.0) return;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& x : k) x /= sum;
    auto reflect = [n](int i) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - i - 1;
        }
        return i;
    };
    std::vector<float> tmp(v.size());
    auto idx = [n](int z, int y, int x) {
        return (static_cast<size_t>(z) * n + y) * n + x;
    };
    // x, then y, then z
    for (int pass = 0; pass < 3; ++pass) {
        for (int z = 0; z < n; ++z)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    double acc = 0.0;
                    for (int i = -radius; i <= radius; ++i) {
                        const int j = reflect((pass == 0 ? x : pass == 1 ? y : z) + i);
                        acc += k[i + radius] * (pass == 0   ? v[idx(z, y, j)]
                                                : pass == 1 ? v[idx(z, j, x)]
                                                            : v[idx(j, y, x)]);
                    }
                    tmp[idx(z, y, x)] = static_cast<float>(acc);
                }
        std::swap(v, tmp);
    }
}

}  // namespace detail

/// Dense n^3 evaluation of the field at time t, Gaussian filtering, and
/// block-mean downsampling to (n/downsample)^3. Values are physical mu in
/// 1/um. Evaluation is chunked (`tile_points`); any chunking produces
/// bit-identical grids because each point's forward pass is independent.
inline phantom::GriddedField extract_volume(const ImplicitField& field, double t_ns,
                                            const ExtractOptions& opt = {}) {
    if (opt.n < opt.downsample || opt.n % opt.downsample != 0)
        throw usage_error("extract grid size must be a positive multiple of the downsample factor");
    const size_t dense_bytes = static_cast<size_t>(opt.n) * opt.n * opt.n * sizeof(float);
    if (dense_bytes > opt.memory_cap_bytes)
        throw capacity_error("dense extraction grid needs " + std::to_string(dense_bytes) +
                             " bytes, above the cap of " + std::to_string(opt.memory_cap_bytes) +
                             "; evaluate in tiles (reduce n or raise the cap)");

    const int n = opt.n;
    std::vector<float> dense(static_cast<size_t>(n) * n * n);
    const double t_norm = field.norm.time_to_normalized(t_ns);
    const double step = 2.0 / n;

    // chunked evaluation over flat voxel index
    const int64_t total = static_cast<int64_t>(n) * n * n;
    const int64_t tile = std::max<int64_t>(1, opt.tile_points);
    for (int64_t start = 0; start < total; start += tile) {
        const int64_t count = std::min(tile, total - start);
        std::vector<std::array<double, 4>> coords(count);
        for (int64_t i = 0; i < count; ++i) {
            const int64_t flat = start + i;
            const int x = static_cast<int>(flat % n);
            const int y = static_cast<int>((flat / n) % n);
            const int z = static_cast<int>(flat / (static_cast<int64_t>(n) * n));
            coords[i] = {-1.0 + (x + 0.5) * step, -1.0 + (y + 0.5) * step, -1.0 + (z + 0.5) * step,
                         t_norm};
        }
        const std::vector<double> mu = field.mu_normalized(coords, opt.threads);
        for (int64_t i = 0; i < count; ++i)
            dense[start + i] = static_cast<float>(mu[i] / field.norm.half_size_um);
    }

    detail::gaussian3d(dense, n, opt.gaussian_sigma);

    const int m = n / opt.downsample;
    phantom::GriddedField out;
    out.n = m;
    out.voxel_pitch_um = 2.0 * field.norm.half_size_um / m;
    out.center_um = field.norm.center_um;
    out.times_ns = {t_ns};
    out.values.resize(static_cast<size_t>(m) * m * m);
    const int d = opt.downsample;
    const double inv = 1.0 / (static_cast<double>(d) * d * d);
    for (int z = 0; z < m; ++z)
        for (int y = 0; y < m; ++y)
            for (int x = 0; x < m; ++x) {
                double acc = 0.0;
                for (int dz = 0; dz < d; ++dz)
                    for (int dy = 0; dy < d; ++dy)
                        for (int dx = 0; dx < d; ++dx)
                            acc += dense[(static_cast<size_t>(z * d + dz) * n + (y * d + dy)) * n +
                                         (x * d + dx)];
                out.at(0, z, y, x) = static_cast<float>(acc * inv);
            }
    return out;
}

}  // namespace mproj::recon
