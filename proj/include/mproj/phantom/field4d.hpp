#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "mproj/util/errors.hpp"
#include "mproj/util/vec3.hpp"

namespace mproj::phantom {

struct Aabb {
    Vec3 lo, hi;

    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
    }
    Vec3 center() const { return (lo + hi) * 0.5; }
    Vec3 extent() const { return hi - lo; }
};

/// Regular cubic grid of absorption values, one cube per time point.
/// Layout: [time][z][y][x], x fastest. Values are mu in 1/um.
struct GriddedField {
    int n = 0;                      // voxels per axis
    double voxel_pitch_um = 1.0;
    Vec3 center_um;                 // geometric center of the cube
    std::vector<double> times_ns;   // sorted, one entry per stored cube
    double frame_period_ns = 0.0;   // nominal spacing, kept as metadata
    std::vector<float> values;

    size_t cube_size() const { return static_cast<size_t>(n) * n * n; }
    float& at(int t, int z, int y, int x) {
        return values[((static_cast<size_t>(t) * n + z) * n + y) * n + x];
    }
    float at(int t, int z, int y, int x) const {
        return values[((static_cast<size_t>(t) * n + z) * n + y) * n + x];
    }

    /// World position of voxel center (ix, iy, iz).
    Vec3 voxel_center(int ix, int iy, int iz) const {
        const double half = 0.5 * (n - 1) * voxel_pitch_um;
        return {center_um.x - half + ix * voxel_pitch_um, center_um.y - half + iy * voxel_pitch_um,
                center_um.z - half + iz * voxel_pitch_um};
    }

    Aabb bounds() const {
        const double half = 0.5 * n * voxel_pitch_um;
        return {center_um - Vec3{half, half, half}, center_um + Vec3{half, half, half}};
    }

    /// Trilinear interpolation in space (zero outside the cube), linear in time.
    double sample(const Vec3& p, double t_ns) const {
        if (times_ns.empty()) return 0.0;
        if (times_ns.size() == 1) return sample_cube(0, p);
        auto it = std::upper_bound(times_ns.begin(), times_ns.end(), t_ns);
        if (it == times_ns.begin()) return sample_cube(0, p);
        if (it == times_ns.end()) return sample_cube(static_cast<int>(times_ns.size()) - 1, p);
        const int hi = static_cast<int>(it - times_ns.begin());
        const int lo = hi - 1;
        const double f = (t_ns - times_ns[lo]) / (times_ns[hi] - times_ns[lo]);
        return (1.0 - f) * sample_cube(lo, p) + f * sample_cube(hi, p);
    }

    double sample_cube(int t, const Vec3& p) const {
        const double half = 0.5 * (n - 1) * voxel_pitch_um;
        const double gx = (p.x - center_um.x + half) / voxel_pitch_um;
        const double gy = (p.y - center_um.y + half) / voxel_pitch_um;
        const double gz = (p.z - center_um.z + half) / voxel_pitch_um;
        if (gx < -1.0 || gy < -1.0 || gz < -1.0 || gx > n || gy > n || gz > n) return 0.0;
        const int x0 = static_cast<int>(std::floor(gx)), y0 = static_cast<int>(std::floor(gy)),
                  z0 = static_cast<int>(std::floor(gz));
        const double fx = gx - x0, fy = gy - y0, fz = gz - z0;
        auto v = [&](int z, int y, int x) -> double {
            if (x < 0 || y < 0 || z < 0 || x >= n || y >= n || z >= n) return 0.0;
            return at(t, z, y, x);
        };
        const double c00 = v(z0, y0, x0) * (1 - fx) + v(z0, y0, x0 + 1) * fx;
        const double c01 = v(z0, y0 + 1, x0) * (1 - fx) + v(z0, y0 + 1, x0 + 1) * fx;
        const double c10 = v(z0 + 1, y0, x0) * (1 - fx) + v(z0 + 1, y0, x0 + 1) * fx;
        const double c11 = v(z0 + 1, y0 + 1, x0) * (1 - fx) + v(z0 + 1, y0 + 1, x0 + 1) * fx;
        return (c00 * (1 - fy) + c01 * fy) * (1 - fz) + (c10 * (1 - fy) + c11 * fy) * fz;
    }
};

/// Absorption field mu(x, y, z, t): either a callable evaluator or a grid.
/// Positions in um, times in ns, mu in 1/um.
class ScalarField4D {
  public:
    using Evaluator = std::function<double(const Vec3&, double)>;

    static ScalarField4D analytic(Evaluator f, Aabb bounds, double t_begin_ns, double t_end_ns) {
        ScalarField4D field;
        field.eval_ = std::move(f);
        field.bounds_ = bounds;
        field.t_begin_ = t_begin_ns;
        field.t_end_ = t_end_ns;
        return field;
    }

    static ScalarField4D gridded(GriddedField grid) {
        ScalarField4D field;
        field.bounds_ = grid.bounds();
        field.t_begin_ = grid.times_ns.empty() ? 0.0 : grid.times_ns.front();
        field.t_end_ = grid.times_ns.empty() ? 0.0 : grid.times_ns.back();
        field.grid_ = std::make_shared<GriddedField>(std::move(grid));
        return field;
    }

    /// Empty field (mu = 0 everywhere, all times valid).
    static ScalarField4D empty() {
        ScalarField4D field;
        field.eval_ = [](const Vec3&, double) { return 0.0; };
        field.bounds_ = {{0, 0, 0}, {0, 0, 0}};
        field.t_begin_ = -std::numeric_limits<double>::infinity();
        field.t_end_ = std::numeric_limits<double>::infinity();
        return field;
    }

    bool is_gridded() const { return grid_ != nullptr; }
    const GriddedField& grid() const {
        if (!grid_) throw usage_error("field has no gridded representation");
        return *grid_;
    }

    double mu(const Vec3& p_um, double t_ns) const {
        return grid_ ? grid_->sample(p_um, t_ns) : eval_(p_um, t_ns);
    }

    const Aabb& bounds() const { return bounds_; }
    double t_begin_ns() const { return t_begin_; }
    double t_end_ns() const { return t_end_; }
    bool time_in_range(double t_ns) const { return t_ns >= t_begin_ && t_ns <= t_end_; }

  private:
    Evaluator eval_;
    std::shared_ptr<GriddedField> grid_;
    Aabb bounds_{};
    double t_begin_ = 0.0, t_end_ = 0.0;
};

}  // namespace mproj::phantom
