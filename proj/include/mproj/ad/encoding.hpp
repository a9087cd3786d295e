#pragma once

#include <cmath>
#include <vector>

#include "mproj/ad/tensor.hpp"
#include "mproj/util/vec3.hpp"

namespace mproj::ad {

/// Sinusoidal lifting of a scalar in [-1, 1] to R^{2L}:
/// (sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^{L-1} pi p), cos(2^{L-1} pi p)).
inline std::vector<double> positional_encoding(double p, int levels) {
    if (levels < 1) throw usage_error("positional encoding needs L >= 1");
    std::vector<double> out(2 * static_cast<size_t>(levels));
    double freq = pi;
    for (int l = 0; l < levels; ++l) {
        out[2 * l] = std::sin(freq * p);
        out[2 * l + 1] = std::cos(freq * p);
        freq *= 2.0;
    }
    return out;
}

/// Encoded width of one (x, y, z, t) sample: 2*3*Lx + 2*Lt.
inline int64_t encoded_width(int levels_space, int levels_time) {
    return 6 * static_cast<int64_t>(levels_space) + 2 * static_cast<int64_t>(levels_time);
}

/// Encode a batch of normalized 4D coordinates into a [N, encoded_width]
/// feature tensor. Coordinates are constants in the training graph, so this
/// stays outside of autodiff.
inline Tensor encode_coordinates(const std::vector<std::array<double, 4>>& coords, int levels_space,
                                 int levels_time) {
    const int64_t width = encoded_width(levels_space, levels_time);
    Tensor out({static_cast<int64_t>(coords.size()), width});
    size_t idx = 0;
    for (const auto& c : coords) {
        for (int axis = 0; axis < 3; ++axis) {
            double freq = pi;
            for (int l = 0; l < levels_space; ++l) {
                out.v[idx++] = std::sin(freq * c[axis]);
                out.v[idx++] = std::cos(freq * c[axis]);
                freq *= 2.0;
            }
        }
        double freq = pi;
        for (int l = 0; l < levels_time; ++l) {
            out.v[idx++] = std::sin(freq * c[3]);
            out.v[idx++] = std::cos(freq * c[3]);
            freq *= 2.0;
        }
    }
    return out;
}

}  // namespace mproj::ad
