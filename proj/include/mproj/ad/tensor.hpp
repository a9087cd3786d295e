#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mproj/util/errors.hpp"
#include "mproj/util/rng.hpp"

namespace mproj::ad {

/// Dense 64-bit float tensor. All autodiff runs in double so the
/// finite-difference oracles are meaningful.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(numel_of(shape)), 0.0);
    }
    Tensor(std::vector<int64_t> s, std::vector<double> values) : shape(std::move(s)), v(std::move(values)) {
        if (static_cast<int64_t>(v.size()) != numel_of(shape))
            throw usage_error("tensor value count does not match shape");
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 0) throw usage_error("negative tensor dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int64_t> s, double value) {
        Tensor t(std::move(s));
        for (auto& x : t.v) x = value;
        return t;
    }
    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    static Tensor randn(std::vector<int64_t> s, Rng& rng, double sigma = 1.0) {
        Tensor t(std::move(s));
        for (auto& x : t.v) x = sigma * rng.normal();
        return t;
    }

    /// Uniform Glorot initialization for a [fan_in, fan_out] weight matrix.
    static Tensor glorot(int64_t fan_in, int64_t fan_out, Rng& rng) {
        Tensor t({fan_in, fan_out});
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& x : t.v) x = rng.uniform(-bound, bound);
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
        return s + "]";
    }
};

}  // namespace mproj::ad
