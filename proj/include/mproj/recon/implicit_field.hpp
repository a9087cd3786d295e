#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "mproj/ad/checkpoint.hpp"
#include "mproj/ad/encoding.hpp"
#include "mproj/ad/graph.hpp"
#include "mproj/ad/network.hpp"
#include "mproj/util/vec3.hpp"

namespace mproj::recon {

/// World <-> normalized-cube mapping. The network lives on [-1, 1]^4;
/// world positions are micrometers and times nanoseconds.
struct FieldNormalization {
    Vec3 center_um;
    double half_size_um = 204.8;  // 64 px * 3.2 um
    double t_center_ns = 0.0;
    double t_half_ns = 1.0;

    Vec3 to_normalized(const Vec3& world) const { return (world - center_um) / half_size_um; }
    double time_to_normalized(double t_ns) const { return (t_ns - t_center_ns) / t_half_ns; }
};

/// Trained 4D representation: positional encoding -> (optional latent) ->
/// MLP trunk -> softplus, predicting absorption per unit normalized length.
/// Physical mu (1/um) = network output / half_size_um.
struct ImplicitField {
    ad::MlpSpec trunk_spec;
    ad::MlpParams trunk;
    ad::Tensor latent;  // [1, latent_dim]; latent_dim may be 0
    int levels_space = 10;
    int levels_time = 6;
    int latent_dim = 8;
    FieldNormalization norm;

    static ImplicitField create(int levels_space, int levels_time, int latent_dim,
                                const std::vector<int64_t>& hidden, const FieldNormalization& norm,
                                Rng& rng, double output_bias = -8.0) {
        ImplicitField f;
        f.levels_space = levels_space;
        f.levels_time = levels_time;
        f.latent_dim = latent_dim;
        f.norm = norm;
        f.trunk_spec.in_dim = ad::encoded_width(levels_space, levels_time) + latent_dim;
        f.trunk_spec.hidden = hidden;
        f.trunk_spec.out_dim = 1;
        f.trunk_spec.softplus_output = true;
        f.trunk = ad::MlpParams::init(f.trunk_spec, rng, output_bias);
        f.latent = latent_dim > 0 ? ad::Tensor::randn({1, latent_dim}, rng, 0.01)
                                  : ad::Tensor({1, 0});
        return f;
    }

    /// Encode normalized coordinates and run the trunk inside an existing
    /// graph. trunk_nodes/latent_node let the trainer share parameter nodes;
    /// returns the [N, 1] node of non-negative normalized absorption.
    int forward_on_graph(ad::Graph& g, const std::vector<std::array<double, 4>>& coords,
                         const ad::MlpNodes& trunk_nodes, int latent_node) const {
        ad::Tensor feats = ad::encode_coordinates(coords, levels_space, levels_time);
        int x = g.constant(std::move(feats));
        if (latent_dim > 0) {
            const int64_t rows = static_cast<int64_t>(coords.size());
            const int lat = g.broadcast(latent_node, {rows, latent_dim});
            x = g.concat_cols(x, lat);
        }
        return ad::mlp_forward(g, trunk_spec, trunk_nodes, x);
    }

    /// Batched forward-only evaluation of normalized absorption.
    std::vector<double> mu_normalized(const std::vector<std::array<double, 4>>& coords,
                                      int threads = 1) const {
        ad::Graph g;
        g.threads = threads;
        const auto nodes = ad::mlp_nodes(g, trunk, false);
        const int latent_node = g.constant(latent);
        const int out = forward_on_graph(g, coords, nodes, latent_node);
        return g.value(out).v;
    }

    /// Physical mu (1/um) at world position and time.
    double mu_world(const Vec3& p_um, double t_ns) const {
        const Vec3 n = norm.to_normalized(p_um);
        const std::vector<std::array<double, 4>> c{{n.x, n.y, n.z, norm.time_to_normalized(t_ns)}};
        return mu_normalized(c)[0] / norm.half_size_um;
    }

    nlohmann::json arch_json() const {
        nlohmann::json j;
        j["levels_space"] = levels_space;
        j["levels_time"] = levels_time;
        j["latent_dim"] = latent_dim;
        j["hidden"] = trunk_spec.hidden;
        j["norm"] = {{"center", {norm.center_um.x, norm.center_um.y, norm.center_um.z}},
                     {"half_size_um", norm.half_size_um},
                     {"t_center_ns", norm.t_center_ns},
                     {"t_half_ns", norm.t_half_ns}};
        return j;
    }

    ad::Checkpoint to_checkpoint() const {
        ad::Checkpoint ckpt;
        ckpt.arch_spec = arch_json().dump();
        trunk.append_to(ckpt.tensors, ckpt.names, "trunk");
        ckpt.names.push_back("latent");
        ckpt.tensors.push_back(latent);
        return ckpt;
    }

    static ImplicitField from_checkpoint(const ad::Checkpoint& ckpt) {
        const auto j = nlohmann::json::parse(ckpt.arch_spec);
        ImplicitField f;
        f.levels_space = j.at("levels_space").get<int>();
        f.levels_time = j.at("levels_time").get<int>();
        f.latent_dim = j.at("latent_dim").get<int>();
        const auto hidden = j.at("hidden").get<std::vector<int64_t>>();
        f.trunk_spec.in_dim = ad::encoded_width(f.levels_space, f.levels_time) + f.latent_dim;
        f.trunk_spec.hidden = hidden;
        f.trunk_spec.out_dim = 1;
        f.trunk_spec.softplus_output = true;
        const auto& n = j.at("norm");
        f.norm.center_um = {n.at("center")[0].get<double>(), n.at("center")[1].get<double>(),
                            n.at("center")[2].get<double>()};
        f.norm.half_size_um = n.at("half_size_um").get<double>();
        f.norm.t_center_ns = n.at("t_center_ns").get<double>();
        f.norm.t_half_ns = n.at("t_half_ns").get<double>();
        const size_t n_layers = hidden.size() + 1;
        for (size_t i = 0; i < n_layers; ++i) {
            f.trunk.weights.push_back(ckpt.find("trunk.w" + std::to_string(i)));
            f.trunk.biases.push_back(ckpt.find("trunk.b" + std::to_string(i)));
        }
        f.latent = ckpt.find("latent");
        return f;
    }
};

}  // namespace mproj::recon
