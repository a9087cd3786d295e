#pragma once

#include <string>
#include <vector>

#include "mproj/ad/graph.hpp"
#include "mproj/util/rng.hpp"

namespace mproj::ad {

/// Fully-connected trunk: leaky-relu hidden layers, optional softplus output
/// map that keeps predicted absorption non-negative with live gradients.
struct MlpSpec {
    int64_t in_dim = 72;
    std::vector<int64_t> hidden = {128, 128, 128, 128, 128, 128, 128, 128};
    int64_t out_dim = 1;
    double leaky_slope = 0.01;
    bool softplus_output = true;

    void validate() const {
        if (in_dim < 1 || out_dim < 1) throw usage_error("mlp dims must be >= 1");
        for (int64_t h : hidden)
            if (h < 1) throw usage_error("mlp hidden sizes must be >= 1");
    }
};

struct MlpParams {
    std::vector<Tensor> weights;  // [in, out] per layer
    std::vector<Tensor> biases;   // [out] per layer

    static MlpParams init(const MlpSpec& spec, Rng& rng, double output_bias = 0.0) {
        spec.validate();
        MlpParams p;
        int64_t prev = spec.in_dim;
        for (int64_t h : spec.hidden) {
            p.weights.push_back(Tensor::glorot(prev, h, rng));
            p.biases.push_back(Tensor::zeros({h}));
            prev = h;
        }
        p.weights.push_back(Tensor::glorot(prev, spec.out_dim, rng));
        p.biases.push_back(Tensor::full({spec.out_dim}, output_bias));
        return p;
    }

    void append_to(std::vector<Tensor>& params, std::vector<std::string>& names,
                   const std::string& prefix) const {
        for (size_t i = 0; i < weights.size(); ++i) {
            params.push_back(weights[i]);
            names.push_back(prefix + ".w" + std::to_string(i));
            params.push_back(biases[i]);
            names.push_back(prefix + ".b" + std::to_string(i));
        }
    }

    size_t tensor_count() const { return weights.size() + biases.size(); }
};

/// Insert the MLP parameters into a graph as gradient-bearing inputs.
struct MlpNodes {
    std::vector<int> weights, biases;
};

inline MlpNodes mlp_nodes(Graph& g, const MlpParams& params, bool requires_grad = true) {
    MlpNodes n;
    for (size_t i = 0; i < params.weights.size(); ++i) {
        n.weights.push_back(g.input(params.weights[i], requires_grad));
        n.biases.push_back(g.input(params.biases[i], requires_grad));
    }
    return n;
}

/// Forward pass on [N, in_dim] features; returns the [N, out_dim] node.
inline int mlp_forward(Graph& g, const MlpSpec& spec, const MlpNodes& nodes, int x) {
    spec.validate();
    if (g.value(x).rank() != 2 || g.value(x).shape[1] != spec.in_dim)
        throw usage_error("mlp input must be [N, " + std::to_string(spec.in_dim) + "], got " +
                          g.value(x).shape_str());
    int h = x;
    const size_t n_layers = nodes.weights.size();
    for (size_t i = 0; i < n_layers; ++i) {
        const int64_t rows = g.value(h).shape[0];
        const int64_t cols = g.value(nodes.weights[i]).shape[1];
        h = g.matmul(h, nodes.weights[i]);
        h = g.add(h, g.broadcast(nodes.biases[i], {rows, cols}));
        if (i + 1 < n_layers) h = g.leaky_relu(h, spec.leaky_slope);
    }
    if (spec.softplus_output) h = g.softplus(h);
    return h;
}

/// Patch discriminator: stride-2 conv stack on 32x32 patches, linear head to
/// a single logit per patch.
struct ConvNetSpec {
    int64_t in_channels = 1;
    std::vector<int64_t> channels = {16, 32, 64, 64};
    int64_t kernel = 4;
    int64_t stride = 2;
    int64_t pad = 1;
    int64_t input_hw = 32;
    double leaky_slope = 0.2;

    int64_t final_hw() const {
        int64_t hw = input_hw;
        for (size_t i = 0; i < channels.size(); ++i) hw = (hw + 2 * pad - kernel) / stride + 1;
        return hw;
    }
    int64_t head_in() const { return channels.back() * final_hw() * final_hw(); }

    void validate() const {
        if (channels.empty()) throw usage_error("discriminator needs at least one conv layer");
        if (final_hw() < 1) throw usage_error("discriminator conv stack collapses below 1x1");
    }
};

struct ConvNetParams {
    std::vector<Tensor> conv_w;  // [O, C, k, k]
    std::vector<Tensor> conv_b;  // [O]
    Tensor head_w;               // [head_in, 1]
    Tensor head_b;               // [1]

    static ConvNetParams init(const ConvNetSpec& spec, Rng& rng) {
        spec.validate();
        ConvNetParams p;
        int64_t prev = spec.in_channels;
        for (int64_t ch : spec.channels) {
            const double sigma = std::sqrt(2.0 / static_cast<double>(prev * spec.kernel * spec.kernel));
            p.conv_w.push_back(Tensor::randn({ch, prev, spec.kernel, spec.kernel}, rng, sigma));
            p.conv_b.push_back(Tensor::zeros({ch}));
            prev = ch;
        }
        p.head_w = Tensor::glorot(spec.head_in(), 1, rng);
        p.head_b = Tensor::zeros({1});
        return p;
    }

    void append_to(std::vector<Tensor>& params, std::vector<std::string>& names,
                   const std::string& prefix) const {
        for (size_t i = 0; i < conv_w.size(); ++i) {
            params.push_back(conv_w[i]);
            names.push_back(prefix + ".cw" + std::to_string(i));
            params.push_back(conv_b[i]);
            names.push_back(prefix + ".cb" + std::to_string(i));
        }
        params.push_back(head_w);
        names.push_back(prefix + ".head_w");
        params.push_back(head_b);
        names.push_back(prefix + ".head_b");
    }

    size_t tensor_count() const { return 2 * conv_w.size() + 2; }
};

struct ConvNetNodes {
    std::vector<int> conv_w, conv_b;
    int head_w = -1, head_b = -1;
};

inline ConvNetNodes convnet_nodes(Graph& g, const ConvNetParams& params, bool requires_grad = true) {
    ConvNetNodes n;
    for (size_t i = 0; i < params.conv_w.size(); ++i) {
        n.conv_w.push_back(g.input(params.conv_w[i], requires_grad));
        n.conv_b.push_back(g.input(params.conv_b[i], requires_grad));
    }
    n.head_w = g.input(params.head_w, requires_grad);
    n.head_b = g.input(params.head_b, requires_grad);
    return n;
}

/// Forward on [B, C, H, W] patches; returns [B, 1] logits.
inline int convnet_forward(Graph& g, const ConvNetSpec& spec, const ConvNetNodes& nodes, int x) {
    spec.validate();
    if (g.value(x).rank() != 4 || g.value(x).shape[2] != spec.input_hw ||
        g.value(x).shape[3] != spec.input_hw)
        throw usage_error("discriminator input must be [B, C, " + std::to_string(spec.input_hw) +
                          ", " + std::to_string(spec.input_hw) + "], got " + g.value(x).shape_str());
    int h = x;
    for (size_t i = 0; i < nodes.conv_w.size(); ++i) {
        h = g.conv2d(h, nodes.conv_w[i], nodes.conv_b[i], spec.stride, spec.pad);
        h = g.leaky_relu(h, spec.leaky_slope);
    }
    const int64_t batch = g.value(h).shape[0];
    h = g.reshape(h, {batch, spec.head_in()});
    h = g.matmul(h, nodes.head_w);
    h = g.add(h, g.broadcast(nodes.head_b, {batch, 1}));
    return h;
}

}  // namespace mproj::ad
