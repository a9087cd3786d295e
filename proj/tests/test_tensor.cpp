#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <functional>

#include "mproj/ad/adam.hpp"
#include "mproj/ad/checkpoint.hpp"
#include "mproj/ad/encoding.hpp"
#include "mproj/ad/graph.hpp"
#include "mproj/ad/network.hpp"

using namespace mproj;
using namespace mproj::ad;

namespace {

/// Central finite differences on every element of every input tensor: the
/// independent gradient oracle. build(inputs) must return the scalar loss.
double max_fd_relative_error(std::vector<Tensor> inputs,
                             const std::function<double(Graph&, std::vector<int>&)>& build,
                             std::vector<Tensor>* analytic_out = nullptr, double h = 1e-5) {
    // analytic gradients: build once with requires_grad, run backward inside build
    std::vector<Tensor> analytic;
    Graph g;
    std::vector<int> ids;
    for (const auto& t : inputs) ids.push_back(g.input(t, true));
    std::vector<int> ids_copy = ids;
    build(g, ids_copy);
    for (int id : ids) analytic.push_back(g.grad(id));
    if (analytic_out) *analytic_out = analytic;

    double max_rel = 0.0;
    for (size_t t = 0; t < inputs.size(); ++t) {
        for (size_t j = 0; j < inputs[t].v.size(); ++j) {
            auto eval = [&](double delta) {
                std::vector<Tensor> shifted = inputs;
                shifted[t].v[j] += delta;
                Graph gg;
                std::vector<int> sid;
                for (const auto& tt : shifted) sid.push_back(gg.input(tt, false));
                return build(gg, sid);
            };
            const double fd = (eval(h) - eval(-h)) / (2.0 * h);
            const double an = analytic[t].v[j];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            max_rel = std::max(max_rel, std::abs(fd - an) / denom);
        }
    }
    return max_rel;
}

}  // namespace

TEST_CASE("grad of sum of squares is 2w exactly") {
    Graph g;
    const int w = g.input(Tensor({4}, {1.0, -2.0, 0.5, 3.0}), true);
    const int loss = g.sum(g.mul(w, w));
    g.backward(loss);
    const Tensor d = g.grad(w);
    for (size_t i = 0; i < d.v.size(); ++i) REQUIRE(d.v[i] == 2.0 * g.value(w).v[i]);
}

TEST_CASE("gradient of an unused parameter is exactly zero") {
    Graph g;
    const int used = g.input(Tensor::scalar(2.0), true);
    const int unused = g.input(Tensor({3}, {1, 2, 3}), true);
    const int loss = g.mul(used, used);
    g.backward(loss);
    const Tensor d = g.grad(unused);
    for (double v : d.v) REQUIRE(v == 0.0);
}

TEST_CASE("grad requested for a node outside the graph raises") {
    Graph g;
    g.input(Tensor::scalar(1.0), true);
    CHECK_THROWS_AS(g.grad(57), usage_error);
    CHECK_THROWS_AS(g.grad(-1), usage_error);
}

TEST_CASE("every primitive passes the finite-difference oracle") {
    Rng rng(12345);
    auto randt = [&](std::vector<int64_t> shape) {
        Tensor t(shape);
        for (auto& v : t.v) v = rng.uniform(-1.5, 1.5);
        return t;
    };

    SECTION("add/sub/mul chain") {
        const double err = max_fd_relative_error(
            {randt({3, 4}), randt({3, 4}), randt({3, 4})}, [](Graph& g, std::vector<int>& in) {
                const int y = g.mul(g.add(in[0], in[1]), g.sub(in[0], in[2]));
                const int loss = g.sum(y);
                g.backward(loss);
                return g.value(loss).v[0];
            });
        CHECK(err < 1e-4);
    }
    SECTION("matmul") {
        const double err = max_fd_relative_error(
            {randt({5, 7}), randt({7, 3})}, [](Graph& g, std::vector<int>& in) {
                const int loss = g.sum(g.matmul(in[0], in[1]));
                g.backward(loss);
                return g.value(loss).v[0];
            });
        CHECK(err < 1e-4);
    }
    SECTION("conv2d with stride and padding") {
        const double err = max_fd_relative_error(
            {randt({2, 2, 6, 6}), randt({3, 2, 4, 4}), randt({3})},
            [](Graph& g, std::vector<int>& in) {
                const int y = g.conv2d(in[0], in[1], in[2], 2, 1);
                const int loss = g.mean(g.mul(y, y));
                g.backward(loss);
                return g.value(loss).v[0];
            });
        CHECK(err < 1e-4);
    }
    SECTION("activations") {
        const double err = max_fd_relative_error(
            {randt({4, 5})}, [](Graph& g, std::vector<int>& in) {
                int h = g.leaky_relu(in[0], 0.1);
                h = g.sigmoid(h);
                h = g.softplus(h);
                h = g.exp(g.scale(h, -0.7));
                const int loss = g.sum(h);
                g.backward(loss);
                return g.value(loss).v[0];
            });
        CHECK(err < 1e-4);
    }
    SECTION("relu away from the kink") {
        Tensor t({6}, {-1.4, -0.6, 0.3, 0.9, 1.7, -2.2});
        const double err = max_fd_relative_error({t}, [](Graph& g, std::vector<int>& in) {
            const int loss = g.sum(g.relu(in[0]));
            g.backward(loss);
            return g.value(loss).v[0];
        });
        CHECK(err < 1e-4);
    }
    SECTION("log of a positive branch") {
        Tensor t({5}, {0.4, 1.2, 2.5, 0.9, 3.3});
        const double err = max_fd_relative_error({t}, [](Graph& g, std::vector<int>& in) {
            const int loss = g.mean(g.log(in[0]));
            g.backward(loss);
            return g.value(loss).v[0];
        });
        CHECK(err < 1e-4);
    }
    SECTION("slice, concat, broadcast, reshape") {
        const double err = max_fd_relative_error(
            {randt({4, 6}), randt({4, 2}), randt({6})}, [](Graph& g, std::vector<int>& in) {
                const int s = g.slice_cols(g.slice_rows(in[0], 1, 4), 0, 2);  // [3,2]
                const int c = g.concat_cols(s, g.slice_rows(in[1], 1, 4));    // [3,4]
                const int b = g.broadcast(g.slice_cols(g.reshape(in[2], {1, 6}), 0, 4), {3, 4});
                const int loss = g.sum(g.mul(c, b));
                g.backward(loss);
                return g.value(loss).v[0];
            });
        CHECK(err < 1e-4);
    }
    SECTION("clamp inside the active region") {
        Tensor t({4}, {-0.8, 0.2, 0.7, -0.3});
        const double err = max_fd_relative_error({t}, [](Graph& g, std::vector<int>& in) {
            const int loss = g.sum(g.clamp(in[0], -1.0, 1.0));
            g.backward(loss);
            return g.value(loss).v[0];
        });
        CHECK(err < 1e-4);
    }
}

TEST_CASE("random 3-layer MLP passes the finite-difference oracle") {
    Rng rng(777);
    MlpSpec spec;
    spec.in_dim = 6;
    spec.hidden = {10, 8, 5};
    spec.out_dim = 2;
    MlpParams params = MlpParams::init(spec, rng, 0.1);
    Tensor x({7, 6});
    for (auto& v : x.v) v = rng.uniform(-1, 1);

    std::vector<Tensor> inputs;
    for (size_t i = 0; i < params.weights.size(); ++i) {
        inputs.push_back(params.weights[i]);
        inputs.push_back(params.biases[i]);
    }
    inputs.push_back(x);

    auto build = [&](Graph& g, std::vector<int>& in) {
        MlpNodes nodes;
        for (size_t i = 0; i + 1 < in.size(); i += 2) {
            nodes.weights.push_back(in[i]);
            nodes.biases.push_back(in[i + 1]);
        }
        const int out = mlp_forward(g, spec, nodes, in.back());
        const int loss = g.mean(g.mul(out, out));
        g.backward(loss);
        return g.value(loss).v[0];
    };
    CHECK(max_fd_relative_error(inputs, build) < 1e-4);
}

TEST_CASE("forward ops reject non-finite values") {
    Graph g;
    const int x = g.input(Tensor({2}, {1.0, -3.0}), true);
    CHECK_THROWS_AS(g.log(x), stage_error);  // log of a negative value
}

TEST_CASE("positional encoding") {
    SECTION("p = 0 alternates (0, 1)") {
        const auto enc = positional_encoding(0.0, 5);
        REQUIRE(enc.size() == 10);
        for (size_t i = 0; i < enc.size(); i += 2) {
            CHECK(enc[i] == 0.0);
            CHECK(enc[i + 1] == 1.0);
        }
    }
    SECTION("encoded widths match L_x = 10, L_t = 6") {
        CHECK(encoded_width(10, 6) == 72);
        const auto coords = std::vector<std::array<double, 4>>{{0.1, -0.2, 0.3, 0.5}};
        const Tensor t = encode_coordinates(coords, 10, 6);
        CHECK(t.shape == std::vector<int64_t>{1, 72});
        // 60 spatial components, 12 temporal
        CHECK(2 * 3 * 10 == 60);
        CHECK(2 * 6 == 12);
    }
    SECTION("2-periodicity at L = 1") {
        const auto a = positional_encoding(0.37, 1);
        const auto b = positional_encoding(2.37, 1);
        CHECK(a[0] == Catch::Approx(b[0]).margin(1e-12));
        CHECK(a[1] == Catch::Approx(b[1]).margin(1e-12));
    }
    SECTION("L < 1 rejected") { CHECK_THROWS_AS(positional_encoding(0.0, 0), usage_error); }
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    std::vector<Tensor> params = {Tensor({3}, {1.0, 2.0, 3.0})};
    const std::vector<Tensor> grads = {Tensor::zeros({3})};
    AdamState state;
    state.lr = 0.1;
    for (int i = 0; i < 5; ++i) adam_step(params, grads, state);
    CHECK(params[0].v == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("adam minimizes a 1-D quadratic") {
    std::vector<Tensor> params = {Tensor::scalar(-4.0)};
    AdamState state;
    state.lr = 1e-2;
    for (int i = 0; i < 5000; ++i) {
        const double w = params[0].v[0];
        const std::vector<Tensor> grads = {Tensor::scalar(2.0 * (w - 3.0))};
        adam_step(params, grads, state);
    }
    CHECK(std::abs(params[0].v[0] - 3.0) < 1e-3);
}

TEST_CASE("first adam step follows the closed form") {
    std::vector<Tensor> params = {Tensor({3}, {0.5, -1.0, 2.0})};
    const Tensor before = params[0];
    const std::vector<Tensor> grads = {Tensor({3}, {0.3, -0.001, 7.0})};
    AdamState state;
    state.lr = 1e-4;
    adam_step(params, grads, state);
    for (int i = 0; i < 3; ++i) {
        const double gi = grads[0].v[i];
        const double expected = before.v[i] - state.lr * gi / (std::abs(gi) + state.eps);
        REQUIRE(params[0].v[i] == Catch::Approx(expected).margin(1e-9));
    }
}

TEST_CASE("adam rejects shape mismatches") {
    std::vector<Tensor> params = {Tensor::zeros({3})};
    const std::vector<Tensor> grads = {Tensor::zeros({4})};
    AdamState state;
    CHECK_THROWS_AS(adam_step(params, grads, state), usage_error);
}

TEST_CASE("zero-weight MLP outputs the mapped bias") {
    Rng rng(1);
    MlpSpec spec;
    spec.in_dim = 4;
    spec.hidden = {6, 6};
    spec.out_dim = 1;
    MlpParams params = MlpParams::init(spec, rng, -1.3);
    for (auto& w : params.weights)
        for (auto& v : w.v) v = 0.0;
    for (size_t i = 0; i + 1 < params.biases.size(); ++i)
        for (auto& v : params.biases[i].v) v = 0.0;

    Graph g;
    const auto nodes = mlp_nodes(g, params, false);
    Tensor x({5, 4});
    for (auto& v : x.v) v = rng.uniform(-1, 1);
    const int out = mlp_forward(g, spec, nodes, g.constant(x));
    const double expected = std::log1p(std::exp(-1.3));  // softplus of the output bias
    for (double v : g.value(out).v) REQUIRE(v == Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("discriminator maps a 32x32 patch to one logit, deterministically") {
    Rng rng(9);
    ConvNetSpec spec;
    ConvNetParams params = ConvNetParams::init(spec, rng);
    CHECK(spec.final_hw() == 2);

    Tensor patch({3, 1, 32, 32});
    for (auto& v : patch.v) v = rng.uniform(0, 1);
    auto run = [&] {
        Graph g;
        const auto nodes = convnet_nodes(g, params, false);
        const int out = convnet_forward(g, spec, nodes, g.constant(patch));
        return g.value(out);
    };
    const Tensor a = run();
    const Tensor b = run();
    REQUIRE(a.shape == std::vector<int64_t>{3, 1});
    REQUIRE(a.v == b.v);  // bit-identical forward
}

TEST_CASE("checkpoint round-trips tensors and arch spec") {
    Rng rng(4);
    Checkpoint ckpt;
    ckpt.arch_spec = "{\"trunk\":[8,128]}";
    ckpt.names = {"w0", "b0"};
    ckpt.tensors = {Tensor::randn({3, 4}, rng), Tensor::randn({4}, rng)};
    const std::string path = (std::filesystem::temp_directory_path() / "mproj_ckpt_test.mpck").string();
    save_checkpoint(path, ckpt);
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.arch_spec == ckpt.arch_spec);
    REQUIRE(loaded.names == ckpt.names);
    for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
        CHECK(loaded.tensors[i].shape == ckpt.tensors[i].shape);
        CHECK(loaded.tensors[i].v == ckpt.tensors[i].v);
    }
    CHECK_THROWS_AS(loaded.find("nope"), usage_error);

    SECTION("truncated checkpoint reports the byte offset") {
        const std::string data = serialize_checkpoint(ckpt);
        CHECK_THROWS_AS(deserialize_checkpoint(data.substr(0, data.size() / 2)), format_error);
    }
    std::filesystem::remove(path);
}

TEST_CASE("matmul kernel is invariant to batching and threads") {
    Rng rng(31);
    Tensor a({64, 40});
    Tensor b({40, 24});
    for (auto& v : a.v) v = rng.uniform(-1, 1);
    for (auto& v : b.v) v = rng.uniform(-1, 1);

    Graph g1;
    g1.threads = 1;
    const int full = g1.matmul(g1.constant(a), g1.constant(b));

    Graph g2;
    g2.threads = 2;
    const int threaded = g2.matmul(g2.constant(a), g2.constant(b));
    REQUIRE(g1.value(full).v == g2.value(threaded).v);

    // row-sliced evaluation must agree bit-for-bit with the batched one
    Graph g3;
    Tensor a_lo({16, 40});
    Tensor a_hi({48, 40});
    std::copy(a.v.begin(), a.v.begin() + 16 * 40, a_lo.v.begin());
    std::copy(a.v.begin() + 16 * 40, a.v.end(), a_hi.v.begin());
    const int lo = g3.matmul(g3.constant(a_lo), g3.constant(b));
    const int hi = g3.matmul(g3.constant(a_hi), g3.constant(b));
    for (int64_t i = 0; i < 16 * 24; ++i) REQUIRE(g3.value(lo).v[i] == g1.value(full).v[i]);
    for (int64_t i = 0; i < 48 * 24; ++i)
        REQUIRE(g3.value(hi).v[i] == g1.value(full).v[16 * 24 + i]);
}
