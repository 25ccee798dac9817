#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mbsnn/network.hpp"
#include "mbsnn/rng.hpp"

using namespace mbsnn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double std = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
    return t;
}

Conv2dParams random_conv(int out_c, int in_c, int k, int stride, int padding, Rng& rng) {
    Conv2dParams p;
    p.weights = random_tensor({out_c, in_c, k, k}, rng, 0.4);
    p.bias = random_tensor({out_c}, rng, 0.1);
    p.stride = stride;
    p.padding = padding;
    return p;
}

BatchNormParams random_bn(int c, Rng& rng) {
    BatchNormParams bn;
    bn.gamma = random_tensor({c}, rng, 0.3);
    for (int i = 0; i < c; ++i) bn.gamma[i] += 1.0;
    bn.beta = random_tensor({c}, rng, 0.2);
    bn.running_mean = random_tensor({c}, rng, 0.2);
    bn.running_var = Tensor({c});
    for (int i = 0; i < c; ++i) bn.running_var[i] = 0.2 + std::abs(rng.normal());
    bn.epsilon = 1e-5;
    return bn;
}

InterlaminarBlock random_block(int c, Rng& rng, bool projection = false, int in_c = -1) {
    if (in_c < 0) in_c = c;
    InterlaminarBlock b;
    b.conv1 = random_conv(c, in_c, 3, 1, 1, rng);
    b.bn1 = random_bn(c, rng);
    b.conv2 = random_conv(c, c, 3, 1, 1, rng);
    b.bn2 = random_bn(c, rng);
    b.fuse_conv = random_conv(c, 2 * c, 1, 1, 0, rng);
    b.fuse_bn = random_bn(c, rng);
    b.eca_kernel = random_tensor({3}, rng, 0.5);
    b.neuron.v_th = 0.6;
    b.neuron.tau = 4.0;
    b.neuron.format = {2, 1};
    if (projection) {
        b.shortcut_conv = random_conv(c, in_c, 1, 1, 0, rng);
        b.shortcut_bn = random_bn(c, rng);
    }
    return b;
}

SpikeTensor random_spikes(std::vector<int> shape, BitFormat fmt, Rng& rng, double p_zero = 0.5) {
    SpikeTensor s = SpikeTensor::zeros(std::move(shape), fmt);
    for (auto& c : s.codes) {
        if (rng.uniform() < p_zero) continue;
        c = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(fmt.max_code()) + 1));
    }
    return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("eca gates are sigmoid of the pooled 1-d convolution") {
    Rng rng(1);

    SUBCASE("zero kernel gives 0.5 everywhere") {
        Tensor x = random_tensor({2, 4, 3, 3}, rng);
        Tensor g = eca_weights(x, Tensor({3}));
        for (std::int64_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.5);
    }

    SUBCASE("channel-constant input gives equal gates") {
        Tensor x({1, 4, 2, 2});
        for (int c = 0; c < 4; ++c)
            for (int h = 0; h < 2; ++h)
                for (int w = 0; w < 2; ++w) x(0, c, h, w) = 0.7;
        // exact for k=1; for wider kernels zero padding makes the edge
        // channels see fewer taps, so equality holds on the interior and by
        // mirror symmetry at the ends
        Tensor g1 = eca_weights(x, random_tensor({1}, rng));
        for (int c = 1; c < 4; ++c) CHECK(g1(0, c) == g1(0, 0));
        Tensor k3({3}, {0.4, -0.2, 0.4});
        Tensor g3 = eca_weights(x, k3);
        CHECK(g3(0, 1) == doctest::Approx(g3(0, 2)).epsilon(1e-15));
        CHECK(g3(0, 0) == doctest::Approx(g3(0, 3)).epsilon(1e-15));
    }

    SUBCASE("matches composing the pieces by hand") {
        Tensor x = random_tensor({2, 6, 4, 4}, rng);
        Tensor k = random_tensor({5}, rng);
        Tensor g = eca_weights(x, k);
        Tensor pooled = global_avg_pool(x);
        Tensor z = conv1d(pooled.reshaped({2, 1, 6}), k, 2);
        for (int n = 0; n < 2; ++n)
            for (int c = 0; c < 6; ++c)
                CHECK(std::abs(g(n, c) - 1.0 / (1.0 + std::exp(-z[n * 6 + c]))) <= 1e-12);
    }

    SUBCASE("gates lie strictly in (0,1) and never amplify") {
        Tensor x = random_tensor({2, 5, 3, 3}, rng, 3.0);
        Tensor k = random_tensor({3}, rng, 2.0);
        Tensor g = eca_weights(x, k);
        for (std::int64_t i = 0; i < g.size(); ++i) {
            CHECK(g[i] > 0.0);
            CHECK(g[i] < 1.0);
        }
        Tensor y = apply_eca(x, k);
        for (std::int64_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i]) <= std::abs(x[i]));
    }
}

TEST_CASE("interlaminar block matches a straight-line transcript") {
    Rng rng(42);
    InterlaminarBlock block = random_block(4, rng);
    const BitFormat fmt = block.neuron.format;

    BlockState state;
    NeuronLayerState u_mid = NeuronLayerState::zeros({1, 4, 5, 5});
    NeuronLayerState u_out = NeuronLayerState::zeros({1, 4, 5, 5});

    SpikeTensor x = random_spikes({1, 4, 5, 5}, fmt, rng, 0.4);
    for (int t = 0; t < 4; ++t) {
        SpikeTensor got = interlaminar_forward(x, block, state);

        // transcript: each line of the block's forward, written out by hand
        Tensor xv = x.values();
        Tensor x_pre = batchnorm_apply(conv2d(xv, block.conv1), block.bn1);
        u_mid = charge(std::move(u_mid), x_pre, block.neuron);
        SpikeTensor s = fire_quantize(u_mid.u, block.neuron);
        u_mid = reset(std::move(u_mid), s, block.neuron);
        Tensor x_post = batchnorm_apply(conv2d(s.values(), block.conv2), block.bn2);
        Tensor x_re =
            batchnorm_apply(conv2d(concat_channels(x_pre, x_post), block.fuse_conv), block.fuse_bn);
        Tensor g = eca_weights(x_re, block.eca_kernel);
        for (int c = 0; c < 4; ++c)
            for (int h = 0; h < 5; ++h)
                for (int w = 0; w < 5; ++w) x_re(0, c, h, w) *= g(0, c);
        Tensor drive(x_post.shape());
        for (std::int64_t i = 0; i < drive.size(); ++i) drive[i] = x_post[i] + xv[i] + x_re[i];
        u_out = charge(std::move(u_out), drive, block.neuron);
        SpikeTensor want = fire_quantize(u_out.u, block.neuron);
        u_out = reset(std::move(u_out), want, block.neuron);

        CHECK(got.codes == want.codes);
        CHECK(max_abs_diff(got.values(), want.values()) <= 1e-9);

        x = random_spikes({1, 4, 5, 5}, fmt, rng, 0.4);
    }
}

TEST_CASE("zeroed fuse path reduces the block to a plain residual block") {
    Rng rng(5);
    InterlaminarBlock block = random_block(3, rng);
    block.fuse_conv.weights.fill(0.0);
    block.fuse_conv.bias.fill(0.0);
    block.fuse_bn.running_mean.fill(0.0);
    block.fuse_bn.beta.fill(0.0);

    BlockState state;
    NeuronLayerState u_mid = NeuronLayerState::zeros({1, 3, 4, 4});
    NeuronLayerState u_out = NeuronLayerState::zeros({1, 3, 4, 4});
    for (int t = 0; t < 3; ++t) {
        SpikeTensor x = random_spikes({1, 3, 4, 4}, block.neuron.format, rng, 0.4);
        SpikeTensor got = interlaminar_forward(x, block, state);

        // plain basic block: conv-bn-neuron-conv-bn, add shortcut, neuron
        Tensor xv = x.values();
        Tensor x_pre = batchnorm_apply(conv2d(xv, block.conv1), block.bn1);
        u_mid = charge(std::move(u_mid), x_pre, block.neuron);
        SpikeTensor s = fire_quantize(u_mid.u, block.neuron);
        u_mid = reset(std::move(u_mid), s, block.neuron);
        Tensor x_post = batchnorm_apply(conv2d(s.values(), block.conv2), block.bn2);
        Tensor drive(x_post.shape());
        for (std::int64_t i = 0; i < drive.size(); ++i) drive[i] = x_post[i] + xv[i];
        u_out = charge(std::move(u_out), drive, block.neuron);
        SpikeTensor want = fire_quantize(u_out.u, block.neuron);
        u_out = reset(std::move(u_out), want, block.neuron);

        CHECK(got.codes == want.codes);
    }
}

TEST_CASE("quiescent block stays silent") {
    Rng rng(9);
    InterlaminarBlock block = random_block(3, rng);
    // zero all shifts so zero input maps to zero drive
    for (BatchNormParams* bn : {&block.bn1, &block.bn2, &block.fuse_bn}) {
        bn->beta.fill(0.0);
        bn->running_mean.fill(0.0);
    }
    block.conv1.bias.fill(0.0);
    block.conv2.bias.fill(0.0);
    block.fuse_conv.bias.fill(0.0);

    BlockState state;
    SpikeTensor x = SpikeTensor::zeros({1, 3, 4, 4}, block.neuron.format);
    for (int t = 0; t < 3; ++t) {
        SpikeTensor out = interlaminar_forward(x, block, state);
        for (std::int32_t c : out.codes) CHECK(c == 0);
    }
}

TEST_CASE("absorb_bit_weights") {
    Rng rng(12);

    SUBCASE("binary format keeps the weights") {
        Conv2dParams conv = random_conv(2, 3, 3, 1, 1, rng);
        auto planes = absorb_bit_weights(conv, {1, 0});
        REQUIRE(planes.size() == 1);
        CHECK(max_abs_diff(planes[0].weights, conv.weights) == 0.0);
        CHECK(max_abs_diff(planes[0].bias, conv.bias) == 0.0);
    }

    SUBCASE("zero spikes give zero output on both paths") {
        Conv2dParams conv = random_conv(2, 3, 3, 1, 1, rng);
        conv.bias.fill(0.0);
        SpikeTensor s = SpikeTensor::zeros({1, 3, 6, 6}, {2, 1});
        Tensor a = spiking_conv2d_accumulate(s, conv);
        Tensor b = conv2d(s.values(), conv);
        for (std::int64_t i = 0; i < a.size(); ++i) {
            CHECK(a[i] == 0.0);
            CHECK(b[i] == 0.0);
        }
    }

    SUBCASE("bit-plane schedule equals the direct convolution") {
        for (int trial = 0; trial < 20; ++trial) {
            Conv2dParams conv = random_conv(3, 2, 3, 1, 1, rng);
            SpikeTensor s = random_spikes({1, 2, 6, 6}, {2, 1}, rng, 0.4);
            CHECK(max_abs_diff(spiking_conv2d_accumulate(s, conv), conv2d(s.values(), conv)) <=
                  1e-9);
        }
    }
}

TEST_CASE("network spec json round trip and schema") {
    NeuronConfig n;
    n.format = {2, 1};
    NetworkSpec spec = make_resnet8_slim_spec(1, 9, 4, n, 4);
    const std::string text = spec.to_json();
    NetworkSpec back = NetworkSpec::from_json(text);
    CHECK(back.to_json() == text);
    CHECK(back.layers.size() == spec.layers.size());
    CHECK(back.classes() == 4);

    CHECK_THROWS_AS(NetworkSpec::from_json(R"({"input_shape":[2],"bogus":1,"layers":[]})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        NetworkSpec::from_json(
            R"({"input_shape":[2],"layers":[{"kind":"readout","out_features":2,"x":1}]})"),
        std::invalid_argument);
}

TEST_CASE("forward_timesteps quiescence and determinism") {
    NeuronConfig n;
    n.format = {2, 1};
    NetworkSpec spec = make_resnet8_slim_spec(1, 9, 4, n, 2);
    Network net = Network::build(spec, 7);

    SUBCASE("zero input gives zero logits at any T") {
        Tensor zero({2, 1, 9, 9});
        ForwardResult r1 = net.forward_timesteps(zero);
        NetworkSpec spec1 = spec;
        spec1.time_steps = 1;
        Network net1 = Network::build(spec1, 7);
        ForwardResult r2 = net1.forward_timesteps(zero);
        for (std::int64_t i = 0; i < r1.logits.size(); ++i) {
            CHECK(r1.logits[i] == 0.0);
            CHECK(r2.logits[i] == 0.0);
        }
    }

    SUBCASE("same weights and input give bit-identical logits") {
        Rng rng(3);
        Tensor x = random_tensor({2, 1, 9, 9}, rng);
        ForwardResult a = net.forward_timesteps(x);
        ForwardResult b = net.forward_timesteps(x);
        for (std::int64_t i = 0; i < a.logits.size(); ++i) CHECK(a.logits[i] == b.logits[i]);
    }
}

TEST_CASE("single IF neuron network reproduces the rate-convergence bound") {
    NeuronConfig n;
    n.v_th = 0.6;
    n.leak = LeakMode::none;
    n.reset_mode = ResetMode::subtract;
    n.format = {2, 1};
    NetworkSpec spec;
    spec.input_shape = {1};
    spec.time_steps = 64;
    LayerSpec lin{.kind = LayerSpec::Kind::linear, .out_features = 1};
    spec.layers.push_back(lin);
    LayerSpec nl{.kind = LayerSpec::Kind::neuron, .neuron = n};
    spec.layers.push_back(nl);
    LayerSpec ro{.kind = LayerSpec::Kind::readout, .out_features = 1};
    spec.layers.push_back(ro);

    Network net = Network::build(spec, 1);
    std::get<LinearLayer>(net.layers()[0]).weights = Tensor({1, 1}, {1.0});
    std::get<LinearLayer>(net.layers()[0]).bias = Tensor({1});
    std::get<ReadoutLayer>(net.layers()[2]).weights = Tensor({1, 1}, {1.0});
    std::get<ReadoutLayer>(net.layers()[2]).bias = Tensor({1});

    const double s_max = n.format.max_value();
    for (double x : {0.1, 0.35, 0.8, 1.3, 2.0}) {
        ForwardResult r = net.forward_timesteps(Tensor({1, 1}, {x}));
        // logits are the mean spike value; scale by v_th to compare to the drive
        CHECK(std::abs(r.logits[0] * n.v_th - x) <= s_max * n.v_th / spec.time_steps);
    }
}

TEST_CASE("count_ops") {
    NeuronConfig n;
    n.format = {1, 0};
    NetworkSpec spec;
    spec.input_shape = {1, 6, 6};
    spec.time_steps = 3;
    LayerSpec c1{.kind = LayerSpec::Kind::conv, .out_channels = 2};
    spec.layers.push_back(c1);
    spec.layers.push_back({.kind = LayerSpec::Kind::batchnorm});
    LayerSpec nl{.kind = LayerSpec::Kind::neuron, .neuron = n};
    spec.layers.push_back(nl);
    LayerSpec c2{.kind = LayerSpec::Kind::conv, .out_channels = 3};
    spec.layers.push_back(c2);
    spec.layers.push_back({.kind = LayerSpec::Kind::avgpool});
    LayerSpec ro{.kind = LayerSpec::Kind::readout, .out_features = 2};
    spec.layers.push_back(ro);
    Network net = Network::build(spec, 11);

    Rng rng(6);
    Tensor x = random_tensor({2, 1, 6, 6}, rng);
    TraceOptions opts;
    opts.record_spikes = true;
    ForwardResult r = net.forward_timesteps(x, opts);
    OpReport report = count_ops(r.trace);

    SUBCASE("spiking conv reports zero MACs and the nnz * fan-in count") {
        const std::int64_t fan_in = 3 * 3 * 3;  // outC * kH * kW of the second conv
        for (int t = 0; t < 3; ++t) {
            std::int64_t nnz = 0;
            const SpikeTensor& s = r.trace.neuron_sites[0].spikes[static_cast<std::size_t>(t)];
            for (std::int32_t c : s.codes)
                if (c != 0) ++nnz;
            bool found = false;
            for (const auto& row : report.rows) {
                if (row.layer == "L3.conv" && row.t == t) {
                    found = true;
                    CHECK(row.mac_ops == 0);
                    CHECK(row.ac_ops == nnz * fan_in);
                }
            }
            CHECK(found);
        }
    }

    SUBCASE("analog layers report MACs") {
        for (const auto& row : report.rows) {
            if (row.layer == "L0.conv") {
                CHECK(row.ac_ops == 0);
                CHECK(row.mac_ops == 2LL * 2 * 6 * 6 * 1 * 3 * 3);
            }
        }
    }

    SUBCASE("recounting the same trace is identical") {
        OpReport again = count_ops(r.trace);
        REQUIRE(again.rows.size() == report.rows.size());
        for (std::size_t i = 0; i < report.rows.size(); ++i) {
            CHECK(again.rows[i].ac_ops == report.rows[i].ac_ops);
            CHECK(again.rows[i].mac_ops == report.rows[i].mac_ops);
        }
    }

    SUBCASE("all-silent network counts zero accumulate ops") {
        Tensor zero({1, 1, 6, 6});
        ForwardResult rz = net.forward_timesteps(zero, opts);
        OpReport rep = count_ops(rz.trace);
        for (const auto& row : rep.rows)
            if (row.layer == "L3.conv") CHECK(row.ac_ops == 0);
    }

    SUBCASE("missing trace is an error") {
        ForwardResult untraced = net.forward_timesteps(x);
        CHECK_THROWS_AS(count_ops(untraced.trace), std::invalid_argument);
    }
}

TEST_CASE("multi-bit spikes cost at most total_bits times the binary count") {
    Rng rng(44);
    // same support, formats (1,0) and (2,1)
    SpikeTensor binary = random_spikes({1, 2, 8, 8}, {1, 0}, rng, 0.5);
    SpikeTensor wide = SpikeTensor::zeros({1, 2, 8, 8}, {2, 1});
    for (std::size_t i = 0; i < binary.codes.size(); ++i)
        if (binary.codes[i] != 0)
            wide.codes[i] = 1 + static_cast<std::int32_t>(rng.below(7));

    Trace trace;
    trace.time_steps = 1;
    trace.neuron_sites.push_back({"bin", {binary}, {}});
    trace.neuron_sites.push_back({"wide", {wide}, {}});
    Trace::ConvSite a{"conv_bin", true, 0, 36, 0};
    Trace::ConvSite b{"conv_wide", true, 1, 36, 0};
    trace.conv_sites.push_back(a);
    trace.conv_sites.push_back(b);
    OpReport rep = count_ops(trace);
    CHECK(rep.rows[1].ac_ops <= 3 * rep.rows[0].ac_ops);
}

TEST_CASE("accumulate-only equivalence on network traces") {
    NeuronConfig n;
    n.format = {2, 1};
    NetworkSpec spec = make_resnet8_slim_spec(1, 9, 3, n, 2);
    Network net = Network::build(spec, 21);
    Rng rng(2);
    Tensor x = random_tensor({1, 1, 9, 9}, rng);
    TraceOptions opts;
    opts.record_spikes = true;
    ForwardResult r = net.forward_timesteps(x, opts);

    // every spike-fed conv: bit-plane accumulate path equals dense conv
    const auto& blk = std::get<BlockLayer>(net.layers()[3]).block;
    for (int t = 0; t < 2; ++t) {
        const SpikeTensor& s = r.trace.neuron_sites[0].spikes[static_cast<std::size_t>(t)];
        CHECK(max_abs_diff(spiking_conv2d_accumulate(s, blk.conv1), conv2d(s.values(), blk.conv1)) <=
              1e-9);
    }
}
