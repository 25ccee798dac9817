#include "mbsnn/network.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "mbsnn/rng.hpp"

namespace mbsnn {

using nlohmann::json;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Spec validation and JSON form.
// ---------------------------------------------------------------------------

namespace {

const char* kind_name(LayerSpec::Kind k) {
    switch (k) {
        case LayerSpec::Kind::conv: return "conv";
        case LayerSpec::Kind::batchnorm: return "batchnorm";
        case LayerSpec::Kind::neuron: return "neuron";
        case LayerSpec::Kind::relu: return "relu";
        case LayerSpec::Kind::block: return "block";
        case LayerSpec::Kind::avgpool: return "avgpool";
        case LayerSpec::Kind::flatten: return "flatten";
        case LayerSpec::Kind::linear: return "linear";
        case LayerSpec::Kind::readout: return "readout";
    }
    return "?";
}

LayerSpec::Kind kind_from_name(const std::string& s) {
    for (auto k : {LayerSpec::Kind::conv, LayerSpec::Kind::batchnorm, LayerSpec::Kind::neuron,
                   LayerSpec::Kind::relu, LayerSpec::Kind::block, LayerSpec::Kind::avgpool,
                   LayerSpec::Kind::flatten, LayerSpec::Kind::linear, LayerSpec::Kind::readout}) {
        if (s == kind_name(k)) return k;
    }
    throw std::invalid_argument("unknown layer kind: " + s);
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) ok = true;
        if (!ok) throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
    }
}

json neuron_to_json(const NeuronConfig& n) {
    return json{{"v_th", n.v_th},
                {"tau", n.tau},
                {"int_bits", n.format.int_bits},
                {"frac_bits", n.format.frac_bits},
                {"reset", n.reset_mode == ResetMode::hard ? "hard" : "subtract"},
                {"leak", n.leak == LeakMode::leaky ? "leaky" : "none"},
                {"u0", n.initial_charge}};
}

NeuronConfig neuron_from_json(const json& j) {
    reject_unknown_keys(j, {"v_th", "tau", "int_bits", "frac_bits", "reset", "leak", "u0"},
                        "neuron");
    NeuronConfig n;
    n.v_th = j.value("v_th", 0.6);
    n.tau = j.value("tau", 4.0);
    n.initial_charge = j.value("u0", 0.0);
    n.format.int_bits = j.value("int_bits", 1);
    n.format.frac_bits = j.value("frac_bits", 0);
    const std::string reset = j.value("reset", "hard");
    if (reset == "hard")
        n.reset_mode = ResetMode::hard;
    else if (reset == "subtract")
        n.reset_mode = ResetMode::subtract;
    else
        throw std::invalid_argument("unknown reset mode: " + reset);
    const std::string leak = j.value("leak", "leaky");
    if (leak == "leaky")
        n.leak = LeakMode::leaky;
    else if (leak == "none")
        n.leak = LeakMode::none;
    else
        throw std::invalid_argument("unknown leak mode: " + leak);
    n.validate();
    return n;
}

json layer_to_json(const LayerSpec& l) {
    json j{{"kind", kind_name(l.kind)}};
    switch (l.kind) {
        case LayerSpec::Kind::conv:
            j["out_channels"] = l.out_channels;
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            break;
        case LayerSpec::Kind::neuron:
            j["neuron"] = neuron_to_json(l.neuron);
            break;
        case LayerSpec::Kind::block:
            j["out_channels"] = l.out_channels;
            j["stride"] = l.stride;
            j["eca_kernel"] = l.eca_kernel;
            j["neuron"] = neuron_to_json(l.neuron);
            break;
        case LayerSpec::Kind::linear:
        case LayerSpec::Kind::readout:
            j["out_features"] = l.out_features;
            break;
        default:
            break;
    }
    return j;
}

LayerSpec layer_from_json(const json& j) {
    LayerSpec l;
    l.kind = kind_from_name(j.at("kind").get<std::string>());
    switch (l.kind) {
        case LayerSpec::Kind::conv:
            reject_unknown_keys(j, {"kind", "out_channels", "kernel", "stride", "padding"}, "conv");
            l.out_channels = j.at("out_channels").get<int>();
            l.kernel = j.value("kernel", 3);
            l.stride = j.value("stride", 1);
            l.padding = j.value("padding", (l.kernel - 1) / 2);
            break;
        case LayerSpec::Kind::neuron:
            reject_unknown_keys(j, {"kind", "neuron"}, "neuron layer");
            l.neuron = neuron_from_json(j.value("neuron", json::object()));
            break;
        case LayerSpec::Kind::block:
            reject_unknown_keys(j, {"kind", "out_channels", "stride", "eca_kernel", "neuron"},
                                "block");
            l.out_channels = j.at("out_channels").get<int>();
            l.stride = j.value("stride", 1);
            l.eca_kernel = j.value("eca_kernel", 3);
            l.neuron = neuron_from_json(j.value("neuron", json::object()));
            break;
        case LayerSpec::Kind::linear:
        case LayerSpec::Kind::readout:
            reject_unknown_keys(j, {"kind", "out_features"}, "linear/readout");
            l.out_features = j.at("out_features").get<int>();
            break;
        default:
            reject_unknown_keys(j, {"kind"}, kind_name(l.kind));
            break;
    }
    return l;
}

}  // namespace

bool NetworkSpec::is_spiking() const {
    for (const auto& l : layers)
        if (l.kind == LayerSpec::Kind::neuron || l.kind == LayerSpec::Kind::block) return true;
    return false;
}

int NetworkSpec::classes() const {
    check_shape(!layers.empty(), "network has no layers");
    return layers.back().out_features;
}

void NetworkSpec::validate() const {
    if (encoding != "constant_current")
        shape_error("unsupported input encoding: " + encoding);
    check_shape(time_steps >= 1, "time_steps must be >= 1");
    check_shape(input_shape.size() == 1 || input_shape.size() == 3,
                "input_shape must be [F] or [C,H,W]");
    for (int d : input_shape) check_shape(d >= 1, "input extents must be positive");
    check_shape(!layers.empty(), "network has no layers");
    int readouts = 0;
    bool has_spiking = false, has_relu = false;
    for (const auto& l : layers) {
        if (l.kind == LayerSpec::Kind::readout) ++readouts;
        if (l.kind == LayerSpec::Kind::neuron || l.kind == LayerSpec::Kind::block) {
            has_spiking = true;
            l.neuron.validate();
        }
        if (l.kind == LayerSpec::Kind::relu) has_relu = true;
        if (l.kind == LayerSpec::Kind::block)
            check_shape(l.eca_kernel >= 1 && l.eca_kernel % 2 == 1, "eca_kernel must be odd");
    }
    check_shape(readouts == 1, "network must have exactly one readout layer");
    check_shape(layers.back().kind == LayerSpec::Kind::readout, "readout must be the last layer");
    check_shape(!(has_spiking && has_relu), "network mixes relu and spiking layers");
    check_shape(layers.back().out_features >= 1, "readout needs at least one class");
}

std::string NetworkSpec::to_json() const {
    json j;
    j["input_shape"] = input_shape;
    j["time_steps"] = time_steps;
    j["encoding"] = encoding;
    j["layers"] = json::array();
    for (const auto& l : layers) j["layers"].push_back(layer_to_json(l));
    return j.dump(2);
}

NetworkSpec NetworkSpec::from_json(const std::string& text) {
    json j = json::parse(text);
    reject_unknown_keys(j, {"input_shape", "time_steps", "encoding", "layers"}, "network");
    NetworkSpec spec;
    spec.input_shape = j.at("input_shape").get<std::vector<int>>();
    spec.time_steps = j.value("time_steps", 4);
    spec.encoding = j.value("encoding", "constant_current");
    for (const auto& lj : j.at("layers")) spec.layers.push_back(layer_from_json(lj));
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Stock architectures.
// ---------------------------------------------------------------------------

NetworkSpec make_resnet8_slim_spec(int in_channels, int image_hw, int classes,
                                   const NeuronConfig& neuron, int time_steps) {
    NetworkSpec s;
    s.input_shape = {in_channels, image_hw, image_hw};
    s.time_steps = time_steps;
    LayerSpec stem;
    stem.kind = LayerSpec::Kind::conv;
    stem.out_channels = 16;
    s.layers.push_back(stem);
    s.layers.push_back({.kind = LayerSpec::Kind::batchnorm});
    LayerSpec n{.kind = LayerSpec::Kind::neuron, .neuron = neuron};
    s.layers.push_back(n);
    int channels[3] = {16, 32, 64};
    for (int i = 0; i < 3; ++i) {
        LayerSpec b;
        b.kind = LayerSpec::Kind::block;
        b.out_channels = channels[i];
        b.stride = i == 0 ? 1 : 2;
        b.eca_kernel = 3;
        b.neuron = neuron;
        s.layers.push_back(b);
    }
    s.layers.push_back({.kind = LayerSpec::Kind::avgpool});
    LayerSpec r{.kind = LayerSpec::Kind::readout, .out_features = classes};
    s.layers.push_back(r);
    s.validate();
    return s;
}

NetworkSpec make_spiral_mlp_spec(int in_features, int hidden, int classes,
                                 const NeuronConfig& neuron, int time_steps) {
    NetworkSpec s;
    s.input_shape = {in_features};
    s.time_steps = time_steps;
    for (int i = 0; i < 2; ++i) {
        LayerSpec l{.kind = LayerSpec::Kind::linear, .out_features = hidden};
        s.layers.push_back(l);
        LayerSpec n{.kind = LayerSpec::Kind::neuron, .neuron = neuron};
        s.layers.push_back(n);
    }
    LayerSpec r{.kind = LayerSpec::Kind::readout, .out_features = classes};
    s.layers.push_back(r);
    s.validate();
    return s;
}

NetworkSpec make_desk_cnn_ann_spec(int in_channels, int image_hw, int classes) {
    NetworkSpec s;
    s.input_shape = {in_channels, image_hw, image_hw};
    s.time_steps = 1;
    LayerSpec c1{.kind = LayerSpec::Kind::conv, .out_channels = 8};
    s.layers.push_back(c1);
    s.layers.push_back({.kind = LayerSpec::Kind::batchnorm});
    s.layers.push_back({.kind = LayerSpec::Kind::relu});
    LayerSpec c2{.kind = LayerSpec::Kind::conv, .out_channels = 16, .stride = 2};
    s.layers.push_back(c2);
    s.layers.push_back({.kind = LayerSpec::Kind::batchnorm});
    s.layers.push_back({.kind = LayerSpec::Kind::relu});
    s.layers.push_back({.kind = LayerSpec::Kind::avgpool});
    LayerSpec r{.kind = LayerSpec::Kind::readout, .out_features = classes};
    s.layers.push_back(r);
    s.validate();
    return s;
}

NetworkSpec make_desk_mlp_ann_spec(std::vector<int> input_shape, int hidden, int classes) {
    NetworkSpec s;
    s.input_shape = std::move(input_shape);
    s.time_steps = 1;
    if (s.input_shape.size() == 3) s.layers.push_back({.kind = LayerSpec::Kind::flatten});
    for (int i = 0; i < 2; ++i) {
        LayerSpec l{.kind = LayerSpec::Kind::linear, .out_features = hidden};
        s.layers.push_back(l);
        s.layers.push_back({.kind = LayerSpec::Kind::relu});
    }
    LayerSpec r{.kind = LayerSpec::Kind::readout, .out_features = classes};
    s.layers.push_back(r);
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Block and attention primitives.
// ---------------------------------------------------------------------------

void InterlaminarBlock::validate() const {
    conv1.validate();
    bn1.validate();
    conv2.validate();
    bn2.validate();
    fuse_conv.validate();
    fuse_bn.validate();
    neuron.validate();
    const int c = conv2.out_channels();
    check_shape(fuse_conv.in_channels() == 2 * c, "fuse conv must take 2C input channels");
    check_shape(fuse_conv.out_channels() == c, "fuse conv must emit C channels");
    check_shape(eca_kernel.rank() == 1 && eca_kernel.dim(0) % 2 == 1,
                "eca kernel must be rank-1 and odd");
    check_shape(shortcut_conv.has_value() == shortcut_bn.has_value(),
                "projection conv and bn go together");
}

Tensor eca_weights(const Tensor& x, const Tensor& kernel) {
    check_shape(kernel.rank() == 1 && kernel.dim(0) % 2 == 1, "eca kernel must be odd");
    const Tensor pooled = global_avg_pool(x);  // [N,C]
    const Tensor z = conv1d(pooled.reshaped({pooled.dim(0), 1, pooled.dim(1)}), kernel,
                            (kernel.dim(0) - 1) / 2);
    Tensor g({pooled.dim(0), pooled.dim(1)});
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] = sigmoid(z[i]);
    return g;
}

Tensor apply_eca(const Tensor& x, const Tensor& kernel) {
    const Tensor g = eca_weights(x, kernel);
    Tensor out(x.shape());
    const int n_batch = x.dim(0), c = x.dim(1);
    const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
    for (int n = 0; n < n_batch; ++n)
        for (int ch = 0; ch < c; ++ch) {
            const double gate = g(n, ch);
            const std::int64_t base = (static_cast<std::int64_t>(n) * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) out[base + i] = x[base + i] * gate;
        }
    return out;
}

namespace {

// Sink for per-site trace data while stepping a block.
struct BlockTraceSink {
    Trace::NeuronSite* mid = nullptr;
    Trace::NeuronSite* out = nullptr;
    bool record_membrane = false;
};

NeuronLayerState fresh_state(const std::vector<int>& shape, const NeuronConfig& cfg) {
    NeuronLayerState s = NeuronLayerState::zeros(shape);
    if (cfg.initial_charge != 0.0) s.u.fill(cfg.initial_charge);
    return s;
}

SpikeTensor block_step(const SpikeTensor& x, const InterlaminarBlock& block, BlockState& state,
                       BlockTraceSink* sink) {
    block.validate();
    const Tensor xv = x.values();
    const Tensor x_pre = batchnorm_apply(conv2d(xv, block.conv1), block.bn1);
    if (!state.ready) {
        state.mid = fresh_state(x_pre.shape(), block.neuron);
        state.ready = true;
    }
    check_shape(state.mid.u.same_shape(x_pre), "block state shape mismatch");

    state.mid = charge(std::move(state.mid), x_pre, block.neuron);
    if (sink && sink->record_membrane) sink->mid->membrane.push_back(state.mid.u);
    SpikeTensor s = fire_quantize(state.mid.u, block.neuron);
    state.mid = reset(std::move(state.mid), s, block.neuron);
    if (sink) sink->mid->spikes.push_back(s);

    const Tensor x_post = batchnorm_apply(conv2d(s.values(), block.conv2), block.bn2);
    Tensor x_re = batchnorm_apply(conv2d(concat_channels(x_pre, x_post), block.fuse_conv),
                                  block.fuse_bn);
    x_re = apply_eca(x_re, block.eca_kernel);

    Tensor shortcut = block.shortcut_conv
                          ? batchnorm_apply(conv2d(xv, *block.shortcut_conv), *block.shortcut_bn)
                          : xv;
    check_shape(shortcut.same_shape(x_post), "shortcut shape mismatch");

    Tensor drive(x_post.shape());
    for (std::int64_t i = 0; i < drive.size(); ++i)
        drive[i] = x_post[i] + shortcut[i] + x_re[i];

    if (!state.out.u.same_shape(drive) && state.out.u.size() == 0)
        state.out = fresh_state(drive.shape(), block.neuron);
    state.out = charge(std::move(state.out), drive, block.neuron);
    if (sink && sink->record_membrane) sink->out->membrane.push_back(state.out.u);
    SpikeTensor out = fire_quantize(state.out.u, block.neuron);
    state.out = reset(std::move(state.out), out, block.neuron);
    if (sink) sink->out->spikes.push_back(out);
    return out;
}

}  // namespace

SpikeTensor interlaminar_forward(const SpikeTensor& x, const InterlaminarBlock& block,
                                 BlockState& state) {
    return block_step(x, block, state, nullptr);
}

std::vector<Conv2dParams> absorb_bit_weights(const Conv2dParams& conv, BitFormat fmt) {
    conv.validate();
    fmt.validate();
    std::vector<Conv2dParams> planes;
    planes.reserve(static_cast<std::size_t>(fmt.total_bits()));
    for (int k = 0; k < fmt.total_bits(); ++k) {
        Conv2dParams p = conv;
        const double w = std::exp2(static_cast<double>(fmt.int_bits - 1 - k));
        for (std::int64_t i = 0; i < p.weights.size(); ++i) p.weights[i] = conv.weights[i] * w;
        if (k != 0) p.bias = Tensor({conv.out_channels()});
        planes.push_back(std::move(p));
    }
    return planes;
}

Tensor spiking_conv2d_accumulate(const SpikeTensor& spikes, const Conv2dParams& conv) {
    const std::vector<BitPlane> bits = bit_decompose(spikes);
    const std::vector<Conv2dParams> planes = absorb_bit_weights(conv, spikes.format);
    Tensor out;
    for (std::size_t k = 0; k < planes.size(); ++k) {
        Tensor part = conv2d(bits[k].bits, planes[k]);
        if (k == 0) {
            out = std::move(part);
        } else {
            for (std::int64_t i = 0; i < out.size(); ++i) out[i] += part[i];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Runtime network.
// ---------------------------------------------------------------------------

namespace {

struct ShapeCursor {
    bool image = false;
    int c = 0, h = 0, w = 0;
    int f = 0;
};

ShapeCursor cursor_from_input(const std::vector<int>& input_shape) {
    ShapeCursor cur;
    if (input_shape.size() == 3) {
        cur.image = true;
        cur.c = input_shape[0];
        cur.h = input_shape[1];
        cur.w = input_shape[2];
    } else {
        cur.f = input_shape[0];
    }
    return cur;
}

Tensor kaiming_conv(int out_c, int in_c, int k, Rng& rng) {
    Tensor w({out_c, in_c, k, k});
    const double std = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std);
    return w;
}

BatchNormParams fresh_bn(int c) {
    BatchNormParams bn = BatchNormParams::identity(c);
    bn.epsilon = 1e-5;
    return bn;
}

Conv2dParams make_conv(int out_c, int in_c, int k, int stride, int padding, Rng& rng) {
    Conv2dParams p;
    p.weights = kaiming_conv(out_c, in_c, k, rng);
    p.bias = Tensor({out_c});
    p.stride = stride;
    p.padding = padding;
    return p;
}

int conv_out_extent(int in, int k, int stride, int padding) {
    const int span = in + 2 * padding - k;
    check_shape(span >= 0 && span % stride == 0, "layer output extent not integral");
    return span / stride + 1;
}

}  // namespace

Network Network::build(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Network net;
    net.spec_ = spec;
    Rng rng(seed);
    ShapeCursor cur = cursor_from_input(spec.input_shape);
    for (const LayerSpec& l : spec.layers) {
        switch (l.kind) {
            case LayerSpec::Kind::conv: {
                check_shape(cur.image, "conv layer needs an image input");
                ConvLayer cl{make_conv(l.out_channels, cur.c, l.kernel, l.stride, l.padding, rng)};
                cur.h = conv_out_extent(cur.h, l.kernel, l.stride, l.padding);
                cur.w = conv_out_extent(cur.w, l.kernel, l.stride, l.padding);
                cur.c = l.out_channels;
                net.layers_.emplace_back(std::move(cl));
                break;
            }
            case LayerSpec::Kind::batchnorm: {
                check_shape(cur.image, "batchnorm layer needs an image input");
                net.layers_.emplace_back(BatchNormLayer{fresh_bn(cur.c)});
                break;
            }
            case LayerSpec::Kind::neuron:
                net.layers_.emplace_back(NeuronLayer{l.neuron});
                break;
            case LayerSpec::Kind::relu:
                net.layers_.emplace_back(ReluLayer{});
                break;
            case LayerSpec::Kind::block: {
                check_shape(cur.image, "block layer needs an image input");
                InterlaminarBlock b;
                b.conv1 = make_conv(l.out_channels, cur.c, 3, l.stride, 1, rng);
                b.bn1 = fresh_bn(l.out_channels);
                b.conv2 = make_conv(l.out_channels, l.out_channels, 3, 1, 1, rng);
                b.bn2 = fresh_bn(l.out_channels);
                b.fuse_conv = make_conv(l.out_channels, 2 * l.out_channels, 1, 1, 0, rng);
                b.fuse_bn = fresh_bn(l.out_channels);
                b.eca_kernel = Tensor({l.eca_kernel});
                for (int i = 0; i < l.eca_kernel; ++i)
                    b.eca_kernel[i] = rng.normal(0.0, 1.0 / std::sqrt(l.eca_kernel));
                b.neuron = l.neuron;
                if (l.stride != 1 || cur.c != l.out_channels) {
                    b.shortcut_conv = make_conv(l.out_channels, cur.c, 1, l.stride, 0, rng);
                    b.shortcut_bn = fresh_bn(l.out_channels);
                }
                cur.h = conv_out_extent(cur.h, 3, l.stride, 1);
                cur.w = conv_out_extent(cur.w, 3, l.stride, 1);
                cur.c = l.out_channels;
                net.layers_.emplace_back(BlockLayer{std::move(b)});
                break;
            }
            case LayerSpec::Kind::avgpool:
                check_shape(cur.image, "avgpool layer needs an image input");
                cur.image = false;
                cur.f = cur.c;
                net.layers_.emplace_back(AvgPoolLayer{});
                break;
            case LayerSpec::Kind::flatten:
                check_shape(cur.image, "flatten layer needs an image input");
                cur.image = false;
                cur.f = cur.c * cur.h * cur.w;
                net.layers_.emplace_back(FlattenLayer{});
                break;
            case LayerSpec::Kind::linear: {
                check_shape(!cur.image, "linear layer needs a flat input");
                LinearLayer ll;
                ll.weights = Tensor({l.out_features, cur.f});
                const double std = std::sqrt(2.0 / cur.f);
                for (std::int64_t i = 0; i < ll.weights.size(); ++i)
                    ll.weights[i] = rng.normal(0.0, std);
                ll.bias = Tensor({l.out_features});
                cur.f = l.out_features;
                net.layers_.emplace_back(std::move(ll));
                break;
            }
            case LayerSpec::Kind::readout: {
                check_shape(!cur.image, "readout layer needs a flat input");
                ReadoutLayer rl;
                rl.weights = Tensor({l.out_features, cur.f});
                const double std = std::sqrt(1.0 / cur.f);
                for (std::int64_t i = 0; i < rl.weights.size(); ++i)
                    rl.weights[i] = rng.normal(0.0, std);
                rl.bias = Tensor({l.out_features});
                cur.f = l.out_features;
                net.layers_.emplace_back(std::move(rl));
                break;
            }
        }
    }
    return net;
}

namespace {

Tensor flatten_to_2d(const Tensor& x) {
    if (x.rank() == 2) return x;
    int f = 1;
    for (int i = 1; i < x.rank(); ++i) f *= x.dim(i);
    return x.reshaped({x.dim(0), f});
}

}  // namespace

ForwardResult Network::forward_timesteps(const Tensor& input, const TraceOptions& opts) const {
    spec_.validate();
    check_shape(is_spiking(), "forward_timesteps needs a spiking network");
    check_shape(input.rank() == static_cast<int>(spec_.input_shape.size()) + 1,
                "input rank does not match the network spec");
    for (std::size_t i = 0; i < spec_.input_shape.size(); ++i)
        check_shape(input.dim(static_cast<int>(i) + 1) == spec_.input_shape[i],
                    "input shape does not match the network spec");
    const int batch = input.dim(0);
    const int t_steps = spec_.time_steps;

    // Per-layer mutable state, local to this call.
    std::vector<NeuronLayerState> neuron_states(layers_.size());
    std::vector<BlockState> block_states(layers_.size());
    Tensor readout_accum;

    ForwardResult result;
    Trace& trace = result.trace;
    trace.time_steps = t_steps;

    // Pre-register trace sites in layer order.
    std::vector<int> mid_site(layers_.size(), -1), out_site(layers_.size(), -1);
    {
        int spike_site = -1;  // index of the neuron site feeding the next consumer
        ShapeCursor cur = cursor_from_input(spec_.input_shape);
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const std::string base = "L" + std::to_string(i);
            const LayerSpec& ls = spec_.layers[i];
            switch (ls.kind) {
                case LayerSpec::Kind::conv: {
                    Trace::ConvSite site;
                    site.name = base + ".conv";
                    site.spike_input = spike_site >= 0;
                    site.input_site = spike_site;
                    site.fan_in = static_cast<std::int64_t>(ls.out_channels) * ls.kernel * ls.kernel;
                    const int oh = conv_out_extent(cur.h, ls.kernel, ls.stride, ls.padding);
                    const int ow = conv_out_extent(cur.w, ls.kernel, ls.stride, ls.padding);
                    site.dense_macs_per_step = static_cast<std::int64_t>(batch) * ls.out_channels *
                                               oh * ow * cur.c * ls.kernel * ls.kernel;
                    trace.conv_sites.push_back(site);
                    cur.h = oh;
                    cur.w = ow;
                    cur.c = ls.out_channels;
                    spike_site = -1;
                    break;
                }
                case LayerSpec::Kind::batchnorm:
                    spike_site = -1;
                    break;
                case LayerSpec::Kind::neuron:
                    trace.neuron_sites.push_back({base + ".neuron", {}, {}});
                    out_site[i] = static_cast<int>(trace.neuron_sites.size()) - 1;
                    spike_site = out_site[i];
                    break;
                case LayerSpec::Kind::block: {
                    const int oh = conv_out_extent(cur.h, 3, ls.stride, 1);
                    const int ow = conv_out_extent(cur.w, 3, ls.stride, 1);
                    auto add_conv = [&](const std::string& name, bool spiking, int in_site,
                                        std::int64_t fan_in, std::int64_t dense) {
                        Trace::ConvSite site;
                        site.name = name;
                        site.spike_input = spiking;
                        site.input_site = in_site;
                        site.fan_in = fan_in;
                        site.dense_macs_per_step = dense;
                        trace.conv_sites.push_back(site);
                    };
                    add_conv(base + ".conv1", spike_site >= 0, spike_site,
                             static_cast<std::int64_t>(ls.out_channels) * 9,
                             static_cast<std::int64_t>(batch) * ls.out_channels * oh * ow * cur.c * 9);
                    trace.neuron_sites.push_back({base + ".neuron1", {}, {}});
                    mid_site[i] = static_cast<int>(trace.neuron_sites.size()) - 1;
                    add_conv(base + ".conv2", true, mid_site[i],
                             static_cast<std::int64_t>(ls.out_channels) * 9,
                             static_cast<std::int64_t>(batch) * ls.out_channels * oh * ow *
                                 ls.out_channels * 9);
                    // fuse conv + eca consume real-valued BN outputs
                    add_conv(base + ".fuse", false, -1, 0,
                             static_cast<std::int64_t>(batch) * ls.out_channels * oh * ow *
                                 (2 * ls.out_channels));
                    add_conv(base + ".eca", false, -1, 0,
                             static_cast<std::int64_t>(batch) *
                                 (static_cast<std::int64_t>(ls.out_channels) * ls.eca_kernel +
                                  static_cast<std::int64_t>(ls.out_channels) * oh * ow));
                    if (ls.stride != 1 || cur.c != ls.out_channels)
                        add_conv(base + ".shortcut", spike_site >= 0, spike_site,
                                 static_cast<std::int64_t>(ls.out_channels) * 1,
                                 static_cast<std::int64_t>(batch) * ls.out_channels * oh * ow * cur.c);
                    trace.neuron_sites.push_back({base + ".neuron2", {}, {}});
                    out_site[i] = static_cast<int>(trace.neuron_sites.size()) - 1;
                    spike_site = out_site[i];
                    cur.h = oh;
                    cur.w = ow;
                    cur.c = ls.out_channels;
                    break;
                }
                case LayerSpec::Kind::avgpool:
                case LayerSpec::Kind::flatten:
                    // Pooling keeps spike sparsity meaningless for op counting;
                    // downstream consumers see analog values.
                    if (ls.kind == LayerSpec::Kind::flatten && spike_site >= 0) {
                        // flatten preserves spikes one-to-one
                    } else {
                        spike_site = -1;
                    }
                    cur.image = false;
                    cur.f = ls.kind == LayerSpec::Kind::avgpool ? cur.c : cur.c * cur.h * cur.w;
                    break;
                case LayerSpec::Kind::linear:
                case LayerSpec::Kind::readout: {
                    Trace::ConvSite site;
                    site.name = base + (ls.kind == LayerSpec::Kind::readout ? ".readout" : ".linear");
                    site.spike_input = spike_site >= 0;
                    site.input_site = spike_site;
                    site.fan_in = ls.out_features;
                    site.dense_macs_per_step =
                        static_cast<std::int64_t>(batch) * ls.out_features * cur.f;
                    trace.conv_sites.push_back(site);
                    cur.f = ls.out_features;
                    spike_site = -1;
                    break;
                }
                default:
                    spike_site = -1;
                    break;
            }
        }
    }

    for (int t = 0; t < t_steps; ++t) {
        Tensor cur = input;
        int spike_site = -1;
        const SpikeTensor* cur_spikes = nullptr;
        SpikeTensor spike_buffer;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const RuntimeLayer& rl = layers_[i];
            if (const auto* cl = std::get_if<ConvLayer>(&rl)) {
                cur = conv2d(cur, cl->p);
                spike_site = -1;
            } else if (const auto* bl = std::get_if<BatchNormLayer>(&rl)) {
                cur = batchnorm_apply(cur, bl->p);
                spike_site = -1;
            } else if (const auto* nl = std::get_if<NeuronLayer>(&rl)) {
                NeuronLayerState& st = neuron_states[i];
                if (st.u.size() == 0) st = fresh_state(cur.shape(), nl->cfg);
                st = charge(std::move(st), cur, nl->cfg);
                Trace::NeuronSite& site = trace.neuron_sites[static_cast<std::size_t>(out_site[i])];
                if (opts.record_membrane) site.membrane.push_back(st.u);
                spike_buffer = fire_quantize(st.u, nl->cfg);
                st = reset(std::move(st), spike_buffer, nl->cfg);
                if (opts.record_spikes) site.spikes.push_back(spike_buffer);
                cur = spike_buffer.values();
                cur_spikes = &spike_buffer;
                spike_site = out_site[i];
            } else if (std::get_if<ReluLayer>(&rl)) {
                shape_error("relu layer inside a spiking forward");
            } else if (const auto* bll = std::get_if<BlockLayer>(&rl)) {
                check_shape(spike_site >= 0 && cur_spikes != nullptr,
                            "block layer needs spike input");
                BlockTraceSink sink;
                sink.mid = &trace.neuron_sites[static_cast<std::size_t>(mid_site[i])];
                sink.out = &trace.neuron_sites[static_cast<std::size_t>(out_site[i])];
                sink.record_membrane = opts.record_membrane;
                BlockTraceSink* sinkp = opts.record_spikes || opts.record_membrane ? &sink : nullptr;
                if (sinkp && !opts.record_spikes) {
                    // membrane-only tracing still records spikes internally; drop them after
                }
                spike_buffer = block_step(*cur_spikes, bll->block, block_states[i], sinkp);
                if (sinkp && !opts.record_spikes) {
                    sink.mid->spikes.clear();
                    sink.out->spikes.clear();
                }
                cur = spike_buffer.values();
                cur_spikes = &spike_buffer;
                spike_site = out_site[i];
            } else if (std::get_if<AvgPoolLayer>(&rl)) {
                cur = global_avg_pool(cur);
                spike_site = -1;
            } else if (std::get_if<FlattenLayer>(&rl)) {
                cur = flatten_to_2d(cur);
                spike_site = -1;
            } else if (const auto* ll = std::get_if<LinearLayer>(&rl)) {
                cur = linear(flatten_to_2d(cur), ll->weights, ll->bias);
                spike_site = -1;
            } else if (const auto* ro = std::get_if<ReadoutLayer>(&rl)) {
                Tensor z = linear(flatten_to_2d(cur), ro->weights, ro->bias);
                if (readout_accum.size() == 0) readout_accum = Tensor(z.shape());
                for (std::int64_t k = 0; k < z.size(); ++k) readout_accum[k] += z[k];
            }
        }
    }

    result.logits = Tensor(readout_accum.shape());
    for (std::int64_t i = 0; i < readout_accum.size(); ++i)
        result.logits[i] = readout_accum[i] / static_cast<double>(t_steps);
    return result;
}

Network Network::with_time_steps(int t_steps) const {
    check_shape(t_steps >= 1, "time_steps must be >= 1");
    Network copy = *this;
    copy.spec_.time_steps = t_steps;
    return copy;
}

Tensor Network::forward_ann(const Tensor& input, std::vector<Tensor>* relu_activations) const {
    spec_.validate();
    check_shape(!is_spiking(), "forward_ann needs a non-spiking network");
    Tensor cur = input;
    for (const RuntimeLayer& rl : layers_) {
        if (const auto* cl = std::get_if<ConvLayer>(&rl)) {
            cur = conv2d(cur, cl->p);
        } else if (const auto* bl = std::get_if<BatchNormLayer>(&rl)) {
            cur = batchnorm_apply(cur, bl->p);
        } else if (std::get_if<ReluLayer>(&rl)) {
            for (std::int64_t i = 0; i < cur.size(); ++i) cur[i] = cur[i] > 0.0 ? cur[i] : 0.0;
            if (relu_activations) relu_activations->push_back(cur);
        } else if (std::get_if<AvgPoolLayer>(&rl)) {
            cur = global_avg_pool(cur);
        } else if (std::get_if<FlattenLayer>(&rl)) {
            cur = flatten_to_2d(cur);
        } else if (const auto* ll = std::get_if<LinearLayer>(&rl)) {
            cur = linear(flatten_to_2d(cur), ll->weights, ll->bias);
        } else if (const auto* ro = std::get_if<ReadoutLayer>(&rl)) {
            cur = linear(flatten_to_2d(cur), ro->weights, ro->bias);
        } else {
            shape_error("spiking layer inside an ann forward");
        }
    }
    return cur;
}

// ---------------------------------------------------------------------------
// Operation accounting.
// ---------------------------------------------------------------------------

namespace {

std::int64_t nonzero_bits(const SpikeTensor& s) {
    std::int64_t n = 0;
    for (std::int32_t c : s.codes) n += __builtin_popcount(static_cast<unsigned>(c));
    return n;
}

}  // namespace

std::int64_t OpReport::total_ac() const {
    std::int64_t n = 0;
    for (const Row& r : rows) n += r.ac_ops;
    return n;
}

std::int64_t OpReport::total_mac() const {
    std::int64_t n = 0;
    for (const Row& r : rows) n += r.mac_ops;
    return n;
}

double OpReport::total_energy_pj() const {
    return static_cast<double>(total_ac()) * energy.e_ac +
           static_cast<double>(total_mac()) * energy.e_mac;
}

OpReport count_ops(const Trace& trace, const EnergyConstants& energy) {
    OpReport report;
    report.energy = energy;
    for (const Trace::ConvSite& site : trace.conv_sites) {
        for (int t = 0; t < trace.time_steps; ++t) {
            OpReport::Row row;
            row.layer = site.name;
            row.t = t;
            if (site.spike_input) {
                check_shape(site.input_site >= 0 &&
                                site.input_site < static_cast<int>(trace.neuron_sites.size()),
                            "op counting: conv site has no input spikes");
                const auto& spikes = trace.neuron_sites[static_cast<std::size_t>(site.input_site)].spikes;
                check_shape(static_cast<int>(spikes.size()) == trace.time_steps,
                            "op counting needs a trace recorded with spikes");
                row.ac_ops = nonzero_bits(spikes[static_cast<std::size_t>(t)]) * site.fan_in;
                row.mac_ops = 0;
            } else {
                row.ac_ops = 0;
                row.mac_ops = site.dense_macs_per_step;
            }
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

}  // namespace mbsnn
