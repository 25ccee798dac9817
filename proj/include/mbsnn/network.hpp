#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mbsnn/neuron.hpp"
#include "mbsnn/tensor.hpp"

namespace mbsnn {

// ---------------------------------------------------------------------------
// Declarative network description (JSON-serializable).
// ---------------------------------------------------------------------------

struct LayerSpec {
    enum class Kind { conv, batchnorm, neuron, relu, block, avgpool, flatten, linear, readout };
    Kind kind = Kind::conv;
    // conv / block
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int padding = 1;
    // block
    int eca_kernel = 3;
    // neuron / block
    NeuronConfig neuron;
    // linear / readout
    int out_features = 0;
};

struct NetworkSpec {
    std::vector<int> input_shape;  // [C,H,W] for images, [F] for flat inputs
    int time_steps = 4;
    std::string encoding = "constant_current";
    std::vector<LayerSpec> layers;

    bool is_spiking() const;
    int classes() const;  // readout width
    void validate() const;

    std::string to_json() const;
    static NetworkSpec from_json(const std::string& text);
};

// Stock desk-scale architectures used by the CLI presets and tests.
NetworkSpec make_resnet8_slim_spec(int in_channels, int image_hw, int classes,
                                   const NeuronConfig& neuron, int time_steps);
NetworkSpec make_spiral_mlp_spec(int in_features, int hidden, int classes,
                                 const NeuronConfig& neuron, int time_steps);
NetworkSpec make_desk_cnn_ann_spec(int in_channels, int image_hw, int classes);
// Accepts [F] or [C,H,W] input shapes; image inputs get a leading flatten.
NetworkSpec make_desk_mlp_ann_spec(std::vector<int> input_shape, int hidden, int classes);

// ---------------------------------------------------------------------------
// Runtime layers.
// ---------------------------------------------------------------------------

// Residual basic block with the cross-layer fusion path: both BN outputs are
// concatenated, fused by a 1x1 conv + BN, gated by channel attention, and the
// result re-stimulates the second neuron.
struct InterlaminarBlock {
    Conv2dParams conv1;
    BatchNormParams bn1;
    Conv2dParams conv2;
    BatchNormParams bn2;
    Conv2dParams fuse_conv;  // 1x1, 2C -> C
    BatchNormParams fuse_bn;
    Tensor eca_kernel;  // [k], k odd
    NeuronConfig neuron;
    std::optional<Conv2dParams> shortcut_conv;  // projection when shape changes
    std::optional<BatchNormParams> shortcut_bn;

    void validate() const;
};

struct BlockState {
    NeuronLayerState mid;
    NeuronLayerState out;
    bool ready = false;
};

// Per-channel attention gate in (0,1): sigmoid(conv1d(global_avg_pool(x))).
Tensor eca_weights(const Tensor& x, const Tensor& kernel);
// x broadcast-multiplied by its gate.
Tensor apply_eca(const Tensor& x, const Tensor& kernel);

// One stateful time step of the block. `state` carries both neuron sites and
// is initialized on first use for the incoming batch shape.
SpikeTensor interlaminar_forward(const SpikeTensor& x, const InterlaminarBlock& block,
                                 BlockState& state);

// Per-bit-plane convolution parameters: plane k carries weights scaled by
// 2^(m-1-k). The bias rides on plane 0 only, so summing plane outputs applies
// it exactly once.
std::vector<Conv2dParams> absorb_bit_weights(const Conv2dParams& conv, BitFormat fmt);

// Accumulate-only schedule: decompose spikes into bit planes and sum the
// per-plane convolutions. Numerically equal to conv2d(spikes.values(), conv).
Tensor spiking_conv2d_accumulate(const SpikeTensor& spikes, const Conv2dParams& conv);

// ---------------------------------------------------------------------------
// Whole-network runtime (inference semantics: BatchNorm uses running stats).
// ---------------------------------------------------------------------------

struct ConvLayer {
    Conv2dParams p;
};
struct BatchNormLayer {
    BatchNormParams p;
};
struct NeuronLayer {
    NeuronConfig cfg;
};
struct ReluLayer {};
struct BlockLayer {
    InterlaminarBlock block;
};
struct AvgPoolLayer {};
struct FlattenLayer {};
struct LinearLayer {
    Tensor weights;
    Tensor bias;
};
struct ReadoutLayer {
    Tensor weights;
    Tensor bias;
};

using RuntimeLayer = std::variant<ConvLayer, BatchNormLayer, NeuronLayer, ReluLayer, BlockLayer,
                                  AvgPoolLayer, FlattenLayer, LinearLayer, ReadoutLayer>;

struct TraceOptions {
    bool record_spikes = false;
    bool record_membrane = false;
};

struct Trace {
    struct NeuronSite {
        std::string name;
        std::vector<SpikeTensor> spikes;  // one entry per time step
        std::vector<Tensor> membrane;     // potential after charging, before reset
    };
    struct ConvSite {
        std::string name;
        bool spike_input = false;
        int input_site = -1;                  // index into neuron_sites when spike_input
        std::int64_t fan_in = 0;              // outC * kH * kW
        std::int64_t dense_macs_per_step = 0;  // analog sites
    };
    int time_steps = 0;
    std::vector<NeuronSite> neuron_sites;
    std::vector<ConvSite> conv_sites;
};

struct ForwardResult {
    Tensor logits;  // [N, classes]
    Trace trace;
};

struct EnergyConstants {
    // 45nm-class per-op figures in pJ; assumptions, not measurements.
    double e_ac = 0.9;
    double e_mac = 4.6;
};

struct OpReport {
    struct Row {
        std::string layer;
        int t = 0;
        std::int64_t ac_ops = 0;
        std::int64_t mac_ops = 0;
    };
    std::vector<Row> rows;
    EnergyConstants energy;

    std::int64_t total_ac() const;
    std::int64_t total_mac() const;
    double total_energy_pj() const;
};

OpReport count_ops(const Trace& trace, const EnergyConstants& energy = {});

class Network {
public:
    static Network build(const NetworkSpec& spec, std::uint64_t seed);

    const NetworkSpec& spec() const { return spec_; }
    std::vector<RuntimeLayer>& layers() { return layers_; }
    const std::vector<RuntimeLayer>& layers() const { return layers_; }
    bool is_spiking() const { return spec_.is_spiking(); }

    // T-step constant-current run; logits are the time-averaged readout.
    // States are local to the call, so concurrent calls on one network are safe.
    ForwardResult forward_timesteps(const Tensor& input, const TraceOptions& opts = {}) const;

    // Single dense pass for non-spiking networks; optionally records each
    // post-ReLU activation (used for threshold calibration).
    Tensor forward_ann(const Tensor& input, std::vector<Tensor>* relu_activations = nullptr) const;

    // Copy with a different simulation length (weights shared by value).
    Network with_time_steps(int t_steps) const;

private:
    NetworkSpec spec_;
    std::vector<RuntimeLayer> layers_;
};

double sigmoid(double x);

}  // namespace mbsnn
