#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "mbsnn/tensor.hpp"

namespace mbsnn {

// Fixed-point spike format with m integer and n fractional bits. Codes live in
// {0 .. 2^(m+n)-1}; the real value of a code is code * 2^-n.
struct BitFormat {
    int int_bits = 1;
    int frac_bits = 0;

    int total_bits() const { return int_bits + frac_bits; }
    int code_count() const { return 1 << total_bits(); }
    int max_code() const { return code_count() - 1; }
    double scale() const { return std::exp2(static_cast<double>(-frac_bits)); }
    double value_of(int code) const { return static_cast<double>(code) * scale(); }
    double max_value() const { return value_of(max_code()); }
    void validate() const;

    bool operator==(const BitFormat&) const = default;
};

enum class ResetMode { hard, subtract };
enum class LeakMode { leaky, none };

struct NeuronConfig {
    double v_th = 0.6;
    double tau = 4.0;
    BitFormat format{1, 0};
    ResetMode reset_mode = ResetMode::hard;
    LeakMode leak = LeakMode::leaky;
    double initial_charge = 0.0;  // membrane value states start from (conversion uses v_th/2)

    double decay() const { return leak == LeakMode::none ? 1.0 : 1.0 - 1.0 / tau; }
    void validate() const;
};

// Spike codes for one layer output. Codes are stored as integers so that
// equality checks stay exact; values() materializes code * 2^-n.
struct SpikeTensor {
    std::vector<int> shape;
    std::vector<std::int32_t> codes;
    BitFormat format;

    static SpikeTensor zeros(std::vector<int> shape, BitFormat fmt);
    std::int64_t size() const { return static_cast<std::int64_t>(codes.size()); }
    Tensor values() const;
    void validate() const;
};

struct NeuronLayerState {
    Tensor u;                              // membrane potentials
    std::vector<std::int32_t> last_spike_code;  // same shape as u

    static NeuronLayerState zeros(std::vector<int> shape);
};

// Quantized fire rule: code = clamp(floor(u * 2^n / v_th), 0, 2^(m+n)-1).
// At format (1,0) this is exactly the binary rule: spike iff u >= v_th.
int quantize_code(double u, double v_th, BitFormat fmt);

// u <- (1 - 1/tau) * u + x   (leak none: decay factor 1). Spikes unchanged.
NeuronLayerState charge(NeuronLayerState state, const Tensor& input_current,
                        const NeuronConfig& cfg);

SpikeTensor fire_quantize(const Tensor& u, const NeuronConfig& cfg);

// hard: u <- 0 wherever a spike was emitted; subtract: u <- u - value * v_th.
NeuronLayerState reset(NeuronLayerState state, const SpikeTensor& spikes,
                       const NeuronConfig& cfg);

// charge -> fire_quantize -> reset, in that order.
std::pair<NeuronLayerState, SpikeTensor> step(NeuronLayerState state,
                                              const Tensor& input_current,
                                              const NeuronConfig& cfg);

struct BitPlane {
    double weight;  // 2^(m-1) down to 2^-n
    Tensor bits;    // 0/1 plane, same shape as the spike tensor
};

// Binary expansion of the codes; sum_k weight_k * bits_k recomposes the
// real-valued view exactly.
std::vector<BitPlane> bit_decompose(const SpikeTensor& spikes);

}  // namespace mbsnn
