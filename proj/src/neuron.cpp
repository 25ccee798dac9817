#include "mbsnn/neuron.hpp"

#include <cmath>

namespace mbsnn {

void BitFormat::validate() const {
    check_shape(int_bits >= 0 && frac_bits >= 0, "bit counts must be non-negative");
    check_shape(int_bits + frac_bits >= 1, "format needs at least one bit");
    check_shape(int_bits + frac_bits <= 20, "format wider than 20 bits is unsupported");
}

void NeuronConfig::validate() const {
    format.validate();
    check_shape(v_th > 0.0, "threshold must be positive");
    if (leak == LeakMode::leaky) check_shape(tau > 1.0, "leaky neuron needs tau > 1");
}

SpikeTensor SpikeTensor::zeros(std::vector<int> shape, BitFormat fmt) {
    fmt.validate();
    SpikeTensor s;
    s.codes.assign(static_cast<std::size_t>(shape_numel(shape)), 0);
    s.shape = std::move(shape);
    s.format = fmt;
    return s;
}

Tensor SpikeTensor::values() const {
    Tensor v(shape);
    const double scale = format.scale();
    for (std::int64_t i = 0; i < size(); ++i)
        v[i] = static_cast<double>(codes[static_cast<std::size_t>(i)]) * scale;
    return v;
}

void SpikeTensor::validate() const {
    format.validate();
    check_shape(static_cast<std::int64_t>(codes.size()) == shape_numel(shape),
                "spike code count does not match shape");
    for (std::int32_t c : codes)
        check_shape(c >= 0 && c <= format.max_code(), "spike code outside the format's code set");
}

NeuronLayerState NeuronLayerState::zeros(std::vector<int> shape) {
    NeuronLayerState s;
    s.u = Tensor(shape);
    s.last_spike_code.assign(static_cast<std::size_t>(s.u.size()), 0);
    return s;
}

int quantize_code(double u, double v_th, BitFormat fmt) {
    // Scaling the ratio by 2^n is exact, so the floor lands on the same side
    // of each boundary as a direct comparison against k * 2^-n would.
    const double r = (u / v_th) * std::exp2(static_cast<double>(fmt.frac_bits));
    if (!(r >= 1.0)) return 0;
    if (r >= static_cast<double>(fmt.max_code())) return fmt.max_code();
    return static_cast<int>(std::floor(r));
}

NeuronLayerState charge(NeuronLayerState state, const Tensor& input_current,
                        const NeuronConfig& cfg) {
    cfg.validate();
    check_shape(state.u.same_shape(input_current), "charge input shape mismatch");
    const double d = cfg.decay();
    double* u = state.u.data();
    const double* x = input_current.data();
    const std::int64_t n = state.u.size();
    for (std::int64_t i = 0; i < n; ++i) u[i] = d * u[i] + x[i];
    return state;
}

SpikeTensor fire_quantize(const Tensor& u, const NeuronConfig& cfg) {
    cfg.validate();
    SpikeTensor s = SpikeTensor::zeros(u.shape(), cfg.format);
    const std::int64_t n = u.size();
    for (std::int64_t i = 0; i < n; ++i)
        s.codes[static_cast<std::size_t>(i)] =
            static_cast<std::int32_t>(quantize_code(u[i], cfg.v_th, cfg.format));
    return s;
}

NeuronLayerState reset(NeuronLayerState state, const SpikeTensor& spikes,
                       const NeuronConfig& cfg) {
    cfg.validate();
    check_shape(state.u.shape() == spikes.shape, "reset spike shape mismatch");
    const std::int64_t n = state.u.size();
    const double scale = spikes.format.scale() * cfg.v_th;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int32_t code = spikes.codes[static_cast<std::size_t>(i)];
        if (cfg.reset_mode == ResetMode::hard) {
            if (code > 0) state.u[i] = 0.0;
        } else {
            state.u[i] -= static_cast<double>(code) * scale;
        }
        state.last_spike_code[static_cast<std::size_t>(i)] = code;
    }
    return state;
}

std::pair<NeuronLayerState, SpikeTensor> step(NeuronLayerState state,
                                              const Tensor& input_current,
                                              const NeuronConfig& cfg) {
    state = charge(std::move(state), input_current, cfg);
    SpikeTensor spikes = fire_quantize(state.u, cfg);
    state = reset(std::move(state), spikes, cfg);
    return {std::move(state), std::move(spikes)};
}

std::vector<BitPlane> bit_decompose(const SpikeTensor& spikes) {
    spikes.validate();
    const int bits = spikes.format.total_bits();
    std::vector<BitPlane> planes;
    planes.reserve(static_cast<std::size_t>(bits));
    for (int k = 0; k < bits; ++k) {
        BitPlane p;
        p.weight = std::exp2(static_cast<double>(spikes.format.int_bits - 1 - k));
        p.bits = Tensor(spikes.shape);
        const int shift = bits - 1 - k;
        for (std::int64_t i = 0; i < spikes.size(); ++i)
            p.bits[i] = static_cast<double>((spikes.codes[static_cast<std::size_t>(i)] >> shift) & 1);
        planes.push_back(std::move(p));
    }
    return planes;
}

}  // namespace mbsnn
