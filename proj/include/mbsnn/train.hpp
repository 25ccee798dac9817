#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "mbsnn/dataset.hpp"
#include "mbsnn/network.hpp"

namespace mbsnn {

struct SurrogateConfig {
    enum class Kind { rectangular_per_boundary, straight_through_clamped };
    Kind kind = Kind::straight_through_clamped;
    double width = 0.1;  // rectangular half-width around each firing boundary
    double scale = 1.0;

    void validate() const { check_shape(width > 0.0, "surrogate width must be positive"); }
};

// d(spike value)/du used in place of the quantizer's true (zero a.e.) slope.
//   straight_through_clamped: 1/v_th inside [0, s_max*v_th], 0 outside
//   rectangular_per_boundary: (1/2a)*2^-n around each boundary k*2^-n*v_th
Tensor surrogate_backward(const Tensor& u, const NeuronConfig& cfg, const SurrogateConfig& s_cfg);

struct TrainConfig {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int batch_size = 64;
    int epochs = 30;
    int time_steps = 4;
    std::uint64_t seed = 1;

    void validate() const;
};

namespace detail {
struct TrainLayer;
}

// Surrogate-gradient BPTT trainer. The forward stacks the T time steps into
// the batch dimension (constant-current encoding repeats the input), so batch
// normalization statistics run jointly over batch x time; neuron layers walk
// their time slices sequentially carrying membrane state.
class TrainableNetwork {
public:
    static TrainableNetwork build(const NetworkSpec& spec, std::uint64_t seed);
    TrainableNetwork(TrainableNetwork&&) noexcept;
    TrainableNetwork& operator=(TrainableNetwork&&) noexcept;
    ~TrainableNetwork();

    const NetworkSpec& spec() const { return spec_; }

    // One SGD-momentum step on the batch: forward, surrogate BPTT backward,
    // parameter update. Returns the batch loss. Throws NumericError when the
    // loss is not finite.
    double bptt_train_step(const Tensor& inputs, const std::vector<int>& labels,
                           const TrainConfig& t_cfg, const SurrogateConfig& s_cfg);

    // Forward only (training-mode batch statistics), no parameter update.
    Tensor forward_train(const Tensor& inputs);

    // Snapshot as an inference network (running batch-norm statistics).
    Network to_network() const;

private:
    TrainableNetwork();
    NetworkSpec spec_;
    std::vector<std::unique_ptr<detail::TrainLayer>> layers_;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

// Epoch loop with deterministic shuffling; stops early once the training
// accuracy reaches `stop_at_train_accuracy` (pass >1 to disable).
std::vector<EpochStats> train_network(TrainableNetwork& net, const Dataset& train_set,
                                      const Dataset& test_set, const TrainConfig& t_cfg,
                                      const SurrogateConfig& s_cfg,
                                      double stop_at_train_accuracy = 2.0);

// Argmax accuracy of the inference network on a dataset.
double evaluate(const Network& net, const Dataset& ds);

}  // namespace mbsnn
