#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mbsnn/dataset.hpp"
#include "mbsnn/network.hpp"
#include "mbsnn/train.hpp"

namespace mbsnn {

struct CalibrationPolicy {
    enum class Method { max, percentile };
    Method method = Method::percentile;
    double percentile = 99.9;  // in (0,100]
    int calib_batches = 10;

    void validate() const;
};

// Supervised training of a ReLU network (same trainer as the spiking path,
// one time step, no surrogate involved).
Network train_ann(const NetworkSpec& spec, const Dataset& train_set, const TrainConfig& t_cfg,
                  std::uint64_t seed);

// Per-ReLU-site firing thresholds from observed post-ReLU activations.
std::vector<double> calibrate_thresholds(const Network& ann, const CalibrationPolicy& policy,
                                         const Dataset& calib_data);

// Equivalent ReLU network with every BatchNorm folded into its conv.
Network fold_ann_batchnorm(const Network& ann);

// Replace each ReLU with an integrate-and-fire site (no leak, subtract reset,
// membrane pre-charged to v_th/2); thresholds are absorbed into the following
// layer's weights so firing rates propagate on the ANN's activation scale.
Network convert_ann_to_snn(const Network& ann, const std::vector<double>& thresholds,
                           BitFormat fmt);

// One accuracy measurement per simulation length.
std::vector<std::pair<int, double>> evaluate_tsweep(const Network& snn, const Dataset& ds,
                                                    const std::vector<int>& ts);

}  // namespace mbsnn
