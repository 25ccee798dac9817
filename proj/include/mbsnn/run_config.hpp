#pragma once

#include <optional>
#include <string>
#include <utility>

#include "mbsnn/dataset.hpp"
#include "mbsnn/network.hpp"
#include "mbsnn/train.hpp"

namespace mbsnn {

struct DatasetSpec {
    std::string kind = "gaussian_blobs";  // gaussian_blobs | two_spirals | idx
    int n = 2000;
    int classes = 4;
    std::uint64_t seed = 1;
    double test_fraction = 0.25;
    SyntheticOptions synth;
    std::string images_path;  // idx only
    std::string labels_path;

    std::pair<Dataset, Dataset> make() const;  // {train, test}
    std::vector<int> sample_shape() const;
};

// Whole-run configuration file (JSON). Unknown keys anywhere are rejected.
struct RunConfig {
    NetworkSpec network;
    TrainConfig train;
    SurrogateConfig surrogate;
    DatasetSpec dataset;
    double stop_at_train_accuracy = 2.0;  // >1 disables early stopping

    static RunConfig parse(const std::string& json_text);
    static RunConfig load(const std::string& path);
};

}  // namespace mbsnn
