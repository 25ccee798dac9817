#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mbsnn/tensor.hpp"

namespace mbsnn {

struct Dataset {
    Tensor inputs;            // [N, ...]
    std::vector<int> labels;  // one class id per sample
    int num_classes = 0;

    int size() const { return inputs.rank() == 0 ? 0 : inputs.dim(0); }
    void validate() const;
};

enum class SyntheticKind { gaussian_blobs, two_spirals };

struct SyntheticOptions {
    // gaussian_blobs: per-class prototype images plus pixel noise
    std::vector<int> blob_shape = {1, 9, 9};
    double separation = 1.0;
    double noise = 0.4;
    // two_spirals: interleaved planar spirals, classes must be 2
    double turns = 1.5;
    double jitter = 0.04;
};

// Deterministic in `seed`; labels are assigned round-robin, so the class
// histogram is balanced to within one sample.
Dataset gen_synthetic_dataset(SyntheticKind kind, int n, int classes, std::uint64_t seed,
                              const SyntheticOptions& opts = {});

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_fraction,
                                             std::uint64_t seed);

// IDX (big-endian magic, dimension sizes, unsigned bytes). Image files use
// magic 0x00000803, label files 0x00000801. Pixels are scaled to [0,1].
Tensor load_idx_images(const std::string& path);    // [N,1,rows,cols]
std::vector<int> load_idx_labels(const std::string& path);
Dataset load_idx(const std::string& images_path, const std::string& labels_path = "");

// Writers for the same layout; values are clamped to [0,1] and rounded to a
// byte, so a load/write cycle reproduces the file bytes exactly.
void write_idx_images(const std::string& path, const Tensor& images);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

}  // namespace mbsnn
