#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mbsnn {

[[noreturn]] void shape_error(const std::string& msg);

inline void check_shape(bool ok, const char* msg) {
    if (!ok) shape_error(msg);
}

// Dense row-major tensor of 64-bit reals. All layer math in the engine runs on
// doubles; the only quantization anywhere is the spike quantizer itself.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double value);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double& operator()(int i, int j) {
        return data_[static_cast<std::size_t>(i) * shape_[1] + j];
    }
    double operator()(int i, int j) const {
        return data_[static_cast<std::size_t>(i) * shape_[1] + j];
    }
    double& operator()(int n, int c, int h, int w) {
        return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double operator()(int n, int c, int h, int w) const {
        return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor reshaped(std::vector<int> new_shape) const;

    void fill(double value);

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

struct Conv2dParams {
    Tensor weights;  // [outC, inC, kH, kW]
    Tensor bias;     // [outC]
    int stride = 1;
    int padding = 0;

    int out_channels() const { return weights.dim(0); }
    int in_channels() const { return weights.dim(1); }
    int kernel_h() const { return weights.dim(2); }
    int kernel_w() const { return weights.dim(3); }
    void validate() const;
};

struct BatchNormParams {
    Tensor gamma;         // [C]
    Tensor beta;          // [C]
    Tensor running_mean;  // [C]
    Tensor running_var;   // [C]
    double epsilon = 1e-5;

    int channels() const { return gamma.dim(0); }
    void validate() const;
    static BatchNormParams identity(int channels);
};

// Cross-correlation of [N,C,H,W] with [outC,C,kH,kW]; H' = (H+2p-kH)/stride+1.
// conv2d picks the blocked path; the direct path exists as its in-tree witness
// (the two must agree to 1e-12, which the test suite pins).
Tensor conv2d(const Tensor& input, const Conv2dParams& params);
Tensor conv2d_direct(const Tensor& input, const Conv2dParams& params);
Tensor conv2d_blocked(const Tensor& input, const Conv2dParams& params);

// Same-length 1-D cross-correlation along the channel axis of [N,1,C].
// Kernel length must be odd and padding (k-1)/2.
Tensor conv1d(const Tensor& input, const Tensor& kernel, int padding);

Tensor batchnorm_apply(const Tensor& input, const BatchNormParams& params);

// Inference-time fusion: conv2d(x, folded) == batchnorm_apply(conv2d(x, conv), bn).
Conv2dParams fold_bn_into_conv(const Conv2dParams& conv, const BatchNormParams& bn);

Tensor global_avg_pool(const Tensor& input);  // [N,C,H,W] -> [N,C]

Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_channels(const Tensor& x, int channels_first);

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias);  // [N,F]x[O,F] -> [N,O]

}  // namespace mbsnn
