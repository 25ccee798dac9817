#pragma once

#include <vector>

#include "mbsnn/tensor.hpp"

namespace mbsnn {

// Hand-written backward passes for the fixed layer set the trainer uses.
// Every routine here is checked against central finite differences.

struct ConvGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

ConvGrads conv2d_backward(const Tensor& input, const Conv2dParams& params,
                          const Tensor& grad_out);

struct Conv1dGrads {
    Tensor input;   // [N,1,C]
    Tensor kernel;  // [k]
};

Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& kernel, int padding,
                            const Tensor& grad_out);

struct LinearGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

LinearGrads linear_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out);

// Batch-statistics normalization over (batch x spatial) per channel. Accepts
// [N,C,H,W] or [N,C].
struct BatchNormCache {
    Tensor xhat;
    Tensor gamma;
    std::vector<double> inv_std;  // per channel
    std::vector<double> mean;     // per channel
};

Tensor batchnorm_train_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                               double epsilon, BatchNormCache* cache);

struct BatchNormGrads {
    Tensor input;
    Tensor gamma;
    Tensor beta;
};

BatchNormGrads batchnorm_train_backward(const BatchNormCache& cache, const Tensor& grad_out);

// global_avg_pool backward: spread each [N,C] gradient uniformly over H x W.
Tensor global_avg_pool_backward(const Tensor& grad_out, int height, int width);

// Channel-attention gate x * sigmoid(conv1d(gap(x))).
struct EcaCache {
    Tensor input;
    Tensor kernel;
    Tensor pooled;  // [N,C]
    Tensor gate;    // [N,C]
};

Tensor eca_forward(const Tensor& input, const Tensor& kernel, EcaCache* cache);

struct EcaGrads {
    Tensor input;
    Tensor kernel;
};

EcaGrads eca_backward(const EcaCache& cache, const Tensor& grad_out);

// Mean softmax cross-entropy over the batch; grad is w.r.t. the logits.
double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             Tensor* grad_logits);

}  // namespace mbsnn
