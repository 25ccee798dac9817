#include "mbsnn/grad_ops.hpp"

#include <algorithm>
#include <cmath>

#include "mbsnn/network.hpp"

namespace mbsnn {

// Same im2col staging as the forward pass: grad_weights is grad_out * col^T,
// grad_input is col2im(W^T * grad_out).
ConvGrads conv2d_backward(const Tensor& input, const Conv2dParams& p, const Tensor& grad_out) {
    p.validate();
    check_shape(input.rank() == 4 && grad_out.rank() == 4, "conv2d_backward wants [N,C,H,W]");
    const int batch = input.dim(0), in_c = input.dim(1), in_h = input.dim(2), in_w = input.dim(3);
    const int out_c = p.out_channels(), kh = p.kernel_h(), kw = p.kernel_w();
    const int out_h = grad_out.dim(2), out_w = grad_out.dim(3);
    check_shape(grad_out.dim(0) == batch && grad_out.dim(1) == out_c,
                "conv2d_backward grad shape mismatch");
    check_shape((out_h - 1) * p.stride + kh - 2 * p.padding == in_h &&
                    (out_w - 1) * p.stride + kw - 2 * p.padding == in_w,
                "conv2d_backward geometry mismatch");

    const int k_total = in_c * kh * kw;
    const int cols = out_h * out_w;
    std::vector<double> col(static_cast<std::size_t>(k_total) * cols);
    std::vector<double> dcol(col.size());

    ConvGrads g;
    g.input = Tensor(input.shape());
    g.weights = Tensor(p.weights.shape());
    g.bias = Tensor({out_c});
    for (int n = 0; n < batch; ++n) {
        double* colp = col.data();
        for (int ic = 0; ic < in_c; ++ic)
            for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j)
                    for (int oh = 0; oh < out_h; ++oh) {
                        const int ih = oh * p.stride + i - p.padding;
                        if (ih < 0 || ih >= in_h) {
                            for (int ow = 0; ow < out_w; ++ow) *colp++ = 0.0;
                            continue;
                        }
                        for (int ow = 0; ow < out_w; ++ow) {
                            const int iw = ow * p.stride + j - p.padding;
                            *colp++ = (iw < 0 || iw >= in_w) ? 0.0 : input(n, ic, ih, iw);
                        }
                    }

        std::fill(dcol.begin(), dcol.end(), 0.0);
        for (int oc = 0; oc < out_c; ++oc) {
            const double* go =
                grad_out.data() + (static_cast<std::size_t>(n) * out_c + oc) * cols;
            double acc = 0.0;
            for (int jj = 0; jj < cols; ++jj) acc += go[jj];
            g.bias[oc] += acc;
            double* gw = g.weights.data() + static_cast<std::size_t>(oc) * k_total;
            const double* w = p.weights.data() + static_cast<std::size_t>(oc) * k_total;
            for (int k = 0; k < k_total; ++k) {
                const double* crow = col.data() + static_cast<std::size_t>(k) * cols;
                double* drow = dcol.data() + static_cast<std::size_t>(k) * cols;
                const double wv = w[k];
                double wacc = 0.0;
                for (int jj = 0; jj < cols; ++jj) {
                    wacc += go[jj] * crow[jj];
                    drow[jj] += wv * go[jj];
                }
                gw[k] += wacc;
            }
        }

        const double* dcolp = dcol.data();
        for (int ic = 0; ic < in_c; ++ic)
            for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j)
                    for (int oh = 0; oh < out_h; ++oh) {
                        const int ih = oh * p.stride + i - p.padding;
                        if (ih < 0 || ih >= in_h) {
                            dcolp += out_w;
                            continue;
                        }
                        for (int ow = 0; ow < out_w; ++ow) {
                            const int iw = ow * p.stride + j - p.padding;
                            const double v = *dcolp++;
                            if (iw < 0 || iw >= in_w) continue;
                            g.input(n, ic, ih, iw) += v;
                        }
                    }
    }
    return g;
}

Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& kernel, int padding,
                            const Tensor& grad_out) {
    check_shape(input.rank() == 3 && input.dim(1) == 1, "conv1d_backward wants [N,1,C]");
    check_shape(grad_out.shape() == input.shape(), "conv1d_backward grad shape mismatch");
    const int batch = input.dim(0), c = input.dim(2), k = kernel.dim(0);
    Conv1dGrads g;
    g.input = Tensor(input.shape());
    g.kernel = Tensor({k});
    for (int n = 0; n < batch; ++n) {
        const double* in = input.data() + static_cast<std::size_t>(n) * c;
        const double* go = grad_out.data() + static_cast<std::size_t>(n) * c;
        double* gi = g.input.data() + static_cast<std::size_t>(n) * c;
        for (int i = 0; i < c; ++i) {
            if (go[i] == 0.0) continue;
            for (int j = 0; j < k; ++j) {
                const int src = i + j - padding;
                if (src < 0 || src >= c) continue;
                g.kernel[j] += go[i] * in[src];
                gi[src] += go[i] * kernel[j];
            }
        }
    }
    return g;
}

LinearGrads linear_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out) {
    check_shape(input.rank() == 2 && weights.rank() == 2 && grad_out.rank() == 2,
                "linear_backward wants rank-2 tensors");
    const int batch = input.dim(0), f = input.dim(1), o = weights.dim(0);
    check_shape(grad_out.dim(0) == batch && grad_out.dim(1) == o,
                "linear_backward grad shape mismatch");
    LinearGrads g;
    g.input = Tensor(input.shape());
    g.weights = Tensor(weights.shape());
    g.bias = Tensor({o});
    for (int n = 0; n < batch; ++n) {
        const double* in = input.data() + static_cast<std::size_t>(n) * f;
        double* gi = g.input.data() + static_cast<std::size_t>(n) * f;
        for (int j = 0; j < o; ++j) {
            const double go = grad_out(n, j);
            if (go == 0.0) continue;
            g.bias[j] += go;
            const double* w = weights.data() + static_cast<std::size_t>(j) * f;
            double* gw = g.weights.data() + static_cast<std::size_t>(j) * f;
            for (int kk = 0; kk < f; ++kk) {
                gw[kk] += go * in[kk];
                gi[kk] += go * w[kk];
            }
        }
    }
    return g;
}

namespace {

// Channel geometry shared by the BN helpers: [N,C,H,W] reduces over N*H*W,
// [N,C] reduces over N.
struct ChannelView {
    int channels;
    std::int64_t plane;  // elements per (sample, channel)
    int batch;
};

ChannelView channel_view(const Tensor& x) {
    check_shape(x.rank() == 4 || x.rank() == 2, "batchnorm wants [N,C,H,W] or [N,C]");
    ChannelView v;
    v.batch = x.dim(0);
    v.channels = x.dim(1);
    v.plane = x.rank() == 4 ? static_cast<std::int64_t>(x.dim(2)) * x.dim(3) : 1;
    return v;
}

}  // namespace

Tensor batchnorm_train_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                               double epsilon, BatchNormCache* cache) {
    const ChannelView v = channel_view(input);
    check_shape(gamma.dim(0) == v.channels && beta.dim(0) == v.channels,
                "batchnorm parameter length mismatch");
    const double count = static_cast<double>(v.batch) * static_cast<double>(v.plane);
    check_shape(count >= 2.0, "batch statistics need at least two elements per channel");

    Tensor out(input.shape());
    Tensor xhat(input.shape());
    std::vector<double> means(static_cast<std::size_t>(v.channels));
    std::vector<double> inv_std(static_cast<std::size_t>(v.channels));
    for (int c = 0; c < v.channels; ++c) {
        double sum = 0.0;
        for (int n = 0; n < v.batch; ++n) {
            const std::int64_t base = (static_cast<std::int64_t>(n) * v.channels + c) * v.plane;
            for (std::int64_t i = 0; i < v.plane; ++i) sum += input[base + i];
        }
        const double mean = sum / count;
        double var = 0.0;
        for (int n = 0; n < v.batch; ++n) {
            const std::int64_t base = (static_cast<std::int64_t>(n) * v.channels + c) * v.plane;
            for (std::int64_t i = 0; i < v.plane; ++i) {
                const double d = input[base + i] - mean;
                var += d * d;
            }
        }
        var /= count;
        const double is = 1.0 / std::sqrt(var + epsilon);
        means[static_cast<std::size_t>(c)] = mean;
        inv_std[static_cast<std::size_t>(c)] = is;
        const double gc = gamma[c], bc = beta[c];
        for (int n = 0; n < v.batch; ++n) {
            const std::int64_t base = (static_cast<std::int64_t>(n) * v.channels + c) * v.plane;
            for (std::int64_t i = 0; i < v.plane; ++i) {
                const double xh = (input[base + i] - mean) * is;
                xhat[base + i] = xh;
                out[base + i] = gc * xh + bc;
            }
        }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->gamma = gamma;
        cache->inv_std = std::move(inv_std);
        cache->mean = std::move(means);
    }
    return out;
}

BatchNormGrads batchnorm_train_backward(const BatchNormCache& cache, const Tensor& grad_out) {
    const ChannelView v = channel_view(cache.xhat);
    check_shape(grad_out.shape() == cache.xhat.shape(), "batchnorm grad shape mismatch");
    const double count = static_cast<double>(v.batch) * static_cast<double>(v.plane);

    BatchNormGrads g;
    g.input = Tensor(cache.xhat.shape());
    g.gamma = Tensor({v.channels});
    g.beta = Tensor({v.channels});
    for (int c = 0; c < v.channels; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int n = 0; n < v.batch; ++n) {
            const std::int64_t base = (static_cast<std::int64_t>(n) * v.channels + c) * v.plane;
            for (std::int64_t i = 0; i < v.plane; ++i) {
                sum_dy += grad_out[base + i];
                sum_dy_xhat += grad_out[base + i] * cache.xhat[base + i];
            }
        }
        g.beta[c] = sum_dy;
        g.gamma[c] = sum_dy_xhat;
        const double gc = cache.gamma[c];
        const double is = cache.inv_std[static_cast<std::size_t>(c)];
        const double mean_dy = sum_dy / count;
        const double mean_dy_xhat = sum_dy_xhat / count;
        for (int n = 0; n < v.batch; ++n) {
            const std::int64_t base = (static_cast<std::int64_t>(n) * v.channels + c) * v.plane;
            for (std::int64_t i = 0; i < v.plane; ++i) {
                g.input[base + i] = gc * is *
                                    (grad_out[base + i] - mean_dy -
                                     cache.xhat[base + i] * mean_dy_xhat);
            }
        }
    }
    return g;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, int height, int width) {
    check_shape(grad_out.rank() == 2, "global_avg_pool_backward wants [N,C]");
    const int batch = grad_out.dim(0), c = grad_out.dim(1);
    Tensor g({batch, c, height, width});
    const double scale = 1.0 / (static_cast<double>(height) * width);
    for (int n = 0; n < batch; ++n)
        for (int ch = 0; ch < c; ++ch) {
            const double v = grad_out(n, ch) * scale;
            for (int h = 0; h < height; ++h)
                for (int w = 0; w < width; ++w) g(n, ch, h, w) = v;
        }
    return g;
}

Tensor eca_forward(const Tensor& input, const Tensor& kernel, EcaCache* cache) {
    const Tensor pooled = global_avg_pool(input);
    const Tensor z = conv1d(pooled.reshaped({pooled.dim(0), 1, pooled.dim(1)}), kernel,
                            (kernel.dim(0) - 1) / 2);
    Tensor gate({pooled.dim(0), pooled.dim(1)});
    for (std::int64_t i = 0; i < gate.size(); ++i) gate[i] = sigmoid(z[i]);
    Tensor out(input.shape());
    const int batch = input.dim(0), c = input.dim(1);
    const std::int64_t plane = static_cast<std::int64_t>(input.dim(2)) * input.dim(3);
    for (int n = 0; n < batch; ++n)
        for (int ch = 0; ch < c; ++ch) {
            const double gv = gate(n, ch);
            const std::int64_t base = (static_cast<std::int64_t>(n) * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) out[base + i] = input[base + i] * gv;
        }
    if (cache) {
        cache->input = input;
        cache->kernel = kernel;
        cache->pooled = pooled;
        cache->gate = gate;
    }
    return out;
}

EcaGrads eca_backward(const EcaCache& cache, const Tensor& grad_out) {
    const Tensor& x = cache.input;
    check_shape(grad_out.shape() == x.shape(), "eca grad shape mismatch");
    const int batch = x.dim(0), c = x.dim(1);
    const int height = x.dim(2), width = x.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(height) * width;

    EcaGrads g;
    g.input = Tensor(x.shape());
    Tensor grad_gate({batch, c});
    for (int n = 0; n < batch; ++n)
        for (int ch = 0; ch < c; ++ch) {
            const double gv = cache.gate(n, ch);
            const std::int64_t base = (static_cast<std::int64_t>(n) * c + ch) * plane;
            double acc = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) {
                g.input[base + i] = grad_out[base + i] * gv;  // direct path
                acc += grad_out[base + i] * x[base + i];
            }
            grad_gate(n, ch) = acc;
        }

    // through the sigmoid
    Tensor grad_z({batch, c});
    for (std::int64_t i = 0; i < grad_z.size(); ++i) {
        const double gv = cache.gate[i];
        grad_z[i] = grad_gate[i] * gv * (1.0 - gv);
    }

    // through the 1-d convolution and the pooling
    const int pad = (cache.kernel.dim(0) - 1) / 2;
    Conv1dGrads cg = conv1d_backward(cache.pooled.reshaped({batch, 1, c}), cache.kernel, pad,
                                     grad_z.reshaped({batch, 1, c}));
    g.kernel = std::move(cg.kernel);
    Tensor grad_pooled = cg.input.reshaped({batch, c});
    Tensor via_pool = global_avg_pool_backward(grad_pooled, height, width);
    for (std::int64_t i = 0; i < g.input.size(); ++i) g.input[i] += via_pool[i];
    return g;
}

double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             Tensor* grad_logits) {
    check_shape(logits.rank() == 2, "softmax wants [N,classes]");
    const int batch = logits.dim(0), classes = logits.dim(1);
    check_shape(static_cast<int>(labels.size()) == batch, "label count mismatch");
    if (grad_logits) *grad_logits = Tensor(logits.shape());
    double loss = 0.0;
    std::vector<double> p(static_cast<std::size_t>(classes));
    for (int n = 0; n < batch; ++n) {
        const int y = labels[static_cast<std::size_t>(n)];
        check_shape(y >= 0 && y < classes, "label outside class range");
        double mx = logits(n, 0);
        for (int c = 1; c < classes; ++c) mx = std::max(mx, logits(n, c));
        double z = 0.0;
        for (int c = 0; c < classes; ++c) {
            p[static_cast<std::size_t>(c)] = std::exp(logits(n, c) - mx);
            z += p[static_cast<std::size_t>(c)];
        }
        loss -= std::log(p[static_cast<std::size_t>(y)] / z);
        if (grad_logits) {
            for (int c = 0; c < classes; ++c)
                (*grad_logits)(n, c) =
                    (p[static_cast<std::size_t>(c)] / z - (c == y ? 1.0 : 0.0)) / batch;
        }
    }
    return loss / batch;
}

}  // namespace mbsnn
