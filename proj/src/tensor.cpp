#include "mbsnn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace mbsnn {

void shape_error(const std::string& msg) { throw std::invalid_argument(msg); }

// Zero extents are allowed (an empty tensor); negative never.
std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        check_shape(d >= 0, "tensor extents must be non-negative");
        n *= d;
    }
    return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_numel(shape_) == static_cast<std::int64_t>(data_.size()),
                "tensor data length does not match shape");
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
    check_shape(shape_numel(new_shape) == size(), "reshape changes element count");
    return Tensor(std::move(new_shape), data_);
}

void Tensor::fill(double value) {
    for (double& v : data_) v = value;
}

void Conv2dParams::validate() const {
    check_shape(weights.rank() == 4, "conv weights must be [outC,inC,kH,kW]");
    check_shape(bias.rank() == 1 && bias.dim(0) == weights.dim(0),
                "conv bias must be [outC]");
    check_shape(kernel_h() >= 1 && kernel_w() >= 1, "conv kernel extents must be >= 1");
    check_shape(stride >= 1, "conv stride must be >= 1");
    check_shape(padding >= 0, "conv padding must be >= 0");
}

void BatchNormParams::validate() const {
    const int c = gamma.dim(0);
    check_shape(gamma.rank() == 1 && beta.rank() == 1 && running_mean.rank() == 1 &&
                    running_var.rank() == 1,
                "batchnorm parameters must be rank-1");
    check_shape(beta.dim(0) == c && running_mean.dim(0) == c && running_var.dim(0) == c,
                "batchnorm parameter lengths disagree");
    check_shape(epsilon >= 0.0, "batchnorm epsilon must be non-negative");
    for (std::int64_t i = 0; i < running_var.size(); ++i) {
        check_shape(running_var[i] >= 0.0, "batchnorm running_var must be non-negative");
        check_shape(running_var[i] + epsilon > 0.0, "batchnorm variance + epsilon must be positive");
    }
}

// Exact identity map: eps 0 keeps the per-channel scale at exactly 1.
BatchNormParams BatchNormParams::identity(int channels) {
    BatchNormParams p;
    p.gamma = Tensor::full({channels}, 1.0);
    p.beta = Tensor::zeros({channels});
    p.running_mean = Tensor::zeros({channels});
    p.running_var = Tensor::full({channels}, 1.0);
    p.epsilon = 0.0;
    return p;
}

namespace {

struct ConvGeometry {
    int batch, in_c, in_h, in_w;
    int out_c, out_h, out_w;
};

ConvGeometry conv_geometry(const Tensor& input, const Conv2dParams& p) {
    p.validate();
    check_shape(input.rank() == 4, "conv2d input must be [N,C,H,W]");
    for (int i = 0; i < 4; ++i) check_shape(input.dim(i) >= 1, "conv2d input extents must be positive");
    check_shape(input.dim(1) == p.in_channels(), "conv2d input channels do not match weights");
    ConvGeometry g;
    g.batch = input.dim(0);
    g.in_c = input.dim(1);
    g.in_h = input.dim(2);
    g.in_w = input.dim(3);
    g.out_c = p.out_channels();
    const int span_h = g.in_h + 2 * p.padding - p.kernel_h();
    const int span_w = g.in_w + 2 * p.padding - p.kernel_w();
    check_shape(span_h >= 0 && span_w >= 0, "conv2d kernel larger than padded input");
    check_shape(span_h % p.stride == 0 && span_w % p.stride == 0,
                "conv2d output extent is not integral for this stride/padding");
    g.out_h = span_h / p.stride + 1;
    g.out_w = span_w / p.stride + 1;
    return g;
}

}  // namespace

Tensor conv2d_direct(const Tensor& input, const Conv2dParams& p) {
    const ConvGeometry g = conv_geometry(input, p);
    Tensor out({g.batch, g.out_c, g.out_h, g.out_w});
    const double* w = p.weights.data();
    for (int n = 0; n < g.batch; ++n) {
        for (int oc = 0; oc < g.out_c; ++oc) {
            const double b = p.bias[oc];
            for (int oh = 0; oh < g.out_h; ++oh)
                for (int ow = 0; ow < g.out_w; ++ow) out(n, oc, oh, ow) = b;
            for (int ic = 0; ic < g.in_c; ++ic) {
                for (int kh = 0; kh < p.kernel_h(); ++kh) {
                    for (int kw = 0; kw < p.kernel_w(); ++kw) {
                        const double wv =
                            w[((static_cast<std::size_t>(oc) * g.in_c + ic) * p.kernel_h() + kh) *
                                  p.kernel_w() +
                              kw];
                        if (wv == 0.0) continue;
                        for (int oh = 0; oh < g.out_h; ++oh) {
                            const int ih = oh * p.stride + kh - p.padding;
                            if (ih < 0 || ih >= g.in_h) continue;
                            for (int ow = 0; ow < g.out_w; ++ow) {
                                const int iw = ow * p.stride + kw - p.padding;
                                if (iw < 0 || iw >= g.in_w) continue;
                                out(n, oc, oh, ow) += wv * input(n, ic, ih, iw);
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

// im2col staging plus a broadcast-axpy GEMM. The k loop runs in (ic,kh,kw)
// order, the same accumulation order as the direct path.
Tensor conv2d_blocked(const Tensor& input, const Conv2dParams& p) {
    const ConvGeometry g = conv_geometry(input, p);
    const int k_total = g.in_c * p.kernel_h() * p.kernel_w();
    const int cols = g.out_h * g.out_w;
    std::vector<double> col(static_cast<std::size_t>(k_total) * cols);
    Tensor out({g.batch, g.out_c, g.out_h, g.out_w});
    const double* w = p.weights.data();
    for (int n = 0; n < g.batch; ++n) {
        double* colp = col.data();
        for (int ic = 0; ic < g.in_c; ++ic) {
            for (int kh = 0; kh < p.kernel_h(); ++kh) {
                for (int kw = 0; kw < p.kernel_w(); ++kw) {
                    for (int oh = 0; oh < g.out_h; ++oh) {
                        const int ih = oh * p.stride + kh - p.padding;
                        if (ih < 0 || ih >= g.in_h) {
                            for (int ow = 0; ow < g.out_w; ++ow) *colp++ = 0.0;
                            continue;
                        }
                        for (int ow = 0; ow < g.out_w; ++ow) {
                            const int iw = ow * p.stride + kw - p.padding;
                            *colp++ = (iw < 0 || iw >= g.in_w) ? 0.0 : input(n, ic, ih, iw);
                        }
                    }
                }
            }
        }
        for (int oc = 0; oc < g.out_c; ++oc) {
            double* orow = &out(n, oc, 0, 0);
            const double b = p.bias[oc];
            for (int j = 0; j < cols; ++j) orow[j] = b;
            const double* wrow = w + static_cast<std::size_t>(oc) * k_total;
            for (int k = 0; k < k_total; ++k) {
                const double wv = wrow[k];
                if (wv == 0.0) continue;
                const double* crow = col.data() + static_cast<std::size_t>(k) * cols;
                for (int j = 0; j < cols; ++j) orow[j] += wv * crow[j];
            }
        }
    }
    return out;
}

Tensor conv2d(const Tensor& input, const Conv2dParams& p) { return conv2d_blocked(input, p); }

Tensor conv1d(const Tensor& input, const Tensor& kernel, int padding) {
    check_shape(input.rank() == 3 && input.dim(1) == 1, "conv1d input must be [N,1,C]");
    check_shape(kernel.rank() == 1, "conv1d kernel must be rank-1");
    const int k = kernel.dim(0);
    check_shape(k % 2 == 1, "conv1d kernel length must be odd");
    check_shape(padding == (k - 1) / 2, "conv1d padding must be (k-1)/2");
    const int n_batch = input.dim(0);
    const int c = input.dim(2);
    Tensor out({n_batch, 1, c});
    for (int n = 0; n < n_batch; ++n) {
        const double* in = input.data() + static_cast<std::size_t>(n) * c;
        double* o = out.data() + static_cast<std::size_t>(n) * c;
        for (int i = 0; i < c; ++i) {
            double acc = 0.0;
            for (int j = 0; j < k; ++j) {
                const int src = i + j - padding;
                if (src < 0 || src >= c) continue;
                acc += kernel[j] * in[src];
            }
            o[i] = acc;
        }
    }
    return out;
}

Tensor batchnorm_apply(const Tensor& input, const BatchNormParams& p) {
    p.validate();
    check_shape(input.rank() == 4, "batchnorm input must be [N,C,H,W]");
    check_shape(input.dim(1) == p.channels(), "batchnorm channel count mismatch");
    const int n_batch = input.dim(0), c = input.dim(1);
    const std::int64_t plane = static_cast<std::int64_t>(input.dim(2)) * input.dim(3);
    Tensor out(input.shape());
    for (int ch = 0; ch < c; ++ch) {
        const double inv = 1.0 / std::sqrt(p.running_var[ch] + p.epsilon);
        const double scale = p.gamma[ch] * inv;
        const double shift = p.beta[ch] - p.running_mean[ch] * scale;
        for (int n = 0; n < n_batch; ++n) {
            const std::int64_t base = (static_cast<std::int64_t>(n) * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i)
                out[base + i] = scale * input[base + i] + shift;
        }
    }
    return out;
}

Conv2dParams fold_bn_into_conv(const Conv2dParams& conv, const BatchNormParams& bn) {
    conv.validate();
    bn.validate();
    check_shape(bn.channels() == conv.out_channels(),
                "fold_bn_into_conv channel count mismatch");
    Conv2dParams folded = conv;
    const std::int64_t per_oc = static_cast<std::int64_t>(conv.in_channels()) *
                                conv.kernel_h() * conv.kernel_w();
    for (int oc = 0; oc < conv.out_channels(); ++oc) {
        const double inv = 1.0 / std::sqrt(bn.running_var[oc] + bn.epsilon);
        const double scale = bn.gamma[oc] * inv;
        for (std::int64_t i = 0; i < per_oc; ++i)
            folded.weights[oc * per_oc + i] = conv.weights[oc * per_oc + i] * scale;
        folded.bias[oc] = scale * (conv.bias[oc] - bn.running_mean[oc]) + bn.beta[oc];
    }
    return folded;
}

Tensor global_avg_pool(const Tensor& input) {
    check_shape(input.rank() == 4, "global_avg_pool input must be [N,C,H,W]");
    const int n_batch = input.dim(0), c = input.dim(1);
    const std::int64_t plane = static_cast<std::int64_t>(input.dim(2)) * input.dim(3);
    check_shape(plane >= 1, "global_avg_pool needs H,W >= 1");
    Tensor out({n_batch, c});
    for (int n = 0; n < n_batch; ++n) {
        for (int ch = 0; ch < c; ++ch) {
            const std::int64_t base = (static_cast<std::int64_t>(n) * c + ch) * plane;
            double acc = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) acc += input[base + i];
            out(n, ch) = acc / static_cast<double>(plane);
        }
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    check_shape(a.rank() == 4 && b.rank() == 4, "concat_channels inputs must be [N,C,H,W]");
    check_shape(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
                "concat_channels batch/spatial extents disagree");
    const int n_batch = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    const std::int64_t plane = static_cast<std::int64_t>(a.dim(2)) * a.dim(3);
    Tensor out({n_batch, ca + cb, a.dim(2), a.dim(3)});
    for (int n = 0; n < n_batch; ++n) {
        std::int64_t dst = static_cast<std::int64_t>(n) * (ca + cb) * plane;
        const std::int64_t sa = static_cast<std::int64_t>(n) * ca * plane;
        const std::int64_t sb = static_cast<std::int64_t>(n) * cb * plane;
        for (std::int64_t i = 0; i < ca * plane; ++i) out[dst + i] = a[sa + i];
        dst += ca * plane;
        for (std::int64_t i = 0; i < cb * plane; ++i) out[dst + i] = b[sb + i];
    }
    return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, int channels_first) {
    check_shape(x.rank() == 4, "split_channels input must be [N,C,H,W]");
    check_shape(channels_first >= 0 && channels_first <= x.dim(1),
                "split_channels split point out of range");
    const int n_batch = x.dim(0), c = x.dim(1);
    const int ca = channels_first, cb = c - channels_first;
    const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
    Tensor a({n_batch, ca, x.dim(2), x.dim(3)});
    Tensor b({n_batch, cb, x.dim(2), x.dim(3)});
    for (int n = 0; n < n_batch; ++n) {
        const std::int64_t src = static_cast<std::int64_t>(n) * c * plane;
        const std::int64_t da = static_cast<std::int64_t>(n) * ca * plane;
        const std::int64_t db = static_cast<std::int64_t>(n) * cb * plane;
        for (std::int64_t i = 0; i < ca * plane; ++i) a[da + i] = x[src + i];
        for (std::int64_t i = 0; i < cb * plane; ++i) b[db + i] = x[src + ca * plane + i];
    }
    return {std::move(a), std::move(b)};
}

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    check_shape(input.rank() == 2, "linear input must be [N,F]");
    check_shape(weights.rank() == 2, "linear weights must be [O,F]");
    check_shape(bias.rank() == 1 && bias.dim(0) == weights.dim(0), "linear bias must be [O]");
    check_shape(input.dim(1) == weights.dim(1), "linear feature count mismatch");
    const int n_batch = input.dim(0), f = input.dim(1), o = weights.dim(0);
    Tensor out({n_batch, o});
    for (int n = 0; n < n_batch; ++n) {
        const double* in = input.data() + static_cast<std::size_t>(n) * f;
        for (int j = 0; j < o; ++j) {
            const double* w = weights.data() + static_cast<std::size_t>(j) * f;
            double acc = bias[j];
            for (int k = 0; k < f; ++k) acc += in[k] * w[k];
            out(n, j) = acc;
        }
    }
    return out;
}

}  // namespace mbsnn
