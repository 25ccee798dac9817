#include "mbsnn/train.hpp"

#include <cmath>
#include <utility>

#include "mbsnn/errors.hpp"
#include "mbsnn/grad_ops.hpp"
#include "mbsnn/rng.hpp"

namespace mbsnn {

void TrainConfig::validate() const {
    check_shape(lr > 0.0, "learning rate must be positive");
    check_shape(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0,1)");
    check_shape(weight_decay >= 0.0, "weight decay must be non-negative");
    check_shape(batch_size >= 1 && epochs >= 0 && time_steps >= 1, "bad training sizes");
}

namespace {

double surrogate_scalar(double u, const NeuronConfig& cfg, const SurrogateConfig& s) {
    if (s.kind == SurrogateConfig::Kind::straight_through_clamped) {
        const double hi = cfg.format.max_value() * cfg.v_th;
        return (u >= 0.0 && u <= hi) ? s.scale / cfg.v_th : 0.0;
    }
    const double step = cfg.format.scale() * cfg.v_th;
    double d = 0.0;
    for (int k = 1; k <= cfg.format.max_code(); ++k) {
        if (std::abs(u - k * step) < s.width) d += 1.0;
    }
    return d * s.scale * cfg.format.scale() / (2.0 * s.width);
}

void sgd_update_tensor(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double mu,
                       double wd) {
    if (velocity.size() == 0) velocity = Tensor(param.shape());
    for (std::int64_t i = 0; i < param.size(); ++i) {
        velocity[i] = mu * velocity[i] + grad[i] + wd * param[i];
        param[i] -= lr * velocity[i];
    }
}

Tensor add_tensors(const Tensor& a, const Tensor& b) {
    check_shape(a.same_shape(b), "tensor addition shape mismatch");
    Tensor out(a.shape());
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

}  // namespace

Tensor surrogate_backward(const Tensor& u, const NeuronConfig& cfg, const SurrogateConfig& s_cfg) {
    cfg.validate();
    s_cfg.validate();
    Tensor d(u.shape());
    for (std::int64_t i = 0; i < u.size(); ++i) d[i] = surrogate_scalar(u[i], cfg, s_cfg);
    return d;
}

// ---------------------------------------------------------------------------
// Trainable layers.
// ---------------------------------------------------------------------------

namespace detail {

struct TrainLayer {
    virtual ~TrainLayer() = default;
    virtual Tensor forward(const Tensor& x, int t_steps, int batch,
                           const SurrogateConfig& s_cfg) = 0;
    virtual Tensor backward(const Tensor& grad, int t_steps, int batch,
                            const SurrogateConfig& s_cfg) = 0;
    virtual void update(const TrainConfig& cfg) {}
    virtual void export_into(RuntimeLayer& out) const = 0;
};

namespace {

struct TrainConv {
    Conv2dParams p;
    Tensor grad_w, grad_b, vel_w, vel_b;
    Tensor cache_in;

    Tensor forward(const Tensor& x) {
        cache_in = x;
        return conv2d(x, p);
    }
    Tensor backward(const Tensor& grad) {
        ConvGrads g = conv2d_backward(cache_in, p, grad);
        grad_w = std::move(g.weights);
        grad_b = std::move(g.bias);
        return std::move(g.input);
    }
    void update(const TrainConfig& cfg) {
        sgd_update_tensor(p.weights, grad_w, vel_w, cfg.lr, cfg.momentum, cfg.weight_decay);
        sgd_update_tensor(p.bias, grad_b, vel_b, cfg.lr, cfg.momentum, 0.0);
    }
};

struct TrainBN {
    Tensor gamma, beta;
    Tensor running_mean, running_var;
    Tensor grad_g, grad_b, vel_g, vel_b;
    BatchNormCache cache;
    double epsilon = 1e-5;
    double stat_momentum = 0.1;

    explicit TrainBN(const BatchNormParams& p)
        : gamma(p.gamma),
          beta(p.beta),
          running_mean(p.running_mean),
          running_var(p.running_var),
          epsilon(p.epsilon > 0 ? p.epsilon : 1e-5) {}

    Tensor forward(const Tensor& x) {
        Tensor y = batchnorm_train_forward(x, gamma, beta, epsilon, &cache);
        for (int c = 0; c < gamma.dim(0); ++c) {
            const double is = cache.inv_std[static_cast<std::size_t>(c)];
            const double var = 1.0 / (is * is) - epsilon;
            running_mean[c] = (1.0 - stat_momentum) * running_mean[c] +
                              stat_momentum * cache.mean[static_cast<std::size_t>(c)];
            running_var[c] = (1.0 - stat_momentum) * running_var[c] + stat_momentum * var;
        }
        return y;
    }
    Tensor backward(const Tensor& grad) {
        BatchNormGrads g = batchnorm_train_backward(cache, grad);
        grad_g = std::move(g.gamma);
        grad_b = std::move(g.beta);
        return std::move(g.input);
    }
    void update(const TrainConfig& cfg) {
        sgd_update_tensor(gamma, grad_g, vel_g, cfg.lr, cfg.momentum, 0.0);
        sgd_update_tensor(beta, grad_b, vel_b, cfg.lr, cfg.momentum, 0.0);
    }
    BatchNormParams params() const {
        BatchNormParams p;
        p.gamma = gamma;
        p.beta = beta;
        p.running_mean = running_mean;
        p.running_var = running_var;
        p.epsilon = epsilon;
        return p;
    }
};

// Stateful spike site: walks the stacked tensor's time slices sequentially,
// caching the pre-reset membrane and firing mask for the backward sweep.
struct TrainNeuron {
    NeuronConfig cfg;
    Tensor membrane_cache;  // stacked, pre-reset
    Tensor fired_cache;     // stacked, 1 where code > 0

    Tensor forward(const Tensor& x, int t_steps) {
        cfg.validate();
        const std::int64_t slice = x.size() / t_steps;
        Tensor out(x.shape());
        membrane_cache = Tensor(x.shape());
        fired_cache = Tensor(x.shape());
        std::vector<double> u(static_cast<std::size_t>(slice), 0.0);
        const double decay = cfg.decay();
        const double scale = cfg.format.scale();
        for (int t = 0; t < t_steps; ++t) {
            const std::int64_t base = t * slice;
            for (std::int64_t i = 0; i < slice; ++i) {
                const double h = decay * u[static_cast<std::size_t>(i)] + x[base + i];
                const int code = quantize_code(h, cfg.v_th, cfg.format);
                const double value = code * scale;
                membrane_cache[base + i] = h;
                fired_cache[base + i] = code > 0 ? 1.0 : 0.0;
                out[base + i] = value;
                u[static_cast<std::size_t>(i)] =
                    cfg.reset_mode == ResetMode::hard ? (code > 0 ? 0.0 : h)
                                                      : h - value * cfg.v_th;
            }
        }
        return out;
    }

    Tensor backward(const Tensor& grad, int t_steps, const SurrogateConfig& s_cfg) {
        const std::int64_t slice = grad.size() / t_steps;
        Tensor gx(grad.shape());
        std::vector<double> du(static_cast<std::size_t>(slice), 0.0);
        const double decay = cfg.decay();
        for (int t = t_steps - 1; t >= 0; --t) {
            const std::int64_t base = t * slice;
            for (std::int64_t i = 0; i < slice; ++i) {
                const double h = membrane_cache[base + i];
                // reset is detached from the spike; hard reset zeroes the
                // carried state wherever the neuron fired
                const double carry =
                    cfg.reset_mode == ResetMode::hard ? 1.0 - fired_cache[base + i] : 1.0;
                const double dh = grad[base + i] * surrogate_scalar(h, cfg, s_cfg) +
                                  du[static_cast<std::size_t>(i)] * carry;
                gx[base + i] = dh;
                du[static_cast<std::size_t>(i)] = decay * dh;
            }
        }
        return gx;
    }
};

struct ConvLayerT final : TrainLayer {
    TrainConv conv;
    Tensor forward(const Tensor& x, int, int, const SurrogateConfig&) override {
        return conv.forward(x);
    }
    Tensor backward(const Tensor& g, int, int, const SurrogateConfig&) override {
        return conv.backward(g);
    }
    void update(const TrainConfig& cfg) override { conv.update(cfg); }
    void export_into(RuntimeLayer& out) const override { out = ConvLayer{conv.p}; }
};

struct BatchNormLayerT final : TrainLayer {
    TrainBN bn;
    explicit BatchNormLayerT(const BatchNormParams& p) : bn(p) {}
    Tensor forward(const Tensor& x, int, int, const SurrogateConfig&) override {
        return bn.forward(x);
    }
    Tensor backward(const Tensor& g, int, int, const SurrogateConfig&) override {
        return bn.backward(g);
    }
    void update(const TrainConfig& cfg) override { bn.update(cfg); }
    void export_into(RuntimeLayer& out) const override { out = BatchNormLayer{bn.params()}; }
};

struct NeuronLayerT final : TrainLayer {
    TrainNeuron neuron;
    Tensor forward(const Tensor& x, int t_steps, int, const SurrogateConfig&) override {
        return neuron.forward(x, t_steps);
    }
    Tensor backward(const Tensor& g, int t_steps, int, const SurrogateConfig& s) override {
        return neuron.backward(g, t_steps, s);
    }
    void export_into(RuntimeLayer& out) const override { out = NeuronLayer{neuron.cfg}; }
};

struct ReluLayerT final : TrainLayer {
    Tensor mask;
    Tensor forward(const Tensor& x, int, int, const SurrogateConfig&) override {
        mask = Tensor(x.shape());
        Tensor y(x.shape());
        for (std::int64_t i = 0; i < x.size(); ++i) {
            mask[i] = x[i] > 0.0 ? 1.0 : 0.0;
            y[i] = x[i] > 0.0 ? x[i] : 0.0;
        }
        return y;
    }
    Tensor backward(const Tensor& g, int, int, const SurrogateConfig&) override {
        Tensor gx(g.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) gx[i] = g[i] * mask[i];
        return gx;
    }
    void export_into(RuntimeLayer& out) const override { out = ReluLayer{}; }
};

struct AvgPoolLayerT final : TrainLayer {
    int height = 0, width = 0;
    Tensor forward(const Tensor& x, int, int, const SurrogateConfig&) override {
        height = x.dim(2);
        width = x.dim(3);
        return global_avg_pool(x);
    }
    Tensor backward(const Tensor& g, int, int, const SurrogateConfig&) override {
        return global_avg_pool_backward(g, height, width);
    }
    void export_into(RuntimeLayer& out) const override { out = AvgPoolLayer{}; }
};

struct FlattenLayerT final : TrainLayer {
    std::vector<int> in_shape;
    Tensor forward(const Tensor& x, int, int, const SurrogateConfig&) override {
        in_shape = x.shape();
        int f = 1;
        for (int i = 1; i < x.rank(); ++i) f *= x.dim(i);
        return x.reshaped({x.dim(0), f});
    }
    Tensor backward(const Tensor& g, int, int, const SurrogateConfig&) override {
        return g.reshaped(in_shape);
    }
    void export_into(RuntimeLayer& out) const override { out = FlattenLayer{}; }
};

struct LinearLayerT final : TrainLayer {
    Tensor weights, bias;
    Tensor grad_w, grad_b, vel_w, vel_b;
    Tensor cache_in;
    Tensor forward(const Tensor& x, int, int, const SurrogateConfig&) override {
        cache_in = x;
        return linear(x, weights, bias);
    }
    Tensor backward(const Tensor& g, int, int, const SurrogateConfig&) override {
        LinearGrads lg = linear_backward(cache_in, weights, g);
        grad_w = std::move(lg.weights);
        grad_b = std::move(lg.bias);
        return std::move(lg.input);
    }
    void update(const TrainConfig& cfg) override {
        sgd_update_tensor(weights, grad_w, vel_w, cfg.lr, cfg.momentum, cfg.weight_decay);
        sgd_update_tensor(bias, grad_b, vel_b, cfg.lr, cfg.momentum, 0.0);
    }
    void export_into(RuntimeLayer& out) const override { out = LinearLayer{weights, bias}; }
};

// Readout: per-step linear, logits are the average over time slices. The
// forward returns [N, classes]; the backward takes dL/dlogits.
struct ReadoutLayerT final : TrainLayer {
    Tensor weights, bias;
    Tensor grad_w, grad_b, vel_w, vel_b;
    Tensor cache_in;
    Tensor forward(const Tensor& x, int t_steps, int batch, const SurrogateConfig&) override {
        cache_in = x;
        Tensor z = linear(x, weights, bias);  // [T*N, classes]
        const int classes = z.dim(1);
        Tensor logits({batch, classes});
        for (int t = 0; t < t_steps; ++t)
            for (int n = 0; n < batch; ++n)
                for (int c = 0; c < classes; ++c) logits(n, c) += z(t * batch + n, c);
        for (std::int64_t i = 0; i < logits.size(); ++i) logits[i] /= t_steps;
        return logits;
    }
    Tensor backward(const Tensor& dlogits, int t_steps, int batch,
                    const SurrogateConfig&) override {
        const int classes = dlogits.dim(1);
        Tensor dz({t_steps * batch, classes});
        for (int t = 0; t < t_steps; ++t)
            for (int n = 0; n < batch; ++n)
                for (int c = 0; c < classes; ++c)
                    dz(t * batch + n, c) = dlogits(n, c) / t_steps;
        LinearGrads lg = linear_backward(cache_in, weights, dz);
        grad_w = std::move(lg.weights);
        grad_b = std::move(lg.bias);
        return std::move(lg.input);
    }
    void update(const TrainConfig& cfg) override {
        sgd_update_tensor(weights, grad_w, vel_w, cfg.lr, cfg.momentum, cfg.weight_decay);
        sgd_update_tensor(bias, grad_b, vel_b, cfg.lr, cfg.momentum, 0.0);
    }
    void export_into(RuntimeLayer& out) const override { out = ReadoutLayer{weights, bias}; }
};

// Interlaminar block: the two conv+bn stages, the fuse path with channel
// attention, the optional projection shortcut, and the two spike sites.
struct BlockLayerT final : TrainLayer {
    TrainConv conv1, conv2, fuse;
    TrainBN bn1, bn2, fuse_bn;
    Tensor eca_kernel, grad_eca, vel_eca;
    EcaCache eca_cache;
    TrainNeuron mid, out_neuron;
    std::optional<TrainConv> proj;
    std::optional<TrainBN> proj_bn;
    Tensor cache_x;
    int channels = 0;

    explicit BlockLayerT(const InterlaminarBlock& b)
        : bn1(b.bn1), bn2(b.bn2), fuse_bn(b.fuse_bn) {
        conv1.p = b.conv1;
        conv2.p = b.conv2;
        fuse.p = b.fuse_conv;
        eca_kernel = b.eca_kernel;
        mid.cfg = b.neuron;
        out_neuron.cfg = b.neuron;
        channels = b.conv2.out_channels();
        if (b.shortcut_conv) {
            proj.emplace();
            proj->p = *b.shortcut_conv;
            proj_bn.emplace(*b.shortcut_bn);
        }
    }

    Tensor forward(const Tensor& x, int t_steps, int, const SurrogateConfig&) override {
        cache_x = x;
        Tensor x_pre = bn1.forward(conv1.forward(x));
        Tensor s = mid.forward(x_pre, t_steps);
        Tensor x_post = bn2.forward(conv2.forward(s));
        Tensor x_re = fuse_bn.forward(fuse.forward(concat_channels(x_pre, x_post)));
        x_re = eca_forward(x_re, eca_kernel, &eca_cache);
        Tensor shortcut = proj ? proj_bn->forward(proj->forward(x)) : x;
        Tensor drive(x_post.shape());
        for (std::int64_t i = 0; i < drive.size(); ++i)
            drive[i] = x_post[i] + shortcut[i] + x_re[i];
        return out_neuron.forward(drive, t_steps);
    }

    Tensor backward(const Tensor& grad, int t_steps, int, const SurrogateConfig& s_cfg) override {
        Tensor d_drive = out_neuron.backward(grad, t_steps, s_cfg);
        // the drive is a three-way sum: x_post + shortcut + gated fuse output
        EcaGrads eg = eca_backward(eca_cache, d_drive);
        grad_eca = std::move(eg.kernel);
        Tensor d_cat = fuse.backward(fuse_bn.backward(eg.input));
        auto [d_pre_fuse, d_post_fuse] = split_channels(d_cat, channels);

        Tensor d_post = add_tensors(d_drive, d_post_fuse);
        Tensor d_s = conv2.backward(bn2.backward(d_post));
        Tensor d_pre = add_tensors(mid.backward(d_s, t_steps, s_cfg), d_pre_fuse);
        Tensor dx = conv1.backward(bn1.backward(d_pre));

        if (proj) {
            Tensor d_proj = proj->backward(proj_bn->backward(d_drive));
            return add_tensors(dx, d_proj);
        }
        return add_tensors(dx, d_drive);
    }

    void update(const TrainConfig& cfg) override {
        conv1.update(cfg);
        bn1.update(cfg);
        conv2.update(cfg);
        bn2.update(cfg);
        fuse.update(cfg);
        fuse_bn.update(cfg);
        sgd_update_tensor(eca_kernel, grad_eca, vel_eca, cfg.lr, cfg.momentum, 0.0);
        if (proj) {
            proj->update(cfg);
            proj_bn->update(cfg);
        }
    }

    void export_into(RuntimeLayer& out) const override {
        InterlaminarBlock b;
        b.conv1 = conv1.p;
        b.bn1 = bn1.params();
        b.conv2 = conv2.p;
        b.bn2 = bn2.params();
        b.fuse_conv = fuse.p;
        b.fuse_bn = fuse_bn.params();
        b.eca_kernel = eca_kernel;
        b.neuron = mid.cfg;
        if (proj) {
            b.shortcut_conv = proj->p;
            b.shortcut_bn = proj_bn->params();
        }
        out = BlockLayer{std::move(b)};
    }
};

}  // namespace
}  // namespace detail

// ---------------------------------------------------------------------------
// TrainableNetwork.
// ---------------------------------------------------------------------------

TrainableNetwork::TrainableNetwork() = default;
TrainableNetwork::TrainableNetwork(TrainableNetwork&&) noexcept = default;
TrainableNetwork& TrainableNetwork::operator=(TrainableNetwork&&) noexcept = default;
TrainableNetwork::~TrainableNetwork() = default;

TrainableNetwork TrainableNetwork::build(const NetworkSpec& spec, std::uint64_t seed) {
    // Delegate parameter initialization to the runtime builder so the two
    // paths can never drift apart.
    Network runtime = Network::build(spec, seed);
    TrainableNetwork net;
    net.spec_ = spec;
    using namespace detail;
    for (const RuntimeLayer& rl : runtime.layers()) {
        if (const auto* cl = std::get_if<ConvLayer>(&rl)) {
            auto t = std::make_unique<ConvLayerT>();
            t->conv.p = cl->p;
            net.layers_.push_back(std::move(t));
        } else if (const auto* bl = std::get_if<BatchNormLayer>(&rl)) {
            net.layers_.push_back(std::make_unique<BatchNormLayerT>(bl->p));
        } else if (const auto* nl = std::get_if<NeuronLayer>(&rl)) {
            auto t = std::make_unique<NeuronLayerT>();
            t->neuron.cfg = nl->cfg;
            net.layers_.push_back(std::move(t));
        } else if (std::get_if<ReluLayer>(&rl)) {
            net.layers_.push_back(std::make_unique<ReluLayerT>());
        } else if (const auto* bll = std::get_if<BlockLayer>(&rl)) {
            net.layers_.push_back(std::make_unique<BlockLayerT>(bll->block));
        } else if (std::get_if<AvgPoolLayer>(&rl)) {
            net.layers_.push_back(std::make_unique<AvgPoolLayerT>());
        } else if (std::get_if<FlattenLayer>(&rl)) {
            net.layers_.push_back(std::make_unique<FlattenLayerT>());
        } else if (const auto* ll = std::get_if<LinearLayer>(&rl)) {
            auto t = std::make_unique<LinearLayerT>();
            t->weights = ll->weights;
            t->bias = ll->bias;
            net.layers_.push_back(std::move(t));
        } else if (const auto* ro = std::get_if<ReadoutLayer>(&rl)) {
            auto t = std::make_unique<ReadoutLayerT>();
            t->weights = ro->weights;
            t->bias = ro->bias;
            net.layers_.push_back(std::move(t));
        }
    }
    return net;
}

namespace {

Tensor stack_time_steps(const Tensor& input, int t_steps) {
    std::vector<int> shape = input.shape();
    shape[0] *= t_steps;
    Tensor stacked(shape);
    const std::int64_t n = input.size();
    for (int t = 0; t < t_steps; ++t)
        for (std::int64_t i = 0; i < n; ++i) stacked[t * n + i] = input[i];
    return stacked;
}

}  // namespace

Tensor TrainableNetwork::forward_train(const Tensor& inputs) {
    const int t_steps = spec_.is_spiking() ? spec_.time_steps : 1;
    const int batch = inputs.dim(0);
    SurrogateConfig s_cfg;
    Tensor cur = stack_time_steps(inputs, t_steps);
    for (auto& layer : layers_) cur = layer->forward(cur, t_steps, batch, s_cfg);
    return cur;  // [N, classes]
}

double TrainableNetwork::bptt_train_step(const Tensor& inputs, const std::vector<int>& labels,
                                         const TrainConfig& t_cfg, const SurrogateConfig& s_cfg) {
    t_cfg.validate();
    s_cfg.validate();
    const int t_steps = spec_.is_spiking() ? spec_.time_steps : 1;
    const int batch = inputs.dim(0);
    check_shape(static_cast<int>(labels.size()) == batch, "batch label count mismatch");

    Tensor cur = stack_time_steps(inputs, t_steps);
    for (auto& layer : layers_) cur = layer->forward(cur, t_steps, batch, s_cfg);

    Tensor dlogits;
    const double loss = softmax_cross_entropy(cur, labels, &dlogits);
    if (!std::isfinite(loss))
        throw NumericError("training loss is not finite; check learning rate and data scale");

    Tensor grad = std::move(dlogits);
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
        grad = (*it)->backward(grad, t_steps, batch, s_cfg);

    for (auto& layer : layers_) layer->update(t_cfg);
    return loss;
}

Network TrainableNetwork::to_network() const {
    Network net = Network::build(spec_, 0);
    check_shape(net.layers().size() == layers_.size(), "layer count mismatch on export");
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->export_into(net.layers()[i]);
    return net;
}

// ---------------------------------------------------------------------------
// Epoch loop and evaluation.
// ---------------------------------------------------------------------------

namespace {

Tensor gather_inputs(const Dataset& ds, const std::vector<int>& idx, int from, int count) {
    std::vector<int> shape = ds.inputs.shape();
    shape[0] = count;
    Tensor out(shape);
    const std::int64_t per_sample = ds.inputs.size() / ds.size();
    for (int i = 0; i < count; ++i) {
        const std::int64_t src = static_cast<std::int64_t>(idx[static_cast<std::size_t>(from + i)]);
        for (std::int64_t k = 0; k < per_sample; ++k)
            out[i * per_sample + k] = ds.inputs[src * per_sample + k];
    }
    return out;
}

}  // namespace

double evaluate(const Network& net, const Dataset& ds) {
    ds.validate();
    const int n = ds.size();
    check_shape(n >= 1, "cannot evaluate an empty dataset");
    const int chunk = 256;
    const std::int64_t per_sample = ds.inputs.size() / n;
    int correct = 0;
    for (int from = 0; from < n; from += chunk) {
        const int count = std::min(chunk, n - from);
        std::vector<int> shape = ds.inputs.shape();
        shape[0] = count;
        Tensor batch(shape);
        for (std::int64_t k = 0; k < count * per_sample; ++k)
            batch[k] = ds.inputs[from * per_sample + k];
        const Tensor logits =
            net.is_spiking() ? net.forward_timesteps(batch).logits : net.forward_ann(batch);
        for (int i = 0; i < count; ++i) {
            int best = 0;
            for (int c = 1; c < logits.dim(1); ++c)
                if (logits(i, c) > logits(i, best)) best = c;
            if (best == ds.labels[static_cast<std::size_t>(from + i)]) ++correct;
        }
    }
    return static_cast<double>(correct) / n;
}

std::vector<EpochStats> train_network(TrainableNetwork& net, const Dataset& train_set,
                                      const Dataset& test_set, const TrainConfig& t_cfg,
                                      const SurrogateConfig& s_cfg,
                                      double stop_at_train_accuracy) {
    t_cfg.validate();
    train_set.validate();
    if (test_set.size() > 0) test_set.validate();
    std::vector<EpochStats> history;
    Rng shuffler(t_cfg.seed ^ 0x5eedf00dULL);
    std::vector<int> order(static_cast<std::size_t>(train_set.size()));
    for (int i = 0; i < train_set.size(); ++i) order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 0; epoch < t_cfg.epochs; ++epoch) {
        shuffler.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;
        for (int from = 0; from < train_set.size(); from += t_cfg.batch_size) {
            const int count = std::min(t_cfg.batch_size, train_set.size() - from);
            Tensor inputs = gather_inputs(train_set, order, from, count);
            std::vector<int> labels(static_cast<std::size_t>(count));
            for (int i = 0; i < count; ++i)
                labels[static_cast<std::size_t>(i)] =
                    train_set.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(from + i)])];
            loss_sum += net.bptt_train_step(inputs, labels, t_cfg, s_cfg);
            ++batches;
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = batches > 0 ? loss_sum / batches : 0.0;
        const Network snapshot = net.to_network();
        stats.train_accuracy = evaluate(snapshot, train_set);
        stats.test_accuracy = test_set.size() > 0 ? evaluate(snapshot, test_set) : 0.0;
        history.push_back(stats);
        if (stats.train_accuracy >= stop_at_train_accuracy) break;
    }
    return history;
}

}  // namespace mbsnn
