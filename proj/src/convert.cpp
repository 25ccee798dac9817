#include "mbsnn/convert.hpp"

#include <algorithm>
#include <cmath>

namespace mbsnn {

void CalibrationPolicy::validate() const {
    check_shape(percentile > 0.0 && percentile <= 100.0, "percentile must be in (0,100]");
    check_shape(calib_batches >= 1, "need at least one calibration batch");
}

Network train_ann(const NetworkSpec& spec, const Dataset& train_set, const TrainConfig& t_cfg,
                  std::uint64_t seed) {
    spec.validate();
    check_shape(!spec.is_spiking(), "train_ann wants a relu network");
    TrainableNetwork net = TrainableNetwork::build(spec, seed);
    Dataset empty;
    SurrogateConfig s_cfg;  // unused by relu layers
    train_network(net, train_set, empty, t_cfg, s_cfg);
    return net.to_network();
}

std::vector<double> calibrate_thresholds(const Network& ann, const CalibrationPolicy& policy,
                                         const Dataset& calib_data) {
    policy.validate();
    calib_data.validate();
    check_shape(calib_data.size() >= 1, "calibration set is empty");

    const int chunk = 64;
    const int limit = std::min(calib_data.size(), policy.calib_batches * chunk);
    const std::int64_t per_sample = calib_data.inputs.size() / calib_data.size();

    std::vector<std::vector<double>> observed;  // per relu site
    for (int from = 0; from < limit; from += chunk) {
        const int count = std::min(chunk, limit - from);
        std::vector<int> shape = calib_data.inputs.shape();
        shape[0] = count;
        Tensor batch(shape);
        for (std::int64_t k = 0; k < count * per_sample; ++k)
            batch[k] = calib_data.inputs[from * per_sample + k];
        std::vector<Tensor> acts;
        ann.forward_ann(batch, &acts);
        if (observed.empty()) observed.resize(acts.size());
        check_shape(observed.size() == acts.size(), "relu site count changed between batches");
        for (std::size_t i = 0; i < acts.size(); ++i) {
            const Tensor& a = acts[i];
            for (std::int64_t k = 0; k < a.size(); ++k) observed[i].push_back(a[k]);
        }
    }
    check_shape(!observed.empty(), "network has no relu sites to calibrate");

    std::vector<double> thresholds;
    thresholds.reserve(observed.size());
    for (auto& values : observed) {
        double v_th;
        if (policy.method == CalibrationPolicy::Method::max) {
            v_th = *std::max_element(values.begin(), values.end());
        } else {
            // nearest-rank percentile; p = 100 picks the maximum
            std::sort(values.begin(), values.end());
            const std::size_t n = values.size();
            std::size_t rank = static_cast<std::size_t>(
                std::ceil(policy.percentile / 100.0 * static_cast<double>(n)));
            if (rank < 1) rank = 1;
            if (rank > n) rank = n;
            v_th = values[rank - 1];
        }
        thresholds.push_back(v_th);
    }
    return thresholds;
}

namespace {

void scale_weights(Tensor& w, double s) {
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] *= s;
}

}  // namespace

Network fold_ann_batchnorm(const Network& ann) {
    check_shape(!ann.is_spiking(), "fold_ann_batchnorm wants a relu network");
    const NetworkSpec& old_spec = ann.spec();
    NetworkSpec spec;
    spec.input_shape = old_spec.input_shape;
    spec.time_steps = old_spec.time_steps;
    spec.encoding = old_spec.encoding;

    std::vector<RuntimeLayer> layers;
    const auto& src = ann.layers();
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (const auto* cl = std::get_if<ConvLayer>(&src[i])) {
            Conv2dParams p = cl->p;
            if (i + 1 < src.size()) {
                if (const auto* bn = std::get_if<BatchNormLayer>(&src[i + 1])) {
                    p = fold_bn_into_conv(p, bn->p);
                    ++i;
                }
            }
            LayerSpec conv_spec;
            conv_spec.kind = LayerSpec::Kind::conv;
            conv_spec.out_channels = p.out_channels();
            conv_spec.kernel = p.kernel_h();
            conv_spec.stride = p.stride;
            conv_spec.padding = p.padding;
            spec.layers.push_back(conv_spec);
            layers.emplace_back(ConvLayer{std::move(p)});
        } else if (std::get_if<BatchNormLayer>(&src[i])) {
            shape_error("batchnorm without a preceding conv cannot be folded");
        } else if (std::get_if<ReluLayer>(&src[i])) {
            spec.layers.push_back({.kind = LayerSpec::Kind::relu});
            layers.emplace_back(ReluLayer{});
        } else if (std::get_if<AvgPoolLayer>(&src[i])) {
            spec.layers.push_back({.kind = LayerSpec::Kind::avgpool});
            layers.emplace_back(AvgPoolLayer{});
        } else if (std::get_if<FlattenLayer>(&src[i])) {
            spec.layers.push_back({.kind = LayerSpec::Kind::flatten});
            layers.emplace_back(FlattenLayer{});
        } else if (const auto* ll = std::get_if<LinearLayer>(&src[i])) {
            LayerSpec ls2{.kind = LayerSpec::Kind::linear, .out_features = ll->weights.dim(0)};
            spec.layers.push_back(ls2);
            layers.emplace_back(LinearLayer{*ll});
        } else if (const auto* ro = std::get_if<ReadoutLayer>(&src[i])) {
            LayerSpec ls2{.kind = LayerSpec::Kind::readout, .out_features = ro->weights.dim(0)};
            spec.layers.push_back(ls2);
            layers.emplace_back(ReadoutLayer{*ro});
        } else {
            shape_error("unexpected layer in a relu network");
        }
    }

    Network out = Network::build(spec, 0);
    check_shape(out.layers().size() == layers.size(), "fold layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) out.layers()[i] = std::move(layers[i]);
    return out;
}

Network convert_ann_to_snn(const Network& ann, const std::vector<double>& thresholds,
                           BitFormat fmt) {
    fmt.validate();
    for (double v : thresholds) check_shape(v > 0.0, "conversion thresholds must be positive");

    const Network folded = fold_ann_batchnorm(ann);
    const NetworkSpec& folded_spec = folded.spec();

    NetworkSpec spec;
    spec.input_shape = folded_spec.input_shape;
    spec.time_steps = folded_spec.time_steps;
    spec.encoding = folded_spec.encoding;

    std::vector<RuntimeLayer> layers;
    std::size_t relu_index = 0;
    double pending_scale = 1.0;  // previous site's threshold, absorbed downstream
    for (const RuntimeLayer& rl : folded.layers()) {
        if (const auto* cl = std::get_if<ConvLayer>(&rl)) {
            Conv2dParams p = cl->p;
            scale_weights(p.weights, pending_scale);
            pending_scale = 1.0;
            LayerSpec ls;
            ls.kind = LayerSpec::Kind::conv;
            ls.out_channels = p.out_channels();
            ls.kernel = p.kernel_h();
            ls.stride = p.stride;
            ls.padding = p.padding;
            spec.layers.push_back(ls);
            layers.emplace_back(ConvLayer{std::move(p)});
        } else if (std::get_if<ReluLayer>(&rl)) {
            check_shape(relu_index < thresholds.size(),
                        "conversion needs one threshold per relu site");
            NeuronConfig cfg;
            cfg.v_th = thresholds[relu_index];
            cfg.leak = LeakMode::none;
            cfg.reset_mode = ResetMode::subtract;
            cfg.format = fmt;
            // half of one quantization step: fractional formats flush any
            // larger pre-charge straight into the output as a spurious signal
            cfg.initial_charge = cfg.v_th * fmt.scale() / 2.0;
            LayerSpec ls{.kind = LayerSpec::Kind::neuron, .neuron = cfg};
            spec.layers.push_back(ls);
            layers.emplace_back(NeuronLayer{cfg});
            pending_scale = thresholds[relu_index];
            ++relu_index;
        } else if (std::get_if<AvgPoolLayer>(&rl)) {
            spec.layers.push_back({.kind = LayerSpec::Kind::avgpool});
            layers.emplace_back(AvgPoolLayer{});
        } else if (std::get_if<FlattenLayer>(&rl)) {
            spec.layers.push_back({.kind = LayerSpec::Kind::flatten});
            layers.emplace_back(FlattenLayer{});
        } else if (const auto* ll = std::get_if<LinearLayer>(&rl)) {
            LinearLayer copy = *ll;
            scale_weights(copy.weights, pending_scale);
            pending_scale = 1.0;
            LayerSpec ls{.kind = LayerSpec::Kind::linear, .out_features = copy.weights.dim(0)};
            spec.layers.push_back(ls);
            layers.emplace_back(std::move(copy));
        } else if (const auto* ro = std::get_if<ReadoutLayer>(&rl)) {
            ReadoutLayer copy = *ro;
            scale_weights(copy.weights, pending_scale);
            pending_scale = 1.0;
            LayerSpec ls{.kind = LayerSpec::Kind::readout, .out_features = copy.weights.dim(0)};
            spec.layers.push_back(ls);
            layers.emplace_back(std::move(copy));
        } else {
            shape_error("unexpected layer during conversion");
        }
    }
    check_shape(relu_index == thresholds.size(), "threshold count does not match relu sites");

    Network out = Network::build(spec, 0);
    check_shape(out.layers().size() == layers.size(), "conversion layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) out.layers()[i] = std::move(layers[i]);
    return out;
}

std::vector<std::pair<int, double>> evaluate_tsweep(const Network& snn, const Dataset& ds,
                                                    const std::vector<int>& ts) {
    check_shape(!ts.empty(), "t-sweep needs at least one entry");
    std::vector<std::pair<int, double>> rows;
    rows.reserve(ts.size());
    for (int t : ts) rows.emplace_back(t, evaluate(snn.with_time_steps(t), ds));
    return rows;
}

}  // namespace mbsnn
