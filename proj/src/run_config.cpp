#include "mbsnn/run_config.hpp"

#include <fstream>

#include <json.hpp>

#include "mbsnn/errors.hpp"

namespace mbsnn {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) ok = true;
        if (!ok) throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
    }
}

DatasetSpec parse_dataset(const json& j) {
    reject_unknown(j,
                   {"kind", "n", "classes", "seed", "test_fraction", "blob_shape", "separation",
                    "noise", "turns", "jitter", "images", "labels"},
                   "dataset");
    DatasetSpec d;
    d.kind = j.value("kind", "gaussian_blobs");
    d.n = j.value("n", 2000);
    d.classes = j.value("classes", 4);
    d.seed = j.value("seed", 1ULL);
    d.test_fraction = j.value("test_fraction", 0.25);
    if (j.contains("blob_shape")) d.synth.blob_shape = j.at("blob_shape").get<std::vector<int>>();
    d.synth.separation = j.value("separation", d.synth.separation);
    d.synth.noise = j.value("noise", d.synth.noise);
    d.synth.turns = j.value("turns", d.synth.turns);
    d.synth.jitter = j.value("jitter", d.synth.jitter);
    d.images_path = j.value("images", "");
    d.labels_path = j.value("labels", "");
    if (d.kind != "gaussian_blobs" && d.kind != "two_spirals" && d.kind != "idx")
        throw std::invalid_argument("unknown dataset kind: " + d.kind);
    if (d.kind == "idx" && d.images_path.empty())
        throw std::invalid_argument("idx dataset needs an images path");
    return d;
}

TrainConfig parse_train(const json& j) {
    reject_unknown(j,
                   {"lr", "momentum", "weight_decay", "batch_size", "epochs", "time_steps", "seed",
                    "optimizer"},
                   "train");
    TrainConfig t;
    t.lr = j.value("lr", 0.1);
    t.momentum = j.value("momentum", 0.9);
    t.weight_decay = j.value("weight_decay", 1e-4);
    t.batch_size = j.value("batch_size", 64);
    t.epochs = j.value("epochs", 30);
    t.time_steps = j.value("time_steps", 4);
    t.seed = j.value("seed", 1ULL);
    const std::string opt = j.value("optimizer", "sgd_momentum");
    if (opt != "sgd_momentum") throw std::invalid_argument("unknown optimizer: " + opt);
    t.validate();
    return t;
}

SurrogateConfig parse_surrogate(const json& j) {
    reject_unknown(j, {"kind", "width", "scale"}, "surrogate");
    SurrogateConfig s;
    const std::string kind = j.value("kind", "straight_through_clamped");
    if (kind == "straight_through_clamped")
        s.kind = SurrogateConfig::Kind::straight_through_clamped;
    else if (kind == "rectangular_per_boundary")
        s.kind = SurrogateConfig::Kind::rectangular_per_boundary;
    else
        throw std::invalid_argument("unknown surrogate kind: " + kind);
    s.width = j.value("width", 0.1);
    s.scale = j.value("scale", 1.0);
    s.validate();
    return s;
}

NeuronConfig parse_neuron_json(const json& j) {
    // Reuse the network-spec parser by round-tripping through a layer object.
    json layer{{"kind", "neuron"}, {"neuron", j}};
    json net{{"input_shape", {1}},
             {"layers", json::array({layer, json{{"kind", "readout"}, {"out_features", 2}}})}};
    NetworkSpec spec = NetworkSpec::from_json(net.dump());
    return spec.layers[0].neuron;
}

NetworkSpec resolve_model(const json& j, const DatasetSpec& dataset, int time_steps) {
    reject_unknown(j, {"preset", "hidden", "neuron", "network"}, "model");
    if (j.contains("network")) {
        if (j.contains("preset")) throw std::invalid_argument("model: give preset or network, not both");
        return NetworkSpec::from_json(j.at("network").dump());
    }
    const std::string preset = j.value("preset", "resnet8_slim");
    NeuronConfig neuron =
        j.contains("neuron") ? parse_neuron_json(j.at("neuron")) : NeuronConfig{};
    const int hidden = j.value("hidden", 48);
    const std::vector<int> in_shape = dataset.sample_shape();

    if (preset == "resnet8_slim") {
        check_shape(in_shape.size() == 3 && in_shape[1] == in_shape[2],
                    "resnet8_slim needs square image inputs");
        return make_resnet8_slim_spec(in_shape[0], in_shape[1], dataset.classes, neuron,
                                      time_steps);
    }
    if (preset == "spiral_mlp") {
        check_shape(in_shape.size() == 1, "spiral_mlp needs flat inputs");
        return make_spiral_mlp_spec(in_shape[0], hidden, dataset.classes, neuron, time_steps);
    }
    if (preset == "desk_cnn_ann") {
        check_shape(in_shape.size() == 3 && in_shape[1] == in_shape[2],
                    "desk_cnn_ann needs square image inputs");
        return make_desk_cnn_ann_spec(in_shape[0], in_shape[1], dataset.classes);
    }
    if (preset == "desk_mlp_ann") return make_desk_mlp_ann_spec(in_shape, hidden, dataset.classes);
    throw std::invalid_argument("unknown model preset: " + preset);
}

}  // namespace

std::vector<int> DatasetSpec::sample_shape() const {
    if (kind == "gaussian_blobs") return synth.blob_shape;
    if (kind == "two_spirals") return {2};
    // idx: peek at the file for its geometry
    Tensor images = load_idx_images(images_path);
    return {1, images.dim(2), images.dim(3)};
}

std::pair<Dataset, Dataset> DatasetSpec::make() const {
    if (kind == "idx") {
        Dataset ds = load_idx(images_path, labels_path);
        return split_train_test(ds, test_fraction, seed);
    }
    const SyntheticKind k =
        kind == "gaussian_blobs" ? SyntheticKind::gaussian_blobs : SyntheticKind::two_spirals;
    Dataset ds = gen_synthetic_dataset(k, n, classes, seed, synth);
    return split_train_test(ds, test_fraction, seed + 1);
}

RunConfig RunConfig::parse(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw DataError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j, {"model", "train", "surrogate", "dataset", "stop_at_train_accuracy"},
                   "config");
    RunConfig cfg;
    cfg.dataset = j.contains("dataset") ? parse_dataset(j.at("dataset")) : DatasetSpec{};
    cfg.train = j.contains("train") ? parse_train(j.at("train")) : TrainConfig{};
    cfg.surrogate = j.contains("surrogate") ? parse_surrogate(j.at("surrogate")) : SurrogateConfig{};
    cfg.stop_at_train_accuracy = j.value("stop_at_train_accuracy", 2.0);
    cfg.network = resolve_model(j.contains("model") ? j.at("model") : json::object(), cfg.dataset,
                                cfg.train.time_steps);
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open config");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(text);
}

}  // namespace mbsnn
