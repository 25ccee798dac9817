#include "mbsnn/cli.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mbsnn/convert.hpp"
#include "mbsnn/entropy.hpp"
#include "mbsnn/errors.hpp"
#include "mbsnn/model_io.hpp"
#include "mbsnn/run_config.hpp"

namespace mbsnn::cli {

std::string format_number(double v, int precision) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
    return std::string(buf, res.ptr);
}

namespace {

void write_text(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << text;
    if (!out) throw DataError(path + ": write failed");
}

std::string format_bits(BitFormat fmt) {
    return std::to_string(fmt.int_bits) + "+" + std::to_string(fmt.frac_bits);
}

}  // namespace

int cmd_entropy(const EntropyOptions& opts) {
    const MembraneDist dist{opts.mean, opts.stddev};
    std::vector<BitFormat> formats;
    if (opts.table1) {
        formats = {{1, 0}, {2, 0}, {1, 1}, {2, 1}};
    } else {
        formats = {{opts.int_bits, opts.frac_bits}};
    }
    std::ostringstream csv;
    csv << "format,H_analytic,H_mc,loss\n";
    for (BitFormat fmt : formats) {
        fmt.validate();
        const double h = entropy_of_pmf(spike_pmf_analytic(dist, opts.v_th, fmt));
        const double loss = forward_loss(dist, opts.v_th, fmt);
        csv << format_bits(fmt) << "," << format_number(h);
        if (opts.mc_samples > 0) {
            const double h_mc = entropy_of_pmf(
                spike_pmf_mc(dist, opts.v_th, fmt, opts.mc_samples, opts.seed));
            csv << "," << format_number(h_mc);
        } else {
            csv << ",";
        }
        csv << "," << format_number(loss) << "\n";
    }
    write_text(opts.out_path, csv.str());
    return kExitOk;
}

int cmd_train(const TrainOptions& opts) {
    RunConfig cfg = RunConfig::load(opts.config_path);
    if (!opts.data_images.empty()) {
        cfg.dataset.kind = "idx";
        cfg.dataset.images_path = opts.data_images;
        cfg.dataset.labels_path = opts.data_labels;
    }
    auto [train_set, test_set] = cfg.dataset.make();

    TrainableNetwork net = TrainableNetwork::build(cfg.network, cfg.train.seed);
    std::vector<EpochStats> history = train_network(net, train_set, test_set, cfg.train,
                                                    cfg.surrogate, cfg.stop_at_train_accuracy);

    std::ostringstream log;
    log << "epoch,loss,train_acc,test_acc\n";
    for (const EpochStats& e : history)
        log << e.epoch << "," << format_number(e.loss) << "," << format_number(e.train_accuracy)
            << "," << format_number(e.test_accuracy) << "\n";
    if (!opts.log_path.empty()) write_text(opts.log_path, log.str());

    Network final_net = net.to_network();
    if (!opts.out_model.empty()) {
        save_model(opts.out_model, final_net);
        // the file stores float32 weights; report accuracy of what was saved
        final_net = load_model(opts.out_model);
    }
    const double final_acc =
        test_set.size() > 0 ? evaluate(final_net, test_set) : evaluate(final_net, train_set);
    std::cout << "epochs_run=" << history.size() << "\n";
    if (!history.empty())
        std::cout << "last_train_acc=" << format_number(history.back().train_accuracy) << "\n";
    std::cout << "final_test_acc=" << format_number(final_acc) << "\n";
    return kExitOk;
}

namespace {

CalibrationPolicy parse_calibration(const std::string& text) {
    CalibrationPolicy policy;
    if (text == "max") {
        policy.method = CalibrationPolicy::Method::max;
        return policy;
    }
    if (text == "percentile") return policy;
    const std::string prefix = "percentile:";
    if (text.rfind(prefix, 0) == 0) {
        policy.method = CalibrationPolicy::Method::percentile;
        const std::string num = text.substr(prefix.size());
        double p = 0.0;
        auto res = std::from_chars(num.data(), num.data() + num.size(), p);
        if (res.ec != std::errc() || res.ptr != num.data() + num.size())
            throw std::invalid_argument("bad percentile in --calib: " + text);
        policy.percentile = p;
        policy.validate();
        return policy;
    }
    throw std::invalid_argument("unknown --calib value: " + text);
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        int v = 0;
        auto res = std::from_chars(item.data(), item.data() + item.size(), v);
        if (res.ec != std::errc() || res.ptr != item.data() + item.size() || v < 1)
            throw std::invalid_argument("bad time step list: " + text);
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("empty time step list");
    return out;
}

}  // namespace

int cmd_convert(const ConvertOptions& opts) {
    const CalibrationPolicy policy = parse_calibration(opts.calib);
    const BitFormat fmt{opts.int_bits, opts.frac_bits};
    fmt.validate();
    const std::vector<int> ts = parse_int_list(opts.tsweep);

    Network ann = load_model(opts.ann_model);
    if (ann.is_spiking())
        throw std::invalid_argument(opts.ann_model + " is already a spiking model");

    RunConfig cfg = RunConfig::load(opts.config_path);
    auto [train_set, test_set] = cfg.dataset.make();
    const Dataset& eval_set = test_set.size() > 0 ? test_set : train_set;

    const std::vector<double> thresholds = calibrate_thresholds(ann, policy, train_set);
    const Network snn = convert_ann_to_snn(ann, thresholds, fmt);
    const double ann_acc = evaluate(ann, eval_set);
    const auto rows = evaluate_tsweep(snn, eval_set, ts);

    std::ostringstream csv;
    csv << "# mbsnn convert int_bits=" << opts.int_bits << " frac_bits=" << opts.frac_bits
        << " calib=" << opts.calib << "\n";
    csv << "# ann_accuracy=" << format_number(ann_acc) << "\n";
    csv << "T,accuracy\n";
    for (const auto& [t, acc] : rows) csv << t << "," << format_number(acc) << "\n";
    write_text(opts.out_path, csv.str());
    return kExitOk;
}

namespace {

// Channels tiled into a near-square grid, min-max normalized over the layer;
// the scale goes to a sidecar text file so the bytes stay interpretable.
void write_heatmap_pgm(const std::string& dir, const std::string& site, int t,
                       const Tensor& membrane) {
    int channels = 1, height = 1, width = 1;
    if (membrane.rank() == 4) {
        channels = membrane.dim(1);
        height = membrane.dim(2);
        width = membrane.dim(3);
    } else {
        width = static_cast<int>(membrane.size() / membrane.dim(0));
    }
    const int grid_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(channels))));
    const int grid_rows = (channels + grid_cols - 1) / grid_cols;
    const int img_w = grid_cols * width, img_h = grid_rows * height;

    // sample 0 only
    double lo = membrane[0], hi = membrane[0];
    const std::int64_t per_sample = channels * static_cast<std::int64_t>(height) * width;
    for (std::int64_t i = 0; i < per_sample; ++i) {
        lo = std::min(lo, membrane[i]);
        hi = std::max(hi, membrane[i]);
    }
    const double span = hi - lo;

    std::vector<unsigned char> pixels(static_cast<std::size_t>(img_w) * img_h, 0);
    for (int c = 0; c < channels; ++c) {
        const int gx = (c % grid_cols) * width, gy = (c / grid_cols) * height;
        for (int h = 0; h < height; ++h)
            for (int w = 0; w < width; ++w) {
                const double v = membrane[(static_cast<std::int64_t>(c) * height + h) * width + w];
                const double norm = span > 0.0 ? (v - lo) / span : 0.0;
                pixels[static_cast<std::size_t>(gy + h) * img_w + gx + w] =
                    static_cast<unsigned char>(std::lround(norm * 255.0));
            }
    }

    const std::string stem = dir + "/" + site + "_t" + std::to_string(t);
    std::ofstream pgm(stem + ".pgm", std::ios::binary);
    if (!pgm) throw DataError(stem + ".pgm: cannot open for writing");
    pgm << "P5\n" << img_w << " " << img_h << "\n255\n";
    pgm.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));

    std::ofstream sidecar(stem + ".txt");
    if (!sidecar) throw DataError(stem + ".txt: cannot open for writing");
    sidecar << "site=" << site << "\nt=" << t << "\nmin=" << format_number(lo, 9)
            << "\nmax=" << format_number(hi, 9) << "\n";
}

}  // namespace

int cmd_simulate(const SimulateOptions& opts) {
    Network net = load_model(opts.model);
    if (!net.is_spiking())
        throw std::invalid_argument(opts.model + " is not a spiking model; nothing to simulate");

    Tensor images = load_idx_images(opts.input_images);
    int count = images.dim(0);
    if (opts.limit > 0 && opts.limit < count) count = opts.limit;
    {
        std::vector<int> shape = images.shape();
        shape[0] = count;
        Tensor trimmed(shape);
        for (std::int64_t i = 0; i < trimmed.size(); ++i) trimmed[i] = images[i];
        images = std::move(trimmed);
    }

    const std::vector<int>& want = net.spec().input_shape;
    if (want.size() == 1) {
        check_shape(static_cast<std::int64_t>(want[0]) ==
                        images.size() / count,
                    "input image size does not match the model's flat input");
        images = images.reshaped({count, want[0]});
    } else {
        check_shape(want[0] == images.dim(1) && want[1] == images.dim(2) &&
                        want[2] == images.dim(3),
                    "input image geometry does not match the model");
    }

    TraceOptions trace_opts;
    trace_opts.record_spikes = true;
    trace_opts.record_membrane = !opts.heatmap_dir.empty();
    const ForwardResult result = net.forward_timesteps(images, trace_opts);

    std::cout << "simulated " << count << " inputs over " << net.spec().time_steps
              << " time steps\n";
    for (int n = 0; n < count; ++n) {
        int best = 0;
        for (int c = 1; c < result.logits.dim(1); ++c)
            if (result.logits(n, c) > result.logits(n, best)) best = c;
        std::cout << "input " << n << " prediction " << best << "\n";
    }

    if (!opts.heatmap_dir.empty()) {
        std::filesystem::create_directories(opts.heatmap_dir);
        for (const auto& site : result.trace.neuron_sites)
            for (int t = 0; t < result.trace.time_steps; ++t)
                write_heatmap_pgm(opts.heatmap_dir, site.name, t,
                                  site.membrane[static_cast<std::size_t>(t)]);
    }

    if (!opts.raster_path.empty()) {
        std::ostringstream csv;
        csv << "t,layer,neuron_index,spike_value\n";
        for (const auto& site : result.trace.neuron_sites) {
            for (int t = 0; t < result.trace.time_steps; ++t) {
                const SpikeTensor& s = site.spikes[static_cast<std::size_t>(t)];
                const std::int64_t per_sample = s.size() / s.shape[0];
                for (std::int64_t i = 0; i < per_sample; ++i) {  // sample 0
                    const std::int32_t code = s.codes[static_cast<std::size_t>(i)];
                    if (code == 0) continue;
                    csv << t << "," << site.name << "," << i << ","
                        << format_number(s.format.value_of(code), 4) << "\n";
                }
            }
        }
        write_text(opts.raster_path, csv.str());
    }

    if (!opts.ops_path.empty()) {
        EnergyConstants energy{opts.e_ac, opts.e_mac};
        const OpReport report = count_ops(result.trace, energy);
        std::ostringstream csv;
        csv << "# e_ac_pj=" << format_number(energy.e_ac, 3)
            << " e_mac_pj=" << format_number(energy.e_mac, 3)
            << " (assumed 45nm-class constants)\n";
        csv << "layer,t,ac_ops,mac_ops,energy_pj\n";
        for (const auto& row : report.rows) {
            const double pj = static_cast<double>(row.ac_ops) * energy.e_ac +
                              static_cast<double>(row.mac_ops) * energy.e_mac;
            csv << row.layer << "," << row.t << "," << row.ac_ops << "," << row.mac_ops << ","
                << format_number(pj, 3) << "\n";
        }
        csv << "TOTAL,," << report.total_ac() << "," << report.total_mac() << ","
            << format_number(report.total_energy_pj(), 3) << "\n";
        write_text(opts.ops_path, csv.str());
    }
    return kExitOk;
}

}  // namespace mbsnn::cli
