#include <exception>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mbsnn/cli.hpp"
#include "mbsnn/errors.hpp"

using namespace mbsnn;

int main(int argc, char** argv) {
    CLI::App app{"mbsnn: multi-bit spiking neural network engine"};
    app.require_subcommand(1);

    cli::EntropyOptions entropy_opts;
    CLI::App* entropy = app.add_subcommand("entropy", "spike entropy and forward-process loss");
    entropy->add_option("--vth", entropy_opts.v_th, "firing threshold");
    entropy->add_option("--int-bits", entropy_opts.int_bits, "integer bits m");
    entropy->add_option("--frac-bits", entropy_opts.frac_bits, "fractional bits n");
    entropy->add_option("--mean", entropy_opts.mean, "membrane mean");
    entropy->add_option("--std", entropy_opts.stddev, "membrane standard deviation");
    entropy->add_option("--mc-samples", entropy_opts.mc_samples,
                        "Monte-Carlo sample count (0: analytic only)");
    entropy->add_option("--seed", entropy_opts.seed, "Monte-Carlo seed");
    entropy->add_option("--out", entropy_opts.out_path, "output CSV path (default stdout)");
    entropy->add_flag("--table1", entropy_opts.table1,
                      "emit all four formats (1+0, 2+0, 1+1, 2+1)");

    cli::TrainOptions train_opts;
    CLI::App* train = app.add_subcommand("train", "direct surrogate-gradient training");
    train->add_option("--config", train_opts.config_path, "JSON run configuration")->required();
    train->add_option("--data", train_opts.data_images, "IDX images file (overrides config)");
    train->add_option("--labels", train_opts.data_labels, "IDX labels file");
    train->add_option("--out-model", train_opts.out_model, "model output path");
    train->add_option("--log", train_opts.log_path, "CSV training log path");

    cli::ConvertOptions convert_opts;
    CLI::App* convert = app.add_subcommand("convert", "ANN to SNN conversion with a T sweep");
    convert->add_option("--ann-model", convert_opts.ann_model, "trained ANN model file")
        ->required();
    convert->add_option("--config", convert_opts.config_path,
                        "JSON run configuration (dataset section)")
        ->required();
    convert->add_option("--int-bits", convert_opts.int_bits, "integer bits m");
    convert->add_option("--frac-bits", convert_opts.frac_bits, "fractional bits n");
    convert->add_option("--calib", convert_opts.calib, "max or percentile:<p>");
    convert->add_option("--tsweep", convert_opts.tsweep, "comma-separated time steps");
    convert->add_option("--out", convert_opts.out_path, "output CSV path (default stdout)");

    cli::SimulateOptions sim_opts;
    CLI::App* simulate = app.add_subcommand("simulate", "forward trace with exports");
    simulate->add_option("--model", sim_opts.model, "spiking model file")->required();
    simulate->add_option("--input", sim_opts.input_images, "IDX images file")->required();
    simulate->add_option("--export-heatmap", sim_opts.heatmap_dir,
                         "directory for membrane heatmap PGMs");
    simulate->add_option("--export-raster", sim_opts.raster_path, "spike raster CSV path");
    simulate->add_option("--count-ops", sim_opts.ops_path, "operation-count CSV path");
    simulate->add_option("--limit", sim_opts.limit, "max inputs to simulate");
    simulate->add_option("--e-ac", sim_opts.e_ac, "energy per accumulate (pJ)");
    simulate->add_option("--e-mac", sim_opts.e_mac, "energy per multiply-accumulate (pJ)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return cli::kExitUsage;
    }

    try {
        if (*entropy) return cli::cmd_entropy(entropy_opts);
        if (*train) return cli::cmd_train(train_opts);
        if (*convert) return cli::cmd_convert(convert_opts);
        if (*simulate) return cli::cmd_simulate(sim_opts);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return cli::kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return cli::kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return cli::kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kExitData;
    }
    return cli::kExitUsage;
}
