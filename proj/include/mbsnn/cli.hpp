#pragma once

#include <cstdint>
#include <string>

namespace mbsnn::cli {

// Exit codes: 0 success, 2 usage error, 3 data/file error, 4 numeric failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

struct EntropyOptions {
    double v_th = 0.6;
    int int_bits = 1;
    int frac_bits = 0;
    double mean = 0.0;
    double stddev = 1.0;
    std::int64_t mc_samples = 0;
    std::uint64_t seed = 1;
    std::string out_path;  // empty: stdout
    bool table1 = false;
};

struct TrainOptions {
    std::string config_path;
    std::string data_images;  // optional IDX override for the config's dataset
    std::string data_labels;
    std::string out_model;
    std::string log_path;
};

struct ConvertOptions {
    std::string ann_model;
    int int_bits = 1;
    int frac_bits = 3;
    std::string calib = "percentile:99.9";  // or "max"
    std::string tsweep = "4,16,64,128";
    std::string out_path;
    std::string config_path;  // dataset for calibration and evaluation
};

struct SimulateOptions {
    std::string model;
    std::string input_images;  // IDX
    std::string heatmap_dir;
    std::string raster_path;
    std::string ops_path;
    int limit = 4;
    double e_ac = 0.9;
    double e_mac = 4.6;
};

int cmd_entropy(const EntropyOptions& opts);
int cmd_train(const TrainOptions& opts);
int cmd_convert(const ConvertOptions& opts);
int cmd_simulate(const SimulateOptions& opts);

// Locale-independent number rendering used by every CSV writer.
std::string format_number(double v, int precision = 6);

}  // namespace mbsnn::cli
