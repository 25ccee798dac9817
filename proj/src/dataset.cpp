#include "mbsnn/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mbsnn/errors.hpp"
#include "mbsnn/rng.hpp"

namespace mbsnn {

void Dataset::validate() const {
    check_shape(inputs.rank() >= 1, "dataset has no inputs");
    check_shape(static_cast<int>(labels.size()) == size(), "dataset label count mismatch");
    for (int y : labels)
        check_shape(y >= 0 && y < num_classes, "dataset label outside class range");
}

Dataset gen_synthetic_dataset(SyntheticKind kind, int n, int classes, std::uint64_t seed,
                              const SyntheticOptions& opts) {
    check_shape(n >= classes, "need at least one sample per class");
    check_shape(classes >= 2, "need at least two classes");
    Rng rng(seed);
    Dataset ds;
    ds.num_classes = classes;
    ds.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ds.labels[static_cast<std::size_t>(i)] = i % classes;

    if (kind == SyntheticKind::gaussian_blobs) {
        std::vector<int> sample_shape = opts.blob_shape;
        std::int64_t per_sample = shape_numel(sample_shape);
        std::vector<Tensor> prototypes;
        for (int c = 0; c < classes; ++c) {
            Tensor p(sample_shape);
            for (std::int64_t i = 0; i < per_sample; ++i)
                p[i] = rng.normal(0.0, opts.separation);
            prototypes.push_back(std::move(p));
        }
        std::vector<int> full_shape;
        full_shape.push_back(n);
        for (int d : sample_shape) full_shape.push_back(d);
        ds.inputs = Tensor(full_shape);
        for (int i = 0; i < n; ++i) {
            const Tensor& proto = prototypes[static_cast<std::size_t>(i % classes)];
            const std::int64_t base = static_cast<std::int64_t>(i) * per_sample;
            for (std::int64_t k = 0; k < per_sample; ++k)
                ds.inputs[base + k] = proto[k] + rng.normal(0.0, opts.noise);
        }
        return ds;
    }

    // two interleaved spirals in the plane
    check_shape(classes == 2, "two_spirals is a binary problem");
    ds.inputs = Tensor({n, 2});
    const double two_pi = 6.283185307179586476925286766559;
    for (int i = 0; i < n; ++i) {
        const int cls = i % 2;
        const int j = i / 2;
        const int per_class = (n + 1) / 2;
        const double t = per_class > 1 ? static_cast<double>(j) / (per_class - 1) : 0.0;
        const double r = 0.15 + 0.85 * t;
        const double a = opts.turns * two_pi * t + cls * 3.14159265358979323846;
        ds.inputs(i, 0) = r * std::cos(a) + rng.normal(0.0, opts.jitter);
        ds.inputs(i, 1) = r * std::sin(a) + rng.normal(0.0, opts.jitter);
    }
    return ds;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_fraction,
                                             std::uint64_t seed) {
    ds.validate();
    check_shape(test_fraction >= 0.0 && test_fraction < 1.0, "test fraction must be in [0,1)");
    const int n = ds.size();
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const int n_test = static_cast<int>(std::lround(test_fraction * n));
    const int n_train = n - n_test;

    const std::int64_t per_sample = ds.inputs.size() / n;
    auto take = [&](int from, int count) {
        Dataset out;
        out.num_classes = ds.num_classes;
        std::vector<int> shape = ds.inputs.shape();
        shape[0] = count;
        out.inputs = Tensor(shape);
        out.labels.resize(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) {
            const int src = order[static_cast<std::size_t>(from + i)];
            out.labels[static_cast<std::size_t>(i)] = ds.labels[static_cast<std::size_t>(src)];
            const std::int64_t sbase = static_cast<std::int64_t>(src) * per_sample;
            const std::int64_t dbase = static_cast<std::int64_t>(i) * per_sample;
            for (std::int64_t k = 0; k < per_sample; ++k)
                out.inputs[dbase + k] = ds.inputs[sbase + k];
        }
        return out;
    };
    return {take(0, n_train), take(n_train, n_test)};
}

// ---------------------------------------------------------------------------
// IDX files.
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;
constexpr std::int64_t kMaxElements = 1LL << 31;

std::uint32_t read_u32_be(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw DataError(path + ": truncated IDX header");
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_u32_be(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

std::vector<unsigned char> read_payload(std::ifstream& in, std::int64_t count,
                                        const std::string& path) {
    std::vector<unsigned char> bytes(static_cast<std::size_t>(count));
    if (!in.read(reinterpret_cast<char*>(bytes.data()), count))
        throw DataError(path + ": truncated IDX payload");
    in.peek();
    if (!in.eof()) throw DataError(path + ": trailing bytes after IDX payload");
    return bytes;
}

}  // namespace

Tensor load_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open");
    if (read_u32_be(in, path) != kImagesMagic) throw DataError(path + ": bad IDX image magic");
    const std::int64_t count = read_u32_be(in, path);
    const std::int64_t rows = read_u32_be(in, path);
    const std::int64_t cols = read_u32_be(in, path);
    if (count <= 0 || rows <= 0 || cols <= 0 || count * rows * cols > kMaxElements)
        throw DataError(path + ": IDX dimensions out of range");
    const std::vector<unsigned char> bytes = read_payload(in, count * rows * cols, path);
    Tensor images({static_cast<int>(count), 1, static_cast<int>(rows), static_cast<int>(cols)});
    for (std::int64_t i = 0; i < images.size(); ++i)
        images[i] = static_cast<double>(bytes[static_cast<std::size_t>(i)]) / 255.0;
    return images;
}

std::vector<int> load_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open");
    if (read_u32_be(in, path) != kLabelsMagic) throw DataError(path + ": bad IDX label magic");
    const std::int64_t count = read_u32_be(in, path);
    if (count <= 0 || count > kMaxElements) throw DataError(path + ": IDX dimensions out of range");
    const std::vector<unsigned char> bytes = read_payload(in, count, path);
    std::vector<int> labels(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = bytes[i];
    return labels;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    Dataset ds;
    ds.inputs = load_idx_images(images_path);
    const int n = ds.inputs.dim(0);
    if (labels_path.empty()) {
        ds.labels.assign(static_cast<std::size_t>(n), 0);
        ds.num_classes = 1;
        return ds;
    }
    ds.labels = load_idx_labels(labels_path);
    if (static_cast<int>(ds.labels.size()) != n)
        throw DataError(labels_path + ": label count does not match image count");
    int classes = 1;
    for (int y : ds.labels) classes = std::max(classes, y + 1);
    ds.num_classes = classes;
    return ds;
}

void write_idx_images(const std::string& path, const Tensor& images) {
    check_shape(images.rank() == 4 && images.dim(1) == 1,
                "IDX writer wants [N,1,rows,cols] images");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    write_u32_be(out, kImagesMagic);
    write_u32_be(out, static_cast<std::uint32_t>(images.dim(0)));
    write_u32_be(out, static_cast<std::uint32_t>(images.dim(2)));
    write_u32_be(out, static_cast<std::uint32_t>(images.dim(3)));
    std::vector<unsigned char> bytes(static_cast<std::size_t>(images.size()));
    for (std::int64_t i = 0; i < images.size(); ++i) {
        double v = images[i];
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        bytes[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(path + ": write failed");
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    write_u32_be(out, kLabelsMagic);
    write_u32_be(out, static_cast<std::uint32_t>(labels.size()));
    std::vector<unsigned char> bytes(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        check_shape(labels[i] >= 0 && labels[i] <= 255, "IDX labels must fit in a byte");
        bytes[i] = static_cast<unsigned char>(labels[i]);
    }
    out.write(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(path + ": write failed");
}

}  // namespace mbsnn
