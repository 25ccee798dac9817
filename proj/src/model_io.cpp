#include "mbsnn/model_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "mbsnn/errors.hpp"

namespace mbsnn {

std::uint32_t crc32_ieee(const void* data, std::size_t length, std::uint32_t seed) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = seed ^ 0xFFFFFFFFu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < length; ++i)
        crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

namespace {

enum class RecordTag : std::uint32_t {
    weights = 1,
    bias = 2,
    bn_gamma = 3,
    bn_beta = 4,
    bn_mean = 5,
    bn_var = 6,
    eca_kernel = 7,
};

struct Record {
    RecordTag tag;
    const Tensor* tensor;
};

void collect_bn(const BatchNormParams& bn, std::vector<Record>& out) {
    out.push_back({RecordTag::bn_gamma, &bn.gamma});
    out.push_back({RecordTag::bn_beta, &bn.beta});
    out.push_back({RecordTag::bn_mean, &bn.running_mean});
    out.push_back({RecordTag::bn_var, &bn.running_var});
}

// Canonical parameter order: layer by layer, blocks walk their pieces in
// forward order. Save and load both use this.
std::vector<Record> collect_records(const Network& net) {
    std::vector<Record> records;
    for (const RuntimeLayer& rl : net.layers()) {
        if (const auto* cl = std::get_if<ConvLayer>(&rl)) {
            records.push_back({RecordTag::weights, &cl->p.weights});
            records.push_back({RecordTag::bias, &cl->p.bias});
        } else if (const auto* bl = std::get_if<BatchNormLayer>(&rl)) {
            collect_bn(bl->p, records);
        } else if (const auto* bll = std::get_if<BlockLayer>(&rl)) {
            const InterlaminarBlock& b = bll->block;
            records.push_back({RecordTag::weights, &b.conv1.weights});
            records.push_back({RecordTag::bias, &b.conv1.bias});
            collect_bn(b.bn1, records);
            records.push_back({RecordTag::weights, &b.conv2.weights});
            records.push_back({RecordTag::bias, &b.conv2.bias});
            collect_bn(b.bn2, records);
            records.push_back({RecordTag::weights, &b.fuse_conv.weights});
            records.push_back({RecordTag::bias, &b.fuse_conv.bias});
            collect_bn(b.fuse_bn, records);
            records.push_back({RecordTag::eca_kernel, &b.eca_kernel});
            if (b.shortcut_conv) {
                records.push_back({RecordTag::weights, &b.shortcut_conv->weights});
                records.push_back({RecordTag::bias, &b.shortcut_conv->bias});
                collect_bn(*b.shortcut_bn, records);
            }
        } else if (const auto* ll = std::get_if<LinearLayer>(&rl)) {
            records.push_back({RecordTag::weights, &ll->weights});
            records.push_back({RecordTag::bias, &ll->bias});
        } else if (const auto* ro = std::get_if<ReadoutLayer>(&rl)) {
            records.push_back({RecordTag::weights, &ro->weights});
            records.push_back({RecordTag::bias, &ro->bias});
        }
    }
    return records;
}

std::vector<Tensor*> collect_slots(Network& net) {
    std::vector<Tensor*> slots;
    for (const Record& r : collect_records(net)) slots.push_back(const_cast<Tensor*>(r.tensor));
    return slots;
}

void append_u32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xFF));
    buf.push_back(static_cast<char>((v >> 8) & 0xFF));
    buf.push_back(static_cast<char>((v >> 16) & 0xFF));
    buf.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void append_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    append_u32(buf, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string& path;

    std::uint32_t u32() {
        if (pos + 4 > buf.size()) throw DataError(path + ": truncated model file");
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 4;
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(std::size_t n) {
        if (pos + n > buf.size()) throw DataError(path + ": truncated model file");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_model(const std::string& path, const Network& net) {
    std::string buf;
    buf.append("MBSN");
    append_u32(buf, kModelFormatVersion);
    const std::string spec_json = net.spec().to_json();
    append_u32(buf, static_cast<std::uint32_t>(spec_json.size()));
    buf.append(spec_json);

    const std::vector<Record> records = collect_records(net);
    append_u32(buf, static_cast<std::uint32_t>(records.size()));
    for (const Record& r : records) {
        append_u32(buf, static_cast<std::uint32_t>(r.tag));
        const Tensor& t = *r.tensor;
        append_u32(buf, static_cast<std::uint32_t>(t.rank()));
        for (int d = 0; d < t.rank(); ++d) append_u32(buf, static_cast<std::uint32_t>(t.dim(d)));
        for (std::int64_t i = 0; i < t.size(); ++i) append_f32(buf, static_cast<float>(t[i]));
    }
    append_u32(buf, crc32_ieee(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError(path + ": write failed");
}

Network load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 12) throw DataError(path + ": not a model file");

    const std::uint32_t stored_crc = crc32_ieee(buf.data(), buf.size() - 4);
    Reader tail{buf, buf.size() - 4, path};
    if (tail.u32() != stored_crc) throw DataError(path + ": model CRC mismatch");

    Reader r{buf, 0, path};
    if (r.bytes(4) != "MBSN") throw DataError(path + ": bad model magic");
    const std::uint32_t version = r.u32();
    if (version != kModelFormatVersion)
        throw DataError(path + ": unsupported model format version " + std::to_string(version));
    const std::uint32_t spec_len = r.u32();
    NetworkSpec spec;
    try {
        spec = NetworkSpec::from_json(r.bytes(spec_len));
    } catch (const std::exception& e) {
        throw DataError(path + ": bad embedded network spec: " + e.what());
    }

    Network net = Network::build(spec, 0);
    std::vector<Tensor*> slots = collect_slots(net);
    const std::uint32_t count = r.u32();
    if (count != slots.size())
        throw DataError(path + ": record count does not match the network spec");
    const std::vector<Record> expected = collect_records(net);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const std::uint32_t tag = r.u32();
        if (tag != static_cast<std::uint32_t>(expected[i].tag))
            throw DataError(path + ": unexpected record tag");
        const std::uint32_t ndims = r.u32();
        Tensor& slot = *slots[i];
        if (static_cast<int>(ndims) != slot.rank())
            throw DataError(path + ": record rank mismatch");
        std::int64_t numel = 1;
        for (std::uint32_t d = 0; d < ndims; ++d) {
            const std::uint32_t extent = r.u32();
            if (static_cast<int>(extent) != slot.dim(static_cast<int>(d)))
                throw DataError(path + ": record shape mismatch");
            numel *= extent;
        }
        for (std::int64_t k = 0; k < numel; ++k) slot[k] = static_cast<double>(r.f32());
    }
    if (r.pos != buf.size() - 4) throw DataError(path + ": trailing bytes in model file");
    return net;
}

}  // namespace mbsnn
