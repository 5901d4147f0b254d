#include "vicnet/nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace vicnet::nn {

namespace {

constexpr char kMagic[8] = {'V', 'I', 'C', 'N', 'C', 'K', 'P', 'T'};
constexpr int kFormatVersion = 1;

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json header;
    header["format_version"] = kFormatVersion;
    header["graph"] = graph_to_json(ckpt.graph);
    header["seed"] = ckpt.seed;
    header["meta"] = ckpt.meta;

    nlohmann::json norm = nlohmann::json::object();
    for (const auto& [k, v] : ckpt.norm) norm[k] = {{"mean", v.mean}, {"std", v.stddev}};
    header["norm"] = std::move(norm);

    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t payload_count = 0;
    for (const ParamTensor& t : ckpt.params.tensors) {
        tensors.push_back({{"name", t.name},
                           {"shape", t.shape},
                           {"count", t.size()},
                           {"trainable", t.trainable},
                           {"statistic", t.statistic}});
        payload_count += t.size();
    }
    header["tensors"] = std::move(tensors);
    header["payload_floats"] = payload_count;

    std::string hs = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint '" + path + "'");
    os.write(kMagic, 8);
    write_u64(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));

    // raw little-endian float32 payload in tensor order
    std::vector<float> buf;
    buf.reserve(payload_count);
    for (const ParamTensor& t : ckpt.params.tensors)
        for (double v : t.value) buf.push_back(static_cast<float>(v));
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!os) throw DataError("short write on checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw DataError("'" + path + "' is not a vicnet checkpoint");
    std::uint64_t hlen = read_u64(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw DataError("truncated checkpoint header in '" + path + "'");

    nlohmann::json header = nlohmann::json::parse(hs);
    int version = header.at("format_version").get<int>();
    if (version != kFormatVersion)
        throw DataError("unsupported checkpoint format version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.graph = graph_from_json(header.at("graph"));
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.meta = header.value("meta", nlohmann::json::object());
    for (auto it = header.at("norm").begin(); it != header.at("norm").end(); ++it)
        ckpt.norm[it.key()] = {it.value().at("mean").get<double>(), it.value().at("std").get<double>()};

    // rebuild tensor structure from the header, then fill from the payload
    for (const auto& tj : header.at("tensors")) {
        ParamTensor t;
        t.name = tj.at("name").get<std::string>();
        t.shape = tj.at("shape").get<std::vector<std::size_t>>();
        t.trainable = tj.at("trainable").get<bool>();
        t.statistic = tj.at("statistic").get<bool>();
        t.value.resize(tj.at("count").get<std::size_t>());
        ckpt.params.tensors.push_back(std::move(t));
    }
    std::uint64_t payload_count = header.at("payload_floats").get<std::uint64_t>();
    std::vector<float> buf(payload_count);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(payload_count * 4));
    if (!is) throw DataError("truncated checkpoint payload in '" + path + "'");
    std::size_t off = 0;
    for (ParamTensor& t : ckpt.params.tensors)
        for (double& v : t.value) v = static_cast<double>(buf[off++]);

    // regroup tensors per node so forward() can index them
    std::size_t cursor = 0;
    for (const LayerSpec& s : ckpt.graph.layers) {
        int begin = static_cast<int>(cursor);
        int expect = 0;
        switch (s.kind) {
        case LayerKind::Conv1d:
        case LayerKind::TransposedConv1d: expect = s.bias ? 2 : 1; break;
        case LayerKind::DepthwiseSeparableConv1d: expect = s.bias ? 4 : 2; break;
        case LayerKind::BatchNorm1d: expect = 4; break;
        case LayerKind::PReLU: expect = 1; break;
        default: expect = 0; break;
        }
        cursor += static_cast<std::size_t>(expect);
        if (cursor > ckpt.params.tensors.size()) throw DataError("checkpoint tensor table shorter than graph");
        ckpt.params.node_range.emplace_back(begin, static_cast<int>(cursor));
    }
    if (cursor != ckpt.params.tensors.size()) throw DataError("checkpoint tensor table longer than graph");
    return ckpt;
}

} // namespace vicnet::nn
