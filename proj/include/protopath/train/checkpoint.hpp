#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "protopath/core/error.hpp"
#include "protopath/train/harness.hpp"

namespace protopath::train {

// Layout: magic (8 bytes) | u32 version | u64 header length | header JSON |
// u64 parameter count | per parameter: u32 name length, name, u32 rank,
// u64 dims[rank], f64 values. Integers and doubles are little-endian.
inline constexpr char kCheckpointMagic[8] = {'P', 'P', 'A', 'T', 'H', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace detail {

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& data) : data_(data) {}
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw InputError("checkpoint is truncated");
    }
    const std::string& data_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
    nlohmann::ordered_json h;
    h["config"] = config_json(ck.config);
    h["input_dim"] = ck.input_dim;
    h["num_genes"] = ck.num_genes;
    h["num_pathways"] = ck.num_pathways;
    h["fold"] = ck.fold;
    h["best_val_cindex"] = ck.best_val_cindex;
    h["best_epoch"] = ck.best_epoch;
    h["bin_edges"] = ck.bin_edges;
    h["rng_state"] = ck.rng_state;
    const std::string header = h.dump();

    std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put(out, kCheckpointVersion);
    detail::put(out, std::uint64_t(header.size()));
    out += header;
    detail::put(out, std::uint64_t(ck.names.size()));
    for (std::size_t i = 0; i < ck.names.size(); ++i) {
        detail::put(out, std::uint32_t(ck.names[i].size()));
        out += ck.names[i];
        const auto& v = ck.values[i];
        detail::put(out, std::uint32_t(v.rank()));
        for (std::size_t d : v.shape()) detail::put(out, std::uint64_t(d));
        for (double x : v.values()) detail::put(out, x);
    }
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& data) {
    detail::Reader r(data);
    if (r.bytes(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic))
        throw InputError("not a checkpoint file (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw InputError("unsupported checkpoint version " + std::to_string(version));
    const auto header = nlohmann::ordered_json::parse(r.bytes(r.get<std::uint64_t>()));
    Checkpoint ck;
    ck.config = config_from_json(header.at("config"));
    ck.input_dim = header.at("input_dim").get<std::size_t>();
    ck.num_genes = header.at("num_genes").get<std::size_t>();
    ck.num_pathways = header.at("num_pathways").get<std::size_t>();
    ck.fold = header.at("fold").get<int>();
    ck.best_val_cindex = header.at("best_val_cindex").get<double>();
    ck.best_epoch = header.at("best_epoch").get<std::size_t>();
    ck.bin_edges = header.at("bin_edges").get<std::vector<double>>();
    ck.rng_state = header.at("rng_state").get<std::string>();
    const auto count = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        ck.names.push_back(r.bytes(r.get<std::uint32_t>()));
        const auto rank = r.get<std::uint32_t>();
        ad::Shape shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(std::size_t(r.get<std::uint64_t>()));
        NdArray v(shape);
        for (double& x : v.data()) x = r.get<double>();
        ck.values.push_back(std::move(v));
    }
    if (!r.done()) throw InputError("checkpoint has trailing bytes");
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write checkpoint " + path);
    const std::string bytes = serialize_checkpoint(ck);
    f.write(bytes.data(), std::streamsize(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open checkpoint " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return deserialize_checkpoint(ss.str());
}

} // namespace protopath::train
