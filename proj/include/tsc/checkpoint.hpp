#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "tsc/tensor.hpp"

// Flat binary checkpoint: "TSC1" magic, u32 version, u64 parameter count,
// then per parameter u32 name length, name bytes, u32 rank, u64 dims and the
// values as little-endian float32 regardless of the in-memory scalar type.

namespace tsc {

template <typename S>
struct NamedParam {
    std::string name;
    Tensor<S> tensor;
};

namespace detail {

inline void write_bytes(std::ofstream& f, const void* p, size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ofstream& f, T v) {
    unsigned char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff);
    write_bytes(f, buf, sizeof(T));
}

inline void write_f32_le(std::ofstream& f, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_le<uint32_t>(f, bits);
}

template <typename T>
T read_le(std::ifstream& f, const std::string& path) {
    unsigned char buf[sizeof(T)];
    if (!f.read(reinterpret_cast<char*>(buf), sizeof(T)))
        throw IoError("checkpoint " + path + ": truncated file");
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

inline float read_f32_le(std::ifstream& f, const std::string& path) {
    const uint32_t bits = read_le<uint32_t>(f, path);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

constexpr uint32_t kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(const std::string& path, const std::vector<NamedParam<S>>& params) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint " + path + ": cannot open for writing");
    f.write("TSC1", 4);
    detail::write_le<uint32_t>(f, kCheckpointVersion);
    detail::write_le<uint64_t>(f, static_cast<uint64_t>(params.size()));
    for (const auto& p : params) {
        detail::write_le<uint32_t>(f, static_cast<uint32_t>(p.name.size()));
        detail::write_bytes(f, p.name.data(), p.name.size());
        detail::write_le<uint32_t>(f, static_cast<uint32_t>(p.tensor.rank()));
        for (size_t i = 0; i < p.tensor.rank(); ++i)
            detail::write_le<uint64_t>(f, static_cast<uint64_t>(p.tensor.dim(i)));
        for (S v : p.tensor.data()) detail::write_f32_le(f, static_cast<float>(v));
    }
    if (!f) throw IoError("checkpoint " + path + ": write failed");
}

template <typename S>
std::vector<NamedParam<S>> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint " + path + ": cannot open");
    char magic[4];
    if (!f.read(magic, 4) || std::string(magic, 4) != "TSC1")
        throw IoError("checkpoint " + path + ": bad magic");
    const uint32_t version = detail::read_le<uint32_t>(f, path);
    if (version != kCheckpointVersion)
        throw IoError("checkpoint " + path + ": unsupported version " + std::to_string(version));
    const uint64_t count = detail::read_le<uint64_t>(f, path);
    std::vector<NamedParam<S>> out;
    out.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t name_len = detail::read_le<uint32_t>(f, path);
        std::string name(name_len, '\0');
        if (!f.read(name.data(), name_len))
            throw IoError("checkpoint " + path + ": truncated name record");
        const uint32_t rank = detail::read_le<uint32_t>(f, path);
        std::vector<int64_t> shape(rank);
        int64_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<int64_t>(detail::read_le<uint64_t>(f, path));
            numel *= shape[d];
        }
        std::vector<S> data(static_cast<size_t>(numel));
        for (auto& v : data) v = static_cast<S>(detail::read_f32_le(f, path));
        out.push_back({std::move(name), Tensor<S>(std::move(shape), std::move(data))});
    }
    return out;
}

// Copies loaded values into existing parameters, matched by name.
template <typename S>
void restore_params(std::vector<NamedParam<S>>& params,
                    const std::vector<NamedParam<S>>& loaded) {
    for (auto& p : params) {
        const NamedParam<S>* found = nullptr;
        for (const auto& l : loaded)
            if (l.name == p.name) {
                found = &l;
                break;
            }
        if (!found) throw IoError("checkpoint restore: missing parameter " + p.name);
        if (found->tensor.shape() != p.tensor.shape())
            throw IoError("checkpoint restore: shape mismatch for " + p.name + ", expected " +
                          shape_str(p.tensor.shape()) + " got " +
                          shape_str(found->tensor.shape()));
        p.tensor.data() = found->tensor.data();
    }
}

}  // namespace tsc
