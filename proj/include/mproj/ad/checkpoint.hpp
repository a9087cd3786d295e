#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mproj/ad/tensor.hpp"
#include "mproj/util/errors.hpp"

namespace mproj::ad {

/// Weight container: "MPCK" magic, u32 version, arch-spec string, then named
/// tensors as (name, dims, 64-bit little-endian values).
struct Checkpoint {
    std::string arch_spec;  // free-form description, typically JSON
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    static constexpr uint32_t version = 1;

    const Tensor& find(const std::string& name) const {
        for (size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return tensors[i];
        throw usage_error("checkpoint has no tensor named '" + name + "'");
    }
};

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size())
            throw format_error("checkpoint truncated at byte offset " + std::to_string(pos));
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() {
        const uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    std::string str(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.names.size() != ckpt.tensors.size())
        throw usage_error("checkpoint name/tensor count mismatch");
    std::string out = "MPCK";
    detail::put_u32(out, Checkpoint::version);
    detail::put_u64(out, ckpt.arch_spec.size());
    out += ckpt.arch_spec;
    detail::put_u64(out, ckpt.tensors.size());
    for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
        detail::put_u32(out, static_cast<uint32_t>(ckpt.names[i].size()));
        out += ckpt.names[i];
        detail::put_u32(out, static_cast<uint32_t>(ckpt.tensors[i].shape.size()));
        for (int64_t d : ckpt.tensors[i].shape) detail::put_u64(out, static_cast<uint64_t>(d));
        for (double v : ckpt.tensors[i].v) detail::put_f64(out, v);
    }
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& buf) {
    detail::Reader r{buf};
    if (r.str(std::min<size_t>(4, buf.size())) != "MPCK")
        throw format_error("checkpoint magic mismatch at byte offset 0");
    const uint32_t ver = r.u32();
    if (ver != Checkpoint::version)
        throw format_error("unsupported checkpoint version " + std::to_string(ver));
    Checkpoint ckpt;
    ckpt.arch_spec = r.str(r.u64());
    const uint64_t count = r.u64();
    for (uint64_t i = 0; i < count; ++i) {
        ckpt.names.push_back(r.str(r.u32()));
        const uint32_t ndim = r.u32();
        std::vector<int64_t> shape(ndim);
        for (auto& d : shape) d = static_cast<int64_t>(r.u64());
        Tensor t(shape);
        for (auto& v : t.v) v = r.f64();
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open '" + path + "' for writing");
    const std::string data = serialize_checkpoint(ckpt);
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!f) throw io_error("failed writing checkpoint to '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open checkpoint '" + path + "'");
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(data);
}

}  // namespace mproj::ad
