#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "mproj/io/framestack_io.hpp"
#include "mproj/phantom/field4d.hpp"
#include "mproj/util/errors.hpp"

namespace mproj::io {

/// Volume file: "MPVL" magic, u32 version, u32 dims (x, y, z), f64 voxel
/// pitch um, f64 frame period ns, f64 value scale, then dense little-endian
/// f32 voxels, x fastest. One file holds one time point of a cubic grid.
namespace detail {
inline void put_f64(std::string& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}
inline double get_f64(const std::string& buf, size_t& pos) {
    if (pos + 8 > buf.size())
        throw format_error("volume file truncated at byte offset " + std::to_string(pos));
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}
}  // namespace detail

inline void store_volume(const std::string& path, const phantom::GriddedField& grid, int t_index = 0,
                         double value_scale = 1.0) {
    if (t_index < 0 || t_index >= static_cast<int>(grid.times_ns.size()))
        throw usage_error("volume time index out of range");
    std::string out = "MPVL";
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<uint32_t>(grid.n));
    detail::put_u32(out, static_cast<uint32_t>(grid.n));
    detail::put_u32(out, static_cast<uint32_t>(grid.n));
    detail::put_f64(out, grid.voxel_pitch_um);
    detail::put_f64(out, grid.frame_period_ns);
    detail::put_f64(out, value_scale);
    detail::put_f64(out, grid.times_ns[t_index]);
    const size_t base = static_cast<size_t>(t_index) * grid.cube_size();
    for (size_t i = 0; i < grid.cube_size(); ++i) {
        uint32_t bits;
        float v = grid.values[base + i];
        std::memcpy(&bits, &v, 4);
        detail::put_u32(out, bits);
    }
    write_file_atomic(path, out);
}

inline phantom::GriddedField load_volume(const std::string& path) {
    const std::string buf = read_file(path);
    size_t pos = 0;
    if (buf.size() < 4 || buf.substr(0, 4) != "MPVL")
        throw format_error("volume magic mismatch at byte offset 0");
    pos = 4;
    const uint32_t version = detail::get_u32(buf, pos);
    if (version != 1) throw format_error("unsupported volume version " + std::to_string(version));
    const uint32_t nx = detail::get_u32(buf, pos);
    const uint32_t ny = detail::get_u32(buf, pos);
    const uint32_t nz = detail::get_u32(buf, pos);
    if (nx != ny || ny != nz) throw format_error("volume grid must be cubic");
    phantom::GriddedField grid;
    grid.n = static_cast<int>(nx);
    grid.voxel_pitch_um = detail::get_f64(buf, pos);
    grid.frame_period_ns = detail::get_f64(buf, pos);
    detail::get_f64(buf, pos);  // value scale (informational)
    grid.times_ns = {detail::get_f64(buf, pos)};
    const size_t need = pos + grid.cube_size() * 4;
    if (buf.size() < need)
        throw format_error("volume payload truncated: need " + std::to_string(need) +
                           " bytes, have " + std::to_string(buf.size()));
    grid.values.resize(grid.cube_size());
    for (auto& v : grid.values) {
        const uint32_t bits = detail::get_u32(buf, pos);
        std::memcpy(&v, &bits, 4);
    }
    return grid;
}

}  // namespace mproj::io
