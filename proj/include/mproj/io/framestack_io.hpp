#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include "mproj/forward/detector.hpp"
#include "mproj/util/errors.hpp"

namespace mproj::io {

/// Atomic file write: write to <path>.tmp then rename.
inline void write_file_atomic(const std::string& path, const std::string& data) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw io_error("cannot open '" + tmp + "' for writing");
        f.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!f) throw io_error("failed writing '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

namespace detail {
inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline uint32_t get_u32(const std::string& buf, size_t& pos) {
    if (pos + 4 > buf.size())
        throw format_error("frame stack truncated at byte offset " + std::to_string(pos));
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
    return v;
}
}  // namespace detail

/// Frame stack container: "MPFS" header with shape plus raw little-endian
/// u16 planes; everything else lives in a JSON sidecar at <path>.json.
/// store/load round-trips are bit-exact.
inline void store_framestack(const std::string& path, const fwd::FrameStack& stack,
                             const nlohmann::json& extras = nlohmann::json::object()) {
    stack.validate();
    std::string raw = "MPFS";
    detail::put_u32(raw, 1);  // version
    detail::put_u32(raw, static_cast<uint32_t>(stack.height()));
    detail::put_u32(raw, static_cast<uint32_t>(stack.width()));
    detail::put_u32(raw, static_cast<uint32_t>(stack.frames.size()));
    for (const auto& frame : stack.frames)
        for (uint16_t v : frame.data) {
            raw.push_back(static_cast<char>(v & 0xff));
            raw.push_back(static_cast<char>((v >> 8) & 0xff));
        }
    write_file_atomic(path, raw);

    nlohmann::json meta;
    meta["beamlet_id"] = stack.beamlet_id;
    meta["pixel_pitch_um"] = stack.pixel_pitch_um;
    meta["timestamps_ns"] = stack.timestamps_ns;
    meta["frame_to_pulse_drift_ns"] = stack.frame_to_pulse_drift_ns;
    meta["cumulative_drift_ns"] = stack.cumulative_drift_ns;
    meta["value_offset"] = stack.value_offset;
    meta["value_scale"] = stack.value_scale;
    meta["stages"] = stack.stages;
    nlohmann::json shots = nlohmann::json::array();
    for (const auto& s : stack.shots) {
        nlohmann::json j;
        j["pulse_index"] = s.pulse_index;
        j["timestamp_ns"] = s.timestamp_ns;
        j["intensity_scale"] = s.intensity_scale;
        nlohmann::json disp = nlohmann::json::array();
        for (const auto& d : s.beam_displacement_um) disp.push_back({d[0], d[1]});
        j["beam_displacement_um"] = disp;
        j["multi_peak_event"] = s.multi_peak_event;
        shots.push_back(j);
    }
    meta["shots"] = shots;
    if (!extras.empty()) meta["extras"] = extras;
    write_file_atomic(path + ".json", meta.dump(2));
}

inline fwd::FrameStack load_framestack(const std::string& path, nlohmann::json* extras_out = nullptr) {
    const std::string raw = read_file(path);
    size_t pos = 0;
    if (raw.size() < 4 || raw.substr(0, 4) != "MPFS")
        throw format_error("frame stack magic mismatch at byte offset 0");
    pos = 4;
    const uint32_t version = detail::get_u32(raw, pos);
    if (version != 1) throw format_error("unsupported frame stack version " + std::to_string(version));
    const uint32_t h = detail::get_u32(raw, pos);
    const uint32_t w = detail::get_u32(raw, pos);
    const uint32_t n = detail::get_u32(raw, pos);
    const size_t expect = pos + static_cast<size_t>(h) * w * n * 2;
    if (raw.size() < expect)
        throw format_error("frame stack payload truncated: need " + std::to_string(expect) +
                           " bytes, have " + std::to_string(raw.size()) + " (failed at byte offset " +
                           std::to_string(raw.size()) + ")");

    fwd::FrameStack stack;
    stack.frames.reserve(n);
    for (uint32_t k = 0; k < n; ++k) {
        ImageU16 frame(static_cast<int>(h), static_cast<int>(w));
        for (auto& v : frame.data) {
            v = static_cast<uint16_t>(static_cast<uint8_t>(raw[pos]) |
                                      (static_cast<uint16_t>(static_cast<uint8_t>(raw[pos + 1])) << 8));
            pos += 2;
        }
        stack.frames.push_back(std::move(frame));
    }

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(path + ".json"));
    } catch (const nlohmann::json::exception& e) {
        throw format_error("frame stack sidecar '" + path + ".json' is not valid JSON: " + e.what());
    }
    stack.beamlet_id = meta.at("beamlet_id").get<std::string>();
    stack.pixel_pitch_um = meta.at("pixel_pitch_um").get<double>();
    stack.timestamps_ns = meta.at("timestamps_ns").get<std::vector<double>>();
    stack.frame_to_pulse_drift_ns = meta.at("frame_to_pulse_drift_ns").get<double>();
    stack.cumulative_drift_ns = meta.at("cumulative_drift_ns").get<double>();
    stack.value_offset = meta.at("value_offset").get<double>();
    stack.value_scale = meta.at("value_scale").get<double>();
    stack.stages = meta.at("stages").get<std::vector<std::string>>();
    for (const auto& j : meta.at("shots")) {
        fwd::ShotRecord s;
        s.pulse_index = j.at("pulse_index").get<int>();
        s.timestamp_ns = j.at("timestamp_ns").get<double>();
        s.intensity_scale = j.at("intensity_scale").get<std::vector<double>>();
        for (const auto& d : j.at("beam_displacement_um"))
            s.beam_displacement_um.push_back({d[0].get<double>(), d[1].get<double>()});
        s.multi_peak_event = j.at("multi_peak_event").get<bool>();
        stack.shots.push_back(std::move(s));
    }
    if (extras_out) *extras_out = meta.value("extras", nlohmann::json::object());
    stack.validate();
    return stack;
}

}  // namespace mproj::io
