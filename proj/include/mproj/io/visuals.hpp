#pragma once

#include <string>
#include <vector>

#include "mproj/io/mesh.hpp"
#include "mproj/io/png.hpp"
#include "mproj/phantom/field4d.hpp"
#include "mproj/util/errors.hpp"

namespace mproj::io {

/// Maximum-intensity projection of one time slice along x, y or z.
inline ImageD mip_image(const phantom::GriddedField& grid, int t, char axis) {
    const int n = grid.n;
    ImageD out(n, n, 0.0);
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const double v = grid.at(t, z, y, x);
                double* cell = nullptr;
                if (axis == 'x')
                    cell = &out(n - 1 - y, z);
                else if (axis == 'y')
                    cell = &out(n - 1 - z, x);
                else
                    cell = &out(n - 1 - y, x);
                if (v > *cell) *cell = v;
            }
    return out;
}

struct ExportOptions {
    std::vector<std::string> modes = {"mip", "montage"};
    char mip_axis = 'y';
    double iso_level = 1e-4;  // 1/um
    // montage inputs: per time point, the two measured images and two renders
    std::vector<std::array<ImageD, 4>> montage_panels;
};

/// Write the requested visual products for a volume sequence; returns the
/// relative paths written. MIP values share one fixed scale (the sequence
/// peak) so frames are comparable; an all-zero sequence is all-black.
inline std::vector<std::string> export_visuals(const std::vector<phantom::GriddedField>& volumes,
                                               const std::string& dir, const ExportOptions& opt) {
    if (volumes.empty()) throw usage_error("export needs a non-empty volume sequence");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (!std::filesystem::is_directory(dir))
        throw io_error("cannot create export directory '" + dir + "'");

    std::vector<std::string> written;
    auto has_mode = [&](const std::string& m) {
        for (const auto& s : opt.modes)
            if (s == m) return true;
        return false;
    };

    if (has_mode("mip")) {
        double peak = 0.0;
        for (const auto& v : volumes)
            for (float x : v.values) peak = std::max(peak, static_cast<double>(x));
        for (size_t i = 0; i < volumes.size(); ++i) {
            const ImageD mip = mip_image(volumes[i], 0, opt.mip_axis);
            char name[64];
            std::snprintf(name, sizeof(name), "mip_%04zu.png", i);
            write_png16(dir + "/" + name, quantize16(mip, peak));
            written.push_back(name);
        }
    }
    if (has_mode("mesh")) {
        for (size_t i = 0; i < volumes.size(); ++i) {
            const TriangleMesh mesh = extract_isosurface(volumes[i], 0, static_cast<float>(opt.iso_level));
            char name[64];
            std::snprintf(name, sizeof(name), "mesh_%04zu.obj", i);
            write_obj(dir + "/" + name, mesh);
            written.push_back(name);
        }
    }
    if (has_mode("montage")) {
        for (size_t i = 0; i < volumes.size(); ++i) {
            // panels: measured A, measured B / render A, render B; fall back
            // to MIPs when no panels were provided
            std::array<ImageD, 4> panels;
            if (i < opt.montage_panels.size()) {
                panels = opt.montage_panels[i];
            } else {
                const ImageD mip = mip_image(volumes[i], 0, opt.mip_axis);
                panels = {mip, mip, mip, mip};
            }
            const int ph = panels[0].height, pw = panels[0].width;
            ImageD tile(2 * ph + 2, 2 * pw + 2, 0.0);
            for (int p = 0; p < 4; ++p) {
                if (!panels[p].same_shape(panels[0]))
                    throw usage_error("montage panels must share one shape");
                const int oy = (p / 2) * (ph + 2), ox = (p % 2) * (pw + 2);
                for (int y = 0; y < ph; ++y)
                    for (int x = 0; x < pw; ++x) tile(oy + y, ox + x) = panels[p](y, x);
            }
            double peak = 0.0;
            for (double v : tile.data) peak = std::max(peak, v);
            char name[64];
            std::snprintf(name, sizeof(name), "montage_%04zu.png", i);
            write_png16(dir + "/" + name, quantize16(tile, peak));
            written.push_back(name);
        }
    }
    return written;
}

}  // namespace mproj::io
