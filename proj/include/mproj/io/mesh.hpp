#pragma once

#include <array>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mproj/io/framestack_io.hpp"
#include "mproj/phantom/field4d.hpp"
#include "mproj/util/vec3.hpp"

namespace mproj::io {

struct TriangleMesh {
    std::vector<Vec3> vertices;                 // um, world coordinates
    std::vector<std::array<int, 3>> triangles;  // vertex indices
};

namespace detail {

/// Isosurface of one time slice by tetrahedral decomposition of each voxel
/// cell (six tetrahedra per cell, vertices on interpolated edge crossings).
inline TriangleMesh isosurface(const phantom::GriddedField& grid, int t, float level) {
    TriangleMesh mesh;
    std::map<std::tuple<int, int, int, int, int, int>, int> edge_cache;

    auto corner_pos = [&](int x, int y, int z) { return grid.voxel_center(x, y, z); };
    auto value = [&](int x, int y, int z) { return grid.at(t, z, y, x); };

    auto edge_vertex = [&](std::array<int, 3> a, std::array<int, 3> b) {
        if (std::tie(b[0], b[1], b[2]) < std::tie(a[0], a[1], a[2])) std::swap(a, b);
        const auto key = std::make_tuple(a[0], a[1], a[2], b[0], b[1], b[2]);
        const auto it = edge_cache.find(key);
        if (it != edge_cache.end()) return it->second;
        const float va = value(a[0], a[1], a[2]);
        const float vb = value(b[0], b[1], b[2]);
        const double f = vb == va ? 0.5 : std::clamp((level - va) / (vb - va), 0.0f, 1.0f);
        const Vec3 pa = corner_pos(a[0], a[1], a[2]);
        const Vec3 pb = corner_pos(b[0], b[1], b[2]);
        mesh.vertices.push_back(pa + (pb - pa) * f);
        const int idx = static_cast<int>(mesh.vertices.size()) - 1;
        edge_cache[key] = idx;
        return idx;
    };

    // six tetrahedra covering the unit cell
    static const int tets[6][4] = {{0, 5, 1, 6}, {0, 1, 2, 6}, {0, 2, 3, 6},
                                   {0, 3, 7, 6}, {0, 7, 4, 6}, {0, 4, 5, 6}};
    static const int corner_off[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                         {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};

    for (int z = 0; z + 1 < grid.n; ++z)
        for (int y = 0; y + 1 < grid.n; ++y)
            for (int x = 0; x + 1 < grid.n; ++x) {
                std::array<std::array<int, 3>, 8> corners;
                std::array<float, 8> vals;
                for (int c = 0; c < 8; ++c) {
                    corners[c] = {x + corner_off[c][0], y + corner_off[c][1], z + corner_off[c][2]};
                    vals[c] = value(corners[c][0], corners[c][1], corners[c][2]);
                }
                for (const auto& tet : tets) {
                    int inside = 0;
                    for (int k = 0; k < 4; ++k)
                        if (vals[tet[k]] > level) inside |= 1 << k;
                    if (inside == 0 || inside == 15) continue;
                    // gather the crossing edges of this tetrahedron
                    std::vector<int> verts;
                    static const int tet_edges[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
                    // canonical triangulations per sign pattern
                    auto emit = [&](int a, int b, int c) {
                        mesh.triangles.push_back({a, b, c});
                    };
                    std::vector<int> cross;
                    for (const auto& e : tet_edges) {
                        const bool ia = (inside >> e[0]) & 1;
                        const bool ib = (inside >> e[1]) & 1;
                        if (ia != ib)
                            cross.push_back(edge_vertex(corners[tet[e[0]]], corners[tet[e[1]]]));
                    }
                    if (cross.size() == 3) {
                        emit(cross[0], cross[1], cross[2]);
                    } else if (cross.size() == 4) {
                        // quad: the edge enumeration yields a strip order 0-1-3-2
                        emit(cross[0], cross[1], cross[3]);
                        emit(cross[0], cross[3], cross[2]);
                    }
                    (void)verts;
                }
            }
    return mesh;
}

}  // namespace detail

inline TriangleMesh extract_isosurface(const phantom::GriddedField& grid, int t_index, float level) {
    if (t_index < 0 || t_index >= static_cast<int>(grid.times_ns.size()))
        throw usage_error("isosurface time index out of range");
    return detail::isosurface(grid, t_index, level);
}

/// Plain-text mesh: "v x y z" vertex lines (um) and 1-based "f a b c" faces.
inline std::string mesh_to_obj(const TriangleMesh& mesh) {
    std::ostringstream out;
    out.precision(7);
    for (const auto& v : mesh.vertices) out << "v " << v.x << " " << v.y << " " << v.z << "\n";
    for (const auto& t : mesh.triangles)
        out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
    return out.str();
}

inline void write_obj(const std::string& path, const TriangleMesh& mesh) {
    write_file_atomic(path, mesh_to_obj(mesh));
}

}  // namespace mproj::io
