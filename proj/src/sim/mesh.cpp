#include <algorithm>

#include "chamber/sim/chamber.hpp"

namespace chamber::sim {

namespace {

struct LobeParams {
    int lobes;            // azimuthal bumps
    double lobe_depth;
    int rings;            // polar modulation
    double ring_depth;
    Vec3 axis_scale;      // anisotropic stretch before fitting
    double twist;         // lobe phase drift with latitude
};

// The two imprinting objects. Both share one albedo so recognition has to
// rely on shape; the lobed silhouettes make within-object view changes
// large relative to the between-object difference at matched views.
LobeParams params_for(ObjectId id) {
    if (id == ObjectId::A) return {3, 0.45, 2, 0.22, {1.0, 1.0, 1.0}, 0.0};
    return {5, 0.30, 3, 0.28, {1.0, 0.78, 1.18}, 0.9};
}

} // namespace

TriMesh object_mesh(ObjectId id, const ChamberSpec& chamber) {
    const LobeParams p = params_for(id);
    const int n_theta = 22; // polar rings (excluding poles)
    const int n_phi = 30;

    TriMesh mesh;
    auto radius = [&](double theta, double phi) {
        const double s = std::sin(theta);
        return 1.0 + p.lobe_depth * s * s * std::cos(p.lobes * phi + p.twist * theta) +
               p.ring_depth * std::cos(p.rings * theta);
    };

    // Vertices: poles plus a lat-long grid.
    mesh.verts.push_back({0, 0, radius(0, 0)});
    for (int i = 1; i < n_theta; ++i) {
        const double theta = kPi * i / n_theta;
        for (int j = 0; j < n_phi; ++j) {
            const double phi = 2 * kPi * j / n_phi;
            const double r = radius(theta, phi);
            mesh.verts.push_back({r * std::sin(theta) * std::cos(phi) * p.axis_scale.x,
                                  r * std::sin(theta) * std::sin(phi) * p.axis_scale.y,
                                  r * std::cos(theta) * p.axis_scale.z});
        }
    }
    mesh.verts.push_back({0, 0, -radius(kPi, 0)});

    auto ring_vert = [&](int ring, int j) { return 1 + ring * n_phi + (j % n_phi); };

    // Top and bottom fans.
    for (int j = 0; j < n_phi; ++j)
        mesh.tris.push_back({0, ring_vert(0, j), ring_vert(0, j + 1)});
    const int bottom = int(mesh.verts.size()) - 1;
    for (int j = 0; j < n_phi; ++j)
        mesh.tris.push_back({bottom, ring_vert(n_theta - 2, j + 1), ring_vert(n_theta - 2, j)});

    // Quads between rings.
    for (int i = 0; i + 1 < n_theta - 1; ++i)
        for (int j = 0; j < n_phi; ++j) {
            const int a = ring_vert(i, j), b = ring_vert(i, j + 1);
            const int c = ring_vert(i + 1, j), d = ring_vert(i + 1, j + 1);
            mesh.tris.push_back({a, c, b});
            mesh.tris.push_back({b, c, d});
        }

    // Fit uniformly into the display box (width x width x height), centered.
    Vec3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
    for (const auto& v : mesh.verts) {
        lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
        hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
    }
    const Vec3 center = (lo + hi) * 0.5;
    const double sx = chamber.display_width / std::max(hi.x - lo.x, 1e-9);
    const double sy = chamber.display_width / std::max(hi.y - lo.y, 1e-9);
    const double sz = chamber.display_height / std::max(hi.z - lo.z, 1e-9);
    const double scale = std::min({sx, sy, sz});
    for (auto& v : mesh.verts) v = (v - center) * scale;
    return mesh;
}

} // namespace chamber::sim
