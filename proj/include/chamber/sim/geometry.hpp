#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace chamber::sim {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double length(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Vec3 normalized(const Vec3& a) {
    const double l = length(a);
    return l > 0 ? a * (1.0 / l) : Vec3{0, 0, 0};
}

/// Rotation of `v` by `angle_rad` around unit axis `k` (Rodrigues).
inline Vec3 rotate_axis(const Vec3& v, const Vec3& k, double angle_rad) {
    const double c = std::cos(angle_rad), s = std::sin(angle_rad);
    return v * c + cross(k, v) * s + k * (dot(k, v) * (1.0 - c));
}

struct TriMesh {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> tris;
};

inline constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double d) { return d * kPi / 180.0; }

} // namespace chamber::sim
