#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "chamber/sim/geometry.hpp"

namespace chamber::sim {

/// All extents share one unit system (the agent's 3.5-unit eye height lives
/// in the same scale as the 66x42x69 chamber box).
struct ChamberSpec {
    double length = 66.0; // x extent; the two display walls sit at x=0 and x=length
    double width = 42.0;  // y extent
    double height = 69.0; // z extent
    double display_width = 8.0;
    double display_height = 7.0;
    bool wire_mesh_floor = true;

    void validate() const {
        if (length <= 0 || width <= 0 || height <= 0 || display_width <= 0 ||
            display_height <= 0)
            throw std::invalid_argument("chamber extents must be strictly positive");
    }

    /// Center of the object shown on a display wall (0: x=0 wall, 1: x=length).
    /// Held at agent eye height so a level gaze from the chamber axis meets
    /// the object center.
    Vec3 display_center(int display) const {
        const double off = 4.5; // keeps the widest object lobe clear of the wall
        return {display == 0 ? off : length - off, width / 2.0, 3.5};
    }
};

enum class ObjectId : int { A = 0, B = 1 };

inline std::string to_string(ObjectId id) { return id == ObjectId::A ? "A" : "B"; }

/// Bump when either parametric mesh changes; stamped into dataset manifests.
inline constexpr int kMeshVersion = 1;

/// Fixed closed multi-lobed surface for one object, scaled to fit the
/// display box and centered on the origin.
TriMesh object_mesh(ObjectId id, const ChamberSpec& chamber);

/// One of the 12 rotation spans: 3 axes x 4 phase offsets, 60 degrees each.
struct ViewpointRange {
    int range_id = 0;
    Vec3 axis{0, 0, 1};
    double phase_start_deg = 0;
    double span_deg = 60.0;
};

inline ViewpointRange viewpoint_range(int range_id) {
    if (range_id < 0 || range_id >= 12)
        throw std::invalid_argument("viewpoint range id must be in [0,12), got " +
                                    std::to_string(range_id));
    static const Vec3 axes[3] = {{0, 0, 1}, {0, 1, 0}, {1, 0, 0}};
    ViewpointRange v;
    v.range_id = range_id;
    v.axis = axes[range_id / 4];
    v.phase_start_deg = 90.0 * (range_id % 4);
    return v;
}

/// One of the four rearing environments: a single object seen through a
/// single 60-degree viewpoint range.
struct RearingCondition {
    int id = 1;
    ObjectId object = ObjectId::A;
    int viewpoint = 0;
};

inline RearingCondition rearing_condition(int id) {
    if (id < 1 || id > 4)
        throw std::invalid_argument("condition id must be in {1..4}, got " + std::to_string(id));
    static const RearingCondition table[4] = {
        {1, ObjectId::A, 0},
        {2, ObjectId::A, 6},
        {3, ObjectId::B, 0},
        {4, ObjectId::B, 6},
    };
    return table[id - 1];
}

struct AgentState {
    double x = 0, y = 0;       // floor position
    double heading_deg = 0;    // body bearing, 0 = +x
    double tilt_deg = 0;       // head pitch offset, positive up
    double yaw_deg = 0;        // head yaw offset from body heading
    double roll_deg = 0;

    static constexpr double kEyeHeight = 3.5;
    static constexpr double kBodyLength = 1.2;
    static constexpr double kSpeed = 1.5;       // units per second
    static constexpr double kMaxHeadDeg = 60.0; // per-axis rotation bound
};

inline bool pose_valid(const ChamberSpec& c, const AgentState& a) {
    const double m = AgentState::kBodyLength / 2.0;
    return a.x >= m && a.x <= c.length - m && a.y >= m && a.y <= c.width - m &&
           std::fabs(a.tilt_deg) <= AgentState::kMaxHeadDeg + 1e-9 &&
           std::fabs(a.yaw_deg) <= AgentState::kMaxHeadDeg + 1e-9 &&
           std::fabs(a.roll_deg) <= AgentState::kMaxHeadDeg + 1e-9;
}

} // namespace chamber::sim
