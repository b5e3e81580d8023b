#pragma once

#include <cstdint>
#include <vector>

#include "chamber/core/rng.hpp"
#include "chamber/sim/chamber.hpp"

namespace chamber::sim {

struct Pose {
    AgentState agent;
    bool travel = false; // true: travel segment, false: head-rotation segment
};

struct TrajectoryParams {
    double fps = 10.0;
    double rotation_secs = 9.5;      // length of one head-rotation segment
    double resample_secs = 0.5;      // piecewise-constant velocity schedule
    double max_head_vel_deg = 72.0;  // per axis, also bounds the return-to-neutral rate
    double spawn_margin = 1.5;       // distance kept from the walls
};

/// Streams poses for one agent: alternating travel segments (straight-line
/// motion toward a uniformly sampled point, body bearing tracking the active
/// display while the head eases back to neutral) and 9.5 s head-rotation
/// segments with piecewise-constant angular velocities clamped to +/-60 deg.
class TrajectoryCursor {
public:
    TrajectoryCursor(const ChamberSpec& chamber, int active_display, uint64_t seed,
                     TrajectoryParams params = {});

    Pose next();

    const AgentState& state() const { return state_; }

    /// Overrides the next sampled travel target (zero-length travel tests).
    void force_next_target(double x, double y);

private:
    void begin_travel();
    double bearing_to_display() const;

    ChamberSpec chamber_;
    int display_;
    TrajectoryParams params_;
    Rng rng_;
    AgentState state_;
    // Current segment bookkeeping.
    bool traveling_ = true;
    bool needs_target_ = true;
    bool has_forced_target_ = false;
    double forced_x_ = 0, forced_y_ = 0;
    double target_x_ = 0, target_y_ = 0;
    int rotation_frames_left_ = 0;
    int resample_in_ = 0;
    double vel_tilt_ = 0, vel_yaw_ = 0, vel_roll_ = 0;
};

/// Fixed-duration convenience wrapper: round(duration * fps) poses.
std::vector<Pose> sample_trajectory(const ChamberSpec& chamber, int active_display,
                                    uint64_t seed, double duration_secs,
                                    TrajectoryParams params = {});

} // namespace chamber::sim
