#include "chamber/sim/trajectory.hpp"

#include <cmath>

namespace chamber::sim {

TrajectoryCursor::TrajectoryCursor(const ChamberSpec& chamber, int active_display,
                                   uint64_t seed, TrajectoryParams params)
    : chamber_(chamber), display_(active_display), params_(params), rng_(seed) {
    chamber_.validate();
    const double mx = params_.spawn_margin;
    state_.x = rng_.uniform(mx, chamber_.length - mx);
    state_.y = rng_.uniform(mx, chamber_.width - mx);
    state_.heading_deg = bearing_to_display();
    traveling_ = true;
    needs_target_ = true;
}

void TrajectoryCursor::force_next_target(double x, double y) {
    forced_x_ = x;
    forced_y_ = y;
    has_forced_target_ = true;
}

double TrajectoryCursor::bearing_to_display() const {
    const Vec3 c = chamber_.display_center(display_);
    return std::atan2(c.y - state_.y, c.x - state_.x) * 180.0 / kPi;
}

void TrajectoryCursor::begin_travel() {
    if (has_forced_target_) {
        target_x_ = forced_x_;
        target_y_ = forced_y_;
        has_forced_target_ = false;
    } else {
        const double mx = params_.spawn_margin;
        target_x_ = rng_.uniform(mx, chamber_.length - mx);
        target_y_ = rng_.uniform(mx, chamber_.width - mx);
    }
    traveling_ = true;
    needs_target_ = false;
}

Pose TrajectoryCursor::next() {
    const double dt = 1.0 / params_.fps;
    const double max_step = AgentState::kSpeed * dt;
    const double max_head_step = params_.max_head_vel_deg * dt;

    auto ease_to_zero = [&](double& angle) {
        if (angle > max_head_step)
            angle -= max_head_step;
        else if (angle < -max_head_step)
            angle += max_head_step;
        else
            angle = 0;
    };

    for (;;) {
        if (traveling_) {
            if (needs_target_) begin_travel();
            const double dx = target_x_ - state_.x, dy = target_y_ - state_.y;
            const double dist = std::hypot(dx, dy);
            if (dist > 1e-12) {
                if (dist <= max_step) {
                    state_.x = target_x_;
                    state_.y = target_y_;
                } else {
                    state_.x += dx / dist * max_step;
                    state_.y += dy / dist * max_step;
                }
                state_.heading_deg = bearing_to_display();
                ease_to_zero(state_.tilt_deg);
                ease_to_zero(state_.yaw_deg);
                ease_to_zero(state_.roll_deg);
                return {state_, true};
            }
            // Arrived (or zero-length travel): switch to the rotation segment.
            traveling_ = false;
            rotation_frames_left_ = int(std::lround(params_.rotation_secs * params_.fps));
            resample_in_ = 0;
        }
        if (rotation_frames_left_ > 0) {
            if (resample_in_ == 0) {
                const double mv = params_.max_head_vel_deg;
                vel_tilt_ = rng_.uniform(-mv, mv);
                vel_yaw_ = rng_.uniform(-mv, mv);
                vel_roll_ = rng_.uniform(-mv, mv);
                resample_in_ = int(std::lround(params_.resample_secs * params_.fps));
            }
            auto integrate = [&](double& angle, double vel) {
                angle = std::clamp(angle + vel * dt, -AgentState::kMaxHeadDeg,
                                   AgentState::kMaxHeadDeg);
            };
            integrate(state_.tilt_deg, vel_tilt_);
            integrate(state_.yaw_deg, vel_yaw_);
            integrate(state_.roll_deg, vel_roll_);
            state_.heading_deg = bearing_to_display();
            --rotation_frames_left_;
            --resample_in_;
            return {state_, false};
        }
        traveling_ = true;
        needs_target_ = true;
    }
}

std::vector<Pose> sample_trajectory(const ChamberSpec& chamber, int active_display,
                                    uint64_t seed, double duration_secs,
                                    TrajectoryParams params) {
    if (duration_secs <= 0) throw std::invalid_argument("trajectory duration must be positive");
    TrajectoryCursor cursor(chamber, active_display, seed, params);
    const int64_t n = int64_t(std::lround(duration_secs * params.fps));
    std::vector<Pose> poses;
    poses.reserve(size_t(n));
    for (int64_t i = 0; i < n; ++i) poses.push_back(cursor.next());
    return poses;
}

} // namespace chamber::sim
