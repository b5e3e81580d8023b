#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "chamber/sim/chamber.hpp"

namespace chamber::sim {

struct RenderSettings {
    int width = 64;
    int height = 64;
    double vfov_deg = 75.0;
    double near_clip = 0.2;
};

/// Flat-shaded z-buffered rasterization of the chamber interior from the
/// agent's eye. `object` empty renders the bare chamber (blank display).
/// `phase_deg` is the object's rotation angle and must lie inside the
/// viewpoint span. Deterministic: same inputs give byte-identical frames.
void render_frame(const ChamberSpec& chamber, std::optional<ObjectId> object,
                  const ViewpointRange& viewpoint, double phase_deg, const AgentState& pose,
                  int active_display, const RenderSettings& settings, uint8_t* out_rgb);

std::vector<uint8_t> render_frame(const ChamberSpec& chamber, std::optional<ObjectId> object,
                                  const ViewpointRange& viewpoint, double phase_deg,
                                  const AgentState& pose, int active_display,
                                  const RenderSettings& settings);

/// Axis-aligned screen bounding box of the object's projected vertices;
/// returns false when no vertex lands in front of the camera.
bool project_object_bbox(const ChamberSpec& chamber, ObjectId object,
                         const ViewpointRange& viewpoint, double phase_deg,
                         const AgentState& pose, int active_display,
                         const RenderSettings& settings, double& cx, double& cy);

} // namespace chamber::sim
