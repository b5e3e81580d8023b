#include "chamber/sim/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace chamber::sim {

namespace {

struct Camera {
    Vec3 eye, fwd, right, up;
    double focal; // pixels
    int w, h;

    Vec3 to_cam(const Vec3& p) const {
        const Vec3 d = p - eye;
        return {dot(d, fwd), dot(d, right), dot(d, up)}; // (depth, screen-x, screen-y) frame
    }
};

Camera make_camera(const AgentState& a, const RenderSettings& s) {
    Camera c;
    c.eye = {a.x, a.y, AgentState::kEyeHeight};
    const double yaw = deg2rad(a.heading_deg + a.yaw_deg);
    const double pitch = deg2rad(a.tilt_deg);
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    const double cp = std::cos(pitch), sp = std::sin(pitch);
    c.fwd = {cy * cp, sy * cp, sp};
    c.right = {sy, -cy, 0};
    c.up = cross(c.right, c.fwd);
    if (a.roll_deg != 0) {
        const double roll = deg2rad(a.roll_deg);
        c.right = rotate_axis(c.right, c.fwd, roll);
        c.up = rotate_axis(c.up, c.fwd, roll);
    }
    c.focal = (s.height / 2.0) / std::tan(deg2rad(s.vfov_deg) / 2.0);
    c.w = s.width;
    c.h = s.height;
    return c;
}

struct SceneTri {
    Vec3 v[3];
    Vec3 color;
    bool floor_grid = false;
};

void add_quad(std::vector<SceneTri>& out, Vec3 a, Vec3 b, Vec3 c, Vec3 d, Vec3 color,
              bool grid = false) {
    out.push_back({{a, b, c}, color, grid});
    out.push_back({{a, c, d}, color, grid});
}

void build_chamber(const ChamberSpec& spec, std::vector<SceneTri>& out) {
    const double L = spec.length, W = spec.width, H = spec.height;
    const Vec3 wall{0.92, 0.92, 0.92};
    const Vec3 ceiling{0.85, 0.85, 0.85};
    const Vec3 floor_color{0.55, 0.5, 0.45};
    // Display end walls (x=0 and x=L) are the white screens.
    add_quad(out, {0, 0, 0}, {0, W, 0}, {0, W, H}, {0, 0, H}, {0.97, 0.97, 0.97});
    add_quad(out, {L, 0, 0}, {L, W, 0}, {L, W, H}, {L, 0, H}, {0.97, 0.97, 0.97});
    // Side walls.
    add_quad(out, {0, 0, 0}, {L, 0, 0}, {L, 0, H}, {0, 0, H}, wall);
    add_quad(out, {0, W, 0}, {L, W, 0}, {L, W, H}, {0, W, H}, wall);
    add_quad(out, {0, 0, H}, {L, 0, H}, {L, W, H}, {0, W, H}, ceiling);
    add_quad(out, {0, 0, 0}, {L, 0, 0}, {L, W, 0}, {0, W, 0}, floor_color,
             spec.wire_mesh_floor);
}

const TriMesh& cached_object_mesh(ObjectId id, const ChamberSpec& spec) {
    static const TriMesh a = object_mesh(ObjectId::A, ChamberSpec{});
    static const TriMesh b = object_mesh(ObjectId::B, ChamberSpec{});
    (void)spec; // meshes are fixed; the display box comes from the default spec
    return id == ObjectId::A ? a : b;
}

void add_object(const ChamberSpec& spec, ObjectId id, const ViewpointRange& vp,
                double phase_deg, int display, std::vector<SceneTri>& out) {
    const TriMesh& mesh = cached_object_mesh(id, spec);
    const Vec3 axis = normalized(vp.axis);
    const double angle = deg2rad(phase_deg);
    const Vec3 center = spec.display_center(display);
    // Flip the base orientation on the far display so the same face points
    // into the chamber from both walls.
    const double face_yaw = display == 0 ? 0.0 : kPi;
    std::vector<Vec3> verts(mesh.verts.size());
    for (size_t i = 0; i < mesh.verts.size(); ++i) {
        Vec3 v = rotate_axis(mesh.verts[i], axis, angle);
        if (face_yaw != 0.0) v = rotate_axis(v, {0, 0, 1}, face_yaw);
        verts[i] = v + center;
    }
    const Vec3 color{0.62, 0.6, 0.58};
    for (const auto& t : mesh.tris)
        out.push_back({{verts[size_t(t[0])], verts[size_t(t[1])], verts[size_t(t[2])]}, color});
}

double floor_shade(const Vec3& p) {
    // Wire mesh: darker along grid lines every 2 units.
    const double spacing = 2.0, half_width = 0.16;
    const double gx = std::fabs(p.x / spacing - std::round(p.x / spacing)) * spacing;
    const double gy = std::fabs(p.y / spacing - std::round(p.y / spacing)) * spacing;
    return (gx < half_width || gy < half_width) ? 0.45 : 1.0;
}

struct ClipVert {
    Vec3 cam;   // camera-space (depth, right, up)
    Vec3 world;
};

// Sutherland-Hodgman against the near plane cam.x = near.
int clip_near(const ClipVert in[3], double near_clip, ClipVert out[4]) {
    int n = 0;
    for (int i = 0; i < 3; ++i) {
        const ClipVert& a = in[i];
        const ClipVert& b = in[(i + 1) % 3];
        const bool ain = a.cam.x >= near_clip, bin = b.cam.x >= near_clip;
        if (ain) out[n++] = a;
        if (ain != bin) {
            const double t = (near_clip - a.cam.x) / (b.cam.x - a.cam.x);
            ClipVert v;
            v.cam = a.cam + (b.cam - a.cam) * t;
            v.world = a.world + (b.world - a.world) * t;
            out[n++] = v;
        }
    }
    return n;
}

const Vec3 kLightDir = normalized({0.3, 0.45, 0.84});

// Distance falloff gives every surface a smooth per-pixel gradient; without
// it a bare wall fills the view with one flat color and frames degenerate.
double distance_shade(double depth) {
    return 0.4 + 0.6 / (1.0 + 0.0012 * depth * depth);
}

void raster_triangle(const Camera& cam, const ClipVert v[3], const Vec3& base_color,
                     bool grid, double face_light, std::vector<double>& invw_buf,
                     std::vector<uint8_t>& rgb) {
    // Screen coordinates and 1/w per vertex.
    double sx[3], sy[3], invw[3];
    Vec3 world_over_w[3];
    for (int i = 0; i < 3; ++i) {
        const double w = v[i].cam.x;
        sx[i] = cam.w / 2.0 + cam.focal * v[i].cam.y / w;
        sy[i] = cam.h / 2.0 - cam.focal * v[i].cam.z / w;
        invw[i] = 1.0 / w;
        world_over_w[i] = v[i].world * invw[i];
    }
    const double area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sx[2] - sx[0]) * (sy[1] - sy[0]);
    if (area == 0) return;
    const double inv_area = 1.0 / area;

    int x0 = std::max(0, int(std::floor(std::min({sx[0], sx[1], sx[2]}))));
    int x1 = std::min(cam.w - 1, int(std::ceil(std::max({sx[0], sx[1], sx[2]}))));
    int y0 = std::max(0, int(std::floor(std::min({sy[0], sy[1], sy[2]}))));
    int y1 = std::min(cam.h - 1, int(std::ceil(std::max({sy[0], sy[1], sy[2]}))));

    for (int py = y0; py <= y1; ++py) {
        for (int px = x0; px <= x1; ++px) {
            const double cx = px + 0.5, cy2 = py + 0.5;
            // Barycentric weights (signed, normalized by area).
            const double w0 = ((sx[1] - cx) * (sy[2] - cy2) - (sx[2] - cx) * (sy[1] - cy2)) * inv_area;
            const double w1 = ((sx[2] - cx) * (sy[0] - cy2) - (sx[0] - cx) * (sy[2] - cy2)) * inv_area;
            const double w2 = 1.0 - w0 - w1;
            if (w0 < 0 || w1 < 0 || w2 < 0) continue;
            const double iw = w0 * invw[0] + w1 * invw[1] + w2 * invw[2];
            const size_t pix = size_t(py) * size_t(cam.w) + size_t(px);
            if (iw <= invw_buf[pix]) continue;
            invw_buf[pix] = iw;
            double shade = face_light * distance_shade(1.0 / iw);
            if (grid) {
                const Vec3 wp = (world_over_w[0] * w0 + world_over_w[1] * w1 +
                                 world_over_w[2] * w2) *
                                (1.0 / iw);
                shade *= floor_shade(wp);
            }
            const auto to_byte = [&](double c) {
                return uint8_t(std::lround(std::clamp(c * shade, 0.0, 1.0) * 255.0));
            };
            rgb[pix * 3 + 0] = to_byte(base_color.x);
            rgb[pix * 3 + 1] = to_byte(base_color.y);
            rgb[pix * 3 + 2] = to_byte(base_color.z);
        }
    }
}

} // namespace

void render_frame(const ChamberSpec& chamber, std::optional<ObjectId> object,
                  const ViewpointRange& viewpoint, double phase_deg, const AgentState& pose,
                  int active_display, const RenderSettings& settings, uint8_t* out_rgb) {
    chamber.validate();
    if (!pose_valid(chamber, pose))
        throw std::invalid_argument("render_frame: agent pose outside chamber/head bounds");
    if (object && (phase_deg < viewpoint.phase_start_deg - 1e-9 ||
                   phase_deg > viewpoint.phase_start_deg + viewpoint.span_deg + 1e-9))
        throw std::invalid_argument("render_frame: phase outside viewpoint span");

    std::vector<SceneTri> tris;
    tris.reserve(1400);
    build_chamber(chamber, tris);
    if (object) add_object(chamber, *object, viewpoint, phase_deg, active_display, tris);

    const Camera cam = make_camera(pose, settings);
    std::vector<double> invw(size_t(settings.width) * size_t(settings.height), 0.0);
    std::vector<uint8_t> rgb(invw.size() * 3, 0);

    for (const auto& t : tris) {
        const Vec3 n = normalized(cross(t.v[1] - t.v[0], t.v[2] - t.v[0]));
        const double light = std::clamp(0.42 + 0.58 * std::fabs(dot(n, kLightDir)), 0.0, 1.0);
        ClipVert cv[3];
        for (int i = 0; i < 3; ++i) cv[i] = {cam.to_cam(t.v[i]), t.v[i]};
        ClipVert clipped[4];
        const int n_out = clip_near(cv, settings.near_clip, clipped);
        for (int i = 2; i < n_out; ++i) {
            ClipVert fan[3] = {clipped[0], clipped[i - 1], clipped[i]};
            raster_triangle(cam, fan, t.color, t.floor_grid, light, invw, rgb);
        }
    }
    std::copy(rgb.begin(), rgb.end(), out_rgb);
}

std::vector<uint8_t> render_frame(const ChamberSpec& chamber, std::optional<ObjectId> object,
                                  const ViewpointRange& viewpoint, double phase_deg,
                                  const AgentState& pose, int active_display,
                                  const RenderSettings& settings) {
    std::vector<uint8_t> out(size_t(settings.width) * size_t(settings.height) * 3);
    render_frame(chamber, object, viewpoint, phase_deg, pose, active_display, settings,
                 out.data());
    return out;
}

bool project_object_bbox(const ChamberSpec& chamber, ObjectId object,
                         const ViewpointRange& viewpoint, double phase_deg,
                         const AgentState& pose, int active_display,
                         const RenderSettings& settings, double& cx, double& cy) {
    const TriMesh& mesh = cached_object_mesh(object, chamber);
    const Camera cam = make_camera(pose, settings);
    const Vec3 axis = normalized(viewpoint.axis);
    const double angle = deg2rad(phase_deg);
    const Vec3 center = chamber.display_center(active_display);
    const double face_yaw = active_display == 0 ? 0.0 : kPi;
    double lo_x = 1e30, hi_x = -1e30, lo_y = 1e30, hi_y = -1e30;
    bool any = false;
    for (const auto& mv : mesh.verts) {
        Vec3 v = rotate_axis(mv, axis, angle);
        if (face_yaw != 0.0) v = rotate_axis(v, {0, 0, 1}, face_yaw);
        const Vec3 c = cam.to_cam(v + center);
        if (c.x <= settings.near_clip) continue;
        any = true;
        const double px = cam.w / 2.0 + cam.focal * c.y / c.x;
        const double py = cam.h / 2.0 - cam.focal * c.z / c.x;
        lo_x = std::min(lo_x, px);
        hi_x = std::max(hi_x, px);
        lo_y = std::min(lo_y, py);
        hi_y = std::max(hi_y, py);
    }
    if (!any) return false;
    cx = (lo_x + hi_x) / 2.0;
    cy = (lo_y + hi_y) / 2.0;
    return true;
}

} // namespace chamber::sim
