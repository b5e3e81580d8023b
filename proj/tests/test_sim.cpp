#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "chamber/sim/dataset.hpp"
#include "chamber/sim/render.hpp"
#include "chamber/sim/trajectory.hpp"
#include "oracles.hpp"

using namespace chamber;
using namespace chamber::sim;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("trajectory: zero-length travel leaves only the rotation segment") {
    ChamberSpec chamber;
    TrajectoryCursor cursor(chamber, 0, 99);
    const AgentState start = cursor.state();
    cursor.force_next_target(start.x, start.y);
    // 9.5 s rotation = 95 frames, none of them travel.
    for (int i = 0; i < 95; ++i) {
        const Pose p = cursor.next();
        CAPTURE(i);
        CHECK_FALSE(p.travel);
        CHECK(p.agent.x == start.x);
        CHECK(p.agent.y == start.y);
    }
}

TEST_CASE("trajectory: same seed reproduces the pose sequence") {
    ChamberSpec chamber;
    auto a = sample_trajectory(chamber, 0, 1234, 30.0);
    auto b = sample_trajectory(chamber, 0, 1234, 30.0);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].agent.x == b[i].agent.x);
        CHECK(a[i].agent.yaw_deg == b[i].agent.yaw_deg);
        CHECK(a[i].travel == b[i].travel);
    }
    auto c = sample_trajectory(chamber, 0, 1235, 30.0);
    bool any_diff = false;
    for (size_t i = 0; i < c.size(); ++i) any_diff |= c[i].agent.x != a[i].agent.x;
    CHECK(any_diff);
}

TEST_CASE("trajectory: 60 s gives 600 valid poses with bounded deltas") {
    ChamberSpec chamber;
    TrajectoryParams params;
    auto poses = sample_trajectory(chamber, 1, 7, 60.0, params);
    REQUIRE(poses.size() == 600);
    const double max_step = AgentState::kSpeed / params.fps + 1e-9;
    const double max_head = params.max_head_vel_deg / params.fps + 1e-9;
    for (size_t i = 0; i < poses.size(); ++i) {
        CHECK(pose_valid(chamber, poses[i].agent));
        if (i > 0) {
            const auto& p = poses[i - 1].agent;
            const auto& q = poses[i].agent;
            CHECK(std::hypot(q.x - p.x, q.y - p.y) <= max_step);
            CHECK(std::fabs(q.tilt_deg - p.tilt_deg) <= max_head);
            CHECK(std::fabs(q.yaw_deg - p.yaw_deg) <= max_head);
            CHECK(std::fabs(q.roll_deg - p.roll_deg) <= max_head);
        }
    }
    // Both segment kinds appear in a minute of wandering.
    int travel = 0;
    for (const auto& p : poses) travel += p.travel ? 1 : 0;
    CHECK(travel > 0);
    CHECK(travel < int(poses.size()));
}

TEST_CASE("object meshes are fixed, closed and distinct") {
    ChamberSpec chamber;
    auto a = object_mesh(ObjectId::A, chamber);
    auto b = object_mesh(ObjectId::B, chamber);
    CHECK(a.verts.size() == b.verts.size());
    CHECK(!a.tris.empty());
    bool differ = false;
    for (size_t i = 0; i < a.verts.size(); ++i)
        differ |= std::fabs(a.verts[i].x - b.verts[i].x) > 1e-9 ||
                  std::fabs(a.verts[i].z - b.verts[i].z) > 1e-9;
    CHECK(differ);
    // Regenerating gives identical geometry (fixed, version-stamped).
    auto a2 = object_mesh(ObjectId::A, chamber);
    for (size_t i = 0; i < a.verts.size(); ++i) CHECK(a.verts[i].x == a2.verts[i].x);
    CHECK(kMeshVersion == 1);

    // Every edge of the closed surface is shared by exactly two triangles.
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& t : a.tris)
        for (int e = 0; e < 3; ++e) {
            int u = t[size_t(e)], v = t[size_t((e + 1) % 3)];
            edge_count[{std::min(u, v), std::max(u, v)}]++;
        }
    for (const auto& [edge, count] : edge_count) CHECK(count == 2);
}

TEST_CASE("render: determinism and blank display") {
    ChamberSpec chamber;
    RenderSettings settings;
    AgentState pose;
    pose.x = chamber.length / 2;
    pose.y = chamber.width / 2;
    pose.heading_deg = 180; // facing display 0
    const auto vp = viewpoint_range(0);

    auto with_obj = render_frame(chamber, ObjectId::A, vp, 30.0, pose, 0, settings);
    auto with_obj2 = render_frame(chamber, ObjectId::A, vp, 30.0, pose, 0, settings);
    CHECK(std::memcmp(with_obj.data(), with_obj2.data(), with_obj.size()) == 0);

    auto blank = render_frame(chamber, std::nullopt, vp, 30.0, pose, 0, settings);
    auto blank2 = render_frame(chamber, std::nullopt, vp, 30.0, pose, 0, settings);
    CHECK(blank == blank2);
    CHECK(with_obj != blank); // the object is actually visible

    // Every byte is a valid pixel and the frame is non-degenerate.
    std::set<uint8_t> distinct(blank.begin(), blank.end());
    CHECK(distinct.size() > 1);
}

TEST_CASE("render: centered agent puts the object at the image center") {
    ChamberSpec chamber;
    RenderSettings settings;
    const auto vp = viewpoint_range(0);
    AgentState pose;
    pose.x = chamber.length / 2;
    pose.y = chamber.width / 2;
    pose.heading_deg = 180; // straight at display 0, neutral head

    // Independent pinhole oracle: the display center must project exactly to
    // the image center (eye height equals object center height).
    oracle::Pinhole cam;
    cam.eye[0] = pose.x;
    cam.eye[1] = pose.y;
    cam.eye[2] = AgentState::kEyeHeight;
    cam.yaw_deg = pose.heading_deg;
    cam.pitch_deg = 0;
    cam.vfov_deg = settings.vfov_deg;
    cam.width = settings.width;
    cam.height = settings.height;
    const auto dc = chamber.display_center(0);
    double px = 0, py = 0;
    REQUIRE(cam.project(&dc.x, px, py));
    CHECK(px == doctest::Approx(settings.width / 2.0).epsilon(1e-9));
    CHECK(py == doctest::Approx(settings.height / 2.0).epsilon(1e-9));

    // Rendered object pixels (diff against the blank render) center there too.
    auto with_obj = render_frame(chamber, ObjectId::A, vp, 15.0, pose, 0, settings);
    auto blank = render_frame(chamber, std::nullopt, vp, 15.0, pose, 0, settings);
    int x0 = settings.width, x1 = -1, y0 = settings.height, y1 = -1;
    for (int y = 0; y < settings.height; ++y)
        for (int x = 0; x < settings.width; ++x) {
            const size_t i = (size_t(y) * settings.width + x) * 3;
            if (std::memcmp(&with_obj[i], &blank[i], 3) != 0) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
        }
    REQUIRE(x1 >= x0); // object visible
    CHECK(std::fabs((x0 + x1 + 1) / 2.0 - settings.width / 2.0) <= 2.0);
    CHECK(std::fabs((y0 + y1 + 1) / 2.0 - settings.height / 2.0) <= 2.0);
}

TEST_CASE("render: error paths") {
    ChamberSpec chamber;
    RenderSettings settings;
    const auto vp = viewpoint_range(0);
    AgentState outside;
    outside.x = -5;
    outside.y = 10;
    CHECK_THROWS_AS(render_frame(chamber, ObjectId::A, vp, 10, outside, 0, settings),
                    std::invalid_argument);
    AgentState ok;
    ok.x = 30;
    ok.y = 20;
    CHECK_THROWS_AS(render_frame(chamber, ObjectId::A, vp, 90.0, ok, 0, settings),
                    std::invalid_argument); // phase outside the 60-degree span
}

TEST_CASE("pixel-distance audit: view change can exceed object change") {
    // Within-object image distance across the viewpoint span can exceed the
    // between-object distance at a matched view.
    ChamberSpec chamber;
    RenderSettings settings;
    const auto vp = viewpoint_range(0);
    AgentState pose;
    pose.x = chamber.length / 2 - 10;
    pose.y = chamber.width / 2;
    pose.heading_deg = 180;

    auto dist = [](const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
        double d = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            const double e = double(a[i]) - double(b[i]);
            d += e * e;
        }
        return std::sqrt(d);
    };

    auto a_lo = render_frame(chamber, ObjectId::A, vp, 0.0, pose, 0, settings);
    auto a_hi = render_frame(chamber, ObjectId::A, vp, 60.0, pose, 0, settings);
    auto b_lo = render_frame(chamber, ObjectId::B, vp, 0.0, pose, 0, settings);
    const double within = dist(a_lo, a_hi);
    const double between = dist(a_lo, b_lo);
    CHECK(within > 0);
    CHECK(between > 0);
    CHECK(within > between * 0.8); // view change is at least comparable
}

TEST_CASE("dataset: single frame, manifest and round-trip") {
    TempDir tmp("chamber_ds_one");
    DatasetConfig config;
    config.condition_id = 1;
    config.n_frames = 1;
    config.seed = 5;
    auto ds = EpisodeDataset::generate((tmp.path / "d").string(), config);
    CHECK(ds.size() == 1);
    CHECK(ds.meta(0).frame_index == 0);

    auto loaded = EpisodeDataset::open((tmp.path / "d").string());
    CHECK(loaded.size() == 1);
    CHECK(loaded.checksum() == ds.checksum());
    CHECK(std::memcmp(loaded.frame(0), ds.frame(0), size_t(ds.frame_bytes())) == 0);
}

TEST_CASE("dataset: byte determinism, continuity, coverage, pose sanity") {
    TempDir tmp("chamber_ds_det");
    DatasetConfig config;
    config.condition_id = 2;
    config.n_frames = 450;
    config.seed = 77;
    auto d1 = EpisodeDataset::generate((tmp.path / "a").string(), config);
    auto d2 = EpisodeDataset::generate((tmp.path / "b").string(), config);
    CHECK(d1.checksum() == d2.checksum()); // byte determinism via checksum

    ChamberSpec chamber;
    const double max_step = AgentState::kSpeed / config.fps + 1e-9;
    const double max_head = TrajectoryParams{}.max_head_vel_deg / config.fps + 1e-9;
    double phase_min = 1e9, phase_max = -1e9;
    for (int64_t i = 0; i < d1.size(); ++i) {
        const auto& m = d1.meta(i);
        CHECK(pose_valid(chamber, m.pose)); // 100% of poses satisfy invariants
        phase_min = std::min(phase_min, m.phase_deg);
        phase_max = std::max(phase_max, m.phase_deg);
        if (i > 0 && d1.meta(i - 1).episode_id == m.episode_id) {
            const auto& p = d1.meta(i - 1).pose;
            CHECK(std::hypot(m.pose.x - p.x, m.pose.y - p.y) <= max_step);
            CHECK(std::fabs(m.pose.tilt_deg - p.tilt_deg) <= max_head);
            CHECK(std::fabs(m.pose.yaw_deg - p.yaw_deg) <= max_head);
            CHECK(std::fabs(m.pose.roll_deg - p.roll_deg) <= max_head);
            CHECK(m.timestamp - d1.meta(i - 1).timestamp == doctest::Approx(0.1));
            CHECK(m.frame_index == d1.meta(i - 1).frame_index + 1);
        }
    }
    // The object's rotation sweeps the whole 60-degree range.
    const auto vp = viewpoint_range(rearing_condition(2).viewpoint);
    CHECK(phase_min <= vp.phase_start_deg + 1.0);
    CHECK(phase_max >= vp.phase_start_deg + vp.span_deg - 1.0);

    // Corrupting the blob must fail the checksum on open.
    {
        std::fstream f(tmp.path / "a" / "frames.bin",
                       std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(100);
        char byte = 0x7f;
        f.write(&byte, 1);
    }
    CHECK_THROWS_AS(EpisodeDataset::open((tmp.path / "a").string()), std::runtime_error);
}

TEST_CASE("dataset: windows never straddle episode boundaries") {
    TempDir tmp("chamber_ds_win");
    DatasetConfig config;
    config.condition_id = 1;
    config.n_frames = 130;
    config.episode_frames = 50;
    config.seed = 3;
    auto ds = EpisodeDataset::generate((tmp.path / "d").string(), config);
    REQUIRE(ds.episodes().size() == 3);
    const auto starts = ds.window_starts(3);
    CHECK(starts.size() == size_t(48 + 48 + 28)); // episodes of 50, 50, 30 frames
    for (int64_t s : starts) {
        const auto& a = ds.meta(s);
        const auto& c = ds.meta(s + 2);
        CHECK(a.episode_id == c.episode_id);
    }
}

TEST_CASE("dataset: include_travel=false keeps only rotation frames") {
    TempDir tmp("chamber_ds_rot");
    DatasetConfig config;
    config.condition_id = 1;
    config.n_frames = 120;
    config.episode_frames = 60;
    config.include_travel = false;
    config.seed = 8;
    auto ds = EpisodeDataset::generate((tmp.path / "d").string(), config);
    for (int64_t i = 0; i < ds.size(); ++i) CHECK_FALSE(ds.meta(i).travel);
}

TEST_CASE("probe set: 24 labeled subsets") {
    TempDir tmp("chamber_probe");
    ProbeSetConfig config;
    config.frames_per_combo = 6;
    config.seed = 11;
    generate_probe_set(tmp.path.string(), config);

    int dirs = 0;
    for (const auto& e : fs::directory_iterator(tmp.path)) dirs += e.is_directory();
    CHECK(dirs == 24);

    auto pf = load_probe_set(tmp.path.string());
    CHECK(pf.n == 24 * 6);
    std::set<std::pair<int, int>> combos;
    for (int64_t i = 0; i < pf.n; ++i) combos.insert({pf.object_label[size_t(i)], pf.viewpoint[size_t(i)]});
    CHECK(combos.size() == 24);
}
