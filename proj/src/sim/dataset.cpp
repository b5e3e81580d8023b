#include "chamber/sim/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "chamber/core/parallel.hpp"
#include "chamber/io/hash.hpp"
#include "chamber/io/table.hpp"

namespace chamber::sim {

namespace fs = std::filesystem;
using nlohmann::json;

ObjectId DatasetConfig::object() const {
    if (object_override >= 0) return ObjectId(object_override);
    return rearing_condition(condition_id).object;
}

int DatasetConfig::viewpoint() const {
    if (viewpoint_override >= 0) return viewpoint_override;
    return rearing_condition(condition_id).viewpoint;
}

double rotation_phase(const ViewpointRange& vp, double t, double period_s) {
    const double u = std::fmod(t, 2.0 * period_s) / period_s;
    const double tri = u < 1.0 ? u : 2.0 - u;
    return vp.phase_start_deg + vp.span_deg * tri;
}

namespace {

json config_to_json(const DatasetConfig& c) {
    const ChamberSpec chamber;
    return json{{"schema_version", 1},
                {"seed", c.seed},
                {"condition_id", c.condition_id},
                {"object", to_string(c.object())},
                {"viewpoint", c.viewpoint()},
                {"n_frames", c.n_frames},
                {"resolution", c.resolution},
                {"episode_frames", c.episode_frames},
                {"include_travel", c.include_travel},
                {"alternate_displays", c.alternate_displays},
                {"fps", c.fps},
                {"vfov_deg", c.vfov_deg},
                {"rotation_period_s", c.rotation_period_s},
                {"object_override", c.object_override},
                {"viewpoint_override", c.viewpoint_override},
                {"mesh_version", kMeshVersion},
                {"chamber",
                 {{"length", chamber.length},
                  {"width", chamber.width},
                  {"height", chamber.height},
                  {"display_width", chamber.display_width},
                  {"display_height", chamber.display_height},
                  {"wire_mesh_floor", chamber.wire_mesh_floor}}}};
}

DatasetConfig config_from_json(const json& j) {
    DatasetConfig c;
    c.seed = j.at("seed").get<uint64_t>();
    c.condition_id = j.at("condition_id").get<int>();
    c.n_frames = j.at("n_frames").get<int64_t>();
    c.resolution = j.at("resolution").get<int>();
    c.episode_frames = j.at("episode_frames").get<int>();
    c.include_travel = j.at("include_travel").get<bool>();
    c.alternate_displays = j.at("alternate_displays").get<bool>();
    c.fps = j.at("fps").get<double>();
    c.vfov_deg = j.at("vfov_deg").get<double>();
    c.rotation_period_s = j.at("rotation_period_s").get<double>();
    c.object_override = j.at("object_override").get<int>();
    c.viewpoint_override = j.at("viewpoint_override").get<int>();
    return c;
}

void remove_outputs(const std::string& dir) {
    std::error_code ec;
    for (const char* f : {"manifest.json", "frames.bin", "frames_meta.tsv"})
        fs::remove(fs::path(dir) / f, ec);
}

} // namespace

EpisodeDataset EpisodeDataset::generate(const std::string& dir, const DatasetConfig& config) {
    if (config.n_frames <= 0) throw std::invalid_argument("n_frames must be positive");
    if (config.object_override < 0 && config.viewpoint_override < 0)
        rearing_condition(config.condition_id); // validates the id
    const ViewpointRange vp = viewpoint_range(config.viewpoint());
    const ObjectId object = config.object();
    const ChamberSpec chamber;
    RenderSettings settings;
    settings.width = settings.height = config.resolution;
    settings.vfov_deg = config.vfov_deg;

    EpisodeDataset ds;
    ds.config_ = config;
    ds.dir_ = dir;

    const int64_t fb = ds.frame_bytes();
    const int64_t ef = config.episode_frames;
    const int64_t n_episodes = (config.n_frames + ef - 1) / ef;
    ds.pixels_.resize(size_t(config.n_frames * fb));
    ds.meta_.resize(size_t(config.n_frames));
    for (int64_t e = 0; e < n_episodes; ++e)
        ds.episodes_.emplace_back(e * ef, std::min<int64_t>(config.n_frames, (e + 1) * ef));

    // Episodes render in parallel on hash-derived streams; every frame is
    // written by exactly one worker.
    parallel_for(n_episodes, [&](int64_t e0, int64_t e1) {
        for (int64_t e = e0; e < e1; ++e) {
            const auto [begin, end] = ds.episodes_[size_t(e)];
            const int display = config.alternate_displays ? int(e % 2) : 0;
            TrajectoryParams tp;
            tp.fps = config.fps;
            TrajectoryCursor cursor(chamber, display, Rng::derive(config.seed, uint64_t(e)), tp);
            for (int64_t i = begin; i < end; ++i) {
                Pose pose = cursor.next();
                while (!config.include_travel && pose.travel) pose = cursor.next();
                const double t = double(i) / config.fps;
                const double phase = rotation_phase(vp, t, config.rotation_period_s);
                render_frame(chamber, object, vp, phase, pose.agent, display, settings,
                             ds.pixels_.data() + i * fb);
                FrameMeta& m = ds.meta_[size_t(i)];
                m.episode_id = e;
                m.frame_index = i - begin;
                m.timestamp = t;
                m.condition_id = config.condition_id;
                m.object = int(object);
                m.viewpoint = vp.range_id;
                m.display = display;
                m.phase_deg = phase;
                m.travel = pose.travel;
                m.pose = pose.agent;
            }
        }
    });

    Fnv1a hash;
    hash.update(ds.pixels_.data(), ds.pixels_.size());
    ds.checksum_ = hash.hex();

    fs::create_directories(dir);
    try {
        {
            std::ofstream os(fs::path(dir) / "frames.bin", std::ios::binary | std::ios::trunc);
            if (!os) throw std::runtime_error("cannot open frames.bin");
            os.write(reinterpret_cast<const char*>(ds.pixels_.data()),
                     std::streamsize(ds.pixels_.size()));
            if (!os) throw std::runtime_error("frames.bin write failed");
        }
        io::Table meta;
        meta.header = {"episode", "frame",   "timestamp", "condition", "object",
                       "viewpoint", "display", "phase_deg", "travel",    "x",
                       "y",         "heading", "tilt",      "yaw",       "roll"};
        for (const auto& m : ds.meta_)
            meta.rows.push_back({std::to_string(m.episode_id), std::to_string(m.frame_index),
                                 io::format_double(m.timestamp, 3), std::to_string(m.condition_id),
                                 std::to_string(m.object), std::to_string(m.viewpoint),
                                 std::to_string(m.display), io::format_double(m.phase_deg),
                                 m.travel ? "1" : "0", io::format_double(m.pose.x),
                                 io::format_double(m.pose.y), io::format_double(m.pose.heading_deg),
                                 io::format_double(m.pose.tilt_deg), io::format_double(m.pose.yaw_deg),
                                 io::format_double(m.pose.roll_deg)});
        meta.write((fs::path(dir) / "frames_meta.tsv").string());

        json manifest = config_to_json(config);
        manifest["frame_count"] = config.n_frames;
        manifest["checksum_fnv1a"] = ds.checksum_;
        manifest["blob_bytes"] = ds.pixels_.size();
        std::ofstream os(fs::path(dir) / "manifest.json", std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open manifest.json");
        os << manifest.dump(2) << "\n";
        if (!os) throw std::runtime_error("manifest write failed");
    } catch (const std::exception& e) {
        remove_outputs(dir);
        throw std::runtime_error("dataset generation failed in " + dir + ": " + e.what() +
                                 " (partial output removed)");
    }
    return ds;
}

EpisodeDataset EpisodeDataset::open(const std::string& dir, bool verify_checksum) {
    std::ifstream ms(fs::path(dir) / "manifest.json");
    if (!ms) throw std::runtime_error("cannot open manifest: " + dir);
    json manifest = json::parse(ms);

    EpisodeDataset ds;
    ds.config_ = config_from_json(manifest);
    ds.dir_ = dir;
    ds.checksum_ = manifest.at("checksum_fnv1a").get<std::string>();
    const int64_t n = manifest.at("frame_count").get<int64_t>();

    std::ifstream bs(fs::path(dir) / "frames.bin", std::ios::binary);
    if (!bs) throw std::runtime_error("cannot open frames.bin: " + dir);
    ds.pixels_.resize(size_t(n * ds.frame_bytes()));
    bs.read(reinterpret_cast<char*>(ds.pixels_.data()), std::streamsize(ds.pixels_.size()));
    if (!bs) throw std::runtime_error("frames.bin truncated: " + dir);

    if (verify_checksum) {
        Fnv1a hash;
        hash.update(ds.pixels_.data(), ds.pixels_.size());
        if (hash.hex() != ds.checksum_)
            throw std::runtime_error(dir + ": frame blob checksum mismatch (expected " +
                                     ds.checksum_ + ", got " + hash.hex() + ")");
    }

    const io::Table meta = io::Table::read((fs::path(dir) / "frames_meta.tsv").string());
    ds.meta_.resize(size_t(n));
    if (int64_t(meta.rows.size()) != n)
        throw std::runtime_error(dir + ": metadata row count mismatch");
    for (int64_t i = 0; i < n; ++i) {
        const auto& r = meta.rows[size_t(i)];
        FrameMeta& m = ds.meta_[size_t(i)];
        m.episode_id = std::stoll(r[0]);
        m.frame_index = std::stoll(r[1]);
        m.timestamp = std::stod(r[2]);
        m.condition_id = std::stoi(r[3]);
        m.object = std::stoi(r[4]);
        m.viewpoint = std::stoi(r[5]);
        m.display = std::stoi(r[6]);
        m.phase_deg = std::stod(r[7]);
        m.travel = r[8] == "1";
        m.pose.x = std::stod(r[9]);
        m.pose.y = std::stod(r[10]);
        m.pose.heading_deg = std::stod(r[11]);
        m.pose.tilt_deg = std::stod(r[12]);
        m.pose.yaw_deg = std::stod(r[13]);
        m.pose.roll_deg = std::stod(r[14]);
        if (m.episode_id >= int64_t(ds.episodes_.size()))
            ds.episodes_.emplace_back(i, i + 1);
        else
            ds.episodes_.back().second = i + 1;
    }
    return ds;
}

void EpisodeDataset::frame_float(int64_t i, float* dst) const {
    const uint8_t* src = frame(i);
    const int64_t fb = frame_bytes();
    for (int64_t k = 0; k < fb; ++k) dst[k] = float(src[k]) * (1.f / 255.f);
}

std::vector<int64_t> EpisodeDataset::window_starts(int window) const {
    std::vector<int64_t> starts;
    for (const auto& [begin, end] : episodes_)
        for (int64_t s = begin; s + window <= end; ++s) starts.push_back(s);
    return starts;
}

void generate_probe_set(const std::string& root, const ProbeSetConfig& config) {
    fs::create_directories(root);
    int combo = 0;
    for (int obj = 0; obj < 2; ++obj)
        for (int vp = 0; vp < 12; ++vp, ++combo) {
            DatasetConfig dc;
            dc.condition_id = 0; // probe data is not tied to a rearing condition
            dc.n_frames = config.frames_per_combo;
            dc.seed = Rng::derive(config.seed, uint64_t(combo));
            dc.resolution = config.resolution;
            dc.fps = config.fps;
            dc.vfov_deg = config.vfov_deg;
            dc.object_override = obj;
            dc.viewpoint_override = vp;
            char name[32];
            std::snprintf(name, sizeof(name), "obj%c_vp%02d", obj == 0 ? 'A' : 'B', vp);
            EpisodeDataset::generate((fs::path(root) / name).string(), dc);
        }
}

ProbeFrames load_probe_set(const std::string& root) {
    ProbeFrames pf;
    for (int obj = 0; obj < 2; ++obj)
        for (int vp = 0; vp < 12; ++vp) {
            char name[32];
            std::snprintf(name, sizeof(name), "obj%c_vp%02d", obj == 0 ? 'A' : 'B', vp);
            auto ds = EpisodeDataset::open((fs::path(root) / name).string(), false);
            if (pf.width == 0) {
                pf.width = ds.width();
                pf.height = ds.height();
            }
            pf.pixels.insert(pf.pixels.end(), ds.frame(0), ds.frame(0) + ds.size() * ds.frame_bytes());
            for (int64_t i = 0; i < ds.size(); ++i) {
                pf.object_label.push_back(obj);
                pf.viewpoint.push_back(vp);
            }
            pf.n += ds.size();
        }
    return pf;
}

} // namespace chamber::sim
