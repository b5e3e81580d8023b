#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "chamber/sim/chamber.hpp"
#include "chamber/sim/render.hpp"
#include "chamber/sim/trajectory.hpp"

namespace chamber::sim {

struct DatasetConfig {
    int condition_id = 1;     // 1..4; binds object and rearing viewpoint
    int64_t n_frames = 8000;  // desk default, scaled from the 80k full runs
    uint64_t seed = 0;
    int resolution = 64;
    int episode_frames = 200; // 20 s per episode at 10 fps
    bool include_travel = true;
    bool alternate_displays = true;
    double fps = 10.0;
    double vfov_deg = 75.0;
    double rotation_period_s = 6.0; // one sweep across the 60-degree span
    // Probe-set generation overrides the condition binding per combination.
    int object_override = -1;    // 0/1 when set
    int viewpoint_override = -1; // 0..11 when set

    ObjectId object() const;
    int viewpoint() const;
};

struct FrameMeta {
    int64_t episode_id = 0;
    int64_t frame_index = 0; // within episode, strictly increasing
    double timestamp = 0;    // seconds, spaced exactly 1/fps
    int condition_id = 0;
    int object = 0;
    int viewpoint = 0;
    int display = 0;
    double phase_deg = 0;
    bool travel = false;
    AgentState pose;
};

/// On-disk layout under one directory:
///   manifest.json    resolved config, seed, frame count, fnv1a checksum
///   frames.bin       concatenated raw RGB frames, row-major, 3 bytes/pixel
///   frames_meta.tsv  one row per frame (episode, index, time, pose, ...)
class EpisodeDataset {
public:
    /// Renders and writes a dataset. Episodes run in parallel on independent
    /// RNG streams hash(seed, episode); output bytes are thread-count
    /// independent. Partial output is removed on failure.
    static EpisodeDataset generate(const std::string& dir, const DatasetConfig& config);

    static EpisodeDataset open(const std::string& dir, bool verify_checksum = true);

    int64_t size() const { return int64_t(meta_.size()); }
    int width() const { return config_.resolution; }
    int height() const { return config_.resolution; }
    int64_t frame_bytes() const { return int64_t(config_.resolution) * config_.resolution * 3; }

    const uint8_t* frame(int64_t i) const { return pixels_.data() + i * frame_bytes(); }
    void frame_float(int64_t i, float* dst) const; // bytes / 255
    const FrameMeta& meta(int64_t i) const { return meta_[size_t(i)]; }
    const DatasetConfig& config() const { return config_; }
    const std::string& checksum() const { return checksum_; }
    const std::string& dir() const { return dir_; }

    /// Half-open [begin, end) frame ranges per episode, in order.
    const std::vector<std::pair<int64_t, int64_t>>& episodes() const { return episodes_; }

    /// All start indices of `window` consecutive frames that stay inside one
    /// episode (the unit the contrastive sampler draws from).
    std::vector<int64_t> window_starts(int window) const;

private:
    DatasetConfig config_;
    std::string dir_;
    std::string checksum_;
    std::vector<uint8_t> pixels_;
    std::vector<FrameMeta> meta_;
    std::vector<std::pair<int64_t, int64_t>> episodes_;
};

/// Object rotation phase at time t: a triangle wave sweeping the span.
double rotation_phase(const ViewpointRange& vp, double t, double period_s);

/// Test-probe corpus: for every object x viewpoint-range combination, one
/// small dataset rendered with the same trajectory machinery.
struct ProbeSetConfig {
    int64_t frames_per_combo = 1000; // scaled from the 11,000 per combination
    uint64_t seed = 0;
    int resolution = 64;
    double fps = 10.0;
    double vfov_deg = 75.0;
};

/// Generates 24 labeled subsets under root/objA_vp00 ... objB_vp11.
void generate_probe_set(const std::string& root, const ProbeSetConfig& config);

struct ProbeFrames {
    int64_t n = 0;
    int width = 0, height = 0;
    std::vector<uint8_t> pixels;
    std::vector<int> object_label; // 0 = A, 1 = B
    std::vector<int> viewpoint;    // 0..11

    int64_t frame_bytes() const { return int64_t(width) * height * 3; }
    const uint8_t* frame(int64_t i) const { return pixels.data() + i * frame_bytes(); }
};

ProbeFrames load_probe_set(const std::string& root);

} // namespace chamber::sim
