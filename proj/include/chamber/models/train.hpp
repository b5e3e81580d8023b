#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chamber/models/cnn.hpp"
#include "chamber/models/videomae.hpp"
#include "chamber/models/vit.hpp"
#include "chamber/sim/dataset.hpp"

namespace chamber::models {

struct TrainLogRow {
    int epoch = 0;
    double mean_loss = 0;
    double wall_secs = 0;
    uint64_t seed = 0;
};

/// One row per epoch: epoch, mean loss, wall time, seed.
void write_train_log(const std::string& path, const std::vector<TrainLogRow>& log);

struct TrainOptions {
    int epochs = 10;
    int batch_size = 32; // windows (contrastive) or clips (masked autoencoder)
    float lr = 3e-4f;
    uint64_t seed = 0;
    std::string checkpoint_dir; // empty: keep weights in memory only
    int checkpoint_every = 0;   // epochs between snapshots; 0 = final only
    uint64_t config_hash = 0;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
};

/// Contrastive-through-time training on temporally ordered frames. Windows
/// are `window` consecutive frames within one episode; an epoch visits every
/// window start once in seed-shuffled order. Aborts with a diagnostic
/// checkpoint if the loss goes non-finite.
TrainResult train_vit_cot(ViTModel& model, const sim::EpisodeDataset& dataset,
                          const TrainOptions& options);

/// Identical loop and loss as train_vit_cot; only the encoder differs.
TrainResult train_cnn(CNNModel& model, const sim::EpisodeDataset& dataset,
                      const TrainOptions& options);

/// Masked-autoencoder training: 16-frame clips of consecutive frames inside
/// episodes, enumerated at clip_length spacing per epoch, fresh tube masks
/// per clip per epoch.
TrainResult train_videomae(MAEModel& model, const sim::EpisodeDataset& dataset,
                           const TrainOptions& options);

/// Mean reconstruction loss of the model on fixed clips with fixed masks
/// (held-out evaluation; no gradient).
double eval_videomae_mse(const MAEModel& model, const sim::EpisodeDataset& dataset,
                         const std::vector<int64_t>& clip_starts, uint64_t mask_seed);

// ---- feature extraction (frozen encoders, no tape) -------------------------

struct FeatureMatrix {
    int64_t n = 0;
    int dim = 0;
    std::vector<float> data; // row-major [n, dim]

    const float* row(int64_t i) const { return data.data() + i * dim; }
};

/// Final-layer class-token features for raw RGB frames.
FeatureMatrix vit_features(const ViTModel& model, const uint8_t* frames, int64_t n,
                           int width, int height, int batch = 64);

/// Global-average-pooled features.
FeatureMatrix cnn_features(const CNNModel& model, const uint8_t* frames, int64_t n,
                           int width, int height, int batch = 64);

/// Mean-pooled unmasked encoder tokens per clip. `clip_starts[i]` indexes
/// the first frame of clip i inside `frames`.
FeatureMatrix mae_clip_features(const MAEModel& model, const uint8_t* frames, int64_t n_frames,
                                const std::vector<int64_t>& clip_starts, int width, int height,
                                int batch = 8);

std::vector<float> frames_to_float(const uint8_t* frames, int64_t count, int64_t frame_bytes);

} // namespace chamber::models
