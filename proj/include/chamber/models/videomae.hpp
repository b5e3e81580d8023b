#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chamber/core/adam.hpp"
#include "chamber/core/ops.hpp"

namespace chamber::models {

struct MAEConfig {
    int clip_length = 16;
    int temporal_stride = 1; // frames inside a clip are consecutive
    int image_size = 64;
    int spatial_patch = 8;   // 16 at 224 resolution
    int tube_t = 2;          // tubes are tube_t x patch x patch blocks
    float mask_ratio = 0.90f;
    int enc_heads = 3, enc_layers = 3;
    int dec_heads = 1, dec_layers = 1;
    int latent_dim = 128;    // desk-scale default; 512 reproduces the full runs
    int mlp_ratio = 4;
    int batch_size = 64;     // paper-scale default; desk runs use 8
    int epochs = 100;
    float lr = 3e-4f;
    uint64_t seed = 0;

    int grid() const { return image_size / spatial_patch; }
    int tubes_total() const { return (clip_length / tube_t) * grid() * grid(); }
    int tubes_masked() const {
        return int(std::lround(double(mask_ratio) * tubes_total()));
    }
    int tube_dim() const { return tube_t * spatial_patch * spatial_patch * 3; }

    void validate() const;
};

/// Tube partition of one clip: `masked` plus `visible` cover all tube
/// indices; |masked| = round(mask_ratio * total) exactly.
struct MaskedClip {
    std::vector<int> masked;
    std::vector<int> visible;
    uint64_t mask_seed = 0;
};

/// Uniform tube selection without replacement, deterministic in the seed.
MaskedClip mask_tubes(const MAEConfig& config, uint64_t seed);

/// One clip's pixels: clip_length frames, each row-major H x W x 3, [0,1].
struct ClipBatch {
    const float* data = nullptr;
    int64_t batch = 0;
    int clip_length = 0;
    int width = 0, height = 0;
};

class MAEModel {
public:
    MAEModel(const MAEConfig& config, uint64_t seed);

    const MAEConfig& config() const { return config_; }
    std::vector<nn::NamedParam>& parameters() { return params_; }
    const std::vector<nn::NamedParam>& parameters() const { return params_; }

    struct ReconstructOut {
        nn::Tensor loss;         // MSE over masked tubes only
        nn::Tensor recon_masked; // [batch * masked, tube_dim]
    };

    /// Encoder sees only visible tubes; the decoder fills masked positions
    /// with a learned token and reconstructs pixels. Loss targets are the
    /// raw masked-tube pixels.
    ReconstructOut reconstruct(const ClipBatch& clips,
                               const std::vector<MaskedClip>& masks) const;

    /// Probe features: mean-pooled encoder tokens on fully visible clips,
    /// [batch, latent_dim].
    nn::Tensor encode_unmasked(const ClipBatch& clips) const;

private:
    nn::Tensor p(const std::string& name) const;
    nn::Tensor encode_tokens(const ClipBatch& clips,
                             const std::vector<std::vector<int>>& token_ids) const;

    MAEConfig config_;
    std::vector<nn::NamedParam> params_;
};

} // namespace chamber::models
