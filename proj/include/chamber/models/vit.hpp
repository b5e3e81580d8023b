#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chamber/core/adam.hpp"
#include "chamber/core/ops.hpp"

namespace chamber::models {

struct ViTConfig {
    int image_size = 64;   // 224 supported via config
    int patch_size = 8;
    int channels = 3;
    int embed_dim = 64;
    int num_heads = 1;
    int num_layers = 1;    // paired with num_heads across the size family
    int mlp_ratio = 4;
    int projection_dim = 128;
    float temperature = 0.5f;
    int window = 3;        // frames treated as mutual positives (~300 ms)
    int batch_size = 128;
    int epochs = 100;
    float lr = 3e-4f;
    uint64_t seed = 0;

    int num_patches() const {
        const int g = image_size / patch_size;
        return g * g;
    }
    int seq_len() const { return num_patches() + 1; }
    int patch_dim() const { return patch_size * patch_size * channels; }
    int head_dim() const { return embed_dim / num_heads; }

    void validate() const;

    /// The 1/3/6/9-head family; width grows with depth, desk-scale.
    static ViTConfig sized(int heads);
};

/// Softmax probabilities of one encoder block, [batch, heads, tokens, tokens].
struct AttentionCapture {
    int layer = -1; // which block to capture; -1 = last
    int batch = 0, heads = 0, tokens = 0;
    std::vector<float> probs;

    float at(int b, int h, int query, int key) const {
        return probs[size_t(((int64_t(b) * heads + h) * tokens + query) * tokens + key)];
    }
};

/// Pixel batch handed to an encoder: `batch` frames, row-major H x W x C,
/// values in [0,1].
struct FrameBatch {
    const float* data = nullptr;
    int64_t batch = 0;
    int width = 0, height = 0;
};

class ViTModel {
public:
    ViTModel(const ViTConfig& config, uint64_t seed);

    const ViTConfig& config() const { return config_; }

    /// Parameters in declaration order (checkpoint order).
    std::vector<nn::NamedParam>& parameters() { return params_; }
    const std::vector<nn::NamedParam>& parameters() const { return params_; }

    /// Raw patch extraction: [batch * num_patches, patch_dim], patches in
    /// row-major grid order, each flattened y,x,channel.
    nn::Tensor patchify_raw(const FrameBatch& frames) const;

    /// Patch projection + positional embedding + class token:
    /// [batch, seq_len, embed_dim].
    nn::Tensor embed_tokens(const FrameBatch& frames) const;

    struct EncodeOut {
        nn::Tensor cls_feature; // [batch, embed_dim] final-layer class token
        nn::Tensor z;           // [batch, projection_dim], L2-normalized
    };

    /// Full encoder pass. The class token feeds linear probes; z feeds the
    /// contrastive loss only. Throws a numeric error naming the block when
    /// activations go non-finite.
    EncodeOut encode(const FrameBatch& frames, AttentionCapture* capture = nullptr) const;

private:
    nn::Tensor p(const std::string& name) const;

    ViTConfig config_;
    std::vector<nn::NamedParam> params_;
};

} // namespace chamber::models
