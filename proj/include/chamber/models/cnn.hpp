#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chamber/core/adam.hpp"
#include "chamber/core/ops.hpp"
#include "chamber/models/vit.hpp" // FrameBatch

namespace chamber::models {

/// Compact residual network: an 18-layer design with the last two residual
/// stages removed. Weighted-layer audit (fixed convention): stem conv,
/// eight 3x3 stage convs, one 1x1 projection shortcut = 10 convolutions.
/// The two-linear projection head sits on top of global average pooling and
/// is not part of the encoder count.
struct CNNConfig {
    int image_size = 64;
    int stage1_channels = 32; // desk-scale widths
    int stage2_channels = 64;
    int projection_dim = 128;
    int window = 3;
    float temperature = 0.5f;
    int batch_size = 512; // paper-scale default; desk runs use 64
    int epochs = 100;
    float lr = 3e-4f;
    uint64_t seed = 0;

    void validate() const;
};

class CNNModel {
public:
    CNNModel(const CNNConfig& config, uint64_t seed);

    const CNNConfig& config() const { return config_; }
    std::vector<nn::NamedParam>& parameters() { return params_; }
    const std::vector<nn::NamedParam>& parameters() const { return params_; }

    /// Number of weighted (convolution) layers in the encoder.
    int weighted_layer_count() const;

    struct EncodeOut {
        nn::Tensor pooled; // [batch, stage2_channels] global-average-pooled feature
        nn::Tensor z;      // [batch, projection_dim], L2-normalized
    };

    EncodeOut encode(const FrameBatch& frames) const;

private:
    nn::Tensor p(const std::string& name) const;

    CNNConfig config_;
    std::vector<nn::NamedParam> params_;
};

} // namespace chamber::models
