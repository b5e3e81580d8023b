#include "chamber/models/cnn.hpp"

#include <cmath>

#include "chamber/core/rng.hpp"

namespace chamber::models {

using nn::Tensor;

void CNNConfig::validate() const {
    if (image_size % 8 != 0)
        throw std::invalid_argument("cnn: image_size must be a multiple of 8");
    if (stage1_channels < 1 || stage2_channels < 1)
        throw std::invalid_argument("cnn: channel widths must be positive");
}

namespace {

Tensor conv_init(nn::Shape shape, Rng& rng) {
    // He-style fan-in scaling keeps activations stable without norm layers.
    int64_t fan_in = shape[1] * shape[2] * shape[3];
    const double stddev = std::sqrt(2.0 / double(fan_in));
    auto t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data()) v = float(rng.truncated_normal(stddev));
    t.set_requires_grad();
    return t;
}

Tensor linear_init(nn::Shape shape, Rng& rng) {
    auto t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data()) v = float(rng.truncated_normal(0.02));
    t.set_requires_grad();
    return t;
}

Tensor zeros_param(nn::Shape shape) {
    auto t = Tensor::zeros(std::move(shape));
    t.set_requires_grad();
    return t;
}

} // namespace

CNNModel::CNNModel(const CNNConfig& config, uint64_t seed) : config_(config) {
    config_.validate();
    config_.seed = seed;
    Rng rng(Rng::derive(seed, 0xc4d));
    const int c1 = config_.stage1_channels, c2 = config_.stage2_channels;

    auto add = [&](const std::string& name, Tensor t) { params_.push_back({name, std::move(t)}); };
    auto conv = [&](const std::string& name, int out_ch, int in_ch, int k) {
        add(name + ".w", conv_init({out_ch, in_ch, k, k}, rng));
        add(name + ".b", zeros_param({out_ch}));
    };

    conv("stem", c1, 3, 7); // stride 4 in encode: 64 -> 16
    for (int blk = 0; blk < 2; ++blk) {
        conv("stage1.b" + std::to_string(blk) + ".conv1", c1, c1, 3);
        conv("stage1.b" + std::to_string(blk) + ".conv2", c1, c1, 3);
    }
    conv("stage2.b0.conv1", c2, c1, 3); // stride 2: 16 -> 8
    conv("stage2.b0.conv2", c2, c2, 3);
    conv("stage2.b0.shortcut", c2, c1, 1); // stride-2 projection
    conv("stage2.b1.conv1", c2, c2, 3);
    conv("stage2.b1.conv2", c2, c2, 3);

    add("head.w1", linear_init({c2, c2}, rng));
    add("head.b1", zeros_param({c2}));
    add("head.w2", linear_init({c2, config_.projection_dim}, rng));
    add("head.b2", zeros_param({config_.projection_dim}));
}

Tensor CNNModel::p(const std::string& name) const {
    for (const auto& np : params_)
        if (np.name == name) return np.tensor;
    throw std::logic_error("cnn: unknown parameter " + name);
}

int CNNModel::weighted_layer_count() const {
    int count = 0;
    for (const auto& np : params_)
        if (np.tensor.rank() == 4) ++count; // convolution kernels
    return count;
}

CNNModel::EncodeOut CNNModel::encode(const FrameBatch& frames) const {
    if (frames.width != config_.image_size || frames.height != config_.image_size)
        throw std::invalid_argument("cnn: frame resolution mismatch");
    const int64_t b = frames.batch;
    const int s = config_.image_size;
    const int c2 = config_.stage2_channels;

    // HWC -> CHW.
    std::vector<float> chw(size_t(b) * 3 * s * s);
    for (int64_t i = 0; i < b; ++i) {
        const float* src = frames.data + i * int64_t(s) * s * 3;
        float* dst = chw.data() + i * int64_t(3) * s * s;
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x)
                for (int c = 0; c < 3; ++c)
                    dst[(c * s + y) * s + x] = src[(y * int64_t(s) + x) * 3 + c];
    }
    auto x = Tensor::from({b, 3, s, s}, std::move(chw));

    auto conv = [&](Tensor in, const std::string& name, int stride, int pad) {
        return nn::conv2d(in, p(name + ".w"), p(name + ".b"), stride, pad);
    };

    auto h = nn::relu(conv(x, "stem", 4, 3)); // [b, c1, 16, 16]

    for (int blk = 0; blk < 2; ++blk) {
        const std::string pre = "stage1.b" + std::to_string(blk) + ".";
        auto y = nn::relu(conv(h, pre + "conv1", 1, 1));
        y = conv(y, pre + "conv2", 1, 1);
        h = nn::relu(nn::add(h, y));
    }
    {
        auto y = nn::relu(conv(h, "stage2.b0.conv1", 2, 1));
        y = conv(y, "stage2.b0.conv2", 1, 1);
        auto shortcut = conv(h, "stage2.b0.shortcut", 2, 0);
        h = nn::relu(nn::add(shortcut, y));
    }
    {
        auto y = nn::relu(conv(h, "stage2.b1.conv1", 1, 1));
        y = conv(y, "stage2.b1.conv2", 1, 1);
        h = nn::relu(nn::add(h, y));
    }

    if (!nn::all_finite(h)) throw std::runtime_error("cnn: non-finite activations after stage2");

    const int64_t spatial = (s / 8) * (s / 8);
    auto pooled = nn::mean_last(nn::reshape(h, {b, c2, spatial})); // global average pool

    auto hidden = nn::relu(nn::add_rows(nn::matmul(pooled, p("head.w1")), p("head.b1")));
    auto z = nn::l2_normalize_rows(nn::add_rows(nn::matmul(hidden, p("head.w2")), p("head.b2")));
    return {pooled, z};
}

} // namespace chamber::models
