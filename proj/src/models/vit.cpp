#include "chamber/models/vit.hpp"

#include <cmath>

#include "chamber/core/rng.hpp"
#include "chamber/models/transformer.hpp"

namespace chamber::models {

using nn::Tensor;

void ViTConfig::validate() const {
    if (image_size % patch_size != 0)
        throw std::invalid_argument("image_size " + std::to_string(image_size) +
                                    " not divisible by patch_size " + std::to_string(patch_size));
    if (embed_dim % num_heads != 0)
        throw std::invalid_argument("embed_dim " + std::to_string(embed_dim) +
                                    " not divisible by num_heads " + std::to_string(num_heads));
    if (temperature <= 0) throw std::invalid_argument("temperature must be positive");
    if (window != 2 && window != 3)
        throw std::invalid_argument("window must be 2 or 3, got " + std::to_string(window));
    if (num_layers < 1 || num_heads < 1 || embed_dim < 1 || mlp_ratio < 1)
        throw std::invalid_argument("degenerate transformer configuration");
}

ViTConfig ViTConfig::sized(int heads) {
    ViTConfig c;
    c.num_heads = heads;
    c.num_layers = heads;
    switch (heads) {
        case 1: c.embed_dim = 64; break;
        case 3: c.embed_dim = 96; break;
        case 6: c.embed_dim = 192; break;
        case 9: c.embed_dim = 288; break;
        default:
            throw std::invalid_argument("architecture family has 1, 3, 6 or 9 heads, got " +
                                        std::to_string(heads));
    }
    return c;
}

namespace {

Tensor trunc_normal(nn::Shape shape, Rng& rng, double stddev = 0.02) {
    auto t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data()) v = float(rng.truncated_normal(stddev));
    t.set_requires_grad();
    return t;
}

Tensor zeros_param(nn::Shape shape) {
    auto t = Tensor::zeros(std::move(shape));
    t.set_requires_grad();
    return t;
}

Tensor ones_param(nn::Shape shape) {
    auto t = Tensor::filled(std::move(shape), 1.f);
    t.set_requires_grad();
    return t;
}

} // namespace

ViTModel::ViTModel(const ViTConfig& config, uint64_t seed) : config_(config) {
    config_.validate();
    config_.seed = seed;
    Rng rng(Rng::derive(seed, 0x5e1f));
    const int e = config_.embed_dim;
    const int t = config_.seq_len();

    // Query/key weights start sharp and value/output/MLP weights at fan-in
    // scale. A uniform tiny init leaves attention uniform and every frame's
    // class token nearly collinear; the contrastive loss then sits on its
    // collapse plateau where float32 gradients vanish at short desk-scale
    // training budgets.
    const double qk_std = 2.25 / std::sqrt(double(e));
    const double fan_std = 0.57 / std::sqrt(double(e));
    const double mlp2_std = 0.57 / std::sqrt(double(e * config_.mlp_ratio));

    auto add = [&](const std::string& name, Tensor tensor) {
        params_.push_back({name, std::move(tensor)});
    };

    add("patch_proj.w", trunc_normal({config_.patch_dim(), e}, rng));
    add("patch_proj.b", zeros_param({e}));
    add("pos_embed", trunc_normal({t, e}, rng));
    add("cls_token", trunc_normal({1, e}, rng));
    for (int l = 0; l < config_.num_layers; ++l) {
        const std::string pre = "block" + std::to_string(l) + ".";
        add(pre + "ln1.g", ones_param({e}));
        add(pre + "ln1.b", zeros_param({e}));
        add(pre + "attn.wq", trunc_normal({e, e}, rng, qk_std));
        add(pre + "attn.bq", zeros_param({e}));
        add(pre + "attn.wk", trunc_normal({e, e}, rng, qk_std));
        add(pre + "attn.bk", zeros_param({e}));
        add(pre + "attn.wv", trunc_normal({e, e}, rng, fan_std));
        add(pre + "attn.bv", zeros_param({e}));
        add(pre + "attn.wo", trunc_normal({e, e}, rng, fan_std));
        add(pre + "attn.bo", zeros_param({e}));
        add(pre + "ln2.g", ones_param({e}));
        add(pre + "ln2.b", zeros_param({e}));
        add(pre + "mlp.w1", trunc_normal({e, e * config_.mlp_ratio}, rng, fan_std));
        add(pre + "mlp.b1", zeros_param({e * config_.mlp_ratio}));
        add(pre + "mlp.w2", trunc_normal({e * config_.mlp_ratio, e}, rng, mlp2_std));
        add(pre + "mlp.b2", zeros_param({e}));
    }
    add("final_ln.g", ones_param({e}));
    add("final_ln.b", zeros_param({e}));
    // SI-style projection head: two linear layers with a rectifier, width 128.
    add("head.w1", trunc_normal({e, e}, rng));
    add("head.b1", zeros_param({e}));
    add("head.w2", trunc_normal({e, config_.projection_dim}, rng));
    add("head.b2", zeros_param({config_.projection_dim}));
}

Tensor ViTModel::p(const std::string& name) const {
    for (const auto& np : params_)
        if (np.name == name) return np.tensor;
    throw std::logic_error("vit: unknown parameter " + name);
}

Tensor ViTModel::patchify_raw(const FrameBatch& frames) const {
    if (frames.width != config_.image_size || frames.height != config_.image_size)
        throw std::invalid_argument("patchify: frame resolution " + std::to_string(frames.width) +
                                    "x" + std::to_string(frames.height) + " does not match config " +
                                    std::to_string(config_.image_size));
    const int ps = config_.patch_size;
    const int grid = config_.image_size / ps;
    const int pd = config_.patch_dim();
    const int64_t per_frame = int64_t(config_.image_size) * config_.image_size * 3;

    std::vector<float> out(size_t(frames.batch) * config_.num_patches() * size_t(pd));
    float* dst = out.data();
    for (int64_t b = 0; b < frames.batch; ++b) {
        const float* src = frames.data + b * per_frame;
        for (int gy = 0; gy < grid; ++gy)
            for (int gx = 0; gx < grid; ++gx)
                for (int y = 0; y < ps; ++y)
                    for (int x = 0; x < ps; ++x)
                        for (int c = 0; c < 3; ++c)
                            *dst++ = src[((gy * ps + y) * int64_t(config_.image_size) +
                                          (gx * ps + x)) *
                                             3 +
                                         c];
    }
    return Tensor::from({frames.batch * config_.num_patches(), pd}, std::move(out));
}

Tensor ViTModel::embed_tokens(const FrameBatch& frames) const {
    const int64_t b = frames.batch;
    const int e = config_.embed_dim;
    const int np = config_.num_patches();
    const int t = config_.seq_len();

    auto patches = patchify_raw(frames);
    auto tokens = nn::add_rows(nn::matmul(patches, p("patch_proj.w")), p("patch_proj.b"));
    tokens = nn::reshape(tokens, {b, np, e});

    auto cls = nn::take_rows(p("cls_token"), std::vector<int64_t>(size_t(b), 0));
    auto seq = nn::concat<float>({nn::reshape(cls, {b, 1, e}), tokens}, 1);

    // Positional embedding broadcast over the batch.
    auto pos_flat = nn::reshape(p("pos_embed"), {int64_t(t) * e});
    auto with_pos = nn::add_rows(nn::reshape(seq, {b, int64_t(t) * e}), pos_flat);
    return nn::reshape(with_pos, {b, t, e});
}

ViTModel::EncodeOut ViTModel::encode(const FrameBatch& frames, AttentionCapture* capture) const {
    const int64_t b = frames.batch;
    const int e = config_.embed_dim;
    const int h = config_.num_heads;
    const int64_t t = config_.seq_len();
    const int capture_layer =
        capture ? (capture->layer < 0 ? config_.num_layers - 1 : capture->layer) : -1;

    auto x = embed_tokens(frames); // [b, t, e]

    for (int l = 0; l < config_.num_layers; ++l) {
        const std::string pre = "block" + std::to_string(l) + ".";
        const BlockParams bp{p(pre + "ln1.g"),   p(pre + "ln1.b"),  p(pre + "attn.wq"),
                             p(pre + "attn.bq"), p(pre + "attn.wk"), p(pre + "attn.bk"),
                             p(pre + "attn.wv"), p(pre + "attn.bv"), p(pre + "attn.wo"),
                             p(pre + "attn.bo"), p(pre + "ln2.g"),  p(pre + "ln2.b"),
                             p(pre + "mlp.w1"),  p(pre + "mlp.b1"), p(pre + "mlp.w2"),
                             p(pre + "mlp.b2")};
        std::vector<float> probs;
        x = transformer_block(x, bp, h, l == capture_layer ? &probs : nullptr);
        if (l == capture_layer) {
            capture->batch = int(b);
            capture->heads = h;
            capture->tokens = int(t);
            capture->probs = std::move(probs);
        }
        if (!nn::all_finite(x))
            throw std::runtime_error("vit: non-finite activations in block " + std::to_string(l));
    }

    auto final_rows = nn::layer_norm(nn::reshape(x, {b * t, e}), p("final_ln.g"), p("final_ln.b"),
                                     1e-5f);
    auto cls = nn::reshape(nn::narrow(nn::reshape(final_rows, {b, t, e}), 1, 0, 1), {b, e});

    auto hidden = nn::relu(nn::add_rows(nn::matmul(cls, p("head.w1")), p("head.b1")));
    auto z = nn::l2_normalize_rows(
        nn::add_rows(nn::matmul(hidden, p("head.w2")), p("head.b2")));
    return {cls, z};
}

} // namespace chamber::models
