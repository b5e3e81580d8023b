#include "chamber/models/videomae.hpp"

#include <cmath>
#include <numeric>

#include "chamber/core/rng.hpp"
#include "chamber/models/transformer.hpp"

namespace chamber::models {

using nn::Tensor;

void MAEConfig::validate() const {
    if (clip_length % tube_t != 0)
        throw std::invalid_argument("clip_length must be divisible by the tube temporal extent");
    if (image_size % spatial_patch != 0)
        throw std::invalid_argument("image_size must be divisible by spatial_patch");
    if (!(mask_ratio >= 0.f && mask_ratio < 1.f))
        throw std::invalid_argument("mask ratio must lie in [0,1)");
    if (latent_dim % enc_heads != 0 || latent_dim % dec_heads != 0)
        throw std::invalid_argument("latent_dim must be divisible by the head counts");
}

MaskedClip mask_tubes(const MAEConfig& config, uint64_t seed) {
    config.validate();
    const int total = config.tubes_total();
    const int n_masked = config.tubes_masked();
    std::vector<int> order(static_cast<size_t>(total));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    MaskedClip mc;
    mc.mask_seed = seed;
    mc.masked.assign(order.begin(), order.begin() + n_masked);
    mc.visible.assign(order.begin() + n_masked, order.end());
    std::sort(mc.masked.begin(), mc.masked.end());
    std::sort(mc.visible.begin(), mc.visible.end());
    return mc;
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

MAEModel::MAEModel(const MAEConfig& config, uint64_t seed) : config_(config) {
    config_.validate();
    config_.seed = seed;
    Rng rng(Rng::derive(seed, 0x3a3));
    const int e = config_.latent_dim;
    const int total = config_.tubes_total();

    auto add = [&](const std::string& name, Tensor t) { params_.push_back({name, std::move(t)}); };
    auto add_block = [&](const std::string& pre) {
        add(pre + "ln1.g", ones_param({e}));
        add(pre + "ln1.b", zeros_param({e}));
        add(pre + "attn.wq", trunc_normal({e, e}, rng));
        add(pre + "attn.bq", zeros_param({e}));
        add(pre + "attn.wk", trunc_normal({e, e}, rng));
        add(pre + "attn.bk", zeros_param({e}));
        add(pre + "attn.wv", trunc_normal({e, e}, rng));
        add(pre + "attn.bv", zeros_param({e}));
        add(pre + "attn.wo", trunc_normal({e, e}, rng));
        add(pre + "attn.bo", zeros_param({e}));
        add(pre + "ln2.g", ones_param({e}));
        add(pre + "ln2.b", zeros_param({e}));
        add(pre + "mlp.w1", trunc_normal({e, e * config_.mlp_ratio}, rng));
        add(pre + "mlp.b1", zeros_param({e * config_.mlp_ratio}));
        add(pre + "mlp.w2", trunc_normal({e * config_.mlp_ratio, e}, rng));
        add(pre + "mlp.b2", zeros_param({e}));
    };

    add("tube_embed.w", trunc_normal({config_.tube_dim(), e}, rng));
    add("tube_embed.b", zeros_param({e}));
    add("enc_pos", trunc_normal({total, e}, rng));
    for (int l = 0; l < config_.enc_layers; ++l) add_block("enc" + std::to_string(l) + ".");
    add("enc_final_ln.g", ones_param({e}));
    add("enc_final_ln.b", zeros_param({e}));
    add("enc2dec.w", trunc_normal({e, e}, rng));
    add("enc2dec.b", zeros_param({e}));
    add("mask_token", trunc_normal({1, e}, rng));
    add("dec_pos", trunc_normal({total, e}, rng));
    for (int l = 0; l < config_.dec_layers; ++l) add_block("dec" + std::to_string(l) + ".");
    add("dec_final_ln.g", ones_param({e}));
    add("dec_final_ln.b", zeros_param({e}));
    add("dec_head.w", trunc_normal({e, config_.tube_dim()}, rng));
    add("dec_head.b", zeros_param({config_.tube_dim()}));
}

Tensor MAEModel::p(const std::string& name) const {
    for (const auto& np : params_)
        if (np.name == name) return np.tensor;
    throw std::logic_error("videomae: unknown parameter " + name);
}

namespace {

/// Copies the pixels of one tube (t, y, x, c order) into dst.
void gather_tube(const MAEConfig& cfg, const float* clip, int tube, float* dst) {
    const int grid = cfg.grid();
    const int ti = tube / (grid * grid);
    const int gy = (tube / grid) % grid;
    const int gx = tube % grid;
    const int s = cfg.image_size;
    const int64_t frame_sz = int64_t(s) * s * 3;
    for (int dt = 0; dt < cfg.tube_t; ++dt) {
        const float* frame = clip + (ti * cfg.tube_t + dt) * frame_sz;
        for (int y = 0; y < cfg.spatial_patch; ++y)
            for (int x = 0; x < cfg.spatial_patch; ++x)
                for (int c = 0; c < 3; ++c)
                    *dst++ = frame[((gy * cfg.spatial_patch + y) * int64_t(s) +
                                    (gx * cfg.spatial_patch + x)) *
                                       3 +
                                   c];
    }
}

} // namespace

Tensor MAEModel::encode_tokens(const ClipBatch& clips,
                               const std::vector<std::vector<int>>& token_ids) const {
    if (clips.width != config_.image_size || clips.height != config_.image_size ||
        clips.clip_length != config_.clip_length)
        throw std::invalid_argument("videomae: clip shape does not match config");
    const int64_t b = clips.batch;
    const int e = config_.latent_dim;
    const int td = config_.tube_dim();
    const int64_t per_clip = int64_t(config_.clip_length) * clips.width * clips.height * 3;
    const int64_t v = int64_t(token_ids[0].size());

    std::vector<float> raw(size_t(b * v * td));
    std::vector<int64_t> pos_idx(size_t(b * v));
    for (int64_t i = 0; i < b; ++i) {
        if (int64_t(token_ids[size_t(i)].size()) != v)
            throw std::invalid_argument("videomae: ragged visible sets in one batch");
        for (int64_t j = 0; j < v; ++j) {
            const int tube = token_ids[size_t(i)][size_t(j)];
            gather_tube(config_, clips.data + i * per_clip, tube,
                        raw.data() + (i * v + j) * td);
            pos_idx[size_t(i * v + j)] = tube;
        }
    }
    auto tokens = nn::add_rows(nn::matmul(Tensor::from({b * v, td}, std::move(raw)),
                                          p("tube_embed.w")),
                               p("tube_embed.b"));
    tokens = nn::add(tokens, nn::take_rows(p("enc_pos"), pos_idx));
    auto x = nn::reshape(tokens, {b, v, e});
    for (int l = 0; l < config_.enc_layers; ++l) {
        const std::string pre = "enc" + std::to_string(l) + ".";
        const BlockParams bp{p(pre + "ln1.g"),   p(pre + "ln1.b"),  p(pre + "attn.wq"),
                             p(pre + "attn.bq"), p(pre + "attn.wk"), p(pre + "attn.bk"),
                             p(pre + "attn.wv"), p(pre + "attn.bv"), p(pre + "attn.wo"),
                             p(pre + "attn.bo"), p(pre + "ln2.g"),  p(pre + "ln2.b"),
                             p(pre + "mlp.w1"),  p(pre + "mlp.b1"), p(pre + "mlp.w2"),
                             p(pre + "mlp.b2")};
        x = transformer_block(x, bp, config_.enc_heads);
    }
    if (!nn::all_finite(x)) throw std::runtime_error("videomae: non-finite encoder activations");
    return nn::layer_norm(x, p("enc_final_ln.g"), p("enc_final_ln.b"), 1e-5f); // [b, v, e]
}

MAEModel::ReconstructOut MAEModel::reconstruct(const ClipBatch& clips,
                                               const std::vector<MaskedClip>& masks) const {
    const int64_t b = clips.batch;
    if (int64_t(masks.size()) != b)
        throw std::invalid_argument("videomae: one mask per clip required");
    const int e = config_.latent_dim;
    const int total = config_.tubes_total();
    const int td = config_.tube_dim();
    const int64_t per_clip = int64_t(config_.clip_length) * clips.width * clips.height * 3;

    std::vector<std::vector<int>> visible(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) visible[size_t(i)] = masks[size_t(i)].visible;
    const int64_t v = int64_t(visible[0].size());

    auto enc = encode_tokens(clips, visible); // [b, v, e]

    // Decoder input: visible positions take projected encoder tokens, masked
    // positions take the learned mask token; both get decoder positions.
    auto enc_rows = nn::add_rows(nn::matmul(nn::reshape(enc, {b * v, e}), p("enc2dec.w")),
                                 p("enc2dec.b"));
    auto pool = nn::concat<float>({enc_rows, p("mask_token")}, 0); // [b*v + 1, e]

    std::vector<int64_t> gather(size_t(b * total), b * v); // default: mask token row
    std::vector<int64_t> dec_pos_idx(size_t(b * total));
    for (int64_t i = 0; i < b; ++i) {
        for (int64_t j = 0; j < v; ++j)
            gather[size_t(i * total + visible[size_t(i)][size_t(j)])] = i * v + j;
        for (int64_t tkn = 0; tkn < total; ++tkn) dec_pos_idx[size_t(i * total + tkn)] = tkn;
    }
    auto dec_in = nn::add(nn::take_rows(pool, gather), nn::take_rows(p("dec_pos"), dec_pos_idx));
    auto x = nn::reshape(dec_in, {b, total, e});
    for (int l = 0; l < config_.dec_layers; ++l) {
        const std::string pre = "dec" + std::to_string(l) + ".";
        const BlockParams bp{p(pre + "ln1.g"),   p(pre + "ln1.b"),  p(pre + "attn.wq"),
                             p(pre + "attn.bq"), p(pre + "attn.wk"), p(pre + "attn.bk"),
                             p(pre + "attn.wv"), p(pre + "attn.bv"), p(pre + "attn.wo"),
                             p(pre + "attn.bo"), p(pre + "ln2.g"),  p(pre + "ln2.b"),
                             p(pre + "mlp.w1"),  p(pre + "mlp.b1"), p(pre + "mlp.w2"),
                             p(pre + "mlp.b2")};
        x = transformer_block(x, bp, config_.dec_heads);
    }
    auto dec_rows = nn::layer_norm(nn::reshape(x, {b * total, e}), p("dec_final_ln.g"),
                                   p("dec_final_ln.b"), 1e-5f);
    auto pixels = nn::add_rows(nn::matmul(dec_rows, p("dec_head.w")), p("dec_head.b"));

    // MSE over masked tubes only.
    const int64_t m = int64_t(masks[0].masked.size());
    std::vector<int64_t> masked_rows(size_t(b * m));
    std::vector<float> targets(size_t(b * m * td));
    for (int64_t i = 0; i < b; ++i) {
        if (int64_t(masks[size_t(i)].masked.size()) != m)
            throw std::invalid_argument("videomae: ragged masked sets in one batch");
        for (int64_t j = 0; j < m; ++j) {
            const int tube = masks[size_t(i)].masked[size_t(j)];
            masked_rows[size_t(i * m + j)] = i * total + tube;
            gather_tube(config_, clips.data + i * per_clip, tube,
                        targets.data() + (i * m + j) * td);
        }
    }
    auto recon_masked = nn::take_rows(pixels, masked_rows);
    auto loss = nn::mse(recon_masked, Tensor::from({b * m, td}, std::move(targets)));
    if (!nn::all_finite(loss)) throw std::runtime_error("videomae: non-finite loss");
    return {loss, recon_masked};
}

Tensor MAEModel::encode_unmasked(const ClipBatch& clips) const {
    std::vector<int> all(size_t(config_.tubes_total()));
    std::iota(all.begin(), all.end(), 0);
    auto enc = encode_tokens(clips, std::vector<std::vector<int>>(size_t(clips.batch), all));
    // Mean over tokens: [b, t, e] -> [b, e, t] -> mean_last.
    return nn::mean_last(nn::permute(enc, {0, 2, 1}));
}

} // namespace chamber::models
