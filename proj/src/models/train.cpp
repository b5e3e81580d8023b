#include "chamber/models/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "chamber/core/checkpoint.hpp"
#include "chamber/core/rng.hpp"
#include "chamber/io/table.hpp"
#include "chamber/models/cltt.hpp"

namespace chamber::models {

namespace fs = std::filesystem;

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& log) {
    io::Table t;
    t.header = {"epoch", "mean_loss", "wall_secs", "seed"};
    for (const auto& r : log)
        t.rows.push_back({std::to_string(r.epoch), io::format_double(r.mean_loss),
                          io::format_double(r.wall_secs, 3), std::to_string(r.seed)});
    t.write(path);
}

namespace {

double now_secs() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void save_ckpt(const std::string& dir, const std::string& file, const std::string& kind,
               const TrainOptions& opt, std::vector<nn::NamedParam>& params) {
    if (dir.empty()) return;
    fs::create_directories(dir);
    nn::CheckpointHeader h;
    h.model_kind = kind;
    h.config_hash = opt.config_hash;
    h.seed = opt.seed;
    nn::save_checkpoint((fs::path(dir) / file).string(), h, params);
}

void snapshot_epoch(const std::string& dir, const std::string& kind, const TrainOptions& opt,
                    std::vector<nn::NamedParam>& params, int epoch) {
    if (dir.empty() || opt.checkpoint_every <= 0) return;
    if ((epoch + 1) % opt.checkpoint_every != 0) return;
    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint_epoch%03d.ckpt", epoch);
    save_ckpt(dir, name, kind, opt, params);
}

/// Core contrastive loop shared verbatim by the ViT and CNN paths.
template <class EncodeZ>
TrainResult train_cltt_loop(const sim::EpisodeDataset& dataset, int window, float tau,
                            const std::string& kind, std::vector<nn::NamedParam>& params,
                            EncodeZ encode_z, const TrainOptions& opt) {
    auto starts = dataset.window_starts(window);
    if (int64_t(starts.size()) < opt.batch_size)
        throw std::invalid_argument(
            kind + ": dataset too small, " + std::to_string(starts.size()) + " windows for batch " +
            std::to_string(opt.batch_size));

    TrainResult result;
    if (opt.epochs == 0) {
        save_ckpt(opt.checkpoint_dir, "checkpoint_final.ckpt", kind, opt, params);
        if (!opt.checkpoint_dir.empty())
            write_train_log((fs::path(opt.checkpoint_dir) / "train_log.tsv").string(), result.log);
        return result;
    }

    nn::Adam adam(params, opt.lr);
    const int64_t fb = dataset.frame_bytes();
    std::vector<float> batch_buf;
    const auto group_ids = window_group_ids(opt.batch_size, window);

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        const double t0 = now_secs();
        Rng shuffle_rng(Rng::derive(opt.seed, 0xe90c + uint64_t(epoch)));
        shuffle_rng.shuffle(starts);
        const int64_t n_steps = int64_t(starts.size()) / opt.batch_size;
        double loss_sum = 0;

        for (int64_t step = 0; step < n_steps; ++step) {
            const int64_t frames_per_step = int64_t(opt.batch_size) * window;
            batch_buf.resize(size_t(frames_per_step * fb));
            for (int64_t w = 0; w < opt.batch_size; ++w) {
                const int64_t s = starts[size_t(step * opt.batch_size + w)];
                for (int k = 0; k < window; ++k)
                    dataset.frame_float(s + k, batch_buf.data() + (w * window + k) * fb);
            }
            FrameBatch fbatch{batch_buf.data(), frames_per_step, dataset.width(),
                              dataset.height()};
            auto z = encode_z(fbatch);
            auto loss = cltt_loss<float>(z, group_ids, tau);
            const double loss_val = loss.item();
            if (!std::isfinite(loss_val)) {
                save_ckpt(opt.checkpoint_dir, "checkpoint_diagnostic.ckpt", kind, opt, params);
                throw std::runtime_error(kind + ": non-finite loss at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(step) +
                                         (opt.checkpoint_dir.empty()
                                              ? ""
                                              : ", diagnostic checkpoint written"));
            }
            loss_sum += loss_val;
            adam.zero_grad();
            nn::backward(loss);
            adam.step();
        }
        result.log.push_back({epoch, loss_sum / double(n_steps), now_secs() - t0, opt.seed});
        snapshot_epoch(opt.checkpoint_dir, kind, opt, params, epoch);
    }

    save_ckpt(opt.checkpoint_dir, "checkpoint_final.ckpt", kind, opt, params);
    if (!opt.checkpoint_dir.empty())
        write_train_log((fs::path(opt.checkpoint_dir) / "train_log.tsv").string(), result.log);
    return result;
}

} // namespace

TrainResult train_vit_cot(ViTModel& model, const sim::EpisodeDataset& dataset,
                          const TrainOptions& options) {
    return train_cltt_loop(
        dataset, model.config().window, model.config().temperature, "vit-cot",
        model.parameters(), [&](const FrameBatch& fb) { return model.encode(fb).z; }, options);
}

TrainResult train_cnn(CNNModel& model, const sim::EpisodeDataset& dataset,
                      const TrainOptions& options) {
    return train_cltt_loop(
        dataset, model.config().window, model.config().temperature, "cnn-cltt",
        model.parameters(), [&](const FrameBatch& fb) { return model.encode(fb).z; }, options);
}

namespace {

std::vector<int64_t> clip_epoch_starts(const sim::EpisodeDataset& dataset, int clip_length) {
    // Non-overlapping cover of each episode; clips themselves are stride-1
    // consecutive frames.
    std::vector<int64_t> starts;
    for (const auto& [begin, end] : dataset.episodes())
        for (int64_t s = begin; s + clip_length <= end; s += clip_length) starts.push_back(s);
    return starts;
}

void fill_clip(const sim::EpisodeDataset& dataset, int64_t start, int clip_length, float* dst) {
    const int64_t fb = dataset.frame_bytes();
    for (int k = 0; k < clip_length; ++k) dataset.frame_float(start + k, dst + k * fb);
}

} // namespace

TrainResult train_videomae(MAEModel& model, const sim::EpisodeDataset& dataset,
                           const TrainOptions& options) {
    const MAEConfig& cfg = model.config();
    auto starts = clip_epoch_starts(dataset, cfg.clip_length);
    if (int64_t(starts.size()) < options.batch_size)
        throw std::invalid_argument("videomae: dataset too small, " +
                                    std::to_string(starts.size()) + " clips for batch " +
                                    std::to_string(options.batch_size));

    TrainResult result;
    if (options.epochs == 0) {
        save_ckpt(options.checkpoint_dir, "checkpoint_final.ckpt", "videomae", options,
                  model.parameters());
        if (!options.checkpoint_dir.empty())
            write_train_log((fs::path(options.checkpoint_dir) / "train_log.tsv").string(),
                            result.log);
        return result;
    }

    nn::Adam adam(model.parameters(), options.lr);
    const int64_t fb = dataset.frame_bytes();
    const int64_t clip_floats = int64_t(cfg.clip_length) * fb;
    std::vector<float> batch_buf;

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        const double t0 = now_secs();
        Rng shuffle_rng(Rng::derive(options.seed, 0xae10 + uint64_t(epoch)));
        shuffle_rng.shuffle(starts);
        const int64_t n_steps = int64_t(starts.size()) / options.batch_size;
        double loss_sum = 0;

        for (int64_t step = 0; step < n_steps; ++step) {
            batch_buf.resize(size_t(options.batch_size * clip_floats));
            std::vector<MaskedClip> masks;
            for (int64_t c = 0; c < options.batch_size; ++c) {
                const int64_t s = starts[size_t(step * options.batch_size + c)];
                fill_clip(dataset, s, cfg.clip_length, batch_buf.data() + c * clip_floats);
                masks.push_back(mask_tubes(
                    cfg, Rng::derive(options.seed,
                                     0x7777 + uint64_t(epoch) * 1000003 + uint64_t(s))));
            }
            ClipBatch clips{batch_buf.data(), options.batch_size, cfg.clip_length,
                            dataset.width(), dataset.height()};
            auto out = model.reconstruct(clips, masks);
            const double loss_val = out.loss.item();
            if (!std::isfinite(loss_val)) {
                save_ckpt(options.checkpoint_dir, "checkpoint_diagnostic.ckpt", "videomae",
                          options, model.parameters());
                throw std::runtime_error("videomae: non-finite loss at epoch " +
                                         std::to_string(epoch));
            }
            loss_sum += loss_val;
            adam.zero_grad();
            nn::backward(out.loss);
            adam.step();
        }
        result.log.push_back({epoch, loss_sum / double(n_steps), now_secs() - t0, options.seed});
        snapshot_epoch(options.checkpoint_dir, "videomae", options, model.parameters(), epoch);
    }

    save_ckpt(options.checkpoint_dir, "checkpoint_final.ckpt", "videomae", options,
              model.parameters());
    if (!options.checkpoint_dir.empty())
        write_train_log((fs::path(options.checkpoint_dir) / "train_log.tsv").string(), result.log);
    return result;
}

double eval_videomae_mse(const MAEModel& model, const sim::EpisodeDataset& dataset,
                         const std::vector<int64_t>& clip_starts, uint64_t mask_seed) {
    nn::NoGradGuard ng;
    const MAEConfig& cfg = model.config();
    const int64_t fb = dataset.frame_bytes();
    std::vector<float> clip(size_t(int64_t(cfg.clip_length) * fb));
    double total = 0;
    for (size_t i = 0; i < clip_starts.size(); ++i) {
        fill_clip(dataset, clip_starts[i], cfg.clip_length, clip.data());
        ClipBatch cb{clip.data(), 1, cfg.clip_length, dataset.width(), dataset.height()};
        const auto mask = mask_tubes(cfg, Rng::derive(mask_seed, uint64_t(i)));
        total += model.reconstruct(cb, {mask}).loss.item();
    }
    return total / double(clip_starts.size());
}

std::vector<float> frames_to_float(const uint8_t* frames, int64_t count, int64_t frame_bytes) {
    std::vector<float> out(size_t(count * frame_bytes));
    for (int64_t i = 0; i < count * frame_bytes; ++i) out[size_t(i)] = float(frames[i]) / 255.f;
    return out;
}

namespace {

template <class EncodeFeature>
FeatureMatrix extract_features(const uint8_t* frames, int64_t n, int width, int height,
                               int batch, EncodeFeature encode) {
    nn::NoGradGuard ng;
    FeatureMatrix fm;
    fm.n = n;
    const int64_t fb = int64_t(width) * height * 3;
    for (int64_t at = 0; at < n; at += batch) {
        const int64_t b = std::min<int64_t>(batch, n - at);
        auto floats = frames_to_float(frames + at * fb, b, fb);
        FrameBatch fbatch{floats.data(), b, width, height};
        nn::Tensor feat = encode(fbatch);
        if (fm.dim == 0) {
            fm.dim = int(feat.dim(1));
            fm.data.reserve(size_t(n * fm.dim));
        }
        fm.data.insert(fm.data.end(), feat.data().begin(), feat.data().end());
    }
    return fm;
}

} // namespace

FeatureMatrix vit_features(const ViTModel& model, const uint8_t* frames, int64_t n, int width,
                           int height, int batch) {
    return extract_features(frames, n, width, height, batch,
                            [&](const FrameBatch& fb) { return model.encode(fb).cls_feature; });
}

FeatureMatrix cnn_features(const CNNModel& model, const uint8_t* frames, int64_t n, int width,
                           int height, int batch) {
    return extract_features(frames, n, width, height, batch,
                            [&](const FrameBatch& fb) { return model.encode(fb).pooled; });
}

FeatureMatrix mae_clip_features(const MAEModel& model, const uint8_t* frames, int64_t n_frames,
                                const std::vector<int64_t>& clip_starts, int width, int height,
                                int batch) {
    nn::NoGradGuard ng;
    const MAEConfig& cfg = model.config();
    const int64_t fb = int64_t(width) * height * 3;
    const int64_t clip_floats = int64_t(cfg.clip_length) * fb;
    FeatureMatrix fm;
    fm.n = int64_t(clip_starts.size());
    std::vector<float> buf;
    for (int64_t at = 0; at < fm.n; at += batch) {
        const int64_t b = std::min<int64_t>(batch, fm.n - at);
        buf.resize(size_t(b * clip_floats));
        for (int64_t c = 0; c < b; ++c) {
            const int64_t s = clip_starts[size_t(at + c)];
            if (s + cfg.clip_length > n_frames)
                throw std::invalid_argument("mae_clip_features: clip start out of range");
            for (int k = 0; k < cfg.clip_length; ++k) {
                const uint8_t* src = frames + (s + k) * fb;
                float* dst = buf.data() + c * clip_floats + k * fb;
                for (int64_t j = 0; j < fb; ++j) dst[j] = float(src[j]) / 255.f;
            }
        }
        ClipBatch clips{buf.data(), b, cfg.clip_length, width, height};
        auto feat = model.encode_unmasked(clips);
        if (fm.dim == 0) {
            fm.dim = int(feat.dim(1));
            fm.data.reserve(size_t(fm.n * fm.dim));
        }
        fm.data.insert(fm.data.end(), feat.data().begin(), feat.data().end());
    }
    return fm;
}

} // namespace chamber::models
