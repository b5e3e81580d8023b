#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "chamber/core/checkpoint.hpp"
#include "chamber/models/cltt.hpp"
#include "chamber/models/train.hpp"
#include "chamber/models/vit.hpp"
#include "chamber/sim/dataset.hpp"
#include "oracles.hpp"

using namespace chamber;
using namespace chamber::models;
namespace fs = std::filesystem;

namespace {

const std::vector<float>& weight(const ViTModel& m, const std::string& name) {
    for (const auto& p : m.parameters())
        if (p.name == name) return p.tensor.data();
    throw std::runtime_error("missing weight " + name);
}

std::vector<float> random_frame(Rng& rng, int size) {
    std::vector<float> f(size_t(size) * size * 3);
    for (auto& v : f) v = float(rng.uniform());
    return f;
}

/// Straight-line double-precision re-evaluation of the one-head, one-layer
/// encoder, independent of the tensor library.
struct TinyVitOracle {
    const ViTModel& m;
    int E, T, P, PD;

    explicit TinyVitOracle(const ViTModel& model) : m(model) {
        E = model.config().embed_dim;
        T = model.config().seq_len();
        P = model.config().num_patches();
        PD = model.config().patch_dim();
        REQUIRE(model.config().num_heads == 1);
        REQUIRE(model.config().num_layers == 1);
    }

    static void layer_norm(std::vector<double>& rows, int n, int d,
                           const std::vector<float>& g, const std::vector<float>& b) {
        for (int r = 0; r < n; ++r) {
            double mean = 0, var = 0;
            for (int j = 0; j < d; ++j) mean += rows[size_t(r * d + j)];
            mean /= d;
            for (int j = 0; j < d; ++j) {
                const double c = rows[size_t(r * d + j)] - mean;
                var += c * c;
            }
            var /= d;
            const double inv = 1.0 / std::sqrt(var + 1e-5);
            for (int j = 0; j < d; ++j)
                rows[size_t(r * d + j)] =
                    (rows[size_t(r * d + j)] - mean) * inv * g[size_t(j)] + b[size_t(j)];
        }
    }

    // x[n,a] * w[a,b] + bias
    static std::vector<double> affine(const std::vector<double>& x, int n, int a,
                                      const std::vector<float>& w, const std::vector<float>& b,
                                      int bdim) {
        std::vector<double> out(size_t(n) * size_t(bdim), 0.0);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < a; ++k) {
                const double xv = x[size_t(i * a + k)];
                for (int j = 0; j < bdim; ++j) out[size_t(i * bdim + j)] += xv * w[size_t(k * bdim + j)];
            }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < bdim; ++j) out[size_t(i * bdim + j)] += b[size_t(j)];
        return out;
    }

    /// frame: one image, H x W x 3 in [0,1]. Returns the normalized z.
    std::vector<double> encode_z(const std::vector<float>& frame, std::vector<double>* cls_out) {
        const int s = m.config().image_size, ps = m.config().patch_size, grid = s / ps;
        // Patchify + projection.
        std::vector<double> patches(size_t(P) * size_t(PD));
        int at = 0;
        for (int gy = 0; gy < grid; ++gy)
            for (int gx = 0; gx < grid; ++gx)
                for (int y = 0; y < ps; ++y)
                    for (int x = 0; x < ps; ++x)
                        for (int c = 0; c < 3; ++c)
                            patches[size_t(at++)] =
                                frame[size_t(((gy * ps + y) * s + (gx * ps + x)) * 3 + c)];
        auto tokens = affine(patches, P, PD, weight(m, "patch_proj.w"), weight(m, "patch_proj.b"), E);

        // Class token + positional embedding.
        std::vector<double> x(size_t(T) * size_t(E));
        const auto& cls = weight(m, "cls_token");
        const auto& pos = weight(m, "pos_embed");
        for (int j = 0; j < E; ++j) x[size_t(j)] = cls[size_t(j)] + pos[size_t(j)];
        for (int t = 1; t < T; ++t)
            for (int j = 0; j < E; ++j)
                x[size_t(t * E + j)] = tokens[size_t((t - 1) * E + j)] + pos[size_t(t * E + j)];

        // Single pre-norm block.
        std::vector<double> normed = x;
        layer_norm(normed, T, E, weight(m, "block0.ln1.g"), weight(m, "block0.ln1.b"));
        auto q = affine(normed, T, E, weight(m, "block0.attn.wq"), weight(m, "block0.attn.bq"), E);
        auto k = affine(normed, T, E, weight(m, "block0.attn.wk"), weight(m, "block0.attn.bk"), E);
        auto v = affine(normed, T, E, weight(m, "block0.attn.wv"), weight(m, "block0.attn.bv"), E);
        const double scale = 1.0 / std::sqrt(double(E));
        std::vector<double> ctx(size_t(T) * size_t(E), 0.0);
        for (int i = 0; i < T; ++i) {
            std::vector<double> row(static_cast<size_t>(T));
            double mx = -1e30;
            for (int j = 0; j < T; ++j) {
                double dot = 0;
                for (int d = 0; d < E; ++d) dot += q[size_t(i * E + d)] * k[size_t(j * E + d)];
                row[size_t(j)] = dot * scale;
                mx = std::max(mx, row[size_t(j)]);
            }
            double sum = 0;
            for (int j = 0; j < T; ++j) sum += row[size_t(j)] = std::exp(row[size_t(j)] - mx);
            for (int j = 0; j < T; ++j)
                for (int d = 0; d < E; ++d)
                    ctx[size_t(i * E + d)] += row[size_t(j)] / sum * v[size_t(j * E + d)];
        }
        auto attn_out = affine(ctx, T, E, weight(m, "block0.attn.wo"), weight(m, "block0.attn.bo"), E);
        for (size_t i = 0; i < x.size(); ++i) x[i] += attn_out[i];

        std::vector<double> n2 = x;
        layer_norm(n2, T, E, weight(m, "block0.ln2.g"), weight(m, "block0.ln2.b"));
        auto h1 = affine(n2, T, E, weight(m, "block0.mlp.w1"), weight(m, "block0.mlp.b1"), 4 * E);
        for (auto& u : h1) u = 0.5 * u * (1.0 + std::erf(u * 0.7071067811865475));
        auto h2 = affine(h1, T, 4 * E, weight(m, "block0.mlp.w2"), weight(m, "block0.mlp.b2"), E);
        for (size_t i = 0; i < x.size(); ++i) x[i] += h2[i];

        layer_norm(x, T, E, weight(m, "final_ln.g"), weight(m, "final_ln.b"));
        std::vector<double> cls_row(x.begin(), x.begin() + E);
        if (cls_out) *cls_out = cls_row;

        auto hid = affine(cls_row, 1, E, weight(m, "head.w1"), weight(m, "head.b1"), E);
        for (auto& u : hid) u = std::max(u, 0.0);
        auto z = affine(hid, 1, E, weight(m, "head.w2"), weight(m, "head.b2"), 128);
        double nrm = 0;
        for (double u : z) nrm += u * u;
        nrm = std::sqrt(nrm);
        for (auto& u : z) u /= nrm;
        return z;
    }
};

} // namespace

TEST_CASE("config: validation and size family") {
    ViTConfig bad;
    bad.image_size = 60; // not divisible by 8
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    ViTConfig bad2;
    bad2.embed_dim = 65;
    CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
    ViTConfig bad3;
    bad3.window = 5;
    CHECK_THROWS_AS(bad3.validate(), std::invalid_argument);

    for (int heads : {1, 3, 6, 9}) {
        auto c = ViTConfig::sized(heads);
        CHECK(c.num_layers == heads); // depth pairs with head count
        CHECK(c.embed_dim % heads == 0);
        c.validate();
    }
    CHECK_THROWS_AS(ViTConfig::sized(4), std::invalid_argument);
}

TEST_CASE("patchify: counts and shapes") {
    ViTConfig c = ViTConfig::sized(1);
    ViTModel m(c, 1);
    Rng rng(2);
    auto frame = random_frame(rng, 64);
    FrameBatch fb{frame.data(), 1, 64, 64};
    auto patches = m.patchify_raw(fb);
    CHECK(patches.shape() == nn::Shape{64, 192}); // 8x8 grid of 8*8*3 patches
    auto tokens = m.embed_tokens(fb);
    CHECK(tokens.shape() == nn::Shape{1, 65, 64}); // class token prepended

    // 224x224 option: 784 patches, sequence length 785.
    ViTConfig c224 = ViTConfig::sized(1);
    c224.image_size = 224;
    CHECK(c224.num_patches() == 784);
    CHECK(c224.seq_len() == 785);

    std::vector<float> small(32 * 32 * 3, 0.f);
    FrameBatch bad{small.data(), 1, 32, 32};
    CHECK_THROWS_AS(m.patchify_raw(bad), std::invalid_argument);
}

TEST_CASE("patchify: zero frame with zero bias leaves positional embeddings") {
    ViTModel m(ViTConfig::sized(1), 3);
    std::vector<float> zero(size_t(64) * 64 * 3, 0.f);
    FrameBatch fb{zero.data(), 1, 64, 64};
    auto tokens = m.embed_tokens(fb); // bias initializes to zero
    const auto& pos = weight(m, "pos_embed");
    const auto& cls = weight(m, "cls_token");
    const int e = 64;
    for (int j = 0; j < e; ++j)
        CHECK(tokens.data()[size_t(j)] == doctest::Approx(cls[size_t(j)] + pos[size_t(j)]));
    for (int t = 1; t < 65; ++t)
        for (int j = 0; j < e; ++j)
            CHECK(tokens.data()[size_t(t * e + j)] == doctest::Approx(pos[size_t(t * e + j)]));
}

TEST_CASE("encode: unit norm, determinism, reference oracle") {
    ViTModel m(ViTConfig::sized(1), 7);
    Rng rng(5);
    auto f1 = random_frame(rng, 64);
    auto f2 = random_frame(rng, 64);

    // Two identical frames in one batch give bit-equal embeddings.
    std::vector<float> batch;
    batch.insert(batch.end(), f1.begin(), f1.end());
    batch.insert(batch.end(), f1.begin(), f1.end());
    batch.insert(batch.end(), f2.begin(), f2.end());
    FrameBatch fb{batch.data(), 3, 64, 64};
    auto out = m.encode(fb);
    CHECK(out.z.shape() == nn::Shape{3, 128});
    CHECK(out.cls_feature.shape() == nn::Shape{3, 64});
    for (int b = 0; b < 3; ++b) {
        double nrm = 0;
        for (int j = 0; j < 128; ++j) {
            const double v = out.z.data()[size_t(b * 128 + j)];
            nrm += v * v;
        }
        CHECK(std::fabs(std::sqrt(nrm) - 1.0) < 1e-5);
    }
    CHECK(std::memcmp(out.z.data().data(), out.z.data().data() + 128, 128 * sizeof(float)) == 0);

    // Straight-line double-precision oracle.
    TinyVitOracle oracle(m);
    std::vector<double> cls_ref;
    auto z_ref = oracle.encode_z(f1, &cls_ref);
    for (int j = 0; j < 128; ++j)
        CHECK(std::fabs(out.z.data()[size_t(j)] - z_ref[size_t(j)]) < 1e-5);
    for (int j = 0; j < 64; ++j)
        CHECK(std::fabs(out.cls_feature.data()[size_t(j)] - cls_ref[size_t(j)]) < 1e-5);
}

TEST_CASE("encode: output depends on patch order") {
    ViTModel m(ViTConfig::sized(1), 11);
    Rng rng(13);
    auto frame = random_frame(rng, 64);
    // Swap two 8x8 patch blocks in pixel space; positional embeddings stay.
    auto swapped = frame;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c)
                std::swap(swapped[size_t((y * 64 + x) * 3 + c)],
                          swapped[size_t(((y + 32) * 64 + (x + 16)) * 3 + c)]);
    FrameBatch a{frame.data(), 1, 64, 64};
    FrameBatch b{swapped.data(), 1, 64, 64};
    auto fa = m.encode(a).cls_feature;
    auto fc = m.encode(b).cls_feature;
    double diff = 0;
    for (int j = 0; j < 64; ++j) diff += std::fabs(fa.data()[size_t(j)] - fc.data()[size_t(j)]);
    CHECK(diff > 1e-4);
}

TEST_CASE("cltt loss: forced analytic examples") {
    // All-identical pool of 4 (anchor + 2 positives + 1 negative), window 3.
    std::vector<float> zs(4 * 8, 0.f);
    for (int i = 0; i < 4; ++i) zs[size_t(i * 8 + 2)] = 0.7f;
    EmbeddingBatch batch{nn::Tensor::from({4, 8}, zs), {0, 0, 0, 1}};
    auto loss = cltt_loss(batch, 0.5f);
    CHECK(loss.item() == doctest::Approx(std::log(1.5)).epsilon(1e-6));

    // Double-precision check at 1e-9.
    std::vector<double> zd(4 * 8, 0.0);
    for (int i = 0; i < 4; ++i) zd[size_t(i * 8 + 2)] = 0.7;
    auto lossd = cltt_loss<double>(nn::TensorD::from({4, 8}, zd), {0, 0, 0, 1}, 0.5);
    CHECK(std::fabs(lossd.item() - std::log(1.5)) < 1e-9);

    // Window 2: positive at cosine 1, lone negative at cosine -1, tau 0.5.
    auto z2 = nn::TensorD::from({3, 2}, {1, 0, 1, 0, -1, 0});
    auto loss2 = cltt_loss<double>(z2, {0, 0, 1}, 0.5);
    const double e2 = std::exp(2.0), em2 = std::exp(-2.0);
    CHECK(loss2.item() == doctest::Approx(-std::log(e2 / (e2 + em2))).epsilon(1e-9));

    CHECK_THROWS_AS(cltt_loss<double>(nn::TensorD::from({1, 2}, {1, 0}), {0}, 0.5),
                    std::invalid_argument);
    CHECK_THROWS_AS(cltt_loss<double>(z2, {0, 1, 2}, 0.5), std::invalid_argument);
}

TEST_CASE("cltt loss: brute-force oracle over random batches") {
    Rng rng(17);
    for (int rep = 0; rep < 100; ++rep) {
        const int window = rep % 2 == 0 ? 3 : 2;
        const int n_windows = 2 + int(rng.uniform_int(6));
        const int dim = 4 + int(rng.uniform_int(12));
        const int pool = n_windows * window;
        std::vector<std::vector<double>> z(static_cast<size_t>(pool), std::vector<double>(static_cast<size_t>(dim)));
        std::vector<double> flat;
        for (auto& row : z)
            for (auto& v : row) {
                v = rng.uniform(-2, 2);
                flat.push_back(v);
            }
        auto loss = cltt_loss<double>(nn::TensorD::from({pool, dim}, flat),
                                      window_group_ids(n_windows, window), 0.5);
        const double ref = oracle::brute_force_cltt(z, window, 0.5);
        CHECK(std::fabs(loss.item() - ref) < 1e-6);
        CHECK(loss.item() >= 0.0); // numerator terms are a denominator subset
    }
}

TEST_CASE("cltt loss: invariances and gradient") {
    Rng rng(23);
    const int pool = 9, dim = 6;
    std::vector<double> flat(pool * dim);
    for (auto& v : flat) v = rng.uniform(-1, 1);
    const auto groups = window_group_ids(3, 3);
    const double base =
        cltt_loss<double>(nn::TensorD::from({pool, dim}, flat), groups, 0.5).item();

    SUBCASE("window permutation invariance") {
        // Swap windows 0 and 2 wholesale.
        auto perm = flat;
        for (int k = 0; k < 3 * dim; ++k) std::swap(perm[size_t(k)], perm[size_t(6 * dim + k)]);
        const double swapped =
            cltt_loss<double>(nn::TensorD::from({pool, dim}, perm), groups, 0.5).item();
        CHECK(std::fabs(base - swapped) < 1e-6);
    }

    SUBCASE("positive scaling invariance") {
        auto scaled = flat;
        for (int k = 0; k < dim; ++k) scaled[size_t(4 * dim + k)] *= 37.5; // one embedding
        const double s =
            cltt_loss<double>(nn::TensorD::from({pool, dim}, scaled), groups, 0.5).item();
        CHECK(std::fabs(base - s) < 1e-6);
    }

    SUBCASE("gradient matches finite differences") {
        auto z = nn::TensorD::from({pool, dim}, flat);
        z.set_requires_grad();
        auto loss = cltt_loss<double>(z, groups, 0.5);
        nn::backward(loss);
        auto eval = [&](const std::vector<std::vector<double>>& in) {
            nn::NoGradGuard ng;
            return cltt_loss<double>(nn::TensorD::from({pool, dim}, in[0]), groups, 0.5).item();
        };
        auto res = oracle::finite_diff_check(eval, {flat}, {z.grad()});
        CHECK(res.max_rel_err < 1e-6);
    }
}

TEST_CASE("training: epochs=0 returns initialization, checkpoints round-trip") {
    const auto tmp = fs::temp_directory_path() / "vitcot_train0";
    fs::remove_all(tmp);

    sim::DatasetConfig dc;
    dc.condition_id = 1;
    dc.n_frames = 40;
    dc.episode_frames = 20;
    dc.seed = 9;
    auto ds = sim::EpisodeDataset::generate((tmp / "data").string(), dc);

    ViTConfig c = ViTConfig::sized(1);
    c.epochs = 0;
    ViTModel model(c, 42);
    const auto init_weights = weight(model, "patch_proj.w");

    TrainOptions opt;
    opt.epochs = 0;
    opt.batch_size = 4;
    opt.seed = 42;
    opt.checkpoint_dir = (tmp / "ckpt").string();
    auto result = train_vit_cot(model, ds, opt);
    CHECK(result.log.empty());
    CHECK(weight(model, "patch_proj.w") == init_weights);

    ViTModel loaded(c, 777); // different init, then overwritten by the checkpoint
    auto header = nn::load_checkpoint((tmp / "ckpt" / "checkpoint_final.ckpt").string(),
                                      loaded.parameters());
    CHECK(header.model_kind == "vit-cot");
    CHECK(weight(loaded, "patch_proj.w") == init_weights);

    // Dataset smaller than one batch is a configuration error.
    TrainOptions too_big = opt;
    too_big.epochs = 1;
    too_big.batch_size = 1000;
    CHECK_THROWS_AS(train_vit_cot(model, ds, too_big), std::invalid_argument);
    fs::remove_all(tmp);
}

TEST_CASE("training: contrastive loss decreases on a small desk run") {
    const auto tmp = fs::temp_directory_path() / "vitcot_mini";
    fs::remove_all(tmp);
    sim::DatasetConfig dc;
    dc.condition_id = 1;
    dc.n_frames = 320;
    dc.episode_frames = 80;
    dc.seed = 31;
    auto ds = sim::EpisodeDataset::generate((tmp / "data").string(), dc);

    ViTConfig c = ViTConfig::sized(1);
    c.embed_dim = 32; // narrow test model, same architecture
    ViTModel model(c, 5);
    TrainOptions opt;
    opt.epochs = 3;
    opt.batch_size = 16;
    opt.lr = 1e-3f;
    opt.seed = 5;
    auto result = train_vit_cot(model, ds, opt);
    REQUIRE(result.log.size() == 3);
    CHECK(result.log.back().mean_loss < result.log.front().mean_loss);
    fs::remove_all(tmp);
}
