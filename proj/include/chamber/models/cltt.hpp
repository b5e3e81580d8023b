#pragma once

#include <cstdint>
#include <vector>

#include "chamber/core/ops.hpp"

namespace chamber::models {

/// Projected embeddings grouped into temporal windows: rows of `z` are
/// ordered so that group_ids[i] tells which window row i belongs to. During
/// training the ids are simply row/window.
struct EmbeddingBatch {
    nn::Tensor z; // [pool, projection_dim]
    std::vector<int> group_ids;
};

/// Contrastive-through-time loss over a pool of embeddings.
///
/// For each anchor with at least one window partner:
///   numerator   = sum over its window partners of exp(cos(z_a, z_p) / tau)
///   denominator = sum over every other pool member of exp(cos(z_a, z_k) / tau)
///   loss_a      = -log(numerator / denominator)
/// Returns the mean over anchors. Rows whose window has no partner (pure
/// negatives) only appear in denominators. Nonnegative by construction:
/// numerator terms are a subset of the denominator's.
template <class T>
nn::TensorT<T> cltt_loss(nn::TensorT<T> z, const std::vector<int>& group_ids, T tau) {
    nn::check(z.rank() == 2, "cltt_loss: embeddings must be [pool, dim]");
    const int64_t pool = z.dim(0);
    nn::check(pool >= 2, "cltt_loss: pool smaller than 2");
    nn::check(int64_t(group_ids.size()) == pool, "cltt_loss: group id per row required");
    nn::check(tau > T(0), "cltt_loss: temperature must be positive");

    std::vector<int64_t> anchors;
    for (int64_t i = 0; i < pool; ++i)
        for (int64_t j = 0; j < pool; ++j)
            if (j != i && group_ids[size_t(j)] == group_ids[size_t(i)]) {
                anchors.push_back(i);
                break;
            }
    nn::check(!anchors.empty(), "cltt_loss: no window has two members");
    const int64_t n_anchors = int64_t(anchors.size());

    auto sims = nn::mul_scalar(nn::cosine_sim_matrix(z, z), T(1) / tau); // [pool, pool]
    auto anchor_rows = nn::take_rows(sims, anchors);                     // [anchors, pool]

    std::vector<uint8_t> pos_mask(size_t(n_anchors * pool), 0);
    std::vector<uint8_t> all_mask(size_t(n_anchors * pool), 0);
    for (int64_t a = 0; a < n_anchors; ++a) {
        const int64_t i = anchors[size_t(a)];
        for (int64_t j = 0; j < pool; ++j) {
            if (j == i) continue;
            all_mask[size_t(a * pool + j)] = 1;
            if (group_ids[size_t(j)] == group_ids[size_t(i)])
                pos_mask[size_t(a * pool + j)] = 1;
        }
    }
    auto lse_all = nn::masked_row_logsumexp(anchor_rows, all_mask);
    auto lse_pos = nn::masked_row_logsumexp(anchor_rows, pos_mask);
    return nn::mean_all(nn::sub(lse_all, lse_pos));
}

/// Training-batch convenience: rows grouped as consecutive windows.
nn::Tensor cltt_loss(const EmbeddingBatch& batch, float tau);

std::vector<int> window_group_ids(int64_t n_windows, int window);

} // namespace chamber::models
