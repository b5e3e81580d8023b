#include "chamber/models/cltt.hpp"

namespace chamber::models {

nn::Tensor cltt_loss(const EmbeddingBatch& batch, float tau) {
    return cltt_loss<float>(batch.z, batch.group_ids, tau);
}

std::vector<int> window_group_ids(int64_t n_windows, int window) {
    std::vector<int> ids;
    ids.reserve(size_t(n_windows * window));
    for (int64_t w = 0; w < n_windows; ++w)
        for (int k = 0; k < window; ++k) ids.push_back(int(w));
    return ids;
}

} // namespace chamber::models
