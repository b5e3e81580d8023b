#pragma once

#include <cmath>
#include <vector>

#include "chamber/core/ops.hpp"

namespace chamber::models {

/// One pre-norm transformer block's parameters, in declaration order.
struct BlockParams {
    nn::Tensor ln1_g, ln1_b;
    nn::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    nn::Tensor ln2_g, ln2_b;
    nn::Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

/// x: [batch, tokens, embed] -> same shape. Pre-layer-norm attention and
/// GELU MLP with residual connections. When `attn_probs_out` is non-null it
/// receives the softmax probabilities [batch, heads, tokens, tokens].
inline nn::Tensor transformer_block(nn::Tensor x, const BlockParams& p, int heads,
                                    std::vector<float>* attn_probs_out = nullptr) {
    const int64_t b = x.dim(0), t = x.dim(1), e = x.dim(2);
    const int64_t dh = e / heads;
    const float scale = 1.0f / std::sqrt(float(dh));

    auto rows = nn::reshape(x, {b * t, e});
    auto normed = nn::layer_norm(rows, p.ln1_g, p.ln1_b, 1e-5f);

    auto heads_of = [&](const nn::Tensor& w, const nn::Tensor& bias) {
        auto proj = nn::add_rows(nn::matmul(normed, w), bias);
        auto q4 = nn::permute(nn::reshape(proj, {b, t, heads, dh}), {0, 2, 1, 3});
        return nn::reshape(q4, {b * heads, t, dh});
    };
    auto q = heads_of(p.wq, p.bq);
    auto k = heads_of(p.wk, p.bk);
    auto v = heads_of(p.wv, p.bv);

    auto attn = nn::softmax_last(nn::mul_scalar(nn::bmm(q, nn::permute(k, {0, 2, 1})), scale));
    if (attn_probs_out) *attn_probs_out = attn.data();

    auto merged = nn::reshape(
        nn::permute(nn::reshape(nn::bmm(attn, v), {b, heads, t, dh}), {0, 2, 1, 3}), {b * t, e});
    auto res1 = nn::add(rows, nn::add_rows(nn::matmul(merged, p.wo), p.bo));

    auto normed2 = nn::layer_norm(res1, p.ln2_g, p.ln2_b, 1e-5f);
    auto hidden = nn::gelu(nn::add_rows(nn::matmul(normed2, p.mlp_w1), p.mlp_b1));
    auto res2 = nn::add(res1, nn::add_rows(nn::matmul(hidden, p.mlp_w2), p.mlp_b2));
    return nn::reshape(res2, {b, t, e});
}

} // namespace chamber::models
