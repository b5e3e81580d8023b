#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "chamber/core/adam.hpp"
#include "chamber/core/checkpoint.hpp"
#include "chamber/core/ops.hpp"
#include "chamber/core/rng.hpp"
#include "oracles.hpp"

using namespace chamber;
using namespace chamber::nn;

namespace {

std::vector<double> random_vec(Rng& rng, int64_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

TensorD param(const Shape& shape, const std::vector<double>& data) {
    auto t = TensorD::from(shape, data);
    t.set_requires_grad();
    return t;
}

// Reduces an op output to a scalar with fixed weights so every output
// element contributes a distinct gradient path.
TensorD weighted_sum(TensorD t, const std::vector<double>& w) {
    auto wt = TensorD::from(t.shape(), w);
    return sum_all(mul(t, wt));
}

} // namespace

TEST_CASE("matmul examples") {
    auto a = TensorD::from({2, 2}, {1, 2, 3, 4});
    auto eye = TensorD::from({2, 2}, {1, 0, 0, 1});
    auto c = matmul(a, eye);
    CHECK(c.data() == std::vector<double>{1, 2, 3, 4});

    auto u = TensorD::from({1, 2}, {1, 0});
    auto v = TensorD::from({2, 1}, {2, 3});
    CHECK(matmul(u, v).data()[0] == doctest::Approx(2.0));

    CHECK_THROWS_WITH_AS(matmul(TensorD::zeros({2, 3}), TensorD::zeros({2, 3})),
                         doctest::Contains("[2x3]"), std::invalid_argument);
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(7);
    auto av = random_vec(rng, 12), bv = random_vec(rng, 8), wv = random_vec(rng, 6);
    auto A = param({3, 4}, av);
    auto B = param({4, 2}, bv);
    auto loss = weighted_sum(matmul(A, B), wv);
    backward(loss);

    auto eval = [&](const std::vector<std::vector<double>>& in) {
        NoGradGuard ng;
        auto a2 = TensorD::from({3, 4}, in[0]);
        auto b2 = TensorD::from({4, 2}, in[1]);
        auto w2 = TensorD::from({3, 2}, wv);
        return sum_all(mul(matmul(a2, b2), w2)).item();
    };
    auto res = oracle::finite_diff_check(eval, {av, bv}, {A.grad(), B.grad()});
    CHECK(res.checked == 20);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("softmax examples and properties") {
    auto s = softmax_last(TensorD::from({2}, {0, 0}));
    CHECK(s.data()[0] == doctest::Approx(0.5));
    CHECK(s.data()[1] == doctest::Approx(0.5));

    auto big = softmax_last(TensorD::from({2}, {1000, 1000}));
    CHECK(big.data()[0] == doctest::Approx(0.5)); // no overflow under max-subtraction

    // High-precision oracle for [1,2,3].
    long double e1 = expl(1.0L), e2 = expl(2.0L), e3 = expl(3.0L), z = e1 + e2 + e3;
    auto s3 = softmax_last(TensorD::from({3}, {1, 2, 3}));
    CHECK(std::fabs(s3.data()[0] - double(e1 / z)) < 1e-7);
    CHECK(std::fabs(s3.data()[1] - double(e2 / z)) < 1e-7);
    CHECK(std::fabs(s3.data()[2] - double(e3 / z)) < 1e-7);

    // Rows sum to 1 and are invariant to additive shifts.
    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        auto xv = random_vec(rng, 8, -5, 5);
        auto a = softmax_last(TensorD::from({8}, xv));
        double total = 0;
        for (double x : a.data()) {
            CHECK(x >= 0.0);
            total += x;
        }
        CHECK(std::fabs(total - 1.0) < 1e-6);
        const double shift = rng.uniform(-100, 100);
        auto shifted = xv;
        for (auto& x : shifted) x += shift;
        auto b = softmax_last(TensorD::from({8}, shifted));
        for (size_t i = 0; i < 8; ++i) CHECK(std::fabs(a.data()[i] - b.data()[i]) < 1e-6);
    }
}

TEST_CASE("layer_norm examples") {
    auto g1 = TensorD::from({4}, {1, 1, 1, 1});
    auto b0 = TensorD::from({4}, {0, 0, 0, 0});
    auto y = layer_norm(TensorD::from({1, 4}, {5, 5, 5, 5}), g1, b0, 1e-5);
    for (double v : y.data()) CHECK(std::fabs(v) < 1e-9); // zero-variance row

    auto g0 = TensorD::from({4}, {0, 0, 0, 0});
    auto bb = TensorD::from({4}, {1, 2, 3, 4});
    auto yb = layer_norm(TensorD::from({1, 4}, {7, -3, 2, 9}), g0, bb, 1e-5);
    CHECK(yb.data() == std::vector<double>{1, 2, 3, 4});

    Rng rng(11);
    auto xv = random_vec(rng, 64, -2, 2);
    auto yn = layer_norm(TensorD::from({1, 64}, xv), TensorD::filled({64}, 1.0),
                         TensorD::zeros({64}), 1e-5);
    double mean = 0, var = 0;
    for (double v : yn.data()) mean += v;
    mean /= 64;
    for (double v : yn.data()) var += (v - mean) * (v - mean);
    var /= 64;
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(std::fabs(var - 1.0) < 1e-4);
}

TEST_CASE("conv2d examples") {
    // 1x1 identity kernel reproduces the input.
    Rng rng(5);
    auto xv = random_vec(rng, 9);
    auto x = TensorD::from({1, 1, 3, 3}, xv);
    auto w = TensorD::from({1, 1, 1, 1}, {1.0});
    auto out = conv2d(x, w, TensorD::zeros({1}), 1, 0);
    for (size_t i = 0; i < 9; ++i) CHECK(out.data()[i] == doctest::Approx(xv[i]));

    // All-zero input stays zero for any kernels.
    auto k = TensorD::from({2, 1, 2, 2}, random_vec(rng, 8));
    auto z = conv2d(TensorD::zeros({1, 1, 4, 4}), k, TensorD::zeros({2}), 1, 1);
    for (double v : z.data()) CHECK(v == 0.0);

    CHECK_THROWS_AS(conv2d(x, w, TensorD::zeros({1}), 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(x, TensorD::zeros({1, 1, 9, 9}), TensorD::zeros({1}), 1, 0),
                    std::invalid_argument);
}

TEST_CASE("conv2d gradient matches finite differences") {
    Rng rng(13);
    auto xv = random_vec(rng, 3 * 8 * 8);
    auto wv = random_vec(rng, 4 * 3 * 3 * 3);
    auto bv = random_vec(rng, 4);
    const std::vector<double> red = random_vec(rng, 4 * 4 * 4);

    auto X = param({1, 3, 8, 8}, xv);
    auto W = param({4, 3, 3, 3}, wv);
    auto B = param({4}, bv);
    auto loss = weighted_sum(conv2d(X, W, B, 2, 1), red);
    backward(loss);

    auto eval = [&](const std::vector<std::vector<double>>& in) {
        NoGradGuard ng;
        auto c = conv2d(TensorD::from({1, 3, 8, 8}, in[0]), TensorD::from({4, 3, 3, 3}, in[1]),
                        TensorD::from({4}, in[2]), 2, 1);
        return sum_all(mul(c, TensorD::from({1, 4, 4, 4}, red))).item();
    };
    auto res = oracle::finite_diff_check_sampled(eval, {xv, wv, bv}, {X.grad(), W.grad(), B.grad()},
                                                 40, 99);
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("backward basics") {
    auto x = TensorD::scalar(3.0);
    x.set_requires_grad();
    auto loss = mul(x, x);
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0)); // d(x^2)/dx at 3

    auto v = param({4}, {1, 2, 3, 4});
    auto s = sum_all(v);
    backward(s);
    for (double g : v.grad()) CHECK(g == doctest::Approx(1.0));

    CHECK_THROWS_AS(backward(TensorD::zeros({3})), std::invalid_argument);

    // Graph is consumed by the reverse pass.
    auto y = param({2}, {1, 2});
    auto l2 = sum_all(mul(y, y));
    backward(l2);
    CHECK_THROWS_AS(backward(l2), std::invalid_argument);
}

TEST_CASE("unreachable parameters keep absent grads") {
    auto used = param({2}, {1, 2});
    auto unused = param({2}, {3, 4});
    auto loss = sum_all(mul(used, used));
    backward(loss);
    CHECK(used.has_grad());
    CHECK_FALSE(unused.has_grad()); // distinguishable from a zero grad
}

TEST_CASE("gradients: elementwise, shape and reduction ops") {
    Rng rng(17);
    const int64_t n = 12;
    auto av = random_vec(rng, n), bv = random_vec(rng, n, 0.5, 2.0), wv = random_vec(rng, n);

    struct Case {
        const char* name;
        std::function<TensorD(TensorD, TensorD)> fn;
    };
    const std::vector<Case> cases = {
        {"add", [](TensorD a, TensorD b) { return add(a, b); }},
        {"sub", [](TensorD a, TensorD b) { return sub(a, b); }},
        {"mul", [](TensorD a, TensorD b) { return mul(a, b); }},
        {"div", [](TensorD a, TensorD b) { return div(a, b); }},
        {"relu", [](TensorD a, TensorD b) { return add(relu(a), b); }},
        {"gelu", [](TensorD a, TensorD b) { return add(gelu(a), b); }},
        {"mul_scalar", [](TensorD a, TensorD b) { return add(mul_scalar(a, 1.7), b); }},
        {"add_scalar", [](TensorD a, TensorD b) { return add(add_scalar(a, -0.3), b); }},
        {"reshape", [](TensorD a, TensorD b) { return reshape(add(a, b), {3, 4}); }},
        {"transpose",
         [](TensorD a, TensorD b) { return transpose(reshape(add(a, b), {3, 4})); }},
        {"permute",
         [](TensorD a, TensorD b) {
             return permute(reshape(add(a, b), {2, 3, 2}), {2, 0, 1});
         }},
        {"narrow",
         [](TensorD a, TensorD b) {
             auto m = reshape(add(a, b), {3, 4});
             return concat<double>({narrow(m, 0, 1, 2), narrow(m, 0, 0, 1)}, 0);
         }},
        {"take_rows",
         [](TensorD a, TensorD b) {
             auto m = reshape(add(a, b), {4, 3});
             return take_rows(m, {2, 0, 0, 3});
         }},
        {"softmax", [](TensorD a, TensorD b) { return softmax_last(reshape(add(a, b), {3, 4})); }},
        {"l2_normalize",
         [](TensorD a, TensorD b) { return l2_normalize_rows(reshape(add(a, b), {3, 4})); }},
        {"mean_last", [](TensorD a, TensorD b) { return mean_last(reshape(add(a, b), {3, 4})); }},
    };

    for (const auto& c : cases) {
        CAPTURE(c.name);
        auto A = param({n}, av);
        auto B = param({n}, bv);
        auto out = c.fn(A, B);
        auto w = random_vec(rng, out.size());
        backward(weighted_sum(out, w));
        auto eval = [&](const std::vector<std::vector<double>>& in) {
            NoGradGuard ng;
            auto o = c.fn(TensorD::from({n}, in[0]), TensorD::from({n}, in[1]));
            return sum_all(mul(o, TensorD::from(o.shape(), w))).item();
        };
        auto res = oracle::finite_diff_check(eval, {av, bv}, {A.grad(), B.grad()});
        CHECK_MESSAGE(res.max_rel_err < 1e-6, c.name << ": " << res.max_rel_err);
    }
}

TEST_CASE("gradients: add_rows, bmm, layer_norm, logsumexp, bce") {
    Rng rng(23);

    SUBCASE("add_rows") {
        auto mv = random_vec(rng, 12), vv = random_vec(rng, 4), wv = random_vec(rng, 12);
        auto M = param({3, 4}, mv);
        auto V = param({4}, vv);
        backward(weighted_sum(add_rows(M, V), wv));
        auto eval = [&](const std::vector<std::vector<double>>& in) {
            NoGradGuard ng;
            auto o = add_rows(TensorD::from({3, 4}, in[0]), TensorD::from({4}, in[1]));
            return sum_all(mul(o, TensorD::from({3, 4}, wv))).item();
        };
        CHECK(oracle::finite_diff_check(eval, {mv, vv}, {M.grad(), V.grad()}).max_rel_err < 1e-6);
    }

    SUBCASE("bmm") {
        auto av = random_vec(rng, 2 * 3 * 4), bv = random_vec(rng, 2 * 4 * 2);
        auto wv = random_vec(rng, 2 * 3 * 2);
        auto A = param({2, 3, 4}, av);
        auto B = param({2, 4, 2}, bv);
        backward(weighted_sum(bmm(A, B), wv));
        auto eval = [&](const std::vector<std::vector<double>>& in) {
            NoGradGuard ng;
            auto o = bmm(TensorD::from({2, 3, 4}, in[0]), TensorD::from({2, 4, 2}, in[1]));
            return sum_all(mul(o, TensorD::from({2, 3, 2}, wv))).item();
        };
        CHECK(oracle::finite_diff_check(eval, {av, bv}, {A.grad(), B.grad()}).max_rel_err < 1e-6);
    }

    SUBCASE("layer_norm") {
        auto xv = random_vec(rng, 2 * 6), gv = random_vec(rng, 6, 0.5, 1.5),
             bv = random_vec(rng, 6), wv = random_vec(rng, 12);
        auto X = param({2, 6}, xv);
        auto G = param({6}, gv);
        auto B = param({6}, bv);
        backward(weighted_sum(layer_norm(X, G, B, 1e-5), wv));
        auto eval = [&](const std::vector<std::vector<double>>& in) {
            NoGradGuard ng;
            auto o = layer_norm(TensorD::from({2, 6}, in[0]), TensorD::from({6}, in[1]),
                                TensorD::from({6}, in[2]), 1e-5);
            return sum_all(mul(o, TensorD::from({2, 6}, wv))).item();
        };
        auto res = oracle::finite_diff_check(eval, {xv, gv, bv}, {X.grad(), G.grad(), B.grad()});
        CHECK(res.max_rel_err < 1e-6);
    }

    SUBCASE("masked_row_logsumexp") {
        auto xv = random_vec(rng, 3 * 5);
        std::vector<uint8_t> mask(15, 1);
        mask[0] = mask[7] = mask[14] = 0;
        auto wv = random_vec(rng, 3);
        auto X = param({3, 5}, xv);
        backward(weighted_sum(masked_row_logsumexp(X, mask), wv));
        auto eval = [&](const std::vector<std::vector<double>>& in) {
            NoGradGuard ng;
            auto o = masked_row_logsumexp(TensorD::from({3, 5}, in[0]), mask);
            return sum_all(mul(o, TensorD::from({3}, wv))).item();
        };
        CHECK(oracle::finite_diff_check(eval, {xv}, {X.grad()}).max_rel_err < 1e-6);

        std::vector<uint8_t> empty_row(15, 0);
        CHECK_THROWS_AS(masked_row_logsumexp(TensorD::from({3, 5}, xv), empty_row),
                        std::invalid_argument);
    }

    SUBCASE("bce_with_logits") {
        auto zv = random_vec(rng, 8, -3, 3);
        std::vector<double> targets(8);
        for (auto& t : targets) t = rng.uniform() < 0.5 ? 0.0 : 1.0;
        auto Z = param({8}, zv);
        backward(bce_with_logits(Z, targets));
        auto eval = [&](const std::vector<std::vector<double>>& in) {
            NoGradGuard ng;
            return bce_with_logits(TensorD::from({8}, in[0]), targets).item();
        };
        CHECK(oracle::finite_diff_check(eval, {zv}, {Z.grad()}).max_rel_err < 1e-6);
    }
}

TEST_CASE("composition: two-layer MLP against finite differences") {
    Rng rng(31);
    auto xv = random_vec(rng, 4 * 6);
    auto w1v = random_vec(rng, 6 * 5), b1v = random_vec(rng, 5);
    auto w2v = random_vec(rng, 5 * 3), b2v = random_vec(rng, 3);
    std::vector<double> yv = {0, 1, 2, 1}; // class per row

    auto run = [&](const std::vector<std::vector<double>>& in) {
        auto X = TensorD::from({4, 6}, in[0]);
        auto W1 = TensorD::from({6, 5}, in[1]);
        auto B1 = TensorD::from({5}, in[2]);
        auto W2 = TensorD::from({5, 3}, in[3]);
        auto B2 = TensorD::from({3}, in[4]);
        auto h = gelu(add_rows(matmul(X, W1), B1));
        auto logits = add_rows(matmul(h, W2), B2);
        auto p = softmax_last(logits);
        // mean negative log-likelihood via the masked logsumexp path
        std::vector<uint8_t> pick(4 * 3, 0);
        for (size_t r = 0; r < 4; ++r) pick[r * 3 + size_t(yv[r])] = 1;
        auto lse_all = masked_row_logsumexp(logits, std::vector<uint8_t>(12, 1));
        auto lse_pick = masked_row_logsumexp(logits, pick);
        return mean_all(sub(lse_all, lse_pick));
    };

    auto X = param({4, 6}, xv);
    auto W1 = param({6, 5}, w1v);
    auto B1 = param({5}, b1v);
    auto W2 = param({5, 3}, w2v);
    auto B2 = param({3}, b2v);
    auto h = gelu(add_rows(matmul(X, W1), B1));
    auto logits = add_rows(matmul(h, W2), B2);
    std::vector<uint8_t> pick(4 * 3, 0);
    for (size_t r = 0; r < 4; ++r) pick[r * 3 + size_t(yv[r])] = 1;
    auto loss = mean_all(sub(masked_row_logsumexp(logits, std::vector<uint8_t>(12, 1)),
                             masked_row_logsumexp(logits, pick)));
    backward(loss);

    auto eval = [&](const std::vector<std::vector<double>>& in) {
        NoGradGuard ng;
        return run(in).item();
    };
    // Smaller h than the per-op checks: the composed third derivative
    // dominates truncation at h=1e-4.
    auto res = oracle::finite_diff_check(
        eval, {xv, w1v, b1v, w2v, b2v},
        {X.grad(), W1.grad(), B1.grad(), W2.grad(), B2.grad()}, 1e-5);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("determinism: identical inputs give bit-identical outputs") {
    Rng rng(41);
    auto av = random_vec(rng, 64 * 32), bv = random_vec(rng, 32 * 16);
    auto run = [&]() {
        auto c = matmul(TensorD::from({64, 32}, av), TensorD::from({32, 16}, bv));
        auto s = softmax_last(c);
        return layer_norm(s, TensorD::filled({16}, 1.0), TensorD::zeros({16}), 1e-5).data();
    };
    auto r1 = run(), r2 = run();
    CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(TensorD::from({2, 3}, {1, 2, 3}), std::invalid_argument);
    auto t = TensorD::zeros({3, 5});
    CHECK(t.size() == numel(t.shape()));
    t.zero_grad();
    CHECK(t.grad().size() == t.data().size());
}

TEST_CASE("adam updates and checkpoint round-trip") {
    // Minimize (x - 5)^2; Adam should walk x toward 5.
    std::vector<NamedParam> params{{"x", Tensor::from({1}, {0.f})}};
    params[0].tensor.set_requires_grad();
    Adam opt(params, 0.1f);
    for (int i = 0; i < 300; ++i) {
        opt.zero_grad();
        auto d = add_scalar(params[0].tensor, -5.f);
        backward(mul(d, d));
        opt.step();
    }
    CHECK(params[0].tensor.data()[0] == doctest::Approx(5.f).epsilon(0.05));

    CheckpointHeader h;
    h.model_kind = "unit-test";
    h.config_hash = 0xabcdef;
    h.seed = 42;
    const std::string path = "adam_ckpt_test.bin";
    save_checkpoint(path, h, params);

    std::vector<NamedParam> loaded{{"x", Tensor::zeros({1})}};
    auto h2 = load_checkpoint(path, loaded);
    CHECK(h2.model_kind == "unit-test");
    CHECK(h2.seed == 42);
    CHECK(loaded[0].tensor.data()[0] == params[0].tensor.data()[0]);

    std::vector<NamedParam> wrong{{"y", Tensor::zeros({1})}};
    CHECK_THROWS_AS(load_checkpoint(path, wrong), std::runtime_error);
    std::remove(path.c_str());
}
