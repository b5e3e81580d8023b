#include "chamber/eval/probe.hpp"

#include <cmath>
#include <set>

#include "chamber/core/ops.hpp"
#include "chamber/core/rng.hpp"
#include "chamber/io/table.hpp"

namespace chamber::eval {

std::string to_string(ProbeMode mode) {
    return mode == ProbeMode::train11_test1 ? "ntrain11" : "ntrain1";
}

std::vector<int> ProbeSplit::train_viewpoints(int fold) const {
    std::vector<int> out;
    for (int v = 0; v < 12; ++v) {
        const bool held_out = v == fold;
        if (mode == ProbeMode::train11_test1 ? !held_out : held_out) out.push_back(v);
    }
    return out;
}

std::vector<int> ProbeSplit::test_viewpoints(int fold) const {
    std::vector<int> out;
    for (int v = 0; v < 12; ++v) {
        const bool held_out = v == fold;
        if (mode == ProbeMode::train11_test1 ? held_out : !held_out) out.push_back(v);
    }
    return out;
}

namespace {

struct FoldData {
    std::vector<int64_t> train_rows, test_rows;
};

FoldData fold_rows(const std::vector<int>& viewpoints, const ProbeSplit& split, int fold) {
    const auto train_vp = split.train_viewpoints(fold);
    const auto test_vp = split.test_viewpoints(fold);
    const std::set<int> train_set(train_vp.begin(), train_vp.end());
    const std::set<int> test_set(test_vp.begin(), test_vp.end());
    FoldData fd;
    for (int64_t i = 0; i < int64_t(viewpoints.size()); ++i) {
        if (train_set.count(viewpoints[size_t(i)])) fd.train_rows.push_back(i);
        if (test_set.count(viewpoints[size_t(i)])) fd.test_rows.push_back(i);
    }
    return fd;
}

double fit_and_score(const models::FeatureMatrix& features, const std::vector<int>& labels,
                     const FoldData& fd, uint64_t seed) {
    const int d = features.dim;
    const int64_t n_train = int64_t(fd.train_rows.size());

    // Standardize on train rows only.
    std::vector<double> mean(size_t(d), 0), stddev(size_t(d), 0);
    for (int64_t r : fd.train_rows)
        for (int j = 0; j < d; ++j) mean[size_t(j)] += features.row(r)[j];
    for (auto& m : mean) m /= double(n_train);
    for (int64_t r : fd.train_rows)
        for (int j = 0; j < d; ++j) {
            const double c = features.row(r)[j] - mean[size_t(j)];
            stddev[size_t(j)] += c * c;
        }
    for (auto& s : stddev) s = std::max(std::sqrt(s / double(n_train)), 1e-6);

    auto standardized = [&](const std::vector<int64_t>& rows) {
        std::vector<float> out(rows.size() * size_t(d));
        for (size_t i = 0; i < rows.size(); ++i)
            for (int j = 0; j < d; ++j)
                out[i * size_t(d) + size_t(j)] =
                    float((features.row(rows[i])[j] - mean[size_t(j)]) / stddev[size_t(j)]);
        return out;
    };

    auto x_train = nn::Tensor::from({n_train, d}, standardized(fd.train_rows));
    std::vector<float> y_train(size_t(n_train));
    for (size_t i = 0; i < fd.train_rows.size(); ++i)
        y_train[i] = float(labels[size_t(fd.train_rows[i])]);

    Rng rng(Rng::derive(seed, 0x9b0e));
    auto w = nn::Tensor::zeros({d, 1});
    for (auto& v : w.data()) v = float(rng.normal() * 0.01);
    w.set_requires_grad();
    auto b = nn::Tensor::zeros({1});
    b.set_requires_grad();

    std::vector<nn::NamedParam> params{{"w", w}, {"b", b}};
    nn::Adam adam(params, 0.05f);
    // Full-batch descent, early stop on training-loss plateau.
    double prev = 1e30;
    int flat = 0;
    for (int iter = 0; iter < 500; ++iter) {
        adam.zero_grad();
        auto logits = nn::reshape(nn::add_rows(nn::matmul(x_train, w), b), {n_train});
        auto loss = nn::bce_with_logits(logits, y_train);
        const double lv = loss.item();
        nn::backward(loss);
        adam.step();
        if (std::fabs(prev - lv) < 1e-6 * std::max(1.0, std::fabs(lv))) {
            if (++flat >= 10) break;
        } else {
            flat = 0;
        }
        prev = lv;
    }

    nn::NoGradGuard ng;
    auto x_test = nn::Tensor::from({int64_t(fd.test_rows.size()), d}, standardized(fd.test_rows));
    auto logits = nn::add_rows(nn::matmul(x_test, w), b);
    double correct = 0;
    for (size_t i = 0; i < fd.test_rows.size(); ++i) {
        const int pred = logits.data()[i] > 0 ? 1 : 0;
        correct += pred == labels[size_t(fd.test_rows[i])] ? 1 : 0;
    }
    return correct / double(fd.test_rows.size());
}

} // namespace

ProbeReport train_linear_probe(const models::FeatureMatrix& features,
                               const std::vector<int>& labels,
                               const std::vector<int>& viewpoints, ProbeMode mode,
                               uint64_t seed) {
    if (features.n != int64_t(labels.size()) || features.n != int64_t(viewpoints.size()))
        throw std::invalid_argument("probe: features, labels and viewpoints must align");
    ProbeSplit split{mode};
    ProbeReport report;
    report.mode = mode;

    for (int fold = 0; fold < ProbeSplit::kFolds; ++fold) {
        const FoldData fd = fold_rows(viewpoints, split, fold);
        if (fd.train_rows.empty() || fd.test_rows.empty())
            throw std::invalid_argument("probe: fold " + std::to_string(fold) +
                                        " has no train or test rows");
        bool has0 = false, has1 = false;
        for (int64_t r : fd.train_rows) (labels[size_t(r)] ? has1 : has0) = true;
        if (!has0 || !has1)
            throw std::invalid_argument("probe: fold " + std::to_string(fold) +
                                        " trains on a single class");
        report.fold_accuracy.push_back(
            fit_and_score(features, labels, fd, Rng::derive(seed, uint64_t(fold))));
    }

    double sum = 0;
    for (double a : report.fold_accuracy) sum += a;
    report.mean_accuracy = sum / double(report.fold_accuracy.size());
    double var = 0;
    for (double a : report.fold_accuracy) var += (a - report.mean_accuracy) * (a - report.mean_accuracy);
    var /= double(report.fold_accuracy.size());
    report.std_error = std::sqrt(var / double(report.fold_accuracy.size()));
    return report;
}

void write_probe_report(const std::string& path, const ProbeReport& report) {
    io::Table t;
    t.header = {"fold", "accuracy", "mode"};
    for (size_t f = 0; f < report.fold_accuracy.size(); ++f)
        t.rows.push_back({std::to_string(f), io::format_double(report.fold_accuracy[f]),
                          to_string(report.mode)});
    t.rows.push_back({"mean", io::format_double(report.mean_accuracy), to_string(report.mode)});
    t.rows.push_back({"stderr", io::format_double(report.std_error), to_string(report.mode)});
    t.write(path);
}

} // namespace chamber::eval
