#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chamber/models/train.hpp" // FeatureMatrix

namespace chamber::eval {

enum class ProbeMode {
    train11_test1, // train on 11 viewpoint ranges, test on the held-out one
    train1_test11, // train on 1 viewpoint range, test on the other 11
};

std::string to_string(ProbeMode mode);

/// Deterministic fold layout over the 12 viewpoint ranges.
struct ProbeSplit {
    ProbeMode mode = ProbeMode::train11_test1;

    std::vector<int> train_viewpoints(int fold) const;
    std::vector<int> test_viewpoints(int fold) const;
    static constexpr int kFolds = 12;
};

struct ProbeReport {
    ProbeMode mode = ProbeMode::train11_test1;
    std::vector<double> fold_accuracy; // one per held-out fold
    double mean_accuracy = 0;
    double std_error = 0;
    static constexpr double kChanceLevel = 0.5;
};

/// Cross-validated linear readout on frozen features: one linear layer per
/// fold, trained with full-batch descent on binary cross-entropy, feature
/// standardization fitted on the train folds only.
/// labels: 0/1 object identity. viewpoints: 0..11 per row.
ProbeReport train_linear_probe(const models::FeatureMatrix& features,
                               const std::vector<int>& labels,
                               const std::vector<int>& viewpoints, ProbeMode mode,
                               uint64_t seed);

void write_probe_report(const std::string& path, const ProbeReport& report);

} // namespace chamber::eval
