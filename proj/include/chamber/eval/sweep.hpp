#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "chamber/models/train.hpp"

namespace chamber::eval {

struct SweepPoint {
    int64_t size = 0;
    double accuracy = 0;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    double spearman = 0; // rank correlation between size and accuracy
};

/// Returns probe features of an encoder trained on `size` frames (0 = the
/// untrained initialization).
using TrainForSizeFn = std::function<models::FeatureMatrix(int64_t size)>;
/// Probe accuracy on a fixed split and seed.
using ProbeFn = std::function<double(const models::FeatureMatrix&)>;

/// One train+probe cycle per size, shared split and seeds across sizes.
/// Sizes must be ascending with a leading 0.
SweepResult data_size_sweep(const std::vector<int64_t>& sizes, const TrainForSizeFn& train,
                            const ProbeFn& probe);

/// Table with one row per size (also the plot data).
void write_sweep_table(const std::string& path, const SweepResult& result);

} // namespace chamber::eval
