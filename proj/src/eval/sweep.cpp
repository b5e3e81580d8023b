#include "chamber/eval/sweep.hpp"

#include <stdexcept>

#include "chamber/eval/stats.hpp"
#include "chamber/io/table.hpp"

namespace chamber::eval {

SweepResult data_size_sweep(const std::vector<int64_t>& sizes, const TrainForSizeFn& train,
                            const ProbeFn& probe) {
    if (sizes.empty() || sizes.front() != 0)
        throw std::invalid_argument("sweep: sizes must start with 0 (untrained)");
    for (size_t i = 1; i < sizes.size(); ++i)
        if (sizes[i] <= sizes[i - 1])
            throw std::invalid_argument("sweep: sizes must be strictly ascending");

    SweepResult result;
    for (int64_t size : sizes) {
        auto features = train(size);
        result.points.push_back({size, probe(features)});
    }
    std::vector<double> xs, ys;
    for (const auto& p : result.points) {
        xs.push_back(double(p.size));
        ys.push_back(p.accuracy);
    }
    result.spearman = spearman_rank_correlation(xs, ys);
    return result;
}

void write_sweep_table(const std::string& path, const SweepResult& result) {
    io::Table t;
    t.header = {"size", "accuracy"};
    for (const auto& p : result.points)
        t.rows.push_back({std::to_string(p.size), io::format_double(p.accuracy)});
    t.rows.push_back({"spearman", io::format_double(result.spearman)});
    t.write(path);
}

} // namespace chamber::eval
