#include "chamber/eval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace chamber::eval {

ChiSquareResult chi_square_test(double successes, int64_t trials, double null_p) {
    if (trials <= 0) throw std::invalid_argument("chi_square_test: trials must be positive");
    if (!(null_p > 0 && null_p < 1))
        throw std::invalid_argument("chi_square_test: null probability must lie in (0,1)");
    if (successes < 0 || successes > double(trials))
        throw std::invalid_argument("chi_square_test: successes out of [0, trials]");

    const double e1 = double(trials) * null_p;
    const double e0 = double(trials) * (1.0 - null_p);
    const double o1 = successes;
    const double o0 = double(trials) - successes;
    ChiSquareResult r;
    r.statistic = (o1 - e1) * (o1 - e1) / e1 + (o0 - e0) * (o0 - e0) / e0;
    // Survival function of chi-square with 1 dof: erfc(sqrt(x/2)).
    r.p_value = std::erfc(std::sqrt(r.statistic / 2.0));
    return r;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t(0));
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = (double(i) + double(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

} // namespace

double spearman_rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("spearman: need two same-length series");
    const auto ra = ranks(a), rb = ranks(b);
    const double n = double(a.size());
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0, va = 0, vb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0 || vb == 0) return 0; // constant series carry no rank signal
    return cov / std::sqrt(va * vb);
}

} // namespace chamber::eval
