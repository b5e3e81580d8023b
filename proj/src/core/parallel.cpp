#include "chamber/core/parallel.hpp"

namespace chamber {

namespace {
int g_threads = []() {
    unsigned hc = std::thread::hardware_concurrency();
    return int(std::clamp(hc, 1u, 8u));
}();
thread_local bool t_in_parallel = false;
}

int thread_count() { return g_threads; }

void set_thread_count(int n) { g_threads = std::max(1, n); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    const int nt = int(std::min<int64_t>(g_threads, n));
    if (nt <= 1 || t_in_parallel) {
        // Nested regions run inline; the outer split already owns the work.
        fn(0, n);
        return;
    }
    const int64_t chunk = (n + nt - 1) / nt;
    auto run = [&fn](int64_t b, int64_t e) {
        t_in_parallel = true;
        fn(b, e);
        t_in_parallel = false;
    };
    std::vector<std::thread> workers;
    workers.reserve(size_t(nt - 1));
    for (int t = 1; t < nt; ++t) {
        const int64_t b = t * chunk, e = std::min<int64_t>(n, b + chunk);
        if (b >= e) break;
        workers.emplace_back(run, b, e);
    }
    run(0, std::min<int64_t>(n, chunk));
    for (auto& w : workers) w.join();
}

} // namespace chamber
