#include "retinavit/threadpool.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace retinavit {

int worker_count() {
    if (const char* env = std::getenv("RETINAVIT_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void parallel_chunks(int n, const std::function<void(int, int, int)>& fn) {
    if (n <= 0) return;
    int workers = std::min(worker_count(), n);
    if (workers == 1) {
        fn(0, 0, n);
        return;
    }
    int base = n / workers;
    int rem = n % workers;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers));
    int begin = 0;
    for (int w = 0; w < workers; ++w) {
        int len = base + (w < rem ? 1 : 0);
        int end = begin + len;
        threads.emplace_back(fn, w, begin, end);
        begin = end;
    }
    for (auto& t : threads) t.join();
}

}  // namespace retinavit
