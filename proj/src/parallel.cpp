#include "piid/parallel.hpp"

namespace piid {

namespace {
std::atomic<int> g_max_threads{0};
}

void set_max_threads(int n) { g_max_threads.store(n < 0 ? 0 : n); }

int max_threads() {
  const int n = g_max_threads.load();
  if (n > 0) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::int64_t count, const std::function<void(std::int64_t)>& fn) {
  parallel_reduce<int>(
      count, 64, [] { return 0; }, [&](int&, std::int64_t i) { fn(i); },
      [](int&, const int&) {});
}

}  // namespace piid
