#ifndef PIID_PARALLEL_HPP
#define PIID_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace piid {

// Process-wide cap on worker threads (0 = hardware concurrency).
void set_max_threads(int n);
int max_threads();

// Runs fn(i) for i in [0, count). Work is handed out in fixed-size blocks so
// that any blockwise reduction the caller performs is independent of the
// number of workers; fn must only touch state owned by index i or its block.
void parallel_for(std::int64_t count, const std::function<void(std::int64_t)>& fn);

// Blockwise map-reduce with deterministic merge order: make() creates one
// accumulator per block, fn(acc, i) folds item i into its block accumulator,
// and the block results are merged front to back. Block size is fixed, so the
// result is bit-identical for any thread count.
template <typename Acc>
Acc parallel_reduce(std::int64_t count, std::int64_t block,
                    const std::function<Acc()>& make,
                    const std::function<void(Acc&, std::int64_t)>& fn,
                    const std::function<void(Acc&, const Acc&)>& merge) {
  const std::int64_t nblocks = (count + block - 1) / block;
  std::vector<Acc> accs;
  accs.reserve(static_cast<std::size_t>(nblocks));
  for (std::int64_t b = 0; b < nblocks; ++b) accs.push_back(make());

  std::atomic<std::int64_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::int64_t b = next.fetch_add(1);
      if (b >= nblocks) return;
      const std::int64_t lo = b * block;
      const std::int64_t hi = std::min(count, lo + block);
      for (std::int64_t i = lo; i < hi; ++i) fn(accs[static_cast<std::size_t>(b)], i);
    }
  };

  const int nt = std::max(1, std::min<int>(max_threads(), static_cast<int>(nblocks)));
  if (nt == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  Acc out = std::move(accs.front());
  for (std::int64_t b = 1; b < nblocks; ++b) merge(out, accs[static_cast<std::size_t>(b)]);
  return out;
}

}  // namespace piid

#endif
