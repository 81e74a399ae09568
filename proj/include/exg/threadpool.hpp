#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace exg {

// Small persistent pool for row-parallel loops. Work is partitioned into
// contiguous ranges and every output element is written by exactly one
// worker with a fixed per-element operation order, so results are
// bit-identical for any worker count.
class ThreadPool {
 public:
  using RangeFn = std::function<void(std::int64_t begin, std::int64_t end)>;

  static ThreadPool& instance() {
    static ThreadPool pool(default_threads());
    return pool;
  }

  static int default_threads() {
    if (const char* env = std::getenv("EXG_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }

  explicit ThreadPool(int n_threads) : n_workers_(std::max(1, n_threads) - 1) {
    workers_.reserve(n_workers_);
    for (int w = 0; w < n_workers_; ++w) {
      workers_.emplace_back([this, w] { worker_loop(w); });
    }
  }

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
      ++generation_;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  int size() const { return n_workers_ + 1; }

  void parallel_for(std::int64_t total, const RangeFn& fn) {
    if (total <= 0) return;
    const int parts = size();
    if (parts == 1 || total < 2 * parts) {
      fn(0, total);
      return;
    }
    const std::int64_t chunk = (total + parts - 1) / parts;
    {
      std::lock_guard<std::mutex> lk(mu_);
      job_fn_ = &fn;
      job_total_ = total;
      job_chunk_ = chunk;
      pending_.store(n_workers_, std::memory_order_relaxed);
      ++generation_;
    }
    cv_.notify_all();
    // main thread takes the first chunk
    fn(0, std::min(chunk, total));
    // wait for workers
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [this] { return pending_.load(std::memory_order_acquire) == 0; });
    job_fn_ = nullptr;
  }

 private:
  void worker_loop(int wid) {
    std::uint64_t seen = 0;
    for (;;) {
      const RangeFn* fn = nullptr;
      std::int64_t total = 0, chunk = 0;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return generation_ != seen; });
        seen = generation_;
        if (stop_) return;
        fn = job_fn_;
        total = job_total_;
        chunk = job_chunk_;
      }
      if (fn) {
        const std::int64_t begin = chunk * (wid + 1);
        if (begin < total) (*fn)(begin, std::min(begin + chunk, total));
        if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
          std::lock_guard<std::mutex> lk(mu_);
          done_cv_.notify_one();
        }
      }
    }
  }

  int n_workers_;
  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
  const RangeFn* job_fn_ = nullptr;
  std::int64_t job_total_ = 0, job_chunk_ = 0;
  std::atomic<int> pending_{0};
};

inline void parallel_for(std::int64_t total, const ThreadPool::RangeFn& fn) {
  ThreadPool::instance().parallel_for(total, fn);
}

}  // namespace exg
