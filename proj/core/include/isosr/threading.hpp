#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <latch>
#include <mutex>
#include <thread>
#include <vector>

namespace isosr {

// Fixed-size worker pool. The size is read once from ISOSR_THREADS (default:
// hardware concurrency). Work items must write disjoint outputs; the pool makes
// no ordering guarantees between chunks, so any reduction an item performs has
// to stay inside its own chunk.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool(env_thread_count());
    return pool;
  }

  int size() const { return static_cast<int>(workers_.size()) + 1; }

  // Runs fn(begin, end) over [0, n) split into contiguous chunks, one per
  // thread. The calling thread executes the first chunk itself.
  void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    const int threads = std::min<std::int64_t>(size(), n);
    if (threads <= 1) {
      fn(0, n);
      return;
    }
    const std::int64_t chunk = (n + threads - 1) / threads;
    std::latch done(threads - 1);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      for (int t = 1; t < threads; ++t) {
        const std::int64_t b = t * chunk;
        const std::int64_t e = std::min<std::int64_t>(n, b + chunk);
        if (b >= e) {
          done.count_down();
          continue;
        }
        queue_.push_back([&fn, &done, b, e] {
          fn(b, e);
          done.count_down();
        });
      }
    }
    cv_.notify_all();
    fn(0, std::min<std::int64_t>(n, chunk));
    done.wait();
  }

  static int env_thread_count() {
    if (const char* env = std::getenv("ISOSR_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

 private:
  explicit ThreadPool(int threads) {
    for (int i = 1; i < threads; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  void worker_loop() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
        if (stop_ && queue_.empty()) return;
        job = std::move(queue_.back());
        queue_.pop_back();
      }
      job();
    }
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<std::function<void()>> queue_;
  std::vector<std::thread> workers_;
  bool stop_ = false;
};

inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
  ThreadPool::instance().parallel_for(n, fn);
}

}  // namespace isosr
