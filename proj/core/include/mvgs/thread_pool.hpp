#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mvgs {

/// Fixed-size worker pool with a blocking parallel_for. Work items are claimed
/// dynamically, so callers must write results into per-index slots and reduce
/// them afterwards in index order to stay independent of the worker count.
class ThreadPool {
  public:
    /// workers == 0 picks the number of logical cores.
    explicit ThreadPool(std::size_t workers = 0);
    ~ThreadPool();

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    std::size_t size() const noexcept { return threads_.size() + 1; }

    /// Runs fn(i) for i in [0, n). The calling thread participates. Exceptions
    /// thrown by fn are rethrown here (the first one wins).
    void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

  private:
    void worker_loop();
    void run_items();

    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::condition_variable done_;
    const std::function<void(std::size_t)>* job_ = nullptr;
    std::size_t job_size_ = 0;
    std::size_t next_ = 0;
    std::size_t finished_ = 0;
    std::size_t generation_ = 0;
    std::size_t busy_ = 0;
    std::exception_ptr error_;
    bool stop_ = false;
};

/// Runs fn over [0, n) on the pool when given, inline otherwise.
inline void parallel_for(ThreadPool* pool, std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (pool == nullptr || pool->size() == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    pool->parallel_for(n, fn);
}

}  // namespace mvgs
