#include "mvgs/thread_pool.hpp"

#include <algorithm>
#include <exception>

namespace mvgs {

ThreadPool::ThreadPool(std::size_t workers) {
    if (workers == 0) workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    threads_.reserve(workers - 1);
    for (std::size_t i = 0; i + 1 < workers; ++i) threads_.emplace_back([this] { worker_loop(); });
}

ThreadPool::~ThreadPool() {
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
}

void ThreadPool::run_items() {
    for (;;) {
        std::size_t i;
        const std::function<void(std::size_t)>* job;
        {
            std::lock_guard lock(mutex_);
            if (next_ >= job_size_) return;
            i = next_++;
            job = job_;
        }
        try {
            (*job)(i);
        } catch (...) {
            std::lock_guard lock(mutex_);
            if (!error_) error_ = std::current_exception();
        }
        {
            std::lock_guard lock(mutex_);
            ++finished_;
            if (finished_ == job_size_) done_.notify_all();
        }
    }
}

void ThreadPool::worker_loop() {
    std::size_t seen = 0;
    for (;;) {
        {
            std::unique_lock lock(mutex_);
            wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
            if (stop_) return;
            seen = generation_;
            ++busy_;
        }
        run_items();
        {
            std::lock_guard lock(mutex_);
            --busy_;
            if (busy_ == 0) done_.notify_all();
        }
    }
}

void ThreadPool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    {
        std::lock_guard lock(mutex_);
        job_ = &fn;
        job_size_ = n;
        next_ = 0;
        finished_ = 0;
        error_ = nullptr;
        ++generation_;
    }
    wake_.notify_all();
    run_items();
    std::exception_ptr err;
    {
        std::unique_lock lock(mutex_);
        done_.wait(lock, [&] { return finished_ == job_size_ && busy_ == 0; });
        job_ = nullptr;
        job_size_ = 0;
        err = error_;
    }
    if (err) std::rethrow_exception(err);
}

}  // namespace mvgs
