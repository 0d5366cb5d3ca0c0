// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace rnnwave {

/// Fixed pool of helper threads with waitable submissions. The calling
/// thread counts as one worker everywhere in the engine, so a pool built for
/// P-way concurrency spawns P-1 threads.
class WorkerPool {
 public:
  class Ticket {
   public:
    Ticket() = default;
    explicit Ticket(std::shared_ptr<struct TicketState> s) : state_(std::move(s)) {}
    void wait();
    bool valid() const { return state_ != nullptr; }

   private:
    std::shared_ptr<struct TicketState> state_;
  };

  explicit WorkerPool(int helper_threads) {
    for (int i = 0; i < helper_threads; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (std::thread& t : threads_) t.join();
  }

  int helper_count() const { return static_cast<int>(threads_.size()); }

  /// Queues `fn`. With no helper threads the call runs inline, preserving
  /// the sequential order of submission.
  Ticket submit(std::function<void()> fn);

 private:
  struct Job;
  void worker_loop();

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::shared_ptr<struct TicketState>> queue_;
  std::vector<std::thread> threads_;
  bool stop_ = false;
};

struct TicketState {
  std::function<void()> fn;
  std::mutex mu;
  std::condition_variable cv;
  bool done = false;
  std::exception_ptr error;

  void run() {
    try {
      fn();
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      error = std::current_exception();
      done = true;
      cv.notify_all();
      return;
    }
    std::lock_guard<std::mutex> lock(mu);
    done = true;
    cv.notify_all();
  }
};

inline void WorkerPool::Ticket::wait() {
  if (!state_) return;
  std::unique_lock<std::mutex> lock(state_->mu);
  state_->cv.wait(lock, [&] { return state_->done; });
  if (state_->error) std::rethrow_exception(state_->error);
}

inline WorkerPool::Ticket WorkerPool::submit(std::function<void()> fn) {
  auto state = std::make_shared<TicketState>();
  state->fn = std::move(fn);
  if (threads_.empty()) {
    state->run();
    return Ticket(state);
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    queue_.push_back(state);
  }
  cv_.notify_one();
  return Ticket(state);
}

inline void WorkerPool::worker_loop() {
  for (;;) {
    std::shared_ptr<TicketState> job;
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
      if (stop_ && queue_.empty()) return;
      job = queue_.front();
      queue_.pop_front();
    }
    job->run();
  }
}

}  // namespace rnnwave
