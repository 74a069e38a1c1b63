#include "occlume/common/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <latch>
#include <mutex>
#include <queue>
#include <string>
#include <thread>
#include <vector>

namespace occlume {
namespace {

class ThreadPool {
 public:
  explicit ThreadPool(std::size_t workers) {
    for (std::size_t i = 0; i < workers; ++i) {
      threads_.emplace_back([this] { run(); });
    }
  }

  ~ThreadPool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void submit(std::function<void()> job) {
    {
      std::lock_guard lock(mutex_);
      jobs_.push(std::move(job));
    }
    cv_.notify_one();
  }

  std::size_t size() const { return threads_.size(); }

 private:
  void run() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return stopping_ || !jobs_.empty(); });
        if (stopping_ && jobs_.empty()) return;
        job = std::move(jobs_.front());
        jobs_.pop();
      }
      job();
    }
  }

  std::vector<std::thread> threads_;
  std::queue<std::function<void()>> jobs_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stopping_ = false;
};

std::mutex g_config_mutex;
std::size_t g_threads = 0;  // 0: not yet resolved
std::unique_ptr<ThreadPool> g_pool;
thread_local bool t_inside_parallel = false;

std::size_t resolved_threads() {
  std::lock_guard lock(g_config_mutex);
  if (g_threads == 0) {
    g_threads = std::max<std::size_t>(1, threads_from_env());
    if (g_threads > 1) g_pool = std::make_unique<ThreadPool>(g_threads - 1);
  }
  return g_threads;
}

}  // namespace

std::size_t threads_from_env() {
  const char* env = std::getenv("OCCLUME_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  try {
    const long v = std::stol(env);
    return v > 0 ? static_cast<std::size_t>(v) : 0;
  } catch (const std::exception&) {
    return 0;
  }
}

std::size_t num_threads() { return resolved_threads(); }

void set_num_threads(std::size_t n) {
  if (n == 0) n = std::max<std::size_t>(1, threads_from_env());
  std::lock_guard lock(g_config_mutex);
  if (n == g_threads) return;
  g_pool.reset();
  g_threads = n;
  if (n > 1) g_pool = std::make_unique<ThreadPool>(n - 1);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk) {
  if (n == 0) return;
  const std::size_t threads = resolved_threads();
  min_chunk = std::max<std::size_t>(1, min_chunk);
  const std::size_t chunks = std::min(threads, (n + min_chunk - 1) / min_chunk);
  if (chunks <= 1 || t_inside_parallel || !g_pool) {
    body(0, n);
    return;
  }

  std::latch done(static_cast<std::ptrdiff_t>(chunks - 1));
  std::vector<std::exception_ptr> errors(chunks);
  auto range = [&](std::size_t c) {
    return std::pair{n * c / chunks, n * (c + 1) / chunks};
  };
  for (std::size_t c = 1; c < chunks; ++c) {
    g_pool->submit([&, c] {
      t_inside_parallel = true;
      try {
        auto [b, e] = range(c);
        body(b, e);
      } catch (...) {
        errors[c] = std::current_exception();
      }
      t_inside_parallel = false;
      done.count_down();
    });
  }
  t_inside_parallel = true;
  try {
    auto [b, e] = range(0);
    body(b, e);
  } catch (...) {
    errors[0] = std::current_exception();
  }
  t_inside_parallel = false;
  done.wait();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace occlume
