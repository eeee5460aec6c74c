#include "crgraph/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iostream>
#include <mutex>
#include <thread>

namespace crgraph {

namespace {

std::mutex& warning_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& warning_handler() {
  static WarningHandler handler;
  return handler;
}

}  // namespace

void set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(warning_mutex());
  warning_handler() = std::move(handler);
}

void warn(const std::string& message) {
  std::lock_guard lock(warning_mutex());
  if (warning_handler()) {
    warning_handler()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

std::pair<Index, Index> pair_from_index(Index n, Index k) {
  // Row s starts at s(2n - s - 1)/2; invert the quadratic, then fix rounding.
  auto row_start = [n](Index s) { return s * (2 * n - s - 1) / 2; };
  const double b = 2.0 * static_cast<double>(n) - 1.0;
  Index s = static_cast<Index>((b - std::sqrt(b * b - 8.0 * static_cast<double>(k))) / 2.0);
  s = std::clamp<Index>(s, 0, std::max<Index>(n - 2, 0));
  while (s > 0 && row_start(s) > k) --s;
  while (s + 1 < n - 1 && row_start(s + 1) <= k) ++s;
  return {s, s + 1 + (k - row_start(s))};
}

void parallel_for(Index count, int jobs, const std::function<void(Index)>& body) {
  if (jobs <= 1 || count <= 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  const int workers = static_cast<int>(std::min<Index>(jobs, count));
  std::atomic<Index> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (Index i = next++; i < count; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace crgraph
