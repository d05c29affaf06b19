// Copyright 2026 The marlinlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace marlinlab::detail {

/// Runs f(0) .. f(n-1) on up to `workers` threads. Items are claimed from a
/// shared counter; the first exception thrown by any item is rethrown here.
template <class F>
void parallel_for(std::size_t n, unsigned workers, F&& f) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t count = std::min<std::size_t>(workers, n);
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(body);
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace marlinlab::detail
