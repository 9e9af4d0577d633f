#include "dbmm/memory_pool.hpp"

#include <algorithm>

namespace dbmm {

std::vector<double> BufferPool::acquire(std::size_t n) {
  auto best = free_.end();
  for (auto it = free_.begin(); it != free_.end(); ++it) {
    if (it->capacity() >= n && (best == free_.end() || it->capacity() < best->capacity())) {
      best = it;
    }
  }
  if (best == free_.end()) {
    ++allocations_;
    return std::vector<double>(n);
  }
  ++reuses_;
  std::vector<double> out = std::move(*best);
  free_.erase(best);
  out.resize(n);
  return out;
}

std::vector<double> BufferPool::acquire_zeroed(std::size_t n) {
  auto out = acquire(n);
  std::fill(out.begin(), out.end(), 0.0);
  return out;
}

void BufferPool::recycle(std::vector<double>&& buffer) {
  if (buffer.capacity() == 0 || max_pooled_ == 0) return;
  if (free_.size() >= max_pooled_) {
    auto smallest = std::min_element(free_.begin(), free_.end(), [](const auto& a, const auto& b) {
      return a.capacity() < b.capacity();
    });
    if (smallest->capacity() >= buffer.capacity()) {
      buffer = {};
      return;
    }
    free_.erase(smallest);
  }
  free_.push_back(std::move(buffer));
  buffer = {};
}

}  // namespace dbmm
