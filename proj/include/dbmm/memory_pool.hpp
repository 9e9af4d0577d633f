#pragma once

#include <cstddef>
#include <vector>

namespace dbmm {

/// Recycles element buffers between repeated multiplications. Buffers are
/// handed out by value and come back through recycle(); a request is served
/// from the smallest pooled buffer whose capacity fits, otherwise a fresh
/// allocation is made and counted.
///
/// Not synchronized: one pool per rank worker.
class BufferPool {
 public:
  /// At most `max_pooled` buffers are kept; beyond that the smallest is freed.
  explicit BufferPool(std::size_t max_pooled = 32) : max_pooled_(max_pooled) {}

  /// Buffer of exactly n elements. Contents are unspecified.
  std::vector<double> acquire(std::size_t n);
  std::vector<double> acquire_zeroed(std::size_t n);

  void recycle(std::vector<double>&& buffer);

  std::size_t allocations() const { return allocations_; }
  std::size_t reuses() const { return reuses_; }
  std::size_t pooled() const { return free_.size(); }

 private:
  std::vector<std::vector<double>> free_;
  std::size_t max_pooled_;
  std::size_t allocations_ = 0;
  std::size_t reuses_ = 0;
};

}  // namespace dbmm
