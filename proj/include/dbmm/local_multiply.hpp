#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"

#include "dbmm/block_layout.hpp"
#include "dbmm/microkernel.hpp"

namespace dbmm {

/// One block product c += a * b, addressed by arena offsets.
struct StackEntry {
  std::size_t a_offset = 0;
  std::size_t b_offset = 0;
  std::size_t c_offset = 0;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
};

struct Stack {
  std::vector<StackEntry> entries;
  std::size_t a_row_block = 0;
  std::size_t assigned_worker = 0;
};

inline constexpr std::size_t kDefaultStackCap = 30000;

struct LocalConfig {
  std::size_t threads = 1;
  std::size_t stack_cap = kDefaultStackCap;
  /// Null means default kernel parameters.
  const KernelDispatcher* dispatcher = nullptr;
  /// Distance between consecutive block rows owned by this rank; the worker
  /// for block row i is (i / row_stride) mod threads.
  std::size_t row_stride = 1;
};

/// Counts over the stacks of one or more local multiplications.
struct StackStats {
  static constexpr std::size_t kBuckets = 6;  // 1, 2-10, 11-100, ..., 10001+

  std::size_t multiplications = 0;  // local multiply invocations
  std::size_t stacks = 0;
  std::size_t entries = 0;
  std::size_t max_entries = 0;
  std::size_t min_entries = 0;  // over non-empty runs; 0 when no stacks
  std::array<std::size_t, kBuckets> histogram{};
  std::vector<std::size_t> stacks_per_worker;
  std::vector<std::size_t> entries_per_worker;

  void add(const std::vector<Stack>& stacks, std::size_t workers);
  void merge(const StackStats& other);
  friend bool operator==(const StackStats&, const StackStats&) = default;
};

nlohmann::ordered_json to_json(const StackStats& s);

/// Visit order over an R x C grid of (A row-block, B column-block) pairs:
/// recursive bisection that splits rows first, so each row's pairs are
/// contiguous and rows ascend. Columns within a row are bisected in a snake,
/// alternating direction from one row to the next, so consecutive rows share
/// the B column block at the turn.
std::vector<BlockIndex> traversal_order(std::size_t rows, std::size_t cols);

/// traversal_order over the A block rows and B block columns that hold
/// blocks, expressed in global block indices.
std::vector<BlockIndex> panel_traversal(const BlockedMatrix& a, const BlockedMatrix& b);

/// C blocks that receive at least one product.
std::vector<BlockIndex> product_targets(const BlockedMatrix& a, const BlockedMatrix& b);

/// Generation phase. One entry per (A(i,k), B(k,j)) pair, emitted for each
/// (i, j) in `order` with k ascending. Stacks never span two A row-blocks and
/// hold at most cfg.stack_cap entries. Every target must already be stored
/// in `c`.
std::vector<Stack> generate_stacks(const BlockedMatrix& a, const BlockedMatrix& b,
                                   const BlockedMatrix& c, std::span<const BlockIndex> order,
                                   const LocalConfig& cfg);

/// Scheduler phase: static assignment by A row-block,
/// worker = (row_block / row_stride) mod threads. Writes assigned_worker and
/// returns the stack indices of each worker in stack order.
std::vector<std::vector<std::size_t>> schedule(std::vector<Stack>& stacks, std::size_t threads,
                                               std::size_t row_stride = 1);

/// Runs every worker's stacks in order on its own thread. Workers write
/// disjoint C rows, so no locking is needed and the result does not depend
/// on the thread count.
void execute_stacks(const std::vector<Stack>& stacks,
                    const std::vector<std::vector<std::size_t>>& assignment,
                    std::span<const double> a, std::span<const double> b, std::span<double> c,
                    const LocalConfig& cfg);

/// c += a * b through traversal, generation, scheduling and execution.
/// Missing C targets are inserted as zero blocks first.
StackStats local_multiply(const BlockedMatrix& a, const BlockedMatrix& b, BlockedMatrix& c,
                          const LocalConfig& cfg);

void check_conformant(const BlockedMatrix& a, const BlockedMatrix& b, const BlockedMatrix& c);

}  // namespace dbmm
