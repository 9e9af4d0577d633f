#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

#include "dbmm/block_layout.hpp"
#include "dbmm/distribution.hpp"
#include "dbmm/memory_pool.hpp"

namespace dbmm {

enum class Operand { A, B, C };

/// Describes how one rank's panel coalesces into large dense blocks.
///
/// The panel's block rows are cut into `row_groups` contiguous groups (one
/// per worker thread; the last group absorbs the remainder, empty groups are
/// dropped) and all of its block columns form a single group. Each group
/// pair becomes one dense block. For Cannon on a P~ x P~ grid with t threads
/// this gives (M / (t P~)) x (K / P~) blocks for A and (K / P~) x (N / P~) for B
/// whenever the divisions are exact.
class DensifyPlan {
 public:
  DensifyPlan(BlockDims original, std::vector<std::size_t> row_blocks,
              std::vector<std::size_t> col_blocks, std::size_t row_groups);

  /// Plan for the panel a Cannon rank at `coords` multiplies with; `k_class`
  /// selects the K blocks (k mod P~) of the A or B panel. Ignored for C.
  static DensifyPlan for_cannon(const BlockDims& dims, const ProcessGrid& grid,
                                GridCoords coords, Operand role, std::size_t threads,
                                std::size_t k_class);

  /// Plan for the tall-and-skinny layout: K blocks owned by `rank` out of
  /// `ranks`, all rows of A and C, all columns of B and C.
  static DensifyPlan for_tall_skinny(const BlockDims& dims, std::size_t ranks,
                                     std::size_t rank, Operand role, std::size_t threads);

  const BlockDims& original() const { return original_; }
  const BlockDims& densified() const { return densified_; }
  const std::vector<std::size_t>& row_blocks() const { return row_blocks_; }
  const std::vector<std::size_t>& col_blocks() const { return col_blocks_; }
  std::size_t groups() const { return densified_.block_rows(); }

  struct Location {
    std::size_t dense_row_block = 0;
    std::size_t row_offset = 0;  // inside the dense block
    std::size_t col_offset = 0;
  };

  /// Position of original block (i, j) inside the densified matrix. Throws
  /// PlanMismatch for blocks outside the plan.
  Location locate(std::size_t i, std::size_t j) const;
  bool covers(std::size_t i, std::size_t j) const;

 private:
  BlockDims original_;
  BlockDims densified_;
  std::vector<std::size_t> row_blocks_;
  std::vector<std::size_t> col_blocks_;
  // Indexed by global block index; npos when outside the plan.
  std::vector<std::size_t> row_group_;
  std::vector<std::size_t> row_pos_;  // element offset within the group
  std::vector<std::size_t> col_pos_;  // element offset within the column group
};

/// Coalesces a panel into the plan's dense blocks. Absent blocks become
/// zeros. The arena comes from `pool` when given.
BlockedMatrix densify(const BlockedMatrix& panel, const DensifyPlan& plan,
                      BufferPool* pool = nullptr);

/// Splits dense blocks back into the original block structure. Every block
/// the plan covers is stored in the result, zero or not.
BlockedMatrix undensify(const BlockedMatrix& dense, const DensifyPlan& plan);

/// True iff occupancy >= threshold.
bool should_densify(double occupancy, double threshold = 1.0);

/// Overhead bookkeeping for reports.
struct DensifySummary {
  bool enabled = false;
  std::size_t copy_bytes = 0;
  double seconds = 0.0;
  std::vector<std::string> a_blocks;  // "rows x cols" of each densified block
  std::vector<std::string> b_blocks;
  std::vector<std::string> c_blocks;

  void merge(const DensifySummary& other);
};

std::vector<std::string> describe_blocks(const BlockDims& dims);
nlohmann::ordered_json to_json(const DensifySummary& s);

}  // namespace dbmm
