#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dbmm/block_layout.hpp"

namespace dbmm {

struct GridCoords {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const GridCoords&, const GridCoords&) = default;
};

/// rows x cols process grid, ranks numbered row-major: rank = row * cols + col.
class ProcessGrid {
 public:
  ProcessGrid() = default;
  ProcessGrid(std::size_t rows, std::size_t cols);

  /// Parses "RxC", e.g. "2x2".
  static ProcessGrid parse(const std::string& text);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }
  bool is_square() const { return rows_ == cols_; }

  std::size_t rank_of(GridCoords c) const;
  GridCoords coords_of(std::size_t rank) const;

  std::string to_string() const;

  friend bool operator==(const ProcessGrid&, const ProcessGrid&) = default;

 private:
  std::size_t rows_ = 1;
  std::size_t cols_ = 1;
};

/// ScaLAPACK-style cyclic ownership with a cycle length of one block:
/// block (i, j) lives on grid coordinates (i mod rows, j mod cols).
class BlockCyclicMap {
 public:
  BlockCyclicMap(ProcessGrid grid, BlockDims dims) : grid_(grid), dims_(std::move(dims)) {}

  const ProcessGrid& grid() const { return grid_; }
  const BlockDims& dims() const { return dims_; }

  std::size_t owner_of_block(std::size_t i, std::size_t j) const;

  /// Block rows (resp. columns) held by grid row r (resp. column c), ascending.
  std::vector<std::size_t> local_block_rows(std::size_t grid_row) const;
  std::vector<std::size_t> local_block_cols(std::size_t grid_col) const;

 private:
  ProcessGrid grid_;
  BlockDims dims_;
};

/// Panels keep the global block dims and store only the blocks the rank owns.
std::vector<BlockedMatrix> scatter(const BlockedMatrix& global, const BlockCyclicMap& map);
BlockedMatrix gather(const std::vector<BlockedMatrix>& panels, const BlockCyclicMap& map);

/// Which side of a product a K-distributed operand sits on.
enum class KSide { ColumnsAreK, RowsAreK };

/// One-dimensional cyclic map over the K block index across all P ranks.
/// A (M x K) is split by block column, B (K x N) by block row.
class KBlockMap {
 public:
  KBlockMap(std::size_t ranks, std::vector<std::size_t> k_sizes);

  std::size_t ranks() const { return ranks_; }
  const std::vector<std::size_t>& k_sizes() const { return k_sizes_; }
  std::size_t owner_of_k(std::size_t kb) const;
  std::vector<std::size_t> local_k_blocks(std::size_t rank) const;

 private:
  std::size_t ranks_;
  std::vector<std::size_t> k_sizes_;
};

std::vector<BlockedMatrix> scatter_k(const BlockedMatrix& global, const KBlockMap& map,
                                     KSide side);
BlockedMatrix gather_k(const std::vector<BlockedMatrix>& panels, const KBlockMap& map,
                       KSide side);

}  // namespace dbmm
