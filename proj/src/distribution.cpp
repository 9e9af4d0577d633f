#include "dbmm/distribution.hpp"

#include <algorithm>
#include <charconv>
#include <functional>

#include "dbmm/error.hpp"

namespace dbmm {

ProcessGrid::ProcessGrid(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) {
    throw Error(ErrorCode::InvalidArgument, "process grid dimensions must be positive");
  }
}

ProcessGrid ProcessGrid::parse(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw Error(ErrorCode::ParseError, "grid '" + text + "' not RxC");
  auto parse_part = [&](std::size_t begin, std::size_t end) {
    std::size_t v = 0;
    auto res = std::from_chars(text.data() + begin, text.data() + end, v);
    if (res.ec != std::errc() || res.ptr != text.data() + end || v == 0) {
      throw Error(ErrorCode::ParseError, "grid '" + text + "' not RxC");
    }
    return v;
  };
  return ProcessGrid(parse_part(0, x), parse_part(x + 1, text.size()));
}

std::size_t ProcessGrid::rank_of(GridCoords c) const {
  if (c.row >= rows_ || c.col >= cols_) {
    throw Error(ErrorCode::IndexOutOfRange, "grid coordinates outside " + to_string());
  }
  return c.row * cols_ + c.col;
}

GridCoords ProcessGrid::coords_of(std::size_t rank) const {
  if (rank >= size()) throw Error(ErrorCode::IndexOutOfRange, "rank " + std::to_string(rank));
  return {rank / cols_, rank % cols_};
}

std::string ProcessGrid::to_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

std::size_t BlockCyclicMap::owner_of_block(std::size_t i, std::size_t j) const {
  if (i >= dims_.block_rows() || j >= dims_.block_cols()) {
    throw Error(ErrorCode::IndexOutOfRange,
                "block (" + std::to_string(i) + "," + std::to_string(j) + ")");
  }
  return grid_.rank_of({i % grid_.rows(), j % grid_.cols()});
}

std::vector<std::size_t> BlockCyclicMap::local_block_rows(std::size_t grid_row) const {
  std::vector<std::size_t> out;
  for (std::size_t i = grid_row; i < dims_.block_rows(); i += grid_.rows()) out.push_back(i);
  return out;
}

std::vector<std::size_t> BlockCyclicMap::local_block_cols(std::size_t grid_col) const {
  std::vector<std::size_t> out;
  for (std::size_t j = grid_col; j < dims_.block_cols(); j += grid_.cols()) out.push_back(j);
  return out;
}

namespace {

using OwnerFn = std::function<std::size_t(std::size_t, std::size_t)>;

std::vector<BlockedMatrix> split_by_owner(const BlockedMatrix& global, std::size_t ranks,
                                          const OwnerFn& owner) {
  const auto& dims = global.dims();
  std::vector<std::vector<std::size_t>> row_ptr(ranks,
                                                std::vector<std::size_t>(dims.block_rows() + 1));
  std::vector<std::vector<std::size_t>> col_idx(ranks);
  std::vector<std::vector<double>> data(ranks);
  for (std::size_t i = 0; i < dims.block_rows(); ++i) {
    for (std::size_t s = global.row_ptr()[i]; s < global.row_ptr()[i + 1]; ++s) {
      const std::size_t j = global.col_idx()[s];
      const std::size_t r = owner(i, j);
      col_idx[r].push_back(j);
      auto b = global.block(s);
      data[r].insert(data[r].end(), b.begin(), b.end());
    }
    for (std::size_t r = 0; r < ranks; ++r) row_ptr[r][i + 1] = col_idx[r].size();
  }
  std::vector<BlockedMatrix> panels;
  panels.reserve(ranks);
  for (std::size_t r = 0; r < ranks; ++r) {
    panels.push_back(BlockedMatrix::from_parts(dims, std::move(row_ptr[r]), std::move(col_idx[r]),
                                               std::move(data[r])));
  }
  return panels;
}

BlockedMatrix merge_panels(const std::vector<BlockedMatrix>& panels, const BlockDims& dims,
                           const OwnerFn& owner) {
  std::vector<BlockEntry> entries;
  for (std::size_t r = 0; r < panels.size(); ++r) {
    const auto& p = panels[r];
    if (!(p.dims() == dims)) {
      throw Error(ErrorCode::ShapeMismatch, "panel " + std::to_string(r) + " has foreign dims");
    }
    p.for_each_block([&](std::size_t i, std::size_t j, std::size_t slot) {
      if (owner(i, j) != r) {
        throw Error(ErrorCode::OwnershipViolation,
                    "panel " + std::to_string(r) + " holds block (" + std::to_string(i) + "," +
                        std::to_string(j) + ") owned by rank " + std::to_string(owner(i, j)));
      }
      auto b = p.block(slot);
      entries.push_back({i, j, std::vector<double>(b.begin(), b.end())});
    });
  }
  return BlockedMatrix::build(dims, std::move(entries));
}

}  // namespace

std::vector<BlockedMatrix> scatter(const BlockedMatrix& global, const BlockCyclicMap& map) {
  if (!(global.dims() == map.dims())) {
    throw Error(ErrorCode::ShapeMismatch, "map partitions do not cover the matrix");
  }
  return split_by_owner(global, map.grid().size(), [&](std::size_t i, std::size_t j) {
    return map.owner_of_block(i, j);
  });
}

BlockedMatrix gather(const std::vector<BlockedMatrix>& panels, const BlockCyclicMap& map) {
  if (panels.size() != map.grid().size()) {
    throw Error(ErrorCode::ShapeMismatch, "expected one panel per rank");
  }
  return merge_panels(panels, map.dims(), [&](std::size_t i, std::size_t j) {
    return map.owner_of_block(i, j);
  });
}

KBlockMap::KBlockMap(std::size_t ranks, std::vector<std::size_t> k_sizes)
    : ranks_(ranks), k_sizes_(std::move(k_sizes)) {
  if (ranks_ == 0) throw Error(ErrorCode::InvalidArgument, "need at least one rank");
}

std::size_t KBlockMap::owner_of_k(std::size_t kb) const {
  if (kb >= k_sizes_.size()) throw Error(ErrorCode::IndexOutOfRange, "k block " + std::to_string(kb));
  return kb % ranks_;
}

std::vector<std::size_t> KBlockMap::local_k_blocks(std::size_t rank) const {
  std::vector<std::size_t> out;
  for (std::size_t kb = rank; kb < k_sizes_.size(); kb += ranks_) out.push_back(kb);
  return out;
}

namespace {

void check_k_side(const BlockDims& dims, const KBlockMap& map, KSide side) {
  const auto& k = side == KSide::ColumnsAreK ? dims.col_sizes() : dims.row_sizes();
  if (k != map.k_sizes()) throw Error(ErrorCode::PartitionMismatch, "K partition differs from map");
}

}  // namespace

std::vector<BlockedMatrix> scatter_k(const BlockedMatrix& global, const KBlockMap& map,
                                     KSide side) {
  check_k_side(global.dims(), map, side);
  return split_by_owner(global, map.ranks(), [&](std::size_t i, std::size_t j) {
    return map.owner_of_k(side == KSide::ColumnsAreK ? j : i);
  });
}

BlockedMatrix gather_k(const std::vector<BlockedMatrix>& panels, const KBlockMap& map,
                       KSide side) {
  if (panels.size() != map.ranks()) throw Error(ErrorCode::ShapeMismatch, "expected one panel per rank");
  if (panels.empty()) throw Error(ErrorCode::ShapeMismatch, "no panels");
  check_k_side(panels.front().dims(), map, side);
  return merge_panels(panels, panels.front().dims(), [&](std::size_t i, std::size_t j) {
    return map.owner_of_k(side == KSide::ColumnsAreK ? j : i);
  });
}

}  // namespace dbmm
