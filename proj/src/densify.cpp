#include "dbmm/densify.hpp"

#include <algorithm>
#include <limits>

#include "dbmm/error.hpp"

namespace dbmm {

namespace {

constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

std::vector<std::size_t> strided(std::size_t first, std::size_t stride, std::size_t count) {
  std::vector<std::size_t> out;
  for (std::size_t i = first; i < count; i += stride) out.push_back(i);
  return out;
}

std::vector<std::size_t> all_of_range(std::size_t count) { return strided(0, 1, count); }

}  // namespace

DensifyPlan::DensifyPlan(BlockDims original, std::vector<std::size_t> row_blocks,
                         std::vector<std::size_t> col_blocks, std::size_t row_groups)
    : original_(std::move(original)),
      row_blocks_(std::move(row_blocks)),
      col_blocks_(std::move(col_blocks)),
      row_group_(original_.block_rows(), npos),
      row_pos_(original_.block_rows(), npos),
      col_pos_(original_.block_cols(), npos) {
  if (row_groups == 0) throw Error(ErrorCode::InvalidArgument, "need at least one row group");
  auto check = [](const std::vector<std::size_t>& ids, std::size_t limit) {
    for (std::size_t s = 0; s < ids.size(); ++s) {
      if (ids[s] >= limit || (s > 0 && ids[s] <= ids[s - 1])) {
        throw Error(ErrorCode::PlanMismatch, "plan block lists must be ascending and in range");
      }
    }
  };
  check(row_blocks_, original_.block_rows());
  check(col_blocks_, original_.block_cols());

  const std::size_t n = row_blocks_.size();
  const std::size_t base = n / row_groups;
  std::vector<std::size_t> group_rows;
  std::size_t next = 0;
  for (std::size_t g = 0; g < row_groups; ++g) {
    const std::size_t count = g + 1 == row_groups ? n - next : base;
    std::size_t elements = 0;
    for (std::size_t s = next; s < next + count; ++s) {
      const std::size_t i = row_blocks_[s];
      row_group_[i] = group_rows.size();
      row_pos_[i] = elements;
      elements += original_.row_sizes()[i];
    }
    if (count > 0) group_rows.push_back(elements);
    next += count;
  }

  std::size_t width = 0;
  for (auto j : col_blocks_) {
    col_pos_[j] = width;
    width += original_.col_sizes()[j];
  }
  std::vector<std::size_t> dense_cols;
  if (width > 0) dense_cols.push_back(width);
  densified_ = BlockDims(std::move(group_rows), std::move(dense_cols));
}

DensifyPlan DensifyPlan::for_cannon(const BlockDims& dims, const ProcessGrid& grid,
                                    GridCoords coords, Operand role, std::size_t threads,
                                    std::size_t k_class) {
  const std::size_t p = grid.rows();
  switch (role) {
    case Operand::A:
      return {dims, strided(coords.row, p, dims.block_rows()),
              strided(k_class, grid.cols(), dims.block_cols()), threads};
    case Operand::B:
      return {dims, strided(k_class, p, dims.block_rows()),
              strided(coords.col, grid.cols(), dims.block_cols()), 1};
    case Operand::C:
      return {dims, strided(coords.row, p, dims.block_rows()),
              strided(coords.col, grid.cols(), dims.block_cols()), threads};
  }
  throw Error(ErrorCode::InvalidArgument, "unknown operand");
}

DensifyPlan DensifyPlan::for_tall_skinny(const BlockDims& dims, std::size_t ranks,
                                         std::size_t rank, Operand role, std::size_t threads) {
  switch (role) {
    case Operand::A:
      return {dims, all_of_range(dims.block_rows()), strided(rank, ranks, dims.block_cols()),
              threads};
    case Operand::B:
      return {dims, strided(rank, ranks, dims.block_rows()), all_of_range(dims.block_cols()), 1};
    case Operand::C:
      return {dims, all_of_range(dims.block_rows()), all_of_range(dims.block_cols()), threads};
  }
  throw Error(ErrorCode::InvalidArgument, "unknown operand");
}

bool DensifyPlan::covers(std::size_t i, std::size_t j) const {
  return i < row_group_.size() && j < col_pos_.size() && row_group_[i] != npos &&
         col_pos_[j] != npos;
}

DensifyPlan::Location DensifyPlan::locate(std::size_t i, std::size_t j) const {
  if (!covers(i, j)) {
    throw Error(ErrorCode::PlanMismatch,
                "block (" + std::to_string(i) + "," + std::to_string(j) + ") outside the plan");
  }
  return {row_group_[i], row_pos_[i], col_pos_[j]};
}

BlockedMatrix densify(const BlockedMatrix& panel, const DensifyPlan& plan, BufferPool* pool) {
  if (!(panel.dims() == plan.original())) {
    throw Error(ErrorCode::PlanMismatch, "panel dims differ from the plan");
  }
  const auto& dd = plan.densified();
  const std::size_t total = dd.total_rows() * dd.total_cols();
  std::vector<double> arena =
      pool != nullptr ? pool->acquire_zeroed(total) : std::vector<double>(total, 0.0);

  // Dense blocks are one column group wide, so block g starts at
  // row_offset(g) * width.
  const std::size_t width = dd.total_cols();
  const auto& dims = panel.dims();
  panel.for_each_block([&](std::size_t i, std::size_t j, std::size_t slot) {
    const auto loc = plan.locate(i, j);
    const std::size_t rows = dims.row_sizes()[i];
    const std::size_t cols = dims.col_sizes()[j];
    const double* src = panel.block(slot).data();
    double* dst = arena.data() + dd.row_offset(loc.dense_row_block) * width;
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(src + r * cols, cols, dst + (loc.row_offset + r) * width + loc.col_offset);
    }
  });

  std::vector<std::size_t> row_ptr(dd.block_rows() + 1);
  std::vector<std::size_t> col_idx;
  for (std::size_t g = 0; g < dd.block_rows(); ++g) {
    if (dd.block_cols() == 1) col_idx.push_back(0);
    row_ptr[g + 1] = col_idx.size();
  }
  return BlockedMatrix::from_parts(dd, std::move(row_ptr), std::move(col_idx), std::move(arena));
}

BlockedMatrix undensify(const BlockedMatrix& dense, const DensifyPlan& plan) {
  const auto& dd = plan.densified();
  if (!(dense.dims() == dd) || dense.nnz_blocks() != dd.block_rows() * dd.block_cols()) {
    throw Error(ErrorCode::PlanMismatch, "matrix was not produced under this plan");
  }
  const auto& dims = plan.original();
  const std::size_t width = dd.total_cols();
  std::vector<std::size_t> row_ptr(dims.block_rows() + 1, 0);
  std::vector<std::size_t> col_idx;
  std::vector<double> data;
  data.reserve(dd.total_rows() * width);
  std::size_t next_row = 0;
  for (auto i : plan.row_blocks()) {
    for (; next_row <= i; ++next_row) row_ptr[next_row + 1] = col_idx.size();
    for (auto j : plan.col_blocks()) {
      const auto loc = plan.locate(i, j);
      const double* src = dense.data().data() + dd.row_offset(loc.dense_row_block) * width;
      const std::size_t cols = dims.col_sizes()[j];
      for (std::size_t r = 0; r < dims.row_sizes()[i]; ++r) {
        const double* row = src + (loc.row_offset + r) * width + loc.col_offset;
        data.insert(data.end(), row, row + cols);
      }
      col_idx.push_back(j);
    }
    row_ptr[i + 1] = col_idx.size();
  }
  for (; next_row < dims.block_rows(); ++next_row) row_ptr[next_row + 1] = col_idx.size();
  return BlockedMatrix::from_parts(dims, std::move(row_ptr), std::move(col_idx), std::move(data));
}

bool should_densify(double occupancy, double threshold) { return occupancy >= threshold; }

void DensifySummary::merge(const DensifySummary& other) {
  enabled = enabled || other.enabled;
  copy_bytes += other.copy_bytes;
  seconds += other.seconds;
  if (a_blocks.empty()) a_blocks = other.a_blocks;
  if (b_blocks.empty()) b_blocks = other.b_blocks;
  if (c_blocks.empty()) c_blocks = other.c_blocks;
}

std::vector<std::string> describe_blocks(const BlockDims& dims) {
  std::vector<std::string> out;
  for (auto r : dims.row_sizes()) {
    for (auto c : dims.col_sizes()) out.push_back(std::to_string(r) + "x" + std::to_string(c));
  }
  return out;
}

nlohmann::ordered_json to_json(const DensifySummary& s) {
  return {{"enabled", s.enabled},
          {"copy_bytes", s.copy_bytes},
          {"seconds", s.seconds},
          {"a_blocks", s.a_blocks},
          {"b_blocks", s.b_blocks},
          {"c_blocks", s.c_blocks}};
}

}  // namespace dbmm
