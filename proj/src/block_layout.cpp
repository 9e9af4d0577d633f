#include "dbmm/block_layout.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dbmm/error.hpp"

namespace dbmm {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DuplicateBlock: return "DuplicateBlock";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::OwnershipViolation: return "OwnershipViolation";
    case ErrorCode::Deadlock: return "Deadlock";
    case ErrorCode::RankPanic: return "RankPanic";
    case ErrorCode::NonSquareGrid: return "NonSquareGrid";
    case ErrorCode::PartitionMismatch: return "PartitionMismatch";
    case ErrorCode::ResultTooLargeForReplication: return "ResultTooLargeForReplication";
    case ErrorCode::OffsetOutOfRange: return "OffsetOutOfRange";
    case ErrorCode::PlanMismatch: return "PlanMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

namespace {

std::vector<std::size_t> prefix_sums(const std::vector<std::size_t>& sizes) {
  std::vector<std::size_t> out(sizes.size() + 1, 0);
  std::partial_sum(sizes.begin(), sizes.end(), out.begin() + 1);
  return out;
}

}  // namespace

BlockDims::BlockDims(std::vector<std::size_t> row_sizes, std::vector<std::size_t> col_sizes)
    : row_sizes_(std::move(row_sizes)), col_sizes_(std::move(col_sizes)) {
  auto positive = [](std::size_t s) { return s > 0; };
  if (!std::all_of(row_sizes_.begin(), row_sizes_.end(), positive) ||
      !std::all_of(col_sizes_.begin(), col_sizes_.end(), positive)) {
    throw Error(ErrorCode::ShapeMismatch, "block sizes must be strictly positive");
  }
  row_offsets_ = prefix_sums(row_sizes_);
  col_offsets_ = prefix_sums(col_sizes_);
}

std::vector<std::size_t> BlockDims::split(std::size_t extent, std::size_t block) {
  if (block == 0) throw Error(ErrorCode::InvalidArgument, "block size must be positive");
  std::vector<std::size_t> sizes(extent / block, block);
  if (extent % block != 0) sizes.push_back(extent % block);
  return sizes;
}

BlockDims BlockDims::uniform(std::size_t rows, std::size_t cols, std::size_t block) {
  return BlockDims(split(rows, block), split(cols, block));
}

BlockedMatrix::BlockedMatrix(BlockDims dims)
    : dims_(std::move(dims)), row_ptr_(dims_.block_rows() + 1, 0) {}

BlockedMatrix BlockedMatrix::build(BlockDims dims, std::vector<BlockEntry> entries) {
  for (const auto& e : entries) {
    if (e.row >= dims.block_rows() || e.col >= dims.block_cols()) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "block (" + std::to_string(e.row) + "," + std::to_string(e.col) + ")");
    }
    if (e.values.size() != dims.block_elements(e.row, e.col)) {
      throw Error(ErrorCode::ShapeMismatch, "block (" + std::to_string(e.row) + "," +
                                                std::to_string(e.col) + ") has " +
                                                std::to_string(e.values.size()) + " values");
    }
  }
  std::sort(entries.begin(), entries.end(), [](const BlockEntry& a, const BlockEntry& b) {
    return std::tie(a.row, a.col) < std::tie(b.row, b.col);
  });
  for (std::size_t s = 1; s < entries.size(); ++s) {
    if (entries[s].row == entries[s - 1].row && entries[s].col == entries[s - 1].col) {
      throw Error(ErrorCode::DuplicateBlock, "block (" + std::to_string(entries[s].row) + "," +
                                                 std::to_string(entries[s].col) + ")");
    }
  }

  BlockedMatrix m(std::move(dims));
  std::size_t total = 0;
  for (const auto& e : entries) total += e.values.size();
  m.data_.reserve(total);
  m.col_idx_.reserve(entries.size());
  for (const auto& e : entries) {
    ++m.row_ptr_[e.row + 1];
    m.col_idx_.push_back(e.col);
    m.data_.insert(m.data_.end(), e.values.begin(), e.values.end());
  }
  std::partial_sum(m.row_ptr_.begin(), m.row_ptr_.end(), m.row_ptr_.begin());
  m.rebuild_offsets();
  return m;
}

BlockedMatrix BlockedMatrix::from_parts(BlockDims dims, std::vector<std::size_t> row_ptr,
                                        std::vector<std::size_t> col_idx,
                                        std::vector<double> data) {
  BlockedMatrix m;
  m.dims_ = std::move(dims);
  m.row_ptr_ = std::move(row_ptr);
  m.col_idx_ = std::move(col_idx);
  m.data_ = std::move(data);
  if (m.row_ptr_.size() != m.dims_.block_rows() + 1 || m.row_ptr_.front() != 0 ||
      m.row_ptr_.back() != m.col_idx_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "row_ptr inconsistent with block rows");
  }
  m.validate();
  m.rebuild_offsets();
  if (m.offsets_.back() != m.data_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "arena holds " + std::to_string(m.data_.size()) +
                                              " values, structure needs " +
                                              std::to_string(m.offsets_.back()));
  }
  return m;
}

BlockedMatrix BlockedMatrix::dense_zero(BlockDims dims) {
  const std::size_t rows = dims.block_rows();
  const std::size_t cols = dims.block_cols();
  std::vector<std::size_t> row_ptr(rows + 1);
  std::vector<std::size_t> col_idx;
  col_idx.reserve(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    row_ptr[i] = i * cols;
    for (std::size_t j = 0; j < cols; ++j) col_idx.push_back(j);
  }
  row_ptr[rows] = rows * cols;
  std::vector<double> data(dims.total_rows() * dims.total_cols(), 0.0);
  return from_parts(std::move(dims), std::move(row_ptr), std::move(col_idx), std::move(data));
}

void BlockedMatrix::validate() const {
  for (std::size_t i = 0; i + 1 < row_ptr_.size(); ++i) {
    if (row_ptr_[i] > row_ptr_[i + 1]) {
      throw Error(ErrorCode::ShapeMismatch, "row_ptr must be non-decreasing");
    }
    for (std::size_t s = row_ptr_[i]; s < row_ptr_[i + 1]; ++s) {
      if (col_idx_[s] >= dims_.block_cols()) {
        throw Error(ErrorCode::IndexOutOfRange, "column block " + std::to_string(col_idx_[s]));
      }
      if (s > row_ptr_[i] && col_idx_[s] <= col_idx_[s - 1]) {
        throw Error(ErrorCode::DuplicateBlock,
                    "column indices in block row " + std::to_string(i) + " not increasing");
      }
    }
  }
}

void BlockedMatrix::rebuild_offsets() {
  offsets_.assign(col_idx_.size() + 1, 0);
  for_each_block([&](std::size_t i, std::size_t j, std::size_t slot) {
    offsets_[slot + 1] = offsets_[slot] + dims_.block_elements(i, j);
  });
}

double BlockedMatrix::occupancy() const {
  const std::size_t cells = dims_.block_rows() * dims_.block_cols();
  return cells == 0 ? 0.0 : static_cast<double>(nnz_blocks()) / static_cast<double>(cells);
}

std::optional<std::size_t> BlockedMatrix::find(std::size_t i, std::size_t j) const {
  if (i >= dims_.block_rows()) return std::nullopt;
  auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
  auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
  auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) return std::nullopt;
  return static_cast<std::size_t>(it - col_idx_.begin());
}

std::vector<BlockIndex> BlockedMatrix::block_indices() const {
  std::vector<BlockIndex> out;
  out.reserve(nnz_blocks());
  for_each_block([&](std::size_t i, std::size_t j, std::size_t) { out.emplace_back(i, j); });
  return out;
}

BlockedMatrix BlockedMatrix::with_blocks(std::span<const BlockIndex> required) const {
  std::vector<BlockIndex> missing;
  for (const auto& [i, j] : required) {
    if (i >= dims_.block_rows() || j >= dims_.block_cols()) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "block (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
    if (!find(i, j)) missing.emplace_back(i, j);
  }
  if (missing.empty()) return *this;
  std::sort(missing.begin(), missing.end());
  missing.erase(std::unique(missing.begin(), missing.end()), missing.end());

  BlockedMatrix out(dims_);
  out.col_idx_.reserve(nnz_blocks() + missing.size());
  std::size_t total = data_.size();
  for (const auto& [i, j] : missing) total += dims_.block_elements(i, j);
  out.data_.reserve(total);

  auto miss = missing.begin();
  for (std::size_t i = 0; i < dims_.block_rows(); ++i) {
    std::size_t s = row_ptr_[i];
    const std::size_t end = row_ptr_[i + 1];
    while (s < end || (miss != missing.end() && miss->first == i)) {
      const bool take_existing =
          s < end && (miss == missing.end() || miss->first != i || col_idx_[s] < miss->second);
      if (take_existing) {
        out.col_idx_.push_back(col_idx_[s]);
        auto b = block(s);
        out.data_.insert(out.data_.end(), b.begin(), b.end());
        ++s;
      } else {
        out.col_idx_.push_back(miss->second);
        out.data_.resize(out.data_.size() + dims_.block_elements(i, miss->second), 0.0);
        ++miss;
      }
    }
    out.row_ptr_[i + 1] = out.col_idx_.size();
  }
  out.rebuild_offsets();
  return out;
}

std::vector<double> BlockedMatrix::release_data() && {
  std::vector<double> out = std::move(data_);
  *this = BlockedMatrix(BlockDims());
  return out;
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

bool bit_equal(const BlockedMatrix& a, const BlockedMatrix& b) {
  return a.dims() == b.dims() && std::ranges::equal(a.row_ptr(), b.row_ptr()) &&
         std::ranges::equal(a.col_idx(), b.col_idx()) && bit_equal(a.data(), b.data());
}

DenseMatrix to_dense(const BlockedMatrix& m) {
  const auto& dims = m.dims();
  DenseMatrix out(dims.total_rows(), dims.total_cols());
  m.for_each_block([&](std::size_t i, std::size_t j, std::size_t slot) {
    const std::size_t rows = dims.row_sizes()[i];
    const std::size_t cols = dims.col_sizes()[j];
    const double* src = m.block(slot).data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(src + r * cols, cols,
                  &out(dims.row_offset(i) + r, dims.col_offset(j)));
    }
  });
  return out;
}

BlockedMatrix from_dense(const DenseMatrix& a, const BlockDims& dims, bool drop_zero_blocks) {
  if (a.rows != dims.total_rows() || a.cols != dims.total_cols() ||
      a.values.size() != a.rows * a.cols) {
    throw Error(ErrorCode::ShapeMismatch, "dense array " + std::to_string(a.rows) + "x" +
                                              std::to_string(a.cols) + " vs block dims " +
                                              std::to_string(dims.total_rows()) + "x" +
                                              std::to_string(dims.total_cols()));
  }
  std::vector<std::size_t> row_ptr(dims.block_rows() + 1, 0);
  std::vector<std::size_t> col_idx;
  std::vector<double> data;
  data.reserve(a.values.size());
  std::vector<double> scratch;
  for (std::size_t i = 0; i < dims.block_rows(); ++i) {
    for (std::size_t j = 0; j < dims.block_cols(); ++j) {
      const std::size_t rows = dims.row_sizes()[i];
      const std::size_t cols = dims.col_sizes()[j];
      scratch.resize(rows * cols);
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a.values.begin() + static_cast<std::ptrdiff_t>((dims.row_offset(i) + r) * a.cols + dims.col_offset(j)), cols,
                    scratch.begin() + static_cast<std::ptrdiff_t>(r * cols));
      }
      if (drop_zero_blocks &&
          std::all_of(scratch.begin(), scratch.end(), [](double v) { return v == 0.0; })) {
        continue;
      }
      col_idx.push_back(j);
      data.insert(data.end(), scratch.begin(), scratch.end());
    }
    row_ptr[i + 1] = col_idx.size();
  }
  return BlockedMatrix::from_parts(dims, std::move(row_ptr), std::move(col_idx),
                                   std::move(data));
}

namespace {

void append_number(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& token) {
  T value{};
  auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw Error(ErrorCode::ParseError, "bad number '" + token + "'");
  }
  return value;
}

}  // namespace

void write_text(std::ostream& out, const BlockedMatrix& m) {
  const auto& dims = m.dims();
  std::string line = std::to_string(dims.total_rows()) + " " + std::to_string(dims.total_cols());
  for (auto s : dims.row_sizes()) line += " " + std::to_string(s);
  line += " ;";
  for (auto s : dims.col_sizes()) line += " " + std::to_string(s);
  out << line << '\n';
  m.for_each_block([&](std::size_t i, std::size_t j, std::size_t slot) {
    std::string l = std::to_string(i) + " " + std::to_string(j);
    for (double v : m.block(slot)) {
      l += ' ';
      append_number(l, v);
    }
    out << l << '\n';
  });
}

BlockedMatrix read_text(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::ParseError, "missing header line");
  std::istringstream hs(header);
  std::string tok;
  std::vector<std::string> tokens;
  while (hs >> tok) tokens.push_back(tok);
  auto sep = std::find(tokens.begin(), tokens.end(), ";");
  if (tokens.size() < 3 || sep == tokens.end() || sep - tokens.begin() < 2) {
    throw Error(ErrorCode::ParseError, "header must read 'M N rows... ; cols...'");
  }
  const auto total_rows = parse_number<std::size_t>(tokens[0]);
  const auto total_cols = parse_number<std::size_t>(tokens[1]);
  std::vector<std::size_t> rows, cols;
  for (auto it = tokens.begin() + 2; it != sep; ++it) rows.push_back(parse_number<std::size_t>(*it));
  for (auto it = sep + 1; it != tokens.end(); ++it) cols.push_back(parse_number<std::size_t>(*it));
  BlockDims dims(std::move(rows), std::move(cols));
  if (dims.total_rows() != total_rows || dims.total_cols() != total_cols) {
    throw Error(ErrorCode::ShapeMismatch, "header totals disagree with block sizes");
  }

  std::vector<BlockEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    BlockEntry e;
    std::string a, b;
    if (!(ls >> a >> b)) throw Error(ErrorCode::ParseError, "bad block line");
    e.row = parse_number<std::size_t>(a);
    e.col = parse_number<std::size_t>(b);
    while (ls >> tok) e.values.push_back(parse_number<double>(tok));
    entries.push_back(std::move(e));
  }
  return BlockedMatrix::build(std::move(dims), std::move(entries));
}

std::string to_text(const BlockedMatrix& m) {
  std::ostringstream out;
  write_text(out, m);
  return out.str();
}

BlockedMatrix from_text(const std::string& text) {
  std::istringstream in(text);
  return read_text(in);
}

}  // namespace dbmm
