#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dbmm {

using BlockIndex = std::pair<std::size_t, std::size_t>;

/// Row and column partitions of a matrix into blocks. Every block size is
/// strictly positive; an empty partition describes a dimension of extent 0.
class BlockDims {
 public:
  BlockDims() = default;
  BlockDims(std::vector<std::size_t> row_sizes, std::vector<std::size_t> col_sizes);

  /// `rows` x `cols` elements cut into `block`-sized pieces; the last block in
  /// each direction absorbs the remainder.
  static BlockDims uniform(std::size_t rows, std::size_t cols, std::size_t block);
  static std::vector<std::size_t> split(std::size_t extent, std::size_t block);

  const std::vector<std::size_t>& row_sizes() const { return row_sizes_; }
  const std::vector<std::size_t>& col_sizes() const { return col_sizes_; }
  std::size_t block_rows() const { return row_sizes_.size(); }
  std::size_t block_cols() const { return col_sizes_.size(); }
  std::size_t total_rows() const { return row_offsets_.back(); }
  std::size_t total_cols() const { return col_offsets_.back(); }
  std::size_t row_offset(std::size_t i) const { return row_offsets_[i]; }
  std::size_t col_offset(std::size_t j) const { return col_offsets_[j]; }
  std::size_t block_elements(std::size_t i, std::size_t j) const {
    return row_sizes_[i] * col_sizes_[j];
  }

  friend bool operator==(const BlockDims& a, const BlockDims& b) {
    return a.row_sizes_ == b.row_sizes_ && a.col_sizes_ == b.col_sizes_;
  }

 private:
  std::vector<std::size_t> row_sizes_;
  std::vector<std::size_t> col_sizes_;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::size_t> col_offsets_{0};
};

/// Global problem shape: A is M x K, B is K x N, C is M x N.
struct ProblemDims {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
};

struct BlockEntry {
  std::size_t row = 0;
  std::size_t col = 0;
  std::vector<double> values;  // row-major, row_sizes[row] x col_sizes[col]
};

/// Row-major dense matrix used for conversions and reference products.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

/// Blocked compressed-sparse-row matrix. Blocks are row-major and live back to
/// back in one arena, in CSR order; `block_offset(slot)` locates block `slot`.
///
/// The structure is immutable after construction. Block values may be
/// mutated through `block(slot)` / `data()`, which is how C accumulates.
class BlockedMatrix {
 public:
  BlockedMatrix() = default;
  explicit BlockedMatrix(BlockDims dims);

  static BlockedMatrix build(BlockDims dims, std::vector<BlockEntry> entries);

  /// Adopts CSR arrays and an arena laid out in CSR order. Validates all
  /// structural invariants.
  static BlockedMatrix from_parts(BlockDims dims, std::vector<std::size_t> row_ptr,
                                  std::vector<std::size_t> col_idx, std::vector<double> data);

  /// Matrix with every block present; values are zero.
  static BlockedMatrix dense_zero(BlockDims dims);

  const BlockDims& dims() const { return dims_; }
  std::size_t nnz_blocks() const { return col_idx_.size(); }
  double occupancy() const;

  std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  std::span<const std::size_t> col_idx() const { return col_idx_; }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  std::size_t block_offset(std::size_t slot) const { return offsets_[slot]; }
  std::size_t block_size(std::size_t slot) const { return offsets_[slot + 1] - offsets_[slot]; }
  std::span<const double> block(std::size_t slot) const {
    return {data_.data() + offsets_[slot], block_size(slot)};
  }
  std::span<double> block(std::size_t slot) {
    return {data_.data() + offsets_[slot], block_size(slot)};
  }

  std::optional<std::size_t> find(std::size_t i, std::size_t j) const;

  /// Invokes f(i, j, slot) for every stored block in CSR order.
  template <class F>
  void for_each_block(F&& f) const {
    for (std::size_t i = 0; i + 1 < row_ptr_.size(); ++i) {
      for (std::size_t s = row_ptr_[i]; s < row_ptr_[i + 1]; ++s) f(i, col_idx_[s], s);
    }
  }

  std::vector<BlockIndex> block_indices() const;

  /// Copy that additionally stores every block in `required` (zero-filled if
  /// new). Returns a plain copy when nothing is missing.
  BlockedMatrix with_blocks(std::span<const BlockIndex> required) const;

  /// Hands the arena back (for pooling); leaves the matrix empty.
  std::vector<double> release_data() &&;

 private:
  void rebuild_offsets();
  void validate() const;

  BlockDims dims_;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<std::size_t> offsets_{0};
  std::vector<double> data_;
};

/// Same dims, same structure, and bit-identical values.
bool bit_equal(const BlockedMatrix& a, const BlockedMatrix& b);
bool bit_equal(std::span<const double> a, std::span<const double> b);

DenseMatrix to_dense(const BlockedMatrix& m);
BlockedMatrix from_dense(const DenseMatrix& a, const BlockDims& dims, bool drop_zero_blocks);

// Text fixture format:
//   M N r0 r1 ... ; c0 c1 ...
//   i j v00 v01 ...        (one line per stored block, row-major values)
// Values are written in shortest round-trip form.
void write_text(std::ostream& out, const BlockedMatrix& m);
BlockedMatrix read_text(std::istream& in);
std::string to_text(const BlockedMatrix& m);
BlockedMatrix from_text(const std::string& text);

}  // namespace dbmm
