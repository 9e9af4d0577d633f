#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <sstream>

#include "dbmm/block_layout.hpp"
#include "dbmm/error.hpp"
#include "oracle.hpp"

using namespace dbmm;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("BlockDims rejects zero-sized blocks and sums extents") {
  CHECK(code_of([] { BlockDims({2, 0}, {1}); }) == ErrorCode::ShapeMismatch);
  BlockDims d({2, 3}, {4, 1, 1});
  CHECK(d.total_rows() == 5);
  CHECK(d.total_cols() == 6);
  CHECK(d.row_offset(1) == 2);
  CHECK(d.col_offset(2) == 5);
  CHECK(d.block_elements(1, 0) == 12);
}

TEST_CASE("uniform split gives a ragged last block") {
  CHECK(BlockDims::split(10, 4) == std::vector<std::size_t>{4, 4, 2});
  CHECK(BlockDims::split(8, 4) == std::vector<std::size_t>{4, 4});
  CHECK(BlockDims::split(0, 4).empty());
}

TEST_CASE("63360 elements in blocks of 22 make 2880 blocks") {
  const auto d = BlockDims::uniform(63360, 63360, 22);
  CHECK(d.block_rows() == 2880);
  CHECK(d.block_cols() == 2880);
  CHECK(d.total_rows() == 2880 * 22);
}

TEST_CASE("build: one 2x2 block") {
  auto m = BlockedMatrix::build(BlockDims({2}, {2}), {{0, 0, {1, 2, 3, 4}}});
  CHECK(m.nnz_blocks() == 1);
  CHECK(m.occupancy() == 1.0);
  const auto d = to_dense(m);
  CHECK(d(0, 1) == 2.0);
  CHECK(d(1, 0) == 3.0);
}

TEST_CASE("build: empty 3x3 block grid") {
  auto m = BlockedMatrix::build(BlockDims({1, 1, 1}, {1, 1, 1}), {});
  CHECK(m.nnz_blocks() == 0);
  CHECK(m.occupancy() == 0.0);
  CHECK(m.row_ptr().size() == 4);
}

TEST_CASE("build sorts columns and validates") {
  BlockDims d({1, 2}, {1, 2, 3});
  auto m = BlockedMatrix::build(d, {{1, 2, std::vector<double>(6, 1.0)},
                                    {1, 0, std::vector<double>(2, 2.0)},
                                    {0, 1, std::vector<double>(2, 3.0)}});
  CHECK(m.nnz_blocks() == 3);
  CHECK(std::vector<std::size_t>(m.col_idx().begin(), m.col_idx().end()) ==
        std::vector<std::size_t>{1, 0, 2});
  CHECK(std::vector<std::size_t>(m.row_ptr().begin(), m.row_ptr().end()) ==
        std::vector<std::size_t>{0, 1, 3});
  CHECK(m.block_size(*m.find(1, 2)) == 6);
  CHECK_FALSE(m.find(0, 0).has_value());

  CHECK(code_of([&] {
          BlockedMatrix::build(d, {{0, 0, {1}}, {0, 0, {2}}});
        }) == ErrorCode::DuplicateBlock);
  CHECK(code_of([&] { BlockedMatrix::build(d, {{0, 1, {1}}}); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { BlockedMatrix::build(d, {{2, 0, {1}}}); }) == ErrorCode::IndexOutOfRange);
  CHECK(code_of([&] { BlockedMatrix::build(d, {{0, 3, {1}}}); }) == ErrorCode::IndexOutOfRange);
}

TEST_CASE("from_parts rejects broken structure") {
  BlockDims d({1, 1}, {1, 1});
  CHECK_NOTHROW(BlockedMatrix::from_parts(d, {0, 1, 2}, {0, 1}, {1.0, 2.0}));
  CHECK_THROWS_AS(BlockedMatrix::from_parts(d, {0, 2, 1}, {0, 1}, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(BlockedMatrix::from_parts(d, {0, 2, 2}, {1, 0}, {1.0, 2.0}), Error);
  CHECK_THROWS_AS(BlockedMatrix::from_parts(d, {0, 1, 2}, {0, 1}, {1.0}), Error);
  CHECK_THROWS_AS(BlockedMatrix::from_parts(d, {0, 1}, {0}, {1.0}), Error);
}

TEST_CASE("to_dense: empty and identity") {
  BlockDims d({2, 2}, {2, 2});
  auto empty = BlockedMatrix::build(d, {});
  for (double v : to_dense(empty).values) CHECK(v == 0.0);

  auto id = BlockedMatrix::build(d, {{0, 0, {1, 0, 0, 1}}});
  const auto dense = to_dense(id);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(dense(i, j) == (i == j && i < 2 ? 1.0 : 0.0));
  }
}

TEST_CASE("from_dense examples") {
  BlockDims d({2, 2}, {2, 2});
  DenseMatrix zero(4, 4);
  CHECK(from_dense(zero, d, true).nnz_blocks() == 0);
  CHECK(from_dense(zero, d, false).nnz_blocks() == 4);

  DenseMatrix id(4, 4);
  for (std::size_t i = 0; i < 4; ++i) id(i, i) = 1.0;
  auto m = from_dense(id, d, true);
  CHECK(m.nnz_blocks() == 2);
  CHECK(m.find(0, 0).has_value());
  CHECK(m.find(1, 1).has_value());

  CHECK_THROWS_AS(from_dense(DenseMatrix(3, 4), d, false), Error);

  std::mt19937_64 rng(5);
  DenseMatrix r(44, 44);
  r.values = oracle::random_values(44 * 44, rng);
  auto rb = from_dense(r, BlockDims::uniform(44, 44, 22), false);
  CHECK(rb.nnz_blocks() == 4);
  CHECK(to_dense(rb).values == r.values);
}

TEST_CASE("property: roundtrips and element counts on random matrices") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    BlockDims d(oracle::random_partition(1 + rng() % 40, 7, rng),
                oracle::random_partition(1 + rng() % 40, 7, rng));
    const double occ = (rng() % 5) / 4.0;
    auto m = oracle::random_blocked(d, occ, rng);

    m.for_each_block([&](std::size_t i, std::size_t j, std::size_t slot) {
      CHECK(m.block_size(slot) == d.row_sizes()[i] * d.col_sizes()[j]);
    });
    CHECK(m.occupancy() >= 0.0);
    CHECK(m.occupancy() <= 1.0);

    // library expansion agrees with the hand-rolled one
    const auto ours = to_dense(m);
    CHECK(ours.values == oracle::expand(m).v);

    // to_dense . from_dense is the identity on dense arrays
    auto back = from_dense(ours, d, false);
    CHECK(to_dense(back).values == ours.values);
    // and from_dense(to_dense(m)) reproduces a fully stored m
    if (m.nnz_blocks() == d.block_rows() * d.block_cols()) CHECK(bit_equal(back, m));

    // dropping zero blocks never raises occupancy
    auto dropped = from_dense(ours, d, true);
    CHECK(dropped.occupancy() <= back.occupancy());
    CHECK(dropped.occupancy() <= m.occupancy());

    CHECK(bit_equal(from_text(to_text(m)), m));
  }
}

TEST_CASE("text format is exact and textual roundtrip is stable") {
  BlockDims d({1, 2}, {2});
  auto m = BlockedMatrix::build(d, {{1, 0, {0.1, -1e-300, 1.0 / 3.0, 5e300}}});
  const std::string text = to_text(m);
  CHECK(text.rfind("3 2 1 2 ; 2\n", 0) == 0);
  auto back = from_text(text);
  CHECK(bit_equal(back, m));
  CHECK(to_text(back) == text);

  CHECK_THROWS_AS(from_text("2 2 1 1 ; 2\n0 0 1\n"), Error);
  CHECK_THROWS_AS(from_text("garbage"), Error);
}

TEST_CASE("with_blocks adds zero blocks and keeps the existing ones") {
  BlockDims d({1, 1}, {1, 1});
  auto m = BlockedMatrix::build(d, {{0, 1, {7.0}}});
  std::vector<BlockIndex> need{{0, 0}, {0, 1}, {1, 1}};
  auto w = m.with_blocks(need);
  CHECK(w.nnz_blocks() == 3);
  CHECK(w.block(*w.find(0, 1))[0] == 7.0);
  CHECK(w.block(*w.find(1, 1))[0] == 0.0);
}
