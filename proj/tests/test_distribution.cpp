#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <random>

#include "dbmm/distribution.hpp"
#include "dbmm/error.hpp"
#include "oracle.hpp"

using namespace dbmm;

TEST_CASE("grid numbering is row-major") {
  ProcessGrid g(2, 3);
  CHECK(g.size() == 6);
  CHECK_FALSE(g.is_square());
  for (std::size_t r = 0; r < g.size(); ++r) CHECK(g.rank_of(g.coords_of(r)) == r);
  CHECK(g.rank_of({1, 2}) == 5);
  CHECK(ProcessGrid::parse("4x4") == ProcessGrid(4, 4));
  CHECK(ProcessGrid::parse("1x12").cols() == 12);
  CHECK_THROWS_AS(ProcessGrid::parse("4"), Error);
  CHECK_THROWS_AS(ProcessGrid::parse("0x2"), Error);
  CHECK_THROWS_AS(ProcessGrid(0, 1), Error);
}

TEST_CASE("owner_of_block examples") {
  BlockCyclicMap one(ProcessGrid(1, 1), BlockDims::uniform(10, 10, 2));
  CHECK(one.owner_of_block(3, 4) == 0);

  ProcessGrid g(2, 2);
  BlockCyclicMap two(g, BlockDims::uniform(12, 12, 2));
  CHECK(g.coords_of(two.owner_of_block(5, 2)) == GridCoords{1, 0});
  try {
    two.owner_of_block(6, 0);
    FAIL("expected IndexOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IndexOutOfRange);
  }

  BlockCyclicMap four(ProcessGrid(4, 4), BlockDims::uniform(16, 16, 1));
  std::map<std::size_t, int> counts;
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 16; ++j) ++counts[four.owner_of_block(i, j)];
  }
  CHECK(counts.size() == 16);
  for (auto [rank, n] : counts) CHECK(n == 16);
}

TEST_CASE("property: ownership balance differs by at most one stripe") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    ProcessGrid g(1 + rng() % 4, 1 + rng() % 4);
    const std::size_t br = 1 + rng() % 13, bc = 1 + rng() % 13;
    BlockCyclicMap map(g, BlockDims(std::vector<std::size_t>(br, 1), std::vector<std::size_t>(bc, 1)));
    std::vector<std::size_t> rows(g.rows()), cols(g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) rows[r] = map.local_block_rows(r).size();
    for (std::size_t c = 0; c < g.cols(); ++c) cols[c] = map.local_block_cols(c).size();
    auto [rmin, rmax] = std::minmax_element(rows.begin(), rows.end());
    auto [cmin, cmax] = std::minmax_element(cols.begin(), cols.end());
    CHECK(*rmax - *rmin <= 1);
    CHECK(*cmax - *cmin <= 1);
  }
}

TEST_CASE("scatter / gather examples") {
  std::mt19937_64 rng(9);
  auto dims = BlockDims::uniform(8, 8, 2);
  auto m = oracle::random_blocked(dims, 1.0, rng);

  BlockCyclicMap one(ProcessGrid(1, 1), dims);
  auto p1 = scatter(m, one);
  REQUIRE(p1.size() == 1);
  CHECK(bit_equal(p1[0], m));

  BlockCyclicMap two(ProcessGrid(2, 2), dims);
  auto p4 = scatter(m, two);
  REQUIRE(p4.size() == 4);
  for (const auto& p : p4) CHECK(p.nnz_blocks() == 4);
  CHECK(bit_equal(gather(p4, two), m));

  BlockedMatrix empty(dims);
  auto pe = scatter(empty, two);
  CHECK(pe.size() == 4);
  for (const auto& p : pe) CHECK(p.nnz_blocks() == 0);
  CHECK(gather(pe, two).nnz_blocks() == 0);

  CHECK_THROWS_AS(scatter(m, BlockCyclicMap(ProcessGrid(2, 2), BlockDims::uniform(8, 8, 4))), Error);
}

TEST_CASE("gather rejects blocks on the wrong rank") {
  auto dims = BlockDims::uniform(4, 4, 2);
  BlockCyclicMap map(ProcessGrid(2, 2), dims);
  std::vector<BlockedMatrix> panels(4, BlockedMatrix(dims));
  panels[1] = BlockedMatrix::build(dims, {{0, 0, {1, 2, 3, 4}}});
  try {
    gather(panels, map);
    FAIL("expected OwnershipViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OwnershipViolation);
  }
}

TEST_CASE("property: gather . scatter is the identity") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 100; ++t) {
    BlockDims d(oracle::random_partition(1 + rng() % 30, 5, rng),
                oracle::random_partition(1 + rng() % 30, 5, rng));
    auto m = oracle::random_blocked(d, (rng() % 5) / 4.0, rng);
    BlockCyclicMap map(ProcessGrid(1 + rng() % 4, 1 + rng() % 4), d);
    auto panels = scatter(m, map);
    std::size_t total = 0;
    for (std::size_t r = 0; r < panels.size(); ++r) {
      total += panels[r].nnz_blocks();
      panels[r].for_each_block([&](std::size_t i, std::size_t j, std::size_t) {
        CHECK(map.owner_of_block(i, j) == r);
      });
    }
    CHECK(total == m.nnz_blocks());
    CHECK(bit_equal(gather(panels, map), m));
  }
}

TEST_CASE("K map splits A by columns and B by rows") {
  std::mt19937_64 rng(4);
  auto a = oracle::random_blocked(BlockDims({2, 2}, {1, 2, 3, 1, 1}), 1.0, rng);
  auto b = oracle::random_blocked(BlockDims({1, 2, 3, 1, 1}, {3}), 1.0, rng);
  KBlockMap kmap(2, {1, 2, 3, 1, 1});
  CHECK(kmap.owner_of_k(3) == 1);
  CHECK(kmap.local_k_blocks(0) == std::vector<std::size_t>{0, 2, 4});
  auto ap = scatter_k(a, kmap, KSide::ColumnsAreK);
  auto bp = scatter_k(b, kmap, KSide::RowsAreK);
  CHECK(ap[0].nnz_blocks() == 6);
  CHECK(bp[1].nnz_blocks() == 2);
  CHECK(bit_equal(gather_k(ap, kmap, KSide::ColumnsAreK), a));
  CHECK(bit_equal(gather_k(bp, kmap, KSide::RowsAreK), b));
  CHECK_THROWS_AS(scatter_k(a, KBlockMap(2, {3, 4}), KSide::ColumnsAreK), Error);
}
