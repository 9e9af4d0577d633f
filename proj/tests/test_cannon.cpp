#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numeric>
#include <random>

#include "dbmm/cannon.hpp"
#include "dbmm/error.hpp"
#include "oracle.hpp"

using namespace dbmm;

namespace {

struct Problem {
  BlockedMatrix a, b, c;
};

Problem random_problem(const BlockDims& a_dims, const BlockDims& b_dims, double occ,
                       std::mt19937_64& rng) {
  return {oracle::random_blocked(a_dims, occ, rng), oracle::random_blocked(b_dims, occ, rng),
          oracle::random_blocked(BlockDims(a_dims.row_sizes(), b_dims.col_sizes()), occ, rng)};
}

struct Outcome {
  BlockedMatrix c;
  MultiplyResult detail;
};

Outcome run_cannon(const Problem& pr, const ProcessGrid& grid, MultiplyConfig cfg = {}) {
  const BlockCyclicMap am(grid, pr.a.dims()), bm(grid, pr.b.dims()), cm(grid, pr.c.dims());
  Outcome o;
  o.detail = cannon_multiply(scatter(pr.a, am), scatter(pr.b, bm), scatter(pr.c, cm), grid, cfg);
  o.c = gather(o.detail.c_panels, cm);
  return o;
}

double error_vs_oracle(const Problem& pr, const BlockedMatrix& c) {
  auto want = oracle::triple_loop(oracle::expand(pr.a), oracle::expand(pr.b), oracle::expand(pr.c));
  return oracle::rel_error(oracle::expand(c), want);
}

}  // namespace

TEST_CASE("skew on 1x1 and 2x2") {
  ProcessGrid one(1, 1);
  CHECK(skew_align(std::vector<int>{7}, one, Operand::A) == std::vector<int>{7});
  ProcessGrid two(2, 2);
  std::vector<int> labels{0, 1, 2, 3};
  CHECK(skew_align(labels, two, Operand::A) == std::vector<int>{0, 1, 3, 2});
  CHECK(skew_align(labels, two, Operand::B) == std::vector<int>{0, 3, 2, 1});
  CHECK(skew_align(labels, two, Operand::C) == labels);
}

TEST_CASE("skew on 3x3 matches the hand table") {
  ProcessGrid g(3, 3);
  std::vector<int> labels(9);
  std::iota(labels.begin(), labels.end(), 0);
  CHECK(skew_align(labels, g, Operand::A) == std::vector<int>{0, 1, 2, 4, 5, 3, 8, 6, 7});
  CHECK(skew_align(labels, g, Operand::B) == std::vector<int>{0, 4, 8, 3, 7, 2, 6, 1, 5});
  for (std::size_t r = 0; r < 9; ++r) {
    for (auto role : {Operand::A, Operand::B, Operand::C}) {
      CHECK(skew_destination(g, skew_source(g, r, role), role) == r);
    }
  }
}

TEST_CASE("non-square grid is rejected") {
  std::vector<int> labels(6);
  try {
    skew_align(labels, ProcessGrid(2, 3), Operand::A);
    require_square(ProcessGrid(2, 3));
    FAIL("expected NonSquareGrid");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonSquareGrid);
  }
  std::mt19937_64 rng(1);
  auto pr = random_problem(BlockDims::uniform(4, 4, 2), BlockDims::uniform(4, 4, 2), 1.0, rng);
  try {
    run_cannon(pr, ProcessGrid(1, 2));
    FAIL("expected NonSquareGrid");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonSquareGrid);
  }
}

TEST_CASE("partition mismatch is rejected") {
  std::mt19937_64 rng(1);
  ProcessGrid g(2, 2);
  auto a = oracle::random_blocked(BlockDims::uniform(4, 4, 2), 1.0, rng);
  auto b = oracle::random_blocked(BlockDims::uniform(4, 4, 1), 1.0, rng);
  BlockedMatrix c(BlockDims::uniform(4, 4, 2));
  try {
    cannon_multiply(scatter(a, BlockCyclicMap(g, a.dims())), scatter(b, BlockCyclicMap(g, b.dims())),
                    scatter(c, BlockCyclicMap(g, c.dims())), g, {});
    FAIL("expected PartitionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PartitionMismatch);
  }
}

TEST_CASE("single rank: no bytes, equals the local product exactly") {
  std::mt19937_64 rng(2);
  auto pr = random_problem(BlockDims::uniform(12, 10, 3), BlockDims::uniform(10, 8, 3), 0.7, rng);
  auto o = run_cannon(pr, ProcessGrid(1, 1));
  CHECK(o.detail.transport.total_sent() == 0);
  auto c = pr.c;
  local_multiply(pr.a, pr.b, c, LocalConfig{});
  CHECK(bit_equal(o.c, c));
}

TEST_CASE("2x2 grid, dense 8x8 with 2x2 blocks matches the oracle") {
  std::mt19937_64 rng(3);
  auto dims = BlockDims::uniform(8, 8, 2);
  auto pr = random_problem(dims, dims, 1.0, rng);
  auto o = run_cannon(pr, ProcessGrid(2, 2));
  CHECK(error_vs_oracle(pr, o.c) <= 1e-12);
}

TEST_CASE("closed-form shift bytes on dense divisible problems") {
  for (auto [n, block, p] : std::vector<std::array<std::size_t, 3>>{
           {16, 2, 2}, {24, 4, 2}, {36, 3, 3}, {48, 3, 4}, {48, 4, 4}}) {
    CAPTURE(n);
    CAPTURE(p);
    std::mt19937_64 rng(n + p);
    auto dims = BlockDims::uniform(n, n, block);
    auto pr = random_problem(dims, dims, 1.0, rng);
    ProcessGrid g(p, p);
    for (bool dense : {false, true}) {
      MultiplyConfig cfg;
      cfg.densify = dense;
      cfg.local.threads = 2;
      auto o = run_cannon(pr, g, cfg);
      CHECK(error_vs_oracle(pr, o.c) <= 1e-12);
      const std::uint64_t tile = (n / p) * (n / p) * 8;
      for (std::size_t r = 0; r < g.size(); ++r) {
        const auto& rc = o.detail.comm.ranks[r];
        CHECK(rc.phase("shift").sent_bytes == 2 * tile * (p - 1));
        CHECK(rc.phase("shift").recv_bytes == 2 * tile * (p - 1));
        const auto [row, col] = g.coords_of(r);
        CHECK(rc.phase("skew").sent_bytes == tile * ((row != 0) + (col != 0)));
        CHECK(rc.sent_bytes == o.detail.transport.ranks[r].sent_bytes);
        CHECK(rc.steps == p);
      }
      CHECK(o.detail.transport.total_sent() == o.detail.transport.total_received());
    }
  }
}

TEST_CASE("accumulates into a preloaded C; ragged and sparse cases") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 12; ++trial) {
    BlockDims ad(oracle::random_partition(1 + rng() % 40, 7, rng),
                 oracle::random_partition(1 + rng() % 40, 7, rng));
    BlockDims bd(ad.col_sizes(), oracle::random_partition(1 + rng() % 40, 7, rng));
    auto pr = random_problem(ad, bd, trial % 2 ? 1.0 : 0.6, rng);
    const std::size_t p = 1 + trial % 3;
    for (bool dense : {false, true}) {
      MultiplyConfig cfg;
      cfg.densify = dense;
      cfg.local.threads = 1 + trial % 4;
      auto o = run_cannon(pr, ProcessGrid(p, p), cfg);
      CHECK(error_vs_oracle(pr, o.c) <= 1e-12);
      if (dense) CHECK(o.detail.total_stacks().max_entries <= 1);
    }
  }
}

TEST_CASE("determinism and thread-count independence") {
  std::mt19937_64 rng(6);
  auto dims = BlockDims::uniform(30, 30, 4);
  auto pr = random_problem(dims, dims, 0.8, rng);
  ProcessGrid g(3, 3);
  auto first = run_cannon(pr, g);
  auto again = run_cannon(pr, g);
  CHECK(bit_equal(first.c, again.c));
  CHECK(first.detail.comm == again.detail.comm);
  CHECK(first.detail.stacks == again.detail.stacks);
  for (std::size_t t = 2; t <= 8; ++t) {
    MultiplyConfig cfg;
    cfg.local.threads = t;
    CHECK(bit_equal(run_cannon(pr, g, cfg).c, first.c));
  }
}

TEST_CASE("pools are reused across repeated multiplications") {
  std::mt19937_64 rng(8);
  auto dims = BlockDims::uniform(24, 24, 3);
  auto pr = random_problem(dims, dims, 1.0, rng);
  ProcessGrid g(2, 2);
  std::vector<BufferPool> pools(4);
  MultiplyConfig cfg;
  cfg.densify = true;
  cfg.pools = &pools;
  run_cannon(pr, g, cfg);
  std::size_t after_first = 0;
  for (auto& pool : pools) after_first += pool.allocations();
  auto o = run_cannon(pr, g, cfg);
  std::size_t after_second = 0, reuses = 0;
  for (auto& pool : pools) {
    after_second += pool.allocations();
    reuses += pool.reuses();
  }
  CHECK(after_second == after_first);
  CHECK(reuses > 0);
  CHECK(error_vs_oracle(pr, o.c) <= 1e-12);

  std::vector<BufferPool> wrong(3);
  cfg.pools = &wrong;
  CHECK_THROWS_AS(run_cannon(pr, g, cfg), Error);
}

TEST_CASE("comm report json carries phases") {
  std::mt19937_64 rng(9);
  auto dims = BlockDims::uniform(8, 8, 2);
  auto o = run_cannon(random_problem(dims, dims, 1.0, rng), ProcessGrid(2, 2));
  auto j = to_json(o.detail.comm);
  REQUIRE(j["ranks"].size() == 4);
  CHECK(j["ranks"][3]["phases"]["shift"]["sent_bytes"] == 2 * 16 * 8);
  CHECK(j["ranks"][0]["steps"] == 2);
}
