#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "dbmm/error.hpp"
#include "dbmm/local_multiply.hpp"
#include "oracle.hpp"

using namespace dbmm;

namespace {

bool rows_contiguous(const std::vector<BlockIndex>& order) {
  std::set<std::size_t> closed;
  for (std::size_t p = 0; p < order.size(); ++p) {
    if (closed.count(order[p].first)) return false;
    if (p + 1 < order.size() && order[p + 1].first != order[p].first) closed.insert(order[p].first);
  }
  return true;
}

bool is_permutation_of_grid(const std::vector<BlockIndex>& order, std::size_t r, std::size_t c) {
  std::set<BlockIndex> seen(order.begin(), order.end());
  if (seen.size() != r * c || order.size() != r * c) return false;
  for (auto [i, j] : seen) {
    if (i >= r || j >= c) return false;
  }
  return true;
}

// Number of (i, k, j) with A(i,k) and B(k,j) both stored.
std::size_t count_products(const BlockedMatrix& a, const BlockedMatrix& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.dims().block_rows(); ++i)
    for (std::size_t k = 0; k < a.dims().block_cols(); ++k)
      for (std::size_t j = 0; j < b.dims().block_cols(); ++j)
        if (a.find(i, k) && b.find(k, j)) ++n;
  return n;
}

}  // namespace

TEST_CASE("traversal examples") {
  CHECK(traversal_order(1, 1) == std::vector<BlockIndex>{{0, 0}});
  auto two = traversal_order(2, 2);
  CHECK(two.size() == 4);
  CHECK(two[0].first == 0);
  CHECK(two[1].first == 0);
  CHECK(two[2].first == 1);
  CHECK(rows_contiguous(two));
  auto four = traversal_order(4, 4);
  CHECK(is_permutation_of_grid(four, 4, 4));
  CHECK(rows_contiguous(four));
  CHECK(traversal_order(0, 3).empty());
}

TEST_CASE("property: traversal is a row-contiguous permutation, rows ascending, snake turns") {
  for (std::size_t r = 1; r <= 12; ++r) {
    for (std::size_t c = 1; c <= 12; ++c) {
      auto order = traversal_order(r, c);
      REQUIRE(is_permutation_of_grid(order, r, c));
      CHECK(rows_contiguous(order));
      CHECK(std::is_sorted(order.begin(), order.end(),
                           [](auto x, auto y) { return x.first < y.first; }));
      // consecutive rows meet at the same column block
      for (std::size_t p = 0; p + 1 < order.size(); ++p) {
        if (order[p].first != order[p + 1].first) CHECK(order[p].second == order[p + 1].second);
      }
    }
  }
}

TEST_CASE("generation counts: R x Kb x Cb entries, ceil(Kb Cb / cap) stacks per row") {
  std::mt19937_64 rng(7);
  const std::size_t R = 3, Kb = 5, Cb = 4;
  auto a = oracle::random_blocked(BlockDims(std::vector<std::size_t>(R, 2), std::vector<std::size_t>(Kb, 3)), 1.0, rng);
  auto b = oracle::random_blocked(BlockDims(std::vector<std::size_t>(Kb, 3), std::vector<std::size_t>(Cb, 1)), 1.0, rng);
  auto c = BlockedMatrix::dense_zero(BlockDims(std::vector<std::size_t>(R, 2), std::vector<std::size_t>(Cb, 1)));
  for (std::size_t cap : {1u, 3u, 7u, 20u, 30000u}) {
    LocalConfig cfg;
    cfg.stack_cap = cap;
    auto stacks = generate_stacks(a, b, c, panel_traversal(a, b), cfg);
    std::size_t total = 0;
    std::map<std::size_t, std::size_t> per_row;
    for (const auto& s : stacks) {
      CHECK(s.entries.size() <= cap);
      CHECK(!s.entries.empty());
      total += s.entries.size();
      ++per_row[s.a_row_block];
      for (const auto& e : s.entries) {
        CHECK(e.m == 2);
        CHECK(e.n == 1);
        CHECK(e.k == 3);
      }
    }
    CHECK(total == R * Kb * Cb);
    for (auto [row, n] : per_row) CHECK(n == (Kb * Cb + cap - 1) / cap);
  }
}

TEST_CASE("empty A gives no stacks; conformance is checked") {
  auto dims = BlockDims::uniform(4, 4, 2);
  BlockedMatrix a(dims), c(dims);
  std::mt19937_64 rng(1);
  auto b = oracle::random_blocked(dims, 1.0, rng);
  CHECK(generate_stacks(a, b, c, panel_traversal(a, b), LocalConfig{}).empty());
  auto stats = local_multiply(a, b, c, LocalConfig{});
  CHECK(stats.stacks == 0);
  CHECK(stats.min_entries == 0);

  BlockedMatrix wrong(BlockDims::uniform(4, 4, 1));
  try {
    local_multiply(wrong, b, c, LocalConfig{});
    FAIL("expected PartitionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PartitionMismatch);
  }
}

TEST_CASE("one block per operand gives one stack with one entry") {
  std::mt19937_64 rng(2);
  auto a = oracle::random_blocked(BlockDims({40}, {30}), 1.0, rng);
  auto b = oracle::random_blocked(BlockDims({30}, {20}), 1.0, rng);
  BlockedMatrix c(BlockDims({40}, {20}));
  auto stats = local_multiply(a, b, c, LocalConfig{});
  CHECK(stats.stacks == 1);
  CHECK(stats.entries == 1);
  CHECK(stats.max_entries == 1);
  CHECK(stats.histogram[0] == 1);
}

TEST_CASE("schedule examples") {
  std::vector<Stack> stacks(6);
  for (std::size_t i = 0; i < 6; ++i) stacks[i].a_row_block = i;
  auto one = schedule(stacks, 1);
  CHECK(one.size() == 1);
  CHECK(one[0].size() == 6);
  auto three = schedule(stacks, 3);
  std::vector<std::size_t> workers;
  for (const auto& s : stacks) workers.push_back(s.assigned_worker);
  CHECK(workers == std::vector<std::size_t>{0, 1, 2, 0, 1, 2});
  CHECK(three[1] == std::vector<std::size_t>{1, 4});

  // row stride: owned rows 0, 4, 8, ... spread over workers
  for (std::size_t i = 0; i < 6; ++i) stacks[i].a_row_block = 4 * i;
  schedule(stacks, 3, 4);
  workers.clear();
  for (const auto& s : stacks) workers.push_back(s.assigned_worker);
  CHECK(workers == std::vector<std::size_t>{0, 1, 2, 0, 1, 2});
}

TEST_CASE("property: a row block never lands on two workers") {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 100; ++t) {
    std::vector<Stack> stacks(1 + rng() % 60);
    for (auto& s : stacks) s.a_row_block = rng() % 20;
    const std::size_t threads = 1 + rng() % 8;
    schedule(stacks, threads, 1 + rng() % 3);
    std::map<std::size_t, std::size_t> owner;
    for (const auto& s : stacks) {
      CHECK(s.assigned_worker < threads);
      auto [it, fresh] = owner.emplace(s.a_row_block, s.assigned_worker);
      CHECK(it->second == s.assigned_worker);
    }
  }
}

TEST_CASE("execute: identity, accumulation, bad offsets") {
  std::vector<double> id{1, 0, 0, 1}, blk{2, 3, 4, 5}, c(4, 0.0);
  std::vector<Stack> stacks{Stack{{{0, 0, 0, 2, 2, 2}}, 0, 0}};
  execute_stacks(stacks, {{0}}, id, blk, c, LocalConfig{});
  CHECK(c == blk);

  // two entries hitting the same C block
  std::vector<double> a{1, 0, 0, 1, 2, 0, 0, 2}, b{1, 1, 1, 1, 3, 0, 0, 3};
  std::vector<double> acc(4, 0.0);
  std::vector<Stack> two{Stack{{{0, 0, 0, 2, 2, 2}, {4, 4, 0, 2, 2, 2}}, 0, 0}};
  execute_stacks(two, {{0}}, a, b, acc, LocalConfig{});
  CHECK(acc == std::vector<double>{7, 1, 1, 7});

  std::vector<Stack> bad{Stack{{{3, 0, 0, 2, 2, 2}}, 0, 0}};
  try {
    execute_stacks(bad, {{0}}, id, blk, c, LocalConfig{});
    FAIL("expected OffsetOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OffsetOutOfRange);
  }
}

TEST_CASE("property: local multiply matches the oracle, counts products, any t is bit-identical") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    auto rows = oracle::random_partition(1 + rng() % 30, 6, rng);
    auto inner = oracle::random_partition(1 + rng() % 30, 6, rng);
    auto cols = oracle::random_partition(1 + rng() % 30, 6, rng);
    const double occ = 0.25 + (rng() % 4) / 4.0;
    auto a = oracle::random_blocked(BlockDims(rows, inner), std::min(occ, 1.0), rng);
    auto b = oracle::random_blocked(BlockDims(inner, cols), std::min(occ, 1.0), rng);
    auto c0 = oracle::random_blocked(BlockDims(rows, cols), 0.5, rng);
    const auto want =
        oracle::triple_loop(oracle::expand(a), oracle::expand(b), oracle::expand(c0));

    BlockedMatrix first;
    for (std::size_t t = 1; t <= 8; ++t) {
      LocalConfig cfg;
      cfg.threads = t;
      cfg.stack_cap = 1 + rng() % 10;
      auto c = c0;
      auto stats = local_multiply(a, b, c, cfg);
      CHECK(stats.entries == count_products(a, b));
      CHECK(stats.max_entries <= cfg.stack_cap);
      CHECK(oracle::rel_error(oracle::expand(c), want) <= 1e-12);
      if (t == 1) {
        first = c;
      } else {
        CHECK(bit_equal(c, first));
      }
    }
  }
}

TEST_CASE("stats json has the histogram labels") {
  StackStats s;
  std::vector<Stack> stacks(2);
  stacks[0].entries.resize(1);
  stacks[1].entries.resize(50);
  stacks[1].assigned_worker = 1;
  s.add(stacks, 2);
  auto j = to_json(s);
  CHECK(j["histogram"]["1"] == 1);
  CHECK(j["histogram"]["11-100"] == 1);
  CHECK(j["stacks_per_worker"][1] == 1);
  CHECK(s.min_entries == 1);
  CHECK(s.max_entries == 50);
  StackStats m;
  m.merge(s);
  m.merge(s);
  CHECK(m.stacks == 4);
  CHECK(m.min_entries == 1);
}
