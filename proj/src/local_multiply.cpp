#include "dbmm/local_multiply.hpp"

#include <algorithm>
#include <thread>

#include "dbmm/error.hpp"

namespace dbmm {

namespace {

std::size_t bucket_of(std::size_t entries) {
  if (entries <= 1) return 0;
  std::size_t bucket = 1;
  for (std::size_t limit = 10; entries > limit && bucket + 1 < StackStats::kBuckets; limit *= 10) {
    ++bucket;
  }
  return bucket;
}

void traverse_cols(std::size_t row, std::size_t lo, std::size_t hi, bool reversed,
                   std::vector<BlockIndex>& out) {
  if (hi - lo == 1) {
    out.emplace_back(row, lo);
    return;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  if (!reversed) {
    traverse_cols(row, lo, mid, reversed, out);
    traverse_cols(row, mid, hi, reversed, out);
  } else {
    traverse_cols(row, mid, hi, reversed, out);
    traverse_cols(row, lo, mid, reversed, out);
  }
}

void traverse(std::size_t r0, std::size_t r1, std::size_t cols, std::vector<BlockIndex>& out) {
  if (r1 - r0 > 1) {
    const std::size_t mid = r0 + (r1 - r0) / 2;
    traverse(r0, mid, cols, out);
    traverse(mid, r1, cols, out);
    return;
  }
  traverse_cols(r0, 0, cols, r0 % 2 == 1, out);
}

}  // namespace

void StackStats::add(const std::vector<Stack>& list, std::size_t workers) {
  ++multiplications;
  if (stacks_per_worker.size() < workers) {
    stacks_per_worker.resize(workers, 0);
    entries_per_worker.resize(workers, 0);
  }
  for (const auto& s : list) {
    const std::size_t n = s.entries.size();
    min_entries = stacks == 0 ? n : std::min(min_entries, n);
    ++stacks;
    entries += n;
    max_entries = std::max(max_entries, n);
    ++histogram[bucket_of(n)];
    if (s.assigned_worker >= stacks_per_worker.size()) {
      stacks_per_worker.resize(s.assigned_worker + 1, 0);
      entries_per_worker.resize(s.assigned_worker + 1, 0);
    }
    ++stacks_per_worker[s.assigned_worker];
    entries_per_worker[s.assigned_worker] += n;
  }
}

void StackStats::merge(const StackStats& other) {
  multiplications += other.multiplications;
  if (other.stacks > 0) {
    min_entries = stacks == 0 ? other.min_entries : std::min(min_entries, other.min_entries);
  }
  stacks += other.stacks;
  entries += other.entries;
  max_entries = std::max(max_entries, other.max_entries);
  for (std::size_t b = 0; b < kBuckets; ++b) histogram[b] += other.histogram[b];
  if (stacks_per_worker.size() < other.stacks_per_worker.size()) {
    stacks_per_worker.resize(other.stacks_per_worker.size(), 0);
    entries_per_worker.resize(other.entries_per_worker.size(), 0);
  }
  for (std::size_t w = 0; w < other.stacks_per_worker.size(); ++w) {
    stacks_per_worker[w] += other.stacks_per_worker[w];
    entries_per_worker[w] += other.entries_per_worker[w];
  }
}

nlohmann::ordered_json to_json(const StackStats& s) {
  static constexpr const char* kLabels[StackStats::kBuckets] = {
      "1", "2-10", "11-100", "101-1000", "1001-10000", "10001+"};
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (std::size_t b = 0; b < StackStats::kBuckets; ++b) hist[kLabels[b]] = s.histogram[b];
  return {{"multiplications", s.multiplications},
          {"stacks", s.stacks},
          {"entries", s.entries},
          {"max_entries", s.max_entries},
          {"min_entries", s.min_entries},
          {"histogram", hist},
          {"stacks_per_worker", s.stacks_per_worker},
          {"entries_per_worker", s.entries_per_worker}};
}

std::vector<BlockIndex> traversal_order(std::size_t rows, std::size_t cols) {
  std::vector<BlockIndex> out;
  if (rows == 0 || cols == 0) return out;
  out.reserve(rows * cols);
  traverse(0, rows, cols, out);
  return out;
}

std::vector<BlockIndex> panel_traversal(const BlockedMatrix& a, const BlockedMatrix& b) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < a.dims().block_rows(); ++i) {
    if (a.row_ptr()[i + 1] > a.row_ptr()[i]) rows.push_back(i);
  }
  std::vector<bool> has_col(b.dims().block_cols(), false);
  for (auto j : b.col_idx()) has_col[j] = true;
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < has_col.size(); ++j) {
    if (has_col[j]) cols.push_back(j);
  }
  auto order = traversal_order(rows.size(), cols.size());
  for (auto& [i, j] : order) {
    i = rows[i];
    j = cols[j];
  }
  return order;
}

std::vector<BlockIndex> product_targets(const BlockedMatrix& a, const BlockedMatrix& b) {
  std::vector<BlockIndex> out;
  std::vector<bool> mark(b.dims().block_cols(), false);
  for (std::size_t i = 0; i < a.dims().block_rows(); ++i) {
    std::fill(mark.begin(), mark.end(), false);
    bool any = false;
    for (std::size_t s = a.row_ptr()[i]; s < a.row_ptr()[i + 1]; ++s) {
      const std::size_t kb = a.col_idx()[s];
      for (std::size_t t = b.row_ptr()[kb]; t < b.row_ptr()[kb + 1]; ++t) {
        mark[b.col_idx()[t]] = true;
        any = true;
      }
    }
    if (!any) continue;
    for (std::size_t j = 0; j < mark.size(); ++j) {
      if (mark[j]) out.emplace_back(i, j);
    }
  }
  return out;
}

void check_conformant(const BlockedMatrix& a, const BlockedMatrix& b, const BlockedMatrix& c) {
  if (a.dims().col_sizes() != b.dims().row_sizes()) {
    throw Error(ErrorCode::PartitionMismatch, "A column blocks differ from B row blocks");
  }
  if (c.dims().row_sizes() != a.dims().row_sizes() ||
      c.dims().col_sizes() != b.dims().col_sizes()) {
    throw Error(ErrorCode::PartitionMismatch, "C block partition does not conform to A and B");
  }
}

std::vector<Stack> generate_stacks(const BlockedMatrix& a, const BlockedMatrix& b,
                                   const BlockedMatrix& c, std::span<const BlockIndex> order,
                                   const LocalConfig& cfg) {
  check_conformant(a, b, c);
  if (cfg.stack_cap == 0) throw Error(ErrorCode::InvalidArgument, "stack cap must be positive");
  const auto& rows = a.dims().row_sizes();
  const auto& inner = a.dims().col_sizes();
  const auto& cols = b.dims().col_sizes();

  std::vector<Stack> stacks;
  Stack current;
  bool open = false;
  auto flush = [&] {
    if (open && !current.entries.empty()) stacks.push_back(std::move(current));
    current = Stack{};
    open = false;
  };

  for (const auto& [i, j] : order) {
    if (i >= a.dims().block_rows() || j >= b.dims().block_cols()) {
      throw Error(ErrorCode::IndexOutOfRange, "traversal pair outside the panels");
    }
    if (open && current.a_row_block != i) flush();
    if (!open) {
      current.a_row_block = i;
      open = true;
    }
    std::optional<std::size_t> c_slot;
    for (std::size_t s = a.row_ptr()[i]; s < a.row_ptr()[i + 1]; ++s) {
      const std::size_t kb = a.col_idx()[s];
      const auto b_slot = b.find(kb, j);
      if (!b_slot) continue;
      if (!c_slot) {
        c_slot = c.find(i, j);
        if (!c_slot) {
          throw Error(ErrorCode::InvalidArgument, "C block (" + std::to_string(i) + "," +
                                                      std::to_string(j) + ") not stored");
        }
      }
      if (current.entries.size() == cfg.stack_cap) {
        stacks.push_back(std::move(current));
        current = Stack{};
        current.a_row_block = i;
      }
      current.entries.push_back({a.block_offset(s), b.block_offset(*b_slot),
                                 c.block_offset(*c_slot), rows[i], cols[j], inner[kb]});
    }
  }
  flush();
  return stacks;
}

std::vector<std::vector<std::size_t>> schedule(std::vector<Stack>& stacks, std::size_t threads,
                                               std::size_t row_stride) {
  threads = std::max<std::size_t>(threads, 1);
  row_stride = std::max<std::size_t>(row_stride, 1);
  std::vector<std::vector<std::size_t>> assignment(threads);
  for (std::size_t s = 0; s < stacks.size(); ++s) {
    const std::size_t worker = (stacks[s].a_row_block / row_stride) % threads;
    stacks[s].assigned_worker = worker;
    assignment[worker].push_back(s);
  }
  return assignment;
}

namespace {

void check_offsets(const std::vector<Stack>& stacks, std::size_t a_size, std::size_t b_size,
                   std::size_t c_size) {
  for (const auto& s : stacks) {
    for (const auto& e : s.entries) {
      if (e.m == 0 || e.n == 0 || e.k == 0 || e.a_offset + e.m * e.k > a_size ||
          e.b_offset + e.k * e.n > b_size || e.c_offset + e.m * e.n > c_size) {
        throw Error(ErrorCode::OffsetOutOfRange, "stack entry outside its arena");
      }
    }
  }
}

void run_worker(const std::vector<Stack>& stacks, const std::vector<std::size_t>& mine,
                std::span<const double> a, std::span<const double> b, std::span<double> c,
                const KernelDispatcher& dispatcher) {
  std::size_t last_m = 0, last_n = 0, last_k = 0;
  KernelParams params;
  for (auto s : mine) {
    for (const auto& e : stacks[s].entries) {
      if (e.m != last_m || e.n != last_n || e.k != last_k) {
        params = dispatcher.dispatch(e.m, e.n, e.k).params;
        last_m = e.m;
        last_n = e.n;
        last_k = e.k;
      }
      smm(e.m, e.n, e.k, a.subspan(e.a_offset, e.m * e.k), b.subspan(e.b_offset, e.k * e.n),
          c.subspan(e.c_offset, e.m * e.n), params);
    }
  }
}

}  // namespace

void execute_stacks(const std::vector<Stack>& stacks,
                    const std::vector<std::vector<std::size_t>>& assignment,
                    std::span<const double> a, std::span<const double> b, std::span<double> c,
                    const LocalConfig& cfg) {
  check_offsets(stacks, a.size(), b.size(), c.size());
  const KernelDispatcher fallback;
  const KernelDispatcher& dispatcher = cfg.dispatcher != nullptr ? *cfg.dispatcher : fallback;

  std::vector<std::size_t> busy;
  for (std::size_t w = 0; w < assignment.size(); ++w) {
    if (!assignment[w].empty()) busy.push_back(w);
  }
  if (busy.size() <= 1) {
    for (auto w : busy) run_worker(stacks, assignment[w], a, b, c, dispatcher);
    return;
  }
  std::vector<std::jthread> workers;
  workers.reserve(busy.size());
  for (auto w : busy) {
    workers.emplace_back([&, w] { run_worker(stacks, assignment[w], a, b, c, dispatcher); });
  }
}

StackStats local_multiply(const BlockedMatrix& a, const BlockedMatrix& b, BlockedMatrix& c,
                          const LocalConfig& cfg) {
  check_conformant(a, b, c);
  const auto targets = product_targets(a, b);
  bool missing = false;
  for (const auto& [i, j] : targets) {
    if (!c.find(i, j)) {
      missing = true;
      break;
    }
  }
  if (missing) c = c.with_blocks(targets);

  const auto order = panel_traversal(a, b);
  auto stacks = generate_stacks(a, b, c, order, cfg);
  const auto assignment = schedule(stacks, cfg.threads, cfg.row_stride);
  execute_stacks(stacks, assignment, a.data(), b.data(), c.data(), cfg);

  StackStats stats;
  stats.add(stacks, std::max<std::size_t>(cfg.threads, 1));
  return stats;
}

}  // namespace dbmm
