#include "dbmm/cannon.hpp"

#include <chrono>
#include <optional>

#include "dbmm/error.hpp"

namespace dbmm {

namespace {

constexpr int kSkewTagA = 1;
constexpr int kSkewTagB = 2;
constexpr int shift_tag_a(std::size_t step) { return 16 + 2 * static_cast<int>(step); }
constexpr int shift_tag_b(std::size_t step) { return 17 + 2 * static_cast<int>(step); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct RankOutput {
  BlockedMatrix c;
  RankComm comm;
  StackStats stacks;
  DensifySummary densify;
};

/// Holds the panel a rank currently multiplies with: either the caller's
/// input (borrowed) or one it received / densified (owned).
class PanelSlot {
 public:
  explicit PanelSlot(const BlockedMatrix& borrowed) : current_(&borrowed) {}

  const BlockedMatrix& get() const { return *current_; }

  void replace(BlockedMatrix next, BufferPool* pool) {
    if (owned_ && pool != nullptr) pool->recycle(std::move(*owned_).release_data());
    owned_ = std::move(next);
    current_ = &*owned_;
  }

  void release(BufferPool* pool) {
    if (owned_ && pool != nullptr) pool->recycle(std::move(*owned_).release_data());
    owned_.reset();
  }

 private:
  const BlockedMatrix* current_;
  std::optional<BlockedMatrix> owned_;
};

}  // namespace

void require_square(const ProcessGrid& grid) {
  if (!grid.is_square()) {
    throw Error(ErrorCode::NonSquareGrid, "Cannon needs a square grid, got " + grid.to_string());
  }
}

std::size_t skew_source(const ProcessGrid& grid, std::size_t rank, Operand role) {
  require_square(grid);
  const std::size_t p = grid.rows();
  const auto [r, c] = grid.coords_of(rank);
  switch (role) {
    case Operand::A: return grid.rank_of({r, (c + r) % p});
    case Operand::B: return grid.rank_of({(r + c) % p, c});
    case Operand::C: return rank;
  }
  return rank;
}

std::size_t skew_destination(const ProcessGrid& grid, std::size_t rank, Operand role) {
  require_square(grid);
  const std::size_t p = grid.rows();
  const auto [r, c] = grid.coords_of(rank);
  switch (role) {
    case Operand::A: return grid.rank_of({r, (c + p - r) % p});
    case Operand::B: return grid.rank_of({(r + p - c) % p, c});
    case Operand::C: return rank;
  }
  return rank;
}

MultiplyResult cannon_multiply(const std::vector<BlockedMatrix>& a_panels,
                               const std::vector<BlockedMatrix>& b_panels,
                               std::vector<BlockedMatrix> c_panels, const ProcessGrid& grid,
                               const MultiplyConfig& cfg) {
  require_square(grid);
  const std::size_t ranks = grid.size();
  if (a_panels.empty() || b_panels.empty() || c_panels.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "missing panels");
  }
  check_conformant(a_panels.front(), b_panels.front(), c_panels.front());
  const BlockCyclicMap a_map(grid, a_panels.front().dims());
  const BlockCyclicMap b_map(grid, b_panels.front().dims());
  const BlockCyclicMap c_map(grid, c_panels.front().dims());
  auto owner_in = [](const BlockCyclicMap& map) {
    return [&map](std::size_t i, std::size_t j) { return map.owner_of_block(i, j); };
  };
  detail::check_panels(a_panels, ranks, owner_in(a_map), "A");
  detail::check_panels(b_panels, ranks, owner_in(b_map), "B");
  detail::check_panels(c_panels, ranks, owner_in(c_map), "C");
  if (cfg.pools != nullptr && cfg.pools->size() != ranks) {
    throw Error(ErrorCode::InvalidArgument, "need one buffer pool per rank");
  }

  const std::size_t p = grid.rows();
  const std::size_t threads = std::max<std::size_t>(cfg.local.threads, 1);

  auto program = [&](RankEndpoint& ep) {
    const std::size_t rank = ep.rank();
    const auto [row, col] = ep.coords();
    BufferPool* pool = cfg.pools != nullptr ? &(*cfg.pools)[rank] : nullptr;

    RankOutput out;
    LocalConfig local = cfg.local;
    local.row_stride = cfg.densify ? 1 : p;

    PanelSlot a(a_panels[rank]);
    PanelSlot b(b_panels[rank]);
    BlockedMatrix c = std::move(c_panels[rank]);
    std::optional<DensifyPlan> c_plan;

    if (cfg.densify) {
      const auto t0 = std::chrono::steady_clock::now();
      // Own A panel holds K blocks k = col (mod P~), own B panel k = row.
      a.replace(densify(a.get(), DensifyPlan::for_cannon(a_map.dims(), grid, {row, col},
                                                         Operand::A, threads, col),
                        pool),
                pool);
      b.replace(densify(b.get(), DensifyPlan::for_cannon(b_map.dims(), grid, {row, col},
                                                         Operand::B, threads, row),
                        pool),
                pool);
      c_plan = DensifyPlan::for_cannon(c_map.dims(), grid, {row, col}, Operand::C, threads, 0);
      BlockedMatrix c_dense = densify(c, *c_plan, pool);
      out.densify.enabled = true;
      out.densify.copy_bytes += (a.get().data().size() + b.get().data().size() +
                                 c_dense.data().size()) * sizeof(double);
      out.densify.a_blocks = describe_blocks(a.get().dims());
      out.densify.b_blocks = describe_blocks(b.get().dims());
      out.densify.c_blocks = describe_blocks(c_dense.dims());
      c = std::move(c_dense);
      out.densify.seconds += seconds_since(t0);
    }

    detail::PhaseMeter meter(ep);
    if (p > 1) {
      std::optional<PendingHandle> recv_a, recv_b;
      if (row != 0) {
        ep.isend(skew_destination(grid, rank, Operand::A), kSkewTagA, detail::pack(a.get(), pool));
        recv_a = ep.irecv(skew_source(grid, rank, Operand::A), kSkewTagA);
      }
      if (col != 0) {
        ep.isend(skew_destination(grid, rank, Operand::B), kSkewTagB, detail::pack(b.get(), pool));
        recv_b = ep.irecv(skew_source(grid, rank, Operand::B), kSkewTagB);
      }
      if (recv_a) a.replace(detail::unpack(ep.wait(*recv_a)), pool);
      if (recv_b) b.replace(detail::unpack(ep.wait(*recv_b)), pool);
    }
    meter.close("skew", out.comm.phases);

    const std::size_t left = grid.rank_of({row, (col + p - 1) % p});
    const std::size_t right = grid.rank_of({row, (col + 1) % p});
    const std::size_t up = grid.rank_of({(row + p - 1) % p, col});
    const std::size_t down = grid.rank_of({(row + 1) % p, col});
    for (std::size_t step = 0; step < p; ++step) {
      const bool shift = step + 1 < p;
      std::optional<PendingHandle> recv_a, recv_b;
      if (shift) {
        ep.isend(left, shift_tag_a(step), detail::pack(a.get(), pool));
        ep.isend(up, shift_tag_b(step), detail::pack(b.get(), pool));
        recv_a = ep.irecv(right, shift_tag_a(step));
        recv_b = ep.irecv(down, shift_tag_b(step));
      }
      out.stacks.merge(local_multiply(a.get(), b.get(), c, local));
      ++out.comm.steps;
      if (shift) {
        a.replace(detail::unpack(ep.wait(*recv_a)), pool);
        b.replace(detail::unpack(ep.wait(*recv_b)), pool);
      }
    }
    meter.close("shift", out.comm.phases);

    if (c_plan) {
      const auto t0 = std::chrono::steady_clock::now();
      BlockedMatrix restored = undensify(c, *c_plan);
      out.densify.copy_bytes += restored.data().size() * sizeof(double);
      if (pool != nullptr) pool->recycle(std::move(c).release_data());
      c = std::move(restored);
      out.densify.seconds += seconds_since(t0);
    }
    a.release(pool);
    b.release(pool);

    out.comm.sent_bytes = ep.stats().sent_bytes;
    out.comm.recv_bytes = ep.stats().recv_bytes;
    out.c = std::move(c);
    return out;
  };

  auto run = spmd_run(grid, program);

  MultiplyResult result;
  result.transport = std::move(run.stats);
  for (auto& r : run.results) {
    result.c_panels.push_back(std::move(r.c));
    result.comm.ranks.push_back(std::move(r.comm));
    result.stacks.push_back(r.stacks);
    result.densify.merge(r.densify);
  }
  return result;
}

}  // namespace dbmm
