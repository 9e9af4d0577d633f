#include "dbmm/tall_skinny.hpp"

#include <algorithm>
#include <chrono>
#include <optional>

#include "dbmm/error.hpp"

namespace dbmm {

namespace {

constexpr int kReduceTag = 64;
constexpr int kDistributeTag = 65;

struct RankOutput {
  BlockedMatrix c;
  RankComm comm;
  StackStats stacks;
  DensifySummary densify;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void copy_blocks_into(const BlockedMatrix& src, BlockedMatrix& dst) {
  src.for_each_block([&](std::size_t i, std::size_t j, std::size_t slot) {
    auto b = src.block(slot);
    auto d = dst.block(*dst.find(i, j));
    std::copy(b.begin(), b.end(), d.begin());
  });
}

/// Blocks of a full matrix that `rank` owns under `map`.
BlockedMatrix owned_part(const BlockedMatrix& full, const BlockCyclicMap& map, std::size_t rank) {
  const auto& dims = full.dims();
  std::vector<std::size_t> row_ptr(dims.block_rows() + 1, 0);
  std::vector<std::size_t> col_idx;
  std::vector<double> data;
  for (std::size_t i = 0; i < dims.block_rows(); ++i) {
    for (std::size_t s = full.row_ptr()[i]; s < full.row_ptr()[i + 1]; ++s) {
      const std::size_t j = full.col_idx()[s];
      if (map.owner_of_block(i, j) != rank) continue;
      col_idx.push_back(j);
      auto b = full.block(s);
      data.insert(data.end(), b.begin(), b.end());
    }
    row_ptr[i + 1] = col_idx.size();
  }
  return BlockedMatrix::from_parts(dims, std::move(row_ptr), std::move(col_idx), std::move(data));
}

}  // namespace

MultiplyResult tall_skinny_multiply(const std::vector<BlockedMatrix>& a_panels,
                                    const std::vector<BlockedMatrix>& b_panels,
                                    std::vector<BlockedMatrix> c_panels, const ProcessGrid& grid,
                                    const KBlockMap& kmap, const TallSkinnyConfig& cfg) {
  const std::size_t ranks = grid.size();
  if (kmap.ranks() != ranks) {
    throw Error(ErrorCode::PartitionMismatch, "K map spans " + std::to_string(kmap.ranks()) +
                                                  " ranks, grid has " + std::to_string(ranks));
  }
  if (a_panels.empty() || b_panels.empty() || c_panels.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "missing panels");
  }
  check_conformant(a_panels.front(), b_panels.front(), c_panels.front());
  if (a_panels.front().dims().col_sizes() != kmap.k_sizes()) {
    throw Error(ErrorCode::PartitionMismatch, "K partition of A differs from the K map");
  }
  const BlockCyclicMap c_map(grid, c_panels.front().dims());
  detail::check_panels(a_panels, ranks, [&](std::size_t, std::size_t j) { return kmap.owner_of_k(j); },
                       "A");
  detail::check_panels(b_panels, ranks, [&](std::size_t i, std::size_t) { return kmap.owner_of_k(i); },
                       "B");
  detail::check_panels(c_panels, ranks,
                       [&](std::size_t i, std::size_t j) { return c_map.owner_of_block(i, j); }, "C");
  const auto& c_dims = c_map.dims();
  const std::size_t c_bytes = c_dims.total_rows() * c_dims.total_cols() * sizeof(double);
  if (c_bytes > cfg.max_replicated_bytes) {
    throw Error(ErrorCode::ResultTooLargeForReplication,
                std::to_string(c_bytes) + " bytes of C exceed the per-rank limit of " +
                    std::to_string(cfg.max_replicated_bytes));
  }
  if (cfg.base.pools != nullptr && cfg.base.pools->size() != ranks) {
    throw Error(ErrorCode::InvalidArgument, "need one buffer pool per rank");
  }
  const std::size_t threads = std::max<std::size_t>(cfg.base.local.threads, 1);

  auto program = [&](RankEndpoint& ep) {
    const std::size_t rank = ep.rank();
    BufferPool* pool = cfg.base.pools != nullptr ? &(*cfg.base.pools)[rank] : nullptr;
    RankOutput out;
    LocalConfig local = cfg.base.local;
    local.row_stride = 1;

    BlockedMatrix partial = BlockedMatrix::dense_zero(c_dims);
    copy_blocks_into(c_panels[rank], partial);

    if (cfg.base.densify) {
      auto t0 = std::chrono::steady_clock::now();
      const auto a_plan = DensifyPlan::for_tall_skinny(a_panels[rank].dims(), ranks, rank,
                                                       Operand::A, threads);
      const auto b_plan = DensifyPlan::for_tall_skinny(b_panels[rank].dims(), ranks, rank,
                                                       Operand::B, threads);
      const auto c_plan = DensifyPlan::for_tall_skinny(c_dims, ranks, rank, Operand::C, threads);
      BlockedMatrix a = densify(a_panels[rank], a_plan, pool);
      BlockedMatrix b = densify(b_panels[rank], b_plan, pool);
      BlockedMatrix c = densify(partial, c_plan, pool);
      out.densify.enabled = true;
      out.densify.copy_bytes +=
          (a.data().size() + b.data().size() + 2 * c.data().size()) * sizeof(double);
      out.densify.a_blocks = describe_blocks(a.dims());
      out.densify.b_blocks = describe_blocks(b.dims());
      out.densify.c_blocks = describe_blocks(c.dims());
      out.densify.seconds += seconds_since(t0);

      out.stacks.merge(local_multiply(a, b, c, local));

      t0 = std::chrono::steady_clock::now();
      partial = undensify(c, c_plan);
      if (pool != nullptr) {
        pool->recycle(std::move(a).release_data());
        pool->recycle(std::move(b).release_data());
        pool->recycle(std::move(c).release_data());
      }
      out.densify.seconds += seconds_since(t0);
    } else {
      out.stacks.merge(local_multiply(a_panels[rank], b_panels[rank], partial, local));
    }

    // Rank-ascending binary tree: at distance d, rank r with r mod 2d == d
    // hands its sum to r - d and drops out.
    detail::PhaseMeter meter(ep);
    for (std::size_t d = 1; d < ranks; d *= 2) {
      if (rank % (2 * d) == d) {
        ep.isend(rank - d, kReduceTag, detail::pack(partial, pool));
        ++out.comm.steps;
        break;
      }
      if (rank + d < ranks) {
        auto h = ep.irecv(rank + d, kReduceTag);
        Message msg = ep.wait(h);
        auto acc = partial.data();
        for (std::size_t e = 0; e < acc.size(); ++e) acc[e] += msg.payload[e];
        if (pool != nullptr) pool->recycle(std::move(msg.payload));
        ++out.comm.steps;
      }
    }
    meter.close("reduce", out.comm.phases);

    if (cfg.mode == ResultMode::OwnerGather) {
      if (rank == 0) {
        for (std::size_t dest = 1; dest < ranks; ++dest) {
          ep.isend(dest, kDistributeTag, detail::pack(owned_part(partial, c_map, dest), pool));
        }
        out.c = owned_part(partial, c_map, 0);
      } else {
        auto h = ep.irecv(0, kDistributeTag);
        out.c = detail::unpack(ep.wait(h));
      }
    } else {
      // Binomial broadcast from rank 0.
      std::size_t span = 1;
      while (span < ranks) span *= 2;
      std::size_t fanout = span;
      if (rank != 0) {
        const std::size_t lowbit = rank & (~rank + 1);
        auto h = ep.irecv(rank - lowbit, kDistributeTag);
        partial = detail::unpack(ep.wait(h));
        fanout = lowbit;
      }
      for (std::size_t d = fanout / 2; d >= 1; d /= 2) {
        if (rank + d < ranks) ep.isend(rank + d, kDistributeTag, detail::pack(partial, pool));
      }
      out.c = std::move(partial);
    }
    meter.close("distribute", out.comm.phases);

    out.comm.sent_bytes = ep.stats().sent_bytes;
    out.comm.recv_bytes = ep.stats().recv_bytes;
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
