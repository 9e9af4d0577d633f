#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "dbmm/distribution.hpp"

namespace dbmm {

/// A point-to-point message. Only payload bytes are counted; the header
/// carries structure (indices, sizes) and is free.
struct Message {
  std::vector<std::uint64_t> header;
  std::vector<double> payload;

  std::uint64_t payload_bytes() const { return payload.size() * sizeof(double); }
};

struct RankStats {
  std::uint64_t sent_bytes = 0;
  std::uint64_t recv_bytes = 0;
  std::uint64_t messages_sent = 0;
  std::uint64_t messages_received = 0;

  friend bool operator==(const RankStats&, const RankStats&) = default;
};

struct TransportStats {
  std::vector<RankStats> ranks;

  std::uint64_t total_sent() const;
  std::uint64_t total_received() const;
  friend bool operator==(const TransportStats&, const TransportStats&) = default;
};

nlohmann::ordered_json to_json(const TransportStats& stats);

class Fabric;

class PendingHandle {
 public:
  enum class Kind { Send, Recv };

  Kind kind() const { return kind_; }
  std::size_t peer() const { return peer_; }
  int tag() const { return tag_; }
  bool completed() const { return completed_; }

 private:
  friend class RankEndpoint;
  PendingHandle(Kind kind, std::size_t owner, std::size_t peer, int tag, bool completed)
      : kind_(kind), owner_(owner), peer_(peer), tag_(tag), completed_(completed) {}

  Kind kind_;
  std::size_t owner_;
  std::size_t peer_;
  int tag_;
  bool completed_;
};

/// A rank's view of the fabric. Only the owning rank worker may use it.
///
/// Sends are buffered: the payload is copied (or moved) into the fabric at
/// isend time, so the handle is complete immediately and the caller's buffer
/// is reusable. Receives match FIFO per (source, destination, tag).
class RankEndpoint {
 public:
  std::size_t rank() const { return rank_; }
  std::size_t size() const;
  const ProcessGrid& grid() const;
  GridCoords coords() const { return grid().coords_of(rank_); }

  PendingHandle isend(std::size_t dest, int tag, Message msg);
  PendingHandle isend(std::size_t dest, int tag, std::span<const double> payload);
  PendingHandle irecv(std::size_t src, int tag);

  /// Blocks until the matching message exists. Returns it for receives and an
  /// empty message for sends. A handle can be waited on exactly once.
  Message wait(PendingHandle& handle);

  void barrier();

  const RankStats& stats() const { return stats_; }

 private:
  friend class Fabric;
  friend TransportStats run_ranks(const ProcessGrid&, const std::function<void(RankEndpoint&)>&);
  RankEndpoint(Fabric& fabric, std::size_t rank) : fabric_(&fabric), rank_(rank) {}

  Fabric* fabric_;
  std::size_t rank_;
  RankStats stats_;
};

/// Runs `program(endpoint)` once per rank, each on its own thread, and
/// returns the per-rank byte counters. Throws Error(Deadlock) when every live
/// rank is blocked with nothing deliverable, and Error(RankPanic) when a rank
/// program throws.
TransportStats run_ranks(const ProcessGrid& grid,
                         const std::function<void(RankEndpoint&)>& program);

template <class R>
struct SpmdResult {
  std::vector<R> results;
  TransportStats stats;
};

template <class Program>
auto spmd_run(const ProcessGrid& grid, Program&& program) {
  using R = std::invoke_result_t<Program&, RankEndpoint&>;
  if constexpr (std::is_void_v<R>) {
    return run_ranks(grid, [&](RankEndpoint& ep) { program(ep); });
  } else {
    std::vector<std::optional<R>> slots(grid.size());
    auto stats = run_ranks(grid, [&](RankEndpoint& ep) { slots[ep.rank()].emplace(program(ep)); });
    SpmdResult<R> out;
    out.stats = std::move(stats);
    out.results.reserve(slots.size());
    for (auto& s : slots) out.results.push_back(std::move(*s));
    return out;
  }
}

}  // namespace dbmm
