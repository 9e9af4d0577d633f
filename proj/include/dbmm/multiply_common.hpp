#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dbmm/block_layout.hpp"
#include "dbmm/densify.hpp"
#include "dbmm/local_multiply.hpp"
#include "dbmm/memory_pool.hpp"
#include "dbmm/transport.hpp"

namespace dbmm {

struct MultiplyConfig {
  LocalConfig local;
  bool densify = false;
  /// Optional per-rank buffer pools (size must equal the rank count). Kept
  /// across calls so repeated multiplications reuse densification buffers.
  std::vector<BufferPool>* pools = nullptr;
};

struct PhaseBytes {
  std::string name;
  std::uint64_t sent_bytes = 0;
  std::uint64_t recv_bytes = 0;
  friend bool operator==(const PhaseBytes&, const PhaseBytes&) = default;
};

struct RankComm {
  std::uint64_t sent_bytes = 0;
  std::uint64_t recv_bytes = 0;
  std::size_t steps = 0;
  std::vector<PhaseBytes> phases;

  const PhaseBytes& phase(const std::string& name) const;
  friend bool operator==(const RankComm&, const RankComm&) = default;
};

/// Per-rank payload volumes of one distributed multiplication.
struct CommReport {
  std::vector<RankComm> ranks;

  std::uint64_t max_sent_bytes() const;
  std::uint64_t max_phase_sent_bytes(const std::string& phase) const;
  friend bool operator==(const CommReport&, const CommReport&) = default;
};

/// {"ranks": [{"rank", "sent_bytes", "recv_bytes", "steps", "phases": {...}}]}
nlohmann::ordered_json to_json(const CommReport& r);

struct MultiplyResult {
  std::vector<BlockedMatrix> c_panels;
  CommReport comm;
  std::vector<StackStats> stacks;  // per rank
  DensifySummary densify;
  TransportStats transport;

  StackStats total_stacks() const;
};

namespace detail {

/// Tracks byte counters of an endpoint between phase marks.
class PhaseMeter {
 public:
  explicit PhaseMeter(const RankEndpoint& ep) : ep_(ep) {}
  void close(const std::string& name, std::vector<PhaseBytes>& out);

 private:
  const RankEndpoint& ep_;
  std::uint64_t sent_mark_ = 0;
  std::uint64_t recv_mark_ = 0;
};

/// Throws unless there is one panel per rank, all panels share dims, and
/// each stored block belongs to its panel's rank under `owner`.
void check_panels(const std::vector<BlockedMatrix>& panels, std::size_t ranks,
                  const std::function<std::size_t(std::size_t, std::size_t)>& owner,
                  const char* what);

/// Structure goes in the header, values in the payload. The payload buffer
/// comes from `pool` when given.
Message pack(const BlockedMatrix& m, BufferPool* pool = nullptr);
BlockedMatrix unpack(Message&& msg);

}  // namespace detail

}  // namespace dbmm
