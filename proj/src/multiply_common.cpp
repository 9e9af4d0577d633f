#include "dbmm/multiply_common.hpp"

#include <algorithm>

#include "dbmm/error.hpp"

namespace dbmm {

const PhaseBytes& RankComm::phase(const std::string& name) const {
  for (const auto& p : phases) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::InvalidArgument, "no phase '" + name + "'");
}

std::uint64_t CommReport::max_sent_bytes() const {
  std::uint64_t best = 0;
  for (const auto& r : ranks) best = std::max(best, r.sent_bytes);
  return best;
}

std::uint64_t CommReport::max_phase_sent_bytes(const std::string& phase) const {
  std::uint64_t best = 0;
  for (const auto& r : ranks) best = std::max(best, r.phase(phase).sent_bytes);
  return best;
}

nlohmann::ordered_json to_json(const CommReport& report) {
  nlohmann::ordered_json ranks = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < report.ranks.size(); ++r) {
    const auto& rc = report.ranks[r];
    nlohmann::ordered_json phases = nlohmann::ordered_json::object();
    for (const auto& p : rc.phases) {
      phases[p.name] = {{"sent_bytes", p.sent_bytes}, {"recv_bytes", p.recv_bytes}};
    }
    ranks.push_back({{"rank", r},
                     {"sent_bytes", rc.sent_bytes},
                     {"recv_bytes", rc.recv_bytes},
                     {"steps", rc.steps},
                     {"phases", phases}});
  }
  return {{"ranks", ranks}, {"max_sent_bytes", report.max_sent_bytes()}};
}

StackStats MultiplyResult::total_stacks() const {
  StackStats total;
  for (const auto& s : stacks) total.merge(s);
  return total;
}

namespace detail {

void PhaseMeter::close(const std::string& name, std::vector<PhaseBytes>& out) {
  const auto& s = ep_.stats();
  out.push_back({name, s.sent_bytes - sent_mark_, s.recv_bytes - recv_mark_});
  sent_mark_ = s.sent_bytes;
  recv_mark_ = s.recv_bytes;
}

void check_panels(const std::vector<BlockedMatrix>& panels, std::size_t ranks,
                  const std::function<std::size_t(std::size_t, std::size_t)>& owner,
                  const char* what) {
  if (panels.size() != ranks) {
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": expected " +
                                              std::to_string(ranks) + " panels, got " +
                                              std::to_string(panels.size()));
  }
  for (std::size_t r = 0; r < panels.size(); ++r) {
    if (!(panels[r].dims() == panels.front().dims())) {
      throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": panel dims differ across ranks");
    }
    panels[r].for_each_block([&](std::size_t i, std::size_t j, std::size_t) {
      if (owner(i, j) != r) {
        throw Error(ErrorCode::OwnershipViolation,
                    std::string(what) + ": rank " + std::to_string(r) + " holds block (" +
                        std::to_string(i) + "," + std::to_string(j) + ")");
      }
    });
  }
}

Message pack(const BlockedMatrix& m, BufferPool* pool) {
  Message msg;
  const auto& dims = m.dims();
  auto& h = msg.header;
  h.reserve(3 + dims.block_rows() + dims.block_cols() + m.row_ptr().size() + m.nnz_blocks());
  h.push_back(dims.block_rows());
  h.insert(h.end(), dims.row_sizes().begin(), dims.row_sizes().end());
  h.push_back(dims.block_cols());
  h.insert(h.end(), dims.col_sizes().begin(), dims.col_sizes().end());
  h.push_back(m.nnz_blocks());
  h.insert(h.end(), m.row_ptr().begin(), m.row_ptr().end());
  h.insert(h.end(), m.col_idx().begin(), m.col_idx().end());
  if (pool != nullptr) {
    msg.payload = pool->acquire(m.data().size());
    std::copy(m.data().begin(), m.data().end(), msg.payload.begin());
  } else {
    msg.payload.assign(m.data().begin(), m.data().end());
  }
  return msg;
}

BlockedMatrix unpack(Message&& msg) {
  const auto& h = msg.header;
  std::size_t pos = 0;
  auto take = [&](std::size_t count) {
    if (pos + count > h.size()) throw Error(ErrorCode::ParseError, "truncated panel header");
    std::vector<std::size_t> out(h.begin() + static_cast<std::ptrdiff_t>(pos),
                                 h.begin() + static_cast<std::ptrdiff_t>(pos + count));
    pos += count;
    return out;
  };
  auto rows = take(take(1)[0]);
  auto cols = take(take(1)[0]);
  const std::size_t nnz = take(1)[0];
  auto row_ptr = take(rows.size() + 1);
  auto col_idx = take(nnz);
  return BlockedMatrix::from_parts(BlockDims(std::move(rows), std::move(cols)), std::move(row_ptr),
                                   std::move(col_idx), std::move(msg.payload));
}

}  // namespace detail

}  // namespace dbmm
