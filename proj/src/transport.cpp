#include "dbmm/transport.hpp"

#include <condition_variable>
#include <deque>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "dbmm/error.hpp"

namespace dbmm {

std::uint64_t TransportStats::total_sent() const {
  std::uint64_t total = 0;
  for (const auto& r : ranks) total += r.sent_bytes;
  return total;
}

std::uint64_t TransportStats::total_received() const {
  std::uint64_t total = 0;
  for (const auto& r : ranks) total += r.recv_bytes;
  return total;
}

nlohmann::ordered_json to_json(const TransportStats& stats) {
  nlohmann::ordered_json ranks = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < stats.ranks.size(); ++r) {
    const auto& s = stats.ranks[r];
    ranks.push_back({{"rank", r},
                     {"sent_bytes", s.sent_bytes},
                     {"recv_bytes", s.recv_bytes},
                     {"messages_sent", s.messages_sent},
                     {"messages_received", s.messages_received}});
  }
  return {{"ranks", ranks},
          {"total_sent_bytes", stats.total_sent()},
          {"total_recv_bytes", stats.total_received()}};
}

namespace {

// Thrown into ranks that were blocked when the run was aborted by another
// rank's failure or by deadlock detection; never escapes run_ranks.
struct Aborted {};

}  // namespace

class Fabric {
 public:
  explicit Fabric(const ProcessGrid& grid)
      : grid_(grid), waiting_(grid.size()), in_barrier_(grid.size(), false) {}

  const ProcessGrid& grid() const { return grid_; }

  void post(std::size_t src, std::size_t dst, int tag, Message msg) {
    std::lock_guard lk(mu_);
    queues_[{src, dst, tag}].push_back(std::move(msg));
    cv_.notify_all();
  }

  Message take(std::size_t rank, std::size_t src, int tag) {
    std::unique_lock lk(mu_);
    const Key key{src, rank, tag};
    for (;;) {
      if (aborted_) throw Aborted{};
      if (auto it = queues_.find(key); it != queues_.end() && !it->second.empty()) {
        Message msg = std::move(it->second.front());
        it->second.pop_front();
        return msg;
      }
      waiting_[rank] = key;
      ++blocked_;
      check_deadlock_locked();
      cv_.wait(lk, [&] { return aborted_ || has_message_locked(key); });
      --blocked_;
      waiting_[rank].reset();
    }
  }

  void barrier(std::size_t rank) {
    std::unique_lock lk(mu_);
    if (aborted_) throw Aborted{};
    const std::uint64_t generation = barrier_generation_;
    if (++barrier_arrived_ == grid_.size()) {
      // Waiters stop counting as blocked now, not when they get scheduled.
      barrier_arrived_ = 0;
      ++barrier_generation_;
      for (std::size_t r = 0; r < in_barrier_.size(); ++r) {
        if (in_barrier_[r]) {
          in_barrier_[r] = false;
          --blocked_;
        }
      }
      cv_.notify_all();
      return;
    }
    in_barrier_[rank] = true;
    ++blocked_;
    check_deadlock_locked();
    cv_.wait(lk, [&] { return aborted_ || barrier_generation_ != generation; });
    if (barrier_generation_ == generation) throw Aborted{};
  }

  void finish() {
    std::lock_guard lk(mu_);
    ++finished_;
    check_deadlock_locked();
  }

  void fail(std::size_t rank, const std::string& what) {
    std::lock_guard lk(mu_);
    ++finished_;
    if (!aborted_) {
      aborted_ = true;
      failure_ = ErrorCode::RankPanic;
      diagnostic_ = "rank " + std::to_string(rank) + ": " + what;
    }
    cv_.notify_all();
  }

  void raise_if_failed() const {
    if (aborted_) throw Error(failure_, diagnostic_);
  }

 private:
  using Key = std::tuple<std::size_t, std::size_t, int>;  // src, dst, tag

  bool has_message_locked(const Key& key) const {
    auto it = queues_.find(key);
    return it != queues_.end() && !it->second.empty();
  }

  void check_deadlock_locked() {
    if (aborted_ || blocked_ + finished_ != grid_.size() || blocked_ == 0) return;
    for (const auto& w : waiting_) {
      if (w && has_message_locked(*w)) return;
    }
    std::ostringstream diag;
    diag << "all live ranks blocked;";
    for (std::size_t r = 0; r < waiting_.size(); ++r) {
      if (waiting_[r]) {
        diag << " rank " << r << " waits for (src " << std::get<0>(*waiting_[r]) << ", tag "
             << std::get<2>(*waiting_[r]) << ");";
      } else if (in_barrier_[r]) {
        diag << " rank " << r << " in barrier;";
      }
    }
    std::size_t unmatched = 0;
    for (const auto& [key, q] : queues_) unmatched += q.size();
    diag << " " << unmatched << " undelivered message(s)";
    aborted_ = true;
    failure_ = ErrorCode::Deadlock;
    diagnostic_ = diag.str();
    cv_.notify_all();
  }

  ProcessGrid grid_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<Key, std::deque<Message>> queues_;
  std::vector<std::optional<Key>> waiting_;
  std::vector<bool> in_barrier_;
  std::size_t blocked_ = 0;
  std::size_t finished_ = 0;
  std::size_t barrier_arrived_ = 0;
  std::uint64_t barrier_generation_ = 0;
  bool aborted_ = false;
  ErrorCode failure_ = ErrorCode::RankPanic;
  std::string diagnostic_;
};

std::size_t RankEndpoint::size() const { return fabric_->grid().size(); }

const ProcessGrid& RankEndpoint::grid() const { return fabric_->grid(); }

PendingHandle RankEndpoint::isend(std::size_t dest, int tag, Message msg) {
  if (dest >= size()) throw Error(ErrorCode::IndexOutOfRange, "destination rank " + std::to_string(dest));
  stats_.sent_bytes += msg.payload_bytes();
  ++stats_.messages_sent;
  fabric_->post(rank_, dest, tag, std::move(msg));
  return PendingHandle(PendingHandle::Kind::Send, rank_, dest, tag, false);
}

PendingHandle RankEndpoint::isend(std::size_t dest, int tag, std::span<const double> payload) {
  return isend(dest, tag, Message{{}, std::vector<double>(payload.begin(), payload.end())});
}

PendingHandle RankEndpoint::irecv(std::size_t src, int tag) {
  if (src >= size()) throw Error(ErrorCode::IndexOutOfRange, "source rank " + std::to_string(src));
  return PendingHandle(PendingHandle::Kind::Recv, rank_, src, tag, false);
}

Message RankEndpoint::wait(PendingHandle& handle) {
  if (handle.owner_ != rank_) {
    throw Error(ErrorCode::InvalidArgument, "handle belongs to another rank");
  }
  if (handle.completed_) throw Error(ErrorCode::InvalidArgument, "handle already waited on");
  if (handle.kind_ == PendingHandle::Kind::Send) {
    handle.completed_ = true;
    return {};
  }
  Message msg = fabric_->take(rank_, handle.peer_, handle.tag_);
  handle.completed_ = true;
  stats_.recv_bytes += msg.payload_bytes();
  ++stats_.messages_received;
  return msg;
}

void RankEndpoint::barrier() { fabric_->barrier(rank_); }

TransportStats run_ranks(const ProcessGrid& grid,
                         const std::function<void(RankEndpoint&)>& program) {
  Fabric fabric(grid);
  std::vector<RankEndpoint> endpoints;
  endpoints.reserve(grid.size());
  for (std::size_t r = 0; r < grid.size(); ++r) endpoints.push_back(RankEndpoint(fabric, r));

  {
    std::vector<std::jthread> workers;
    workers.reserve(grid.size());
    for (std::size_t r = 0; r < grid.size(); ++r) {
      workers.emplace_back([&, r] {
        try {
          program(endpoints[r]);
          fabric.finish();
        } catch (const Aborted&) {
          fabric.finish();
        } catch (const std::exception& e) {
          fabric.fail(r, e.what());
        } catch (...) {
          fabric.fail(r, "unknown exception");
        }
      });
    }
  }
  fabric.raise_if_failed();

  TransportStats stats;
  stats.ranks.reserve(endpoints.size());
  for (const auto& ep : endpoints) stats.ranks.push_back(ep.stats());
  return stats;
}

}  // namespace dbmm
