#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

namespace dbmm {

/// Loop nest order over (m, n, k), outermost first. Applies to both the tile
/// loops and the loops inside a tile.
enum class LoopOrder : std::uint8_t { mnk, mkn, nmk, nkm, kmn, knm };

inline constexpr std::array<LoopOrder, 6> kAllLoopOrders = {
    LoopOrder::mnk, LoopOrder::mkn, LoopOrder::nmk,
    LoopOrder::nkm, LoopOrder::kmn, LoopOrder::knm};

const char* to_string(LoopOrder order) noexcept;
LoopOrder parse_loop_order(const std::string& text);

/// CPU stand-in for the GPU kernel parameter space: tiling sizes plus the
/// read/write strategy (loop order) and an unroll hint for the innermost
/// non-reduction loop.
struct KernelParams {
  std::size_t tile_m = 8;
  std::size_t tile_n = 8;
  std::size_t tile_k = 8;
  LoopOrder loop_order = LoopOrder::mkn;
  std::size_t unroll_hint = 1;  // 1, 2 or 4

  friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

nlohmann::ordered_json to_json(const KernelParams& p);
KernelParams kernel_params_from_json(const nlohmann::ordered_json& j);

/// Tiles clamped to (m, n, k); unroll hint snapped to {1, 2, 4}.
KernelParams clamp_params(KernelParams p, std::size_t m, std::size_t n, std::size_t k);
bool params_valid_for(const KernelParams& p, std::size_t m, std::size_t n, std::size_t k);

/// c += a * b with row-major a (m x k), b (k x n), c (m x n).
///
/// Every parametrization adds the products for one c element in ascending k
/// order, one rounding per product-add, so results are bit-identical to
/// reference_gemm regardless of tiling or loop order. Tiles larger than a
/// dimension are clamped.
void smm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
         std::span<const double> b, std::span<double> c, const KernelParams& params);

/// Fixed-order triple loop: c[i][j] += a[i][p] * b[p][j] for p = 0..k-1.
void reference_gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
                    std::span<const double> b, std::span<double> c);

inline constexpr std::size_t kSmallKernelLimit = 80;

enum class KernelPath { Small, Large };

struct KernelChoice {
  KernelPath path = KernelPath::Small;
  KernelParams params;
};

/// Parameters of the generic large path (blocked, fixed tiles).
KernelParams large_path_params();
KernelParams default_small_params(std::size_t m, std::size_t n, std::size_t k);

/// Small path iff max(m, n, k) <= 80.
KernelPath dispatch_path(std::size_t m, std::size_t n, std::size_t k);

/// Cartesian product of the given tile sizes, orders and unroll hints.
std::vector<KernelParams> make_candidate_grid(std::span<const std::size_t> tile_m,
                                              std::span<const std::size_t> tile_n,
                                              std::span<const std::size_t> tile_k,
                                              std::span<const LoopOrder> orders,
                                              std::span<const std::size_t> unrolls);
std::vector<KernelParams> default_candidates(std::size_t m, std::size_t n, std::size_t k);

/// Exhaustive mini-autotuner with a per-(m,n,k) result cache.
///
/// A candidate's score is its median time over `trials` runs on buffers
/// filled from `seed`; the lowest median wins and ties go to the earlier
/// candidate. Measurement is injectable so tests can make selection
/// deterministic. Thread-safe.
class Autotuner {
 public:
  /// Returns the median seconds for one smm call with the given params.
  using Measure = std::function<double(const KernelParams&, std::size_t m, std::size_t n,
                                       std::size_t k, std::uint64_t seed, std::size_t trials)>;

  Autotuner();
  explicit Autotuner(Measure measure, std::uint64_t seed = 42);

  KernelParams tune(std::size_t m, std::size_t n, std::size_t k,
                    std::span<const KernelParams> candidates, std::size_t trials = 5);
  std::optional<KernelParams> lookup(std::size_t m, std::size_t n, std::size_t k) const;

  /// Number of candidate measurements performed so far.
  std::size_t measurements() const;
  std::size_t cache_size() const;

  /// Cache file: {"fingerprint": ..., "entries": [{"m","n","k","params"}]}.
  /// Entries recorded under a different host fingerprint are ignored on load.
  void save(const std::string& path) const;
  bool load(const std::string& path);

  static std::string host_fingerprint();
  static double measure_wall_clock(const KernelParams& p, std::size_t m, std::size_t n,
                                   std::size_t k, std::uint64_t seed, std::size_t trials);

 private:
  using Key = std::tuple<std::size_t, std::size_t, std::size_t>;

  Measure measure_;
  std::uint64_t seed_;
  mutable std::mutex mu_;
  std::map<Key, KernelParams> cache_;
  std::size_t measurements_ = 0;
};

/// Maps block dims to a kernel: the tuned (or default) small kernel up to the
/// 80 limit, the generic large path above it. With `tune_on_miss` set, a
/// small-path miss runs the autotuner over default_candidates.
class KernelDispatcher {
 public:
  KernelDispatcher() = default;
  explicit KernelDispatcher(Autotuner* tuner, bool tune_on_miss = false)
      : tuner_(tuner), tune_on_miss_(tune_on_miss) {}

  KernelChoice dispatch(std::size_t m, std::size_t n, std::size_t k) const;

  void multiply(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
                std::span<const double> b, std::span<double> c) const;

 private:
  Autotuner* tuner_ = nullptr;
  bool tune_on_miss_ = false;
};

}  // namespace dbmm
