#include "dbmm/microkernel.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <thread>

#include "dbmm/error.hpp"

namespace dbmm {

const char* to_string(LoopOrder order) noexcept {
  switch (order) {
    case LoopOrder::mnk: return "mnk";
    case LoopOrder::mkn: return "mkn";
    case LoopOrder::nmk: return "nmk";
    case LoopOrder::nkm: return "nkm";
    case LoopOrder::kmn: return "kmn";
    case LoopOrder::knm: return "knm";
  }
  return "?";
}

LoopOrder parse_loop_order(const std::string& text) {
  for (auto o : kAllLoopOrders) {
    if (text == to_string(o)) return o;
  }
  throw Error(ErrorCode::ParseError, "unknown loop order '" + text + "'");
}

nlohmann::ordered_json to_json(const KernelParams& p) {
  return {{"tile_m", p.tile_m},
          {"tile_n", p.tile_n},
          {"tile_k", p.tile_k},
          {"loop_order", to_string(p.loop_order)},
          {"unroll_hint", p.unroll_hint}};
}

KernelParams kernel_params_from_json(const nlohmann::ordered_json& j) {
  KernelParams p;
  p.tile_m = j.at("tile_m").get<std::size_t>();
  p.tile_n = j.at("tile_n").get<std::size_t>();
  p.tile_k = j.at("tile_k").get<std::size_t>();
  p.loop_order = parse_loop_order(j.at("loop_order").get<std::string>());
  p.unroll_hint = j.at("unroll_hint").get<std::size_t>();
  return p;
}

KernelParams clamp_params(KernelParams p, std::size_t m, std::size_t n, std::size_t k) {
  p.tile_m = std::clamp<std::size_t>(p.tile_m, 1, std::max<std::size_t>(m, 1));
  p.tile_n = std::clamp<std::size_t>(p.tile_n, 1, std::max<std::size_t>(n, 1));
  p.tile_k = std::clamp<std::size_t>(p.tile_k, 1, std::max<std::size_t>(k, 1));
  p.unroll_hint = p.unroll_hint >= 4 ? 4 : (p.unroll_hint >= 2 ? 2 : 1);
  return p;
}

bool params_valid_for(const KernelParams& p, std::size_t m, std::size_t n, std::size_t k) {
  return p.tile_m >= 1 && p.tile_n >= 1 && p.tile_k >= 1 && p.tile_m <= m && p.tile_n <= n &&
         p.tile_k <= k && (p.unroll_hint == 1 || p.unroll_hint == 2 || p.unroll_hint == 4);
}

namespace {

struct Operands {
  const double* a;
  const double* b;
  double* c;
  std::size_t lda;  // = k
  std::size_t ldb;  // = n
  std::size_t ldc;  // = n
};

struct Range {
  std::size_t lo, hi;
};

// Inner kernels. Each c element receives its products in ascending p order
// with one rounding per add; the unroll factor U only groups independent
// elements.

template <std::size_t U>
void tile_mnk(const Operands& o, Range ri, Range rj, Range rp) {
  for (std::size_t i = ri.lo; i < ri.hi; ++i) {
    const double* ai = o.a + i * o.lda;
    double* ci = o.c + i * o.ldc;
    std::size_t j = rj.lo;
    for (; j + U <= rj.hi; j += U) {
      double s[U];
      for (std::size_t u = 0; u < U; ++u) s[u] = ci[j + u];
      for (std::size_t p = rp.lo; p < rp.hi; ++p) {
        const double* bp = o.b + p * o.ldb + j;
        for (std::size_t u = 0; u < U; ++u) s[u] += ai[p] * bp[u];
      }
      for (std::size_t u = 0; u < U; ++u) ci[j + u] = s[u];
    }
    for (; j < rj.hi; ++j) {
      double s = ci[j];
      for (std::size_t p = rp.lo; p < rp.hi; ++p) s += ai[p] * o.b[p * o.ldb + j];
      ci[j] = s;
    }
  }
}

template <std::size_t U>
void tile_nmk(const Operands& o, Range ri, Range rj, Range rp) {
  for (std::size_t j = rj.lo; j < rj.hi; ++j) {
    std::size_t i = ri.lo;
    for (; i + U <= ri.hi; i += U) {
      double s[U];
      for (std::size_t u = 0; u < U; ++u) s[u] = o.c[(i + u) * o.ldc + j];
      for (std::size_t p = rp.lo; p < rp.hi; ++p) {
        const double bpj = o.b[p * o.ldb + j];
        for (std::size_t u = 0; u < U; ++u) s[u] += o.a[(i + u) * o.lda + p] * bpj;
      }
      for (std::size_t u = 0; u < U; ++u) o.c[(i + u) * o.ldc + j] = s[u];
    }
    for (; i < ri.hi; ++i) {
      double s = o.c[i * o.ldc + j];
      for (std::size_t p = rp.lo; p < rp.hi; ++p) s += o.a[i * o.lda + p] * o.b[p * o.ldb + j];
      o.c[i * o.ldc + j] = s;
    }
  }
}

template <std::size_t U>
inline void axpy_row(double* __restrict c, const double* __restrict b, double alpha,
                     std::size_t lo, std::size_t hi) {
  std::size_t j = lo;
  for (; j + U <= hi; j += U) {
    for (std::size_t u = 0; u < U; ++u) c[j + u] += alpha * b[j + u];
  }
  for (; j < hi; ++j) c[j] += alpha * b[j];
}

template <std::size_t U>
void tile_mkn(const Operands& o, Range ri, Range rj, Range rp) {
  for (std::size_t i = ri.lo; i < ri.hi; ++i) {
    for (std::size_t p = rp.lo; p < rp.hi; ++p) {
      axpy_row<U>(o.c + i * o.ldc, o.b + p * o.ldb, o.a[i * o.lda + p], rj.lo, rj.hi);
    }
  }
}

template <std::size_t U>
void tile_kmn(const Operands& o, Range ri, Range rj, Range rp) {
  for (std::size_t p = rp.lo; p < rp.hi; ++p) {
    for (std::size_t i = ri.lo; i < ri.hi; ++i) {
      axpy_row<U>(o.c + i * o.ldc, o.b + p * o.ldb, o.a[i * o.lda + p], rj.lo, rj.hi);
    }
  }
}

template <std::size_t U>
inline void axpy_col(const Operands& o, std::size_t j, std::size_t p, Range ri) {
  const double bpj = o.b[p * o.ldb + j];
  std::size_t i = ri.lo;
  for (; i + U <= ri.hi; i += U) {
    for (std::size_t u = 0; u < U; ++u) o.c[(i + u) * o.ldc + j] += o.a[(i + u) * o.lda + p] * bpj;
  }
  for (; i < ri.hi; ++i) o.c[i * o.ldc + j] += o.a[i * o.lda + p] * bpj;
}

template <std::size_t U>
void tile_nkm(const Operands& o, Range ri, Range rj, Range rp) {
  for (std::size_t j = rj.lo; j < rj.hi; ++j) {
    for (std::size_t p = rp.lo; p < rp.hi; ++p) axpy_col<U>(o, j, p, ri);
  }
}

template <std::size_t U>
void tile_knm(const Operands& o, Range ri, Range rj, Range rp) {
  for (std::size_t p = rp.lo; p < rp.hi; ++p) {
    for (std::size_t j = rj.lo; j < rj.hi; ++j) axpy_col<U>(o, j, p, ri);
  }
}

// Loop nest for order O, outermost first; 0 = m, 1 = n, 2 = k.
constexpr std::array<int, 3> nest(LoopOrder o) {
  switch (o) {
    case LoopOrder::mnk: return {0, 1, 2};
    case LoopOrder::mkn: return {0, 2, 1};
    case LoopOrder::nmk: return {1, 0, 2};
    case LoopOrder::nkm: return {1, 2, 0};
    case LoopOrder::kmn: return {2, 0, 1};
    case LoopOrder::knm: return {2, 1, 0};
  }
  return {0, 1, 2};
}

template <LoopOrder O, std::size_t U>
void run_tiled(const Operands& ops, std::size_t m, std::size_t n, std::size_t k,
               const KernelParams& p) {
  constexpr auto d = nest(O);
  const std::size_t ext[3] = {m, n, k};
  const std::size_t tile[3] = {p.tile_m, p.tile_n, p.tile_k};
  std::size_t lo[3];
  for (lo[d[0]] = 0; lo[d[0]] < ext[d[0]]; lo[d[0]] += tile[d[0]]) {
    for (lo[d[1]] = 0; lo[d[1]] < ext[d[1]]; lo[d[1]] += tile[d[1]]) {
      for (lo[d[2]] = 0; lo[d[2]] < ext[d[2]]; lo[d[2]] += tile[d[2]]) {
        const Range ri{lo[0], std::min(lo[0] + tile[0], m)};
        const Range rj{lo[1], std::min(lo[1] + tile[1], n)};
        const Range rp{lo[2], std::min(lo[2] + tile[2], k)};
        if constexpr (O == LoopOrder::mnk) tile_mnk<U>(ops, ri, rj, rp);
        else if constexpr (O == LoopOrder::mkn) tile_mkn<U>(ops, ri, rj, rp);
        else if constexpr (O == LoopOrder::nmk) tile_nmk<U>(ops, ri, rj, rp);
        else if constexpr (O == LoopOrder::nkm) tile_nkm<U>(ops, ri, rj, rp);
        else if constexpr (O == LoopOrder::kmn) tile_kmn<U>(ops, ri, rj, rp);
        else tile_knm<U>(ops, ri, rj, rp);
      }
    }
  }
}

template <LoopOrder O>
void run_order(const Operands& ops, std::size_t m, std::size_t n, std::size_t k,
               const KernelParams& p) {
  switch (p.unroll_hint) {
    case 4: run_tiled<O, 4>(ops, m, n, k, p); break;
    case 2: run_tiled<O, 2>(ops, m, n, k, p); break;
    default: run_tiled<O, 1>(ops, m, n, k, p); break;
  }
}

}  // namespace

void smm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
         std::span<const double> b, std::span<double> c, const KernelParams& params) {
  if (a.size() != m * k || b.size() != k * n || c.size() != m * n) {
    throw Error(ErrorCode::ShapeMismatch, "smm buffers do not match " + std::to_string(m) + "x" +
                                              std::to_string(n) + "x" + std::to_string(k));
  }
  if (m == 0 || n == 0 || k == 0) return;
  const KernelParams p = clamp_params(params, m, n, k);
  const Operands ops{a.data(), b.data(), c.data(), k, n, n};
  switch (p.loop_order) {
    case LoopOrder::mnk: run_order<LoopOrder::mnk>(ops, m, n, k, p); break;
    case LoopOrder::mkn: run_order<LoopOrder::mkn>(ops, m, n, k, p); break;
    case LoopOrder::nmk: run_order<LoopOrder::nmk>(ops, m, n, k, p); break;
    case LoopOrder::nkm: run_order<LoopOrder::nkm>(ops, m, n, k, p); break;
    case LoopOrder::kmn: run_order<LoopOrder::kmn>(ops, m, n, k, p); break;
    case LoopOrder::knm: run_order<LoopOrder::knm>(ops, m, n, k, p); break;
  }
}

void reference_gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
                    std::span<const double> b, std::span<double> c) {
  if (a.size() != m * k || b.size() != k * n || c.size() != m * n) {
    throw Error(ErrorCode::ShapeMismatch, "reference_gemm buffers do not match");
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = c[i * n + j];
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

KernelParams large_path_params() { return {64, 64, 64, LoopOrder::mkn, 4}; }

KernelParams default_small_params(std::size_t m, std::size_t n, std::size_t k) {
  return clamp_params({m, n, k, LoopOrder::mkn, 4}, m, n, k);
}

KernelPath dispatch_path(std::size_t m, std::size_t n, std::size_t k) {
  return std::max({m, n, k}) <= kSmallKernelLimit ? KernelPath::Small : KernelPath::Large;
}

std::vector<KernelParams> make_candidate_grid(std::span<const std::size_t> tile_m,
                                              std::span<const std::size_t> tile_n,
                                              std::span<const std::size_t> tile_k,
                                              std::span<const LoopOrder> orders,
                                              std::span<const std::size_t> unrolls) {
  std::vector<KernelParams> out;
  for (auto tm : tile_m)
    for (auto tn : tile_n)
      for (auto tk : tile_k)
        for (auto o : orders)
          for (auto u : unrolls) out.push_back({tm, tn, tk, o, u});
  return out;
}

std::vector<KernelParams> default_candidates(std::size_t m, std::size_t n, std::size_t k) {
  auto tiles = [](std::size_t d) {
    std::vector<std::size_t> t{std::max<std::size_t>(1, d / 2), d};
    if (d >= 16) t.insert(t.begin(), 8);
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
  };
  const std::array<LoopOrder, 3> orders{LoopOrder::mkn, LoopOrder::mnk, LoopOrder::kmn};
  const std::array<std::size_t, 2> unrolls{1, 4};
  auto tm = tiles(m), tn = tiles(n), tk = tiles(k);
  return make_candidate_grid(tm, tn, tk, orders, unrolls);
}

Autotuner::Autotuner() : Autotuner(&Autotuner::measure_wall_clock) {}

Autotuner::Autotuner(Measure measure, std::uint64_t seed)
    : measure_(std::move(measure)), seed_(seed) {}

KernelParams Autotuner::tune(std::size_t m, std::size_t n, std::size_t k,
                             std::span<const KernelParams> candidates, std::size_t trials) {
  if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "empty candidate grid");
  {
    std::lock_guard lk(mu_);
    if (auto it = cache_.find({m, n, k}); it != cache_.end()) return it->second;
  }
  // Measure outside the lock; a concurrent tune of the same key just repeats work.
  std::size_t best = 0;
  double best_time = 0.0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const double t = measure_(candidates[c], m, n, k, seed_, std::max<std::size_t>(trials, 1));
    if (c == 0 || t < best_time) {
      best = c;
      best_time = t;
    }
  }
  std::lock_guard lk(mu_);
  measurements_ += candidates.size();
  return cache_.try_emplace({m, n, k}, candidates[best]).first->second;
}

std::optional<KernelParams> Autotuner::lookup(std::size_t m, std::size_t n, std::size_t k) const {
  std::lock_guard lk(mu_);
  if (auto it = cache_.find({m, n, k}); it != cache_.end()) return it->second;
  return std::nullopt;
}

std::size_t Autotuner::measurements() const {
  std::lock_guard lk(mu_);
  return measurements_;
}

std::size_t Autotuner::cache_size() const {
  std::lock_guard lk(mu_);
  return cache_.size();
}

std::string Autotuner::host_fingerprint() {
  char host[256] = {};
  if (gethostname(host, sizeof(host) - 1) != 0) host[0] = '\0';
  return std::string(host) + "/" + std::to_string(std::thread::hardware_concurrency()) + "/" +
         __VERSION__;
}

void Autotuner::save(const std::string& path) const {
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  {
    std::lock_guard lk(mu_);
    for (const auto& [key, params] : cache_) {
      entries.push_back({{"m", std::get<0>(key)},
                         {"n", std::get<1>(key)},
                         {"k", std::get<2>(key)},
                         {"params", to_json(params)}});
    }
  }
  nlohmann::ordered_json doc = {{"fingerprint", host_fingerprint()}, {"entries", entries}};
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write tuning cache " + path);
  out << doc.dump(2) << '\n';
}

bool Autotuner::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) return false;
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, "tuning cache " + path + ": " + e.what());
  }
  if (doc.value("fingerprint", std::string()) != host_fingerprint()) return false;
  std::lock_guard lk(mu_);
  for (const auto& e : doc.at("entries")) {
    cache_[{e.at("m").get<std::size_t>(), e.at("n").get<std::size_t>(),
            e.at("k").get<std::size_t>()}] = kernel_params_from_json(e.at("params"));
  }
  return true;
}

double Autotuner::measure_wall_clock(const KernelParams& p, std::size_t m, std::size_t n,
                                     std::size_t k, std::uint64_t seed, std::size_t trials) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> a(m * k), b(k * n), c(m * n, 0.0);
  for (auto& v : a) v = dist(rng);
  for (auto& v : b) v = dist(rng);
  std::vector<double> times;
  times.reserve(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto start = std::chrono::steady_clock::now();
    smm(m, n, k, a, b, c, p);
    const auto stop = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(stop - start).count());
  }
  std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2),
                   times.end());
  return times[times.size() / 2];
}

KernelChoice KernelDispatcher::dispatch(std::size_t m, std::size_t n, std::size_t k) const {
  if (dispatch_path(m, n, k) == KernelPath::Large) return {KernelPath::Large, large_path_params()};
  if (tuner_ != nullptr) {
    if (auto hit = tuner_->lookup(m, n, k)) return {KernelPath::Small, *hit};
    if (tune_on_miss_) {
      auto candidates = default_candidates(m, n, k);
      return {KernelPath::Small, tuner_->tune(m, n, k, candidates)};
    }
  }
  return {KernelPath::Small, default_small_params(m, n, k)};
}

void KernelDispatcher::multiply(std::size_t m, std::size_t n, std::size_t k,
                                std::span<const double> a, std::span<const double> b,
                                std::span<double> c) const {
  smm(m, n, k, a, b, c, dispatch(m, n, k).params);
}

}  // namespace dbmm
