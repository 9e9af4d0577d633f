#include "dbmm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

#include "dbmm/error.hpp"

namespace dbmm {

DenseMatrix generate_dense(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  DenseMatrix out(rows, cols);
  for (auto& v : out.values) v = dist(rng);
  return out;
}

BlockedMatrix generate_matrix(const BlockDims& dims, std::uint64_t seed) {
  return from_dense(generate_dense(dims.total_rows(), dims.total_cols(), seed), dims, false);
}

BlockedMatrix generate_matrix(std::size_t rows, std::size_t cols, std::size_t block,
                              std::uint64_t seed) {
  return generate_matrix(BlockDims::uniform(rows, cols, block), seed);
}

std::uint64_t checksum(const BlockedMatrix& m) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : m.data()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (bits >> (8 * byte)) & 0xffU;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

const char* to_string(Shape s) noexcept { return s == Shape::Square ? "square" : "rect"; }

ProcessGrid grid_for_ranks(std::size_t ranks) {
  const auto root = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(ranks))));
  if (root * root == ranks) return ProcessGrid(root, root);
  return ProcessGrid(1, ranks);
}

ProblemDims ExperimentSpec::dims() const {
  if (shape == Shape::Square) return {n, n, n};
  return {mn, mn, k};
}

bool ExperimentReport::all_verified() const {
  return std::all_of(runs.begin(), runs.end(), [](const RunReport& r) { return r.verify_passed; });
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

namespace {

struct Operands {
  BlockedMatrix a, b, c;
};

RunReport run_cell(const ExperimentSpec& spec, const Operands& ops, std::size_t block,
                   const GridCell& cell, bool densified, const ReferenceProduct* ref) {
  const ProblemDims dims = spec.dims();
  RunReport run;
  run.shape = spec.shape;
  run.dims = dims;
  run.block = block;
  run.grid = cell.grid;
  run.threads = cell.threads;
  run.algorithm = spec.algorithm.value_or(choose_algorithm(dims, cell.grid));
  run.densified = densified;

  MultiplyConfig cfg;
  cfg.local.threads = cell.threads;
  cfg.local.dispatcher = spec.dispatcher;
  cfg.densify = densified;
  std::vector<BufferPool> pools(cell.grid.size());
  cfg.pools = &pools;

  const BlockCyclicMap c_map(cell.grid, ops.c.dims());
  const auto c_panels = scatter(ops.c, c_map);
  std::vector<BlockedMatrix> a_panels, b_panels;
  std::optional<KBlockMap> kmap;
  if (run.algorithm == Algorithm::Cannon) {
    require_square(cell.grid);
    a_panels = scatter(ops.a, BlockCyclicMap(cell.grid, ops.a.dims()));
    b_panels = scatter(ops.b, BlockCyclicMap(cell.grid, ops.b.dims()));
  } else {
    kmap.emplace(cell.grid.size(), ops.a.dims().col_sizes());
    a_panels = scatter_k(ops.a, *kmap, KSide::ColumnsAreK);
    b_panels = scatter_k(ops.b, *kmap, KSide::RowsAreK);
  }

  MultiplyResult last;
  const std::size_t repeats = std::max<std::size_t>(spec.repeats, 1);
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    auto c_copy = c_panels;
    const auto t0 = std::chrono::steady_clock::now();
    if (run.algorithm == Algorithm::Cannon) {
      last = cannon_multiply(a_panels, b_panels, std::move(c_copy), cell.grid, cfg);
    } else {
      TallSkinnyConfig ts;
      ts.base = cfg;
      last = tall_skinny_multiply(a_panels, b_panels, std::move(c_copy), cell.grid, *kmap, ts);
    }
    run.samples.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  run.median_seconds = median(run.samples);
  run.mean_seconds =
      std::accumulate(run.samples.begin(), run.samples.end(), 0.0) / double(run.samples.size());
  run.comm = last.comm;
  run.stacks = last.total_stacks();
  run.densify = last.densify;

  const BlockedMatrix c = gather(last.c_panels, c_map);
  run.c_checksum = checksum(c);
  if (ref != nullptr) {
    run.verify_checked = true;
    run.max_rel_error = max_relative_error(to_dense(c), *ref);
    run.verify_passed = run.max_rel_error <= spec.tolerance;
  }
  return run;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentSpec& spec) {
  const ProblemDims dims = spec.dims();
  if (dims.m == 0 || dims.n == 0 || dims.k == 0) {
    throw Error(ErrorCode::InvalidArgument, "matrix dimensions must be positive");
  }
  if (spec.blocks.empty() || spec.cells.empty()) {
    throw Error(ErrorCode::InvalidArgument, "need at least one block size and one grid");
  }
  for (const auto& cell : spec.cells) {
    if (spec.algorithm == Algorithm::Cannon) require_square(cell.grid);
    if (cell.threads == 0) throw Error(ErrorCode::InvalidArgument, "threads must be positive");
  }

  ExperimentReport report;
  report.spec = spec;

  const DenseMatrix a_dense = generate_dense(dims.m, dims.k, spec.seed);
  const DenseMatrix b_dense = generate_dense(dims.k, dims.n, spec.seed + 1);
  std::optional<ReferenceProduct> ref;
  if (spec.verify) ref = dense_reference(a_dense, b_dense, DenseMatrix(dims.m, dims.n));

  std::vector<bool> modes;
  if (spec.densify != DensifyMode::Densified) modes.push_back(false);
  if (spec.densify != DensifyMode::Blocked) modes.push_back(true);

  for (auto block : spec.blocks) {
    if (block == 0) throw Error(ErrorCode::InvalidArgument, "block size must be positive");
    Operands ops{from_dense(a_dense, BlockDims::uniform(dims.m, dims.k, block), false),
                 from_dense(b_dense, BlockDims::uniform(dims.k, dims.n, block), false),
                 BlockedMatrix(BlockDims::uniform(dims.m, dims.n, block))};
    for (const auto& cell : spec.cells) {
      for (bool densified : modes) {
        report.runs.push_back(run_cell(spec, ops, block, cell, densified, ref ? &*ref : nullptr));
      }
    }
  }
  report.ratios = ratio_table(report.runs);
  if (spec.sweep) report.sweep = sweep_table(report.runs);
  return report;
}

std::vector<RatioRow> ratio_table(const std::vector<RunReport>& runs) {
  std::vector<RatioRow> rows;
  for (const auto& blocked : runs) {
    if (blocked.densified) continue;
    for (const auto& dense : runs) {
      if (!dense.densified || dense.block != blocked.block || !(dense.grid == blocked.grid) ||
          dense.threads != blocked.threads || dense.algorithm != blocked.algorithm ||
          dense.shape != blocked.shape) {
        continue;
      }
      RatioRow row;
      row.block = blocked.block;
      row.grid = blocked.grid.to_string();
      row.threads = blocked.threads;
      row.algorithm = to_string(blocked.algorithm);
      row.blocked_seconds = blocked.median_seconds;
      row.densified_seconds = dense.median_seconds;
      row.ratio = dense.median_seconds > 0.0 ? blocked.median_seconds / dense.median_seconds : 0.0;
      rows.push_back(row);
      break;
    }
  }
  return rows;
}

std::vector<SweepRow> sweep_table(const std::vector<RunReport>& runs) {
  std::vector<SweepRow> rows;
  for (const auto& run : runs) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const SweepRow& r) {
      return r.ranks == run.grid.size() && r.threads == run.threads && r.block == run.block &&
             r.grid == run.grid.to_string();
    });
    if (it == rows.end()) {
      SweepRow row;
      row.ranks = run.grid.size();
      row.threads = run.threads;
      row.grid = run.grid.to_string();
      row.algorithm = to_string(run.algorithm);
      row.block = run.block;
      rows.push_back(row);
      it = rows.end() - 1;
    }
    (run.densified ? it->densified_seconds : it->blocked_seconds) = run.median_seconds;
  }
  return rows;
}

nlohmann::ordered_json to_json(const RunReport& run) {
  nlohmann::ordered_json config = {{"shape", to_string(run.shape)},
                                   {"m", run.dims.m},
                                   {"n", run.dims.n},
                                   {"k", run.dims.k},
                                   {"block", run.block},
                                   {"grid", run.grid.to_string()},
                                   {"ranks", run.grid.size()},
                                   {"threads", run.threads},
                                   {"algorithm", to_string(run.algorithm)},
                                   {"densified", run.densified}};
  nlohmann::ordered_json timing = {{"samples_s", run.samples},
                                   {"median_s", run.median_seconds},
                                   {"mean_s", run.mean_seconds}};
  nlohmann::ordered_json verify = {{"checked", run.verify_checked},
                                   {"max_rel_error", run.max_rel_error},
                                   {"passed", run.verify_passed}};
  return {{"config", config},     {"timing", timing},
          {"comm", to_json(run.comm)}, {"stacks", to_json(run.stacks)},
          {"densify", to_json(run.densify)}, {"verify", verify},
          {"c_checksum", run.c_checksum}};
}

nlohmann::ordered_json to_json(const ExperimentReport& report) {
  const auto& spec = report.spec;
  const auto dims = spec.dims();
  nlohmann::ordered_json experiment = {{"shape", to_string(spec.shape)},
                                       {"m", dims.m},
                                       {"n", dims.n},
                                       {"k", dims.k},
                                       {"blocks", spec.blocks},
                                       {"seed", spec.seed},
                                       {"repeats", spec.repeats},
                                       {"verify", spec.verify},
                                       {"tolerance", spec.tolerance}};
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const auto& r : report.runs) runs.push_back(to_json(r));
  nlohmann::ordered_json ratios = nlohmann::ordered_json::array();
  for (const auto& r : report.ratios) {
    ratios.push_back({{"block", r.block},
                      {"grid", r.grid},
                      {"threads", r.threads},
                      {"algorithm", r.algorithm},
                      {"t_blocked_s", r.blocked_seconds},
                      {"t_densified_s", r.densified_seconds},
                      {"ratio", r.ratio}});
  }
  nlohmann::ordered_json sweep = nlohmann::ordered_json::array();
  for (const auto& r : report.sweep) {
    nlohmann::ordered_json row = {{"ranks", r.ranks},
                                  {"threads", r.threads},
                                  {"grid", r.grid},
                                  {"algorithm", r.algorithm},
                                  {"block", r.block}};
    row["t_blocked_s"] = r.blocked_seconds ? nlohmann::ordered_json(*r.blocked_seconds) : nullptr;
    row["t_densified_s"] =
        r.densified_seconds ? nlohmann::ordered_json(*r.densified_seconds) : nullptr;
    sweep.push_back(row);
  }
  return {{"experiment", experiment},
          {"runs", runs},
          {"ratio_table", ratios},
          {"sweep_table", sweep},
          {"verified", report.all_verified()}};
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

std::string to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "shape,m,n,k,block,grid,ranks,threads,algorithm,densified,median_s,mean_s,"
         "max_sent_bytes,stacks,max_stack_entries,densify_s,max_rel_error,verified,c_checksum\n";
  for (const auto& r : report.runs) {
    out << to_string(r.shape) << ',' << r.dims.m << ',' << r.dims.n << ',' << r.dims.k << ','
        << r.block << ',' << r.grid.to_string() << ',' << r.grid.size() << ',' << r.threads << ','
        << to_string(r.algorithm) << ',' << (r.densified ? 1 : 0) << ','
        << fmt_double(r.median_seconds) << ',' << fmt_double(r.mean_seconds) << ','
        << r.comm.max_sent_bytes() << ',' << r.stacks.stacks << ',' << r.stacks.max_entries << ','
        << fmt_double(r.densify.seconds) << ',' << fmt_double(r.max_rel_error) << ','
        << (r.verify_checked ? (r.verify_passed ? "pass" : "fail") : "skipped") << ','
        << r.c_checksum << '\n';
  }
  out << "\n# ratio_table\nblock,grid,threads,algorithm,t_blocked_s,t_densified_s,ratio\n";
  for (const auto& r : report.ratios) {
    out << r.block << ',' << r.grid << ',' << r.threads << ',' << r.algorithm << ','
        << fmt_double(r.blocked_seconds) << ',' << fmt_double(r.densified_seconds) << ','
        << fmt_double(r.ratio) << '\n';
  }
  if (!report.sweep.empty()) {
    out << "\n# sweep_table\nranks,threads,grid,algorithm,block,t_blocked_s,t_densified_s\n";
    for (const auto& r : report.sweep) {
      out << r.ranks << ',' << r.threads << ',' << r.grid << ',' << r.algorithm << ',' << r.block
          << ',' << (r.blocked_seconds ? fmt_double(*r.blocked_seconds) : "") << ','
          << (r.densified_seconds ? fmt_double(*r.densified_seconds) : "") << '\n';
    }
  }
  return out.str();
}

}  // namespace dbmm
