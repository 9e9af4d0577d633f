#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dbmm/multiply.hpp"

namespace dbmm {

/// Uniform doubles in [-1, 1], fully dense, filled in global row-major order
/// so the values do not depend on the block size.
DenseMatrix generate_dense(std::size_t rows, std::size_t cols, std::uint64_t seed);
BlockedMatrix generate_matrix(const BlockDims& dims, std::uint64_t seed);
BlockedMatrix generate_matrix(std::size_t rows, std::size_t cols, std::size_t block,
                              std::uint64_t seed);

/// FNV-1a over the element bits, in CSR order.
std::uint64_t checksum(const BlockedMatrix& m);

enum class Shape { Square, Rect };
enum class DensifyMode { Blocked, Densified, Both };

const char* to_string(Shape s) noexcept;

/// One benchmark cell: a process grid and the worker threads per rank.
struct GridCell {
  ProcessGrid grid;
  std::size_t threads = 1;
};

/// Grid for `ranks` emulated ranks: square when possible, else 1 x ranks.
ProcessGrid grid_for_ranks(std::size_t ranks);

struct ExperimentSpec {
  Shape shape = Shape::Square;
  std::size_t n = 704;      // square: M = N = K = n
  std::size_t mn = 128;     // rect: M = N = mn
  std::size_t k = 16384;    // rect: K
  std::vector<std::size_t> blocks{22};
  std::vector<GridCell> cells{{ProcessGrid(1, 1), 1}};
  std::optional<Algorithm> algorithm;  // empty = choose_algorithm
  DensifyMode densify = DensifyMode::Both;
  std::uint64_t seed = 1;
  std::size_t repeats = 4;
  bool verify = false;
  bool sweep = false;  // cells describe a ranks x threads sweep
  double tolerance = 1e-12;
  const KernelDispatcher* dispatcher = nullptr;

  ProblemDims dims() const;
};

struct RunReport {
  Shape shape = Shape::Square;
  ProblemDims dims;
  std::size_t block = 0;
  ProcessGrid grid;
  std::size_t threads = 1;
  Algorithm algorithm = Algorithm::Cannon;
  bool densified = false;

  std::vector<double> samples;  // seconds per multiplication
  double median_seconds = 0.0;
  double mean_seconds = 0.0;

  CommReport comm;
  StackStats stacks;
  DensifySummary densify;

  bool verify_checked = false;
  double max_rel_error = 0.0;
  bool verify_passed = true;
  std::uint64_t c_checksum = 0;
};

/// T_blocked / T_densified for a (block, grid, threads) cell.
struct RatioRow {
  std::size_t block = 0;
  std::string grid;
  std::size_t threads = 1;
  std::string algorithm;
  double blocked_seconds = 0.0;
  double densified_seconds = 0.0;
  double ratio = 0.0;
};

/// One ranks x threads cell of a sweep; absent timings stay empty.
struct SweepRow {
  std::size_t ranks = 1;
  std::size_t threads = 1;
  std::string grid;
  std::string algorithm;
  std::size_t block = 0;
  std::optional<double> blocked_seconds;
  std::optional<double> densified_seconds;
};

struct ExperimentReport {
  ExperimentSpec spec;
  std::vector<RunReport> runs;
  std::vector<RatioRow> ratios;
  std::vector<SweepRow> sweep;

  bool all_verified() const;
};

ExperimentReport run_experiment(const ExperimentSpec& spec);

/// Pure post-processing: pairs runs that differ only in the densified flag.
std::vector<RatioRow> ratio_table(const std::vector<RunReport>& runs);
std::vector<SweepRow> sweep_table(const std::vector<RunReport>& runs);

double median(std::vector<double> values);

/// Field order is fixed: experiment, runs, ratio_table, sweep_table, verified.
nlohmann::ordered_json to_json(const ExperimentReport& report);
nlohmann::ordered_json to_json(const RunReport& run);

/// Runs table, then "# ratio_table" and "# sweep_table" sections.
std::string to_csv(const ExperimentReport& report);

}  // namespace dbmm
