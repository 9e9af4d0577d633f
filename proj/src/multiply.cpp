#include "dbmm/multiply.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dbmm/error.hpp"

namespace dbmm {

const char* to_string(Algorithm a) noexcept {
  return a == Algorithm::Cannon ? "cannon" : "tallskinny";
}

Algorithm choose_algorithm(const ProblemDims& dims, const ProcessGrid& grid) {
  if (dims.k >= 32 * std::max(dims.m, dims.n)) return Algorithm::TallSkinny;
  return grid.is_square() ? Algorithm::Cannon : Algorithm::TallSkinny;
}

DistributedProduct distributed_multiply(const BlockedMatrix& a, const BlockedMatrix& b,
                                        const BlockedMatrix& c, const ProcessGrid& grid,
                                        Algorithm algorithm, const MultiplyConfig& cfg) {
  check_conformant(a, b, c);
  const BlockCyclicMap c_map(grid, c.dims());
  DistributedProduct out;
  if (algorithm == Algorithm::Cannon) {
    require_square(grid);
    const BlockCyclicMap a_map(grid, a.dims());
    const BlockCyclicMap b_map(grid, b.dims());
    out.detail = cannon_multiply(scatter(a, a_map), scatter(b, b_map), scatter(c, c_map), grid, cfg);
  } else {
    const KBlockMap kmap(grid.size(), a.dims().col_sizes());
    TallSkinnyConfig ts;
    ts.base = cfg;
    out.detail = tall_skinny_multiply(scatter_k(a, kmap, KSide::ColumnsAreK),
                                      scatter_k(b, kmap, KSide::RowsAreK), scatter(c, c_map), grid,
                                      kmap, ts);
  }
  out.c = gather(out.detail.c_panels, c_map);
  return out;
}

ReferenceProduct dense_reference(const DenseMatrix& a, const DenseMatrix& b, const DenseMatrix& c0) {
  if (a.cols != b.rows || c0.rows != a.rows || c0.cols != b.cols) {
    throw Error(ErrorCode::ShapeMismatch, "reference operands do not conform");
  }
  ReferenceProduct ref{c0, DenseMatrix(c0.rows, c0.cols)};
  for (std::size_t e = 0; e < c0.values.size(); ++e) ref.scale.values[e] = std::fabs(c0.values[e]);
  const std::size_t n = b.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* vi = &ref.value.values[i * n];
    double* si = &ref.scale.values[i * n];
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double aip = a(i, p);
      const double abs_aip = std::fabs(aip);
      const double* bp = &b.values[p * n];
      for (std::size_t j = 0; j < n; ++j) {
        vi[j] += aip * bp[j];
        si[j] += abs_aip * std::fabs(bp[j]);
      }
    }
  }
  return ref;
}

double max_relative_error(const DenseMatrix& got, const ReferenceProduct& ref) {
  if (got.rows != ref.value.rows || got.cols != ref.value.cols) {
    throw Error(ErrorCode::ShapeMismatch, "result shape differs from the reference");
  }
  double worst = 0.0;
  for (std::size_t e = 0; e < got.values.size(); ++e) {
    const double diff = std::fabs(got.values[e] - ref.value.values[e]);
    const double scale = ref.scale.values[e];
    double err;
    if (scale > 0.0) {
      err = diff / scale;
    } else {
      err = diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    if (!(err <= worst)) worst = err;  // NaN propagates
  }
  return worst;
}

}  // namespace dbmm
