#pragma once

#include <cstddef>
#include <vector>

#include "dbmm/distribution.hpp"
#include "dbmm/multiply_common.hpp"

namespace dbmm {

/// Rank whose panel rank `rank` holds after the initial Cannon skew: row r of
/// A moves left by r, column c of B moves up by c. C does not move.
std::size_t skew_source(const ProcessGrid& grid, std::size_t rank, Operand role);
std::size_t skew_destination(const ProcessGrid& grid, std::size_t rank, Operand role);

/// Applies the skew to a full set of per-rank panels (index = rank).
template <class Panel>
std::vector<Panel> skew_align(std::vector<Panel> panels, const ProcessGrid& grid, Operand role) {
  std::vector<Panel> out;
  out.reserve(panels.size());
  for (std::size_t r = 0; r < panels.size(); ++r) {
    out.push_back(std::move(panels[skew_source(grid, r, role)]));
  }
  return out;
}

/// Throws NonSquareGrid unless the grid is P~ x P~.
void require_square(const ProcessGrid& grid);

/// C += A * B on a square grid with all three operands block-cyclically
/// distributed (panel index = rank).
///
/// After the skew, every step multiplies the rank's current A and B panels
/// and passes them on: A one rank left, B one rank up. The next panels are
/// posted before the local multiplication starts, so communication and
/// computation overlap. P~ steps, P~ - 1 shifts. The report splits each
/// rank's volume into "skew" and "shift" phases.
///
/// With cfg.densify, each rank coalesces its panels before the skew, ships
/// dense panels, and undensifies C at the end.
MultiplyResult cannon_multiply(const std::vector<BlockedMatrix>& a_panels,
                               const std::vector<BlockedMatrix>& b_panels,
                               std::vector<BlockedMatrix> c_panels, const ProcessGrid& grid,
                               const MultiplyConfig& cfg);

}  // namespace dbmm
