#pragma once

#include <cstddef>
#include <vector>

#include "dbmm/distribution.hpp"
#include "dbmm/multiply_common.hpp"

namespace dbmm {

enum class ResultMode {
  OwnerGather,  // C ends up block-cyclic over the grid
  Replicate,    // every rank ends up with all of C
};

struct TallSkinnyConfig {
  MultiplyConfig base;
  ResultMode mode = ResultMode::OwnerGather;
  std::size_t max_replicated_bytes = std::size_t{1} << 30;
};

/// C += A * B for one large dimension K, with A and B split over K by `kmap`
/// and C block-cyclic over `grid` (ranks numbered as in the grid).
///
/// Every rank forms a full M x N partial product from its K slice (seeded
/// with the C blocks it owns), then the partials are summed up a rank-
/// ascending binary tree into rank 0 and handed back to the owners (or
/// broadcast, in Replicate mode). A non-root rank sends exactly one M x N
/// partial during the reduction whatever the rank count. The report carries
/// "reduce" and "distribute" phases.
MultiplyResult tall_skinny_multiply(const std::vector<BlockedMatrix>& a_panels,
                                    const std::vector<BlockedMatrix>& b_panels,
                                    std::vector<BlockedMatrix> c_panels, const ProcessGrid& grid,
                                    const KBlockMap& kmap, const TallSkinnyConfig& cfg);

}  // namespace dbmm
