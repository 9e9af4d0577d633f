#pragma once

#include <string>

#include "dbmm/cannon.hpp"
#include "dbmm/tall_skinny.hpp"

namespace dbmm {

enum class Algorithm { Cannon, TallSkinny };

const char* to_string(Algorithm a) noexcept;

/// Advisory choice: tall-and-skinny when K >= 32 * max(M, N) or when the grid
/// is not square (Cannon cannot run there), Cannon otherwise.
Algorithm choose_algorithm(const ProblemDims& dims, const ProcessGrid& grid);

struct DistributedProduct {
  BlockedMatrix c;  // gathered global result
  MultiplyResult detail;
};

/// Scatters global operands with the algorithm's layout, multiplies, and
/// gathers C. Replicate mode is not supported here; the gathered C comes
/// from the owner layout.
DistributedProduct distributed_multiply(const BlockedMatrix& a, const BlockedMatrix& b,
                                        const BlockedMatrix& c, const ProcessGrid& grid,
                                        Algorithm algorithm, const MultiplyConfig& cfg);

/// Dense single-rank product and the error metric used for verification:
/// for every element, |C - R| / (|C0| + sum_p |A_ip| |B_pj|), where R is the
/// reference C0 + A * B. A zero denominator demands exact equality.
struct ReferenceProduct {
  DenseMatrix value;
  DenseMatrix scale;
};

ReferenceProduct dense_reference(const DenseMatrix& a, const DenseMatrix& b, const DenseMatrix& c0);
double max_relative_error(const DenseMatrix& got, const ReferenceProduct& ref);

}  // namespace dbmm
