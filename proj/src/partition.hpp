#pragma once

#include <vector>

#include "psbfem/solver.hpp"

namespace psbfem::detail {

// Splits 0..n-1 into free and fixed dofs; pos maps a dof to its index in its group.
void partition(Index n, const std::vector<Constraint>& constrained, std::vector<Index>& free,
               std::vector<Index>& fixed, std::vector<Eigen::Index>& pos);

std::vector<char> fixed_mask(Index n, const std::vector<Index>& fixed);

// Block of A with rows from the fixed (or free) group and columns from the fixed (or free) group.
SparseMatrix block(const SparseMatrix& A, const std::vector<char>& fixed, bool rows_fixed, bool cols_fixed,
                   const std::vector<Eigen::Index>& pos, Eigen::Index nr, Eigen::Index nc);

}  // namespace psbfem::detail
