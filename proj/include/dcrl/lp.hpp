#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "dcrl/mdp.hpp"

namespace dcrl {

enum class RowSense { le, ge, eq };

/// maximize c^T x  subject to  a_i^T x (<=|>=|=) b_i,  x >= 0.
struct LinearProgram {
  Mat a;
  Vec b;
  std::vector<RowSense> sense;
  Vec c;
  std::vector<std::string> row_names;
  std::vector<std::string> col_names;

  std::size_t n_rows() const { return static_cast<std::size_t>(a.rows()); }
  std::size_t n_cols() const { return static_cast<std::size_t>(a.cols()); }
  /// Appends a row; names are optional.
  void add_row(const Vec& coeffs, RowSense s, double rhs, std::string name = {});
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

std::string to_string(LpStatus status);

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  Vec x;
  double objective = 0.0;
  /// Row duals y with c - A^T y <= 0 on every column at optimality. For a
  /// maximization, y >= 0 on <= rows and y <= 0 on >= rows.
  Vec duals;
  std::size_t iterations = 0;
};

/// Dense two-phase tableau simplex with Bland's rule. The final basis is
/// re-solved with an LU factorization to clean up primal values and duals.
LpResult solve_simplex(const LinearProgram& lp, std::size_t max_iterations = 200000);

/// Writes the program in CPLEX LP text format.
void write_lp(std::ostream& out, const LinearProgram& lp);

}  // namespace dcrl
