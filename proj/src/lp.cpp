#include "dcrl/lp.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace dcrl {

namespace {

constexpr double kPivotTol = 1e-10;
constexpr double kCostTol = 1e-10;

// Tableau over columns [structural | slack/surplus | artificial], rhs last.
class Tableau {
 public:
  Tableau(const LinearProgram& lp) {
    m_ = lp.n_rows();
    n_ = lp.n_cols();
    for (RowSense s : lp.sense)
      if (s != RowSense::eq) ++n_slack_;
    n_total_ = n_ + n_slack_ + m_;
    t_ = Mat::Zero(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(n_total_ + 1));
    flip_.assign(m_, 1.0);
    std::size_t slack = n_;
    for (std::size_t i = 0; i < m_; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      t_.row(r).head(static_cast<Eigen::Index>(n_)) = lp.a.row(r);
      if (lp.sense[i] == RowSense::le) t_(r, static_cast<Eigen::Index>(slack++)) = 1.0;
      if (lp.sense[i] == RowSense::ge) t_(r, static_cast<Eigen::Index>(slack++)) = -1.0;
      t_(r, static_cast<Eigen::Index>(n_total_)) = lp.b[r];
      if (lp.b[r] < 0.0) {
        t_.row(r) *= -1.0;
        flip_[i] = -1.0;
      }
      t_(r, static_cast<Eigen::Index>(artificial(i))) = 1.0;
    }
    basis_.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) basis_[i] = artificial(i);
  }

  std::size_t artificial(std::size_t row) const { return n_ + n_slack_ + row; }
  bool is_artificial(std::size_t col) const { return col >= n_ + n_slack_; }
  std::size_t n_total() const { return n_total_; }
  std::size_t n_struct() const { return n_; }
  std::size_t n_slack() const { return n_slack_; }
  std::size_t rows() const { return m_; }
  const std::vector<std::size_t>& basis() const { return basis_; }
  double flip(std::size_t row) const { return flip_[row]; }
  double value(std::size_t row) const { return t_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(n_total_)); }
  double entry(std::size_t row, std::size_t col) const {
    return t_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
  }

  // Maximizes cost^T x over allowed columns. Returns optimal/unbounded/limit.
  LpStatus optimize(const Vec& cost, const std::vector<bool>& allowed, std::size_t& iterations, std::size_t limit) {
    const auto rhs = static_cast<Eigen::Index>(n_total_);
    while (true) {
      if (iterations >= limit) return LpStatus::iteration_limit;
      Vec cb(static_cast<Eigen::Index>(m_));
      for (std::size_t i = 0; i < m_; ++i) cb[static_cast<Eigen::Index>(i)] = cost[static_cast<Eigen::Index>(basis_[i])];
      // Bland: lowest-index improving column.
      std::size_t enter = n_total_;
      for (std::size_t j = 0; j < n_total_; ++j) {
        if (!allowed[j] || in_basis(j)) continue;
        const double reduced = cost[static_cast<Eigen::Index>(j)] - cb.dot(t_.col(static_cast<Eigen::Index>(j)));
        if (reduced > kCostTol) {
          enter = j;
          break;
        }
      }
      if (enter == n_total_) return LpStatus::optimal;

      std::size_t leave = m_;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m_; ++i) {
        const double a = entry(i, enter);
        if (a <= kPivotTol) continue;
        const double ratio = t_(static_cast<Eigen::Index>(i), rhs) / a;
        if (ratio < best - 1e-12 || (std::abs(ratio - best) <= 1e-12 && leave < m_ && basis_[i] < basis_[leave])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave == m_) return LpStatus::unbounded;
      pivot(leave, enter);
      ++iterations;
    }
  }

  void pivot(std::size_t row, std::size_t col) {
    const auto r = static_cast<Eigen::Index>(row);
    const auto c = static_cast<Eigen::Index>(col);
    t_.row(r) /= t_(r, c);
    for (Eigen::Index i = 0; i < t_.rows(); ++i) {
      if (i == r) continue;
      const double f = t_(i, c);
      if (f != 0.0) t_.row(i) -= f * t_.row(r);
    }
    basis_[row] = col;
  }

  bool in_basis(std::size_t col) const {
    for (std::size_t b : basis_)
      if (b == col) return true;
    return false;
  }

 private:
  std::size_t m_ = 0, n_ = 0, n_slack_ = 0, n_total_ = 0;
  Mat t_;
  std::vector<std::size_t> basis_;
  std::vector<double> flip_;
};

}  // namespace

void LinearProgram::add_row(const Vec& coeffs, RowSense s, double rhs, std::string name) {
  if (a.cols() == 0 && a.rows() == 0) a.resize(0, coeffs.size());
  if (coeffs.size() != a.cols()) throw std::invalid_argument("LinearProgram::add_row: wrong width");
  a.conservativeResize(a.rows() + 1, Eigen::NoChange);
  a.row(a.rows() - 1) = coeffs.transpose();
  b.conservativeResize(b.size() + 1);
  b[b.size() - 1] = rhs;
  sense.push_back(s);
  row_names.push_back(std::move(name));
}

std::string to_string(LpStatus status) {
  switch (status) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

LpResult solve_simplex(const LinearProgram& lp, std::size_t max_iterations) {
  const std::size_t m = lp.n_rows();
  const std::size_t n = lp.n_cols();
  if (static_cast<std::size_t>(lp.b.size()) != m || lp.sense.size() != m || static_cast<std::size_t>(lp.c.size()) != n)
    throw std::invalid_argument("solve_simplex: inconsistent dimensions");
  if (!lp.a.allFinite() || !lp.b.allFinite() || !lp.c.allFinite())
    throw std::invalid_argument("solve_simplex: non-finite coefficients");

  LpResult result;
  Tableau tab(lp);
  const std::size_t total = tab.n_total();

  // Phase 1: maximize -sum(artificials).
  Vec cost1 = Vec::Zero(static_cast<Eigen::Index>(total));
  for (std::size_t i = 0; i < m; ++i) cost1[static_cast<Eigen::Index>(tab.artificial(i))] = -1.0;
  std::vector<bool> allowed(total, true);
  LpStatus st = tab.optimize(cost1, allowed, result.iterations, max_iterations);
  if (st == LpStatus::iteration_limit) {
    result.status = st;
    return result;
  }
  double infeasibility = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    if (tab.is_artificial(tab.basis()[i])) infeasibility += tab.value(i);
  const double b_scale = 1.0 + (lp.b.size() ? lp.b.cwiseAbs().maxCoeff() : 0.0);
  if (infeasibility > 1e-9 * b_scale) {
    result.status = LpStatus::infeasible;
    return result;
  }

  // Drive zero-level artificials out of the basis where possible.
  for (std::size_t i = 0; i < m; ++i) {
    if (!tab.is_artificial(tab.basis()[i])) continue;
    for (std::size_t j = 0; j < n + tab.n_slack(); ++j) {
      if (std::abs(tab.entry(i, j)) > 1e-9 && !tab.in_basis(j)) {
        tab.pivot(i, j);
        break;
      }
    }
  }

  // Phase 2.
  Vec cost2 = Vec::Zero(static_cast<Eigen::Index>(total));
  cost2.head(static_cast<Eigen::Index>(n)) = lp.c;
  for (std::size_t j = n + tab.n_slack(); j < total; ++j) allowed[j] = false;
  st = tab.optimize(cost2, allowed, result.iterations, max_iterations);
  if (st != LpStatus::optimal) {
    result.status = st;
    return result;
  }

  // Re-solve the final basis in the original row orientation.
  Mat full = Mat::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(total));
  full.leftCols(static_cast<Eigen::Index>(n)) = lp.a;
  std::size_t slack = n;
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (lp.sense[i] == RowSense::le) full(r, static_cast<Eigen::Index>(slack++)) = 1.0;
    if (lp.sense[i] == RowSense::ge) full(r, static_cast<Eigen::Index>(slack++)) = -1.0;
    full(r, static_cast<Eigen::Index>(tab.artificial(i))) = tab.flip(i);
  }
  Mat basis_mat(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  Vec cb(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    basis_mat.col(static_cast<Eigen::Index>(i)) = full.col(static_cast<Eigen::Index>(tab.basis()[i]));
    cb[static_cast<Eigen::Index>(i)] = cost2[static_cast<Eigen::Index>(tab.basis()[i])];
  }
  result.x = Vec::Zero(static_cast<Eigen::Index>(n));
  if (m > 0) {
    const auto lu = basis_mat.fullPivLu();
    const Vec xb = lu.solve(lp.b);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t col = tab.basis()[i];
      if (col < n) result.x[static_cast<Eigen::Index>(col)] = std::max(0.0, xb[static_cast<Eigen::Index>(i)]);
    }
    result.duals = basis_mat.transpose().fullPivLu().solve(cb);
  } else {
    result.duals = Vec();
  }
  result.objective = lp.c.dot(result.x);
  result.status = LpStatus::optimal;
  return result;
}

void write_lp(std::ostream& out, const LinearProgram& lp) {
  auto col_name = [&](std::size_t j) {
    return j < lp.col_names.size() && !lp.col_names[j].empty() ? lp.col_names[j] : "x" + std::to_string(j);
  };
  auto row_name = [&](std::size_t i) {
    return i < lp.row_names.size() && !lp.row_names[i].empty() ? lp.row_names[i] : "r" + std::to_string(i);
  };
  auto write_terms = [&](const auto& coeffs) {
    bool first = true;
    for (Eigen::Index j = 0; j < coeffs.size(); ++j) {
      const double v = coeffs[j];
      if (v == 0.0) continue;
      out << (v < 0.0 ? " - " : (first ? " " : " + ")) << std::abs(v) << ' ' << col_name(static_cast<std::size_t>(j));
      first = false;
    }
    if (first) out << " 0 " << col_name(0);
  };
  out << std::setprecision(17);
  out << "\\ occupancy LP: " << lp.n_cols() << " columns, " << lp.n_rows() << " rows\n";
  out << "Maximize\n obj:";
  write_terms(lp.c);
  out << "\nSubject To\n";
  for (std::size_t i = 0; i < lp.n_rows(); ++i) {
    out << ' ' << row_name(i) << ':';
    write_terms(lp.a.row(static_cast<Eigen::Index>(i)));
    const char* op = lp.sense[i] == RowSense::le ? " <= " : lp.sense[i] == RowSense::ge ? " >= " : " = ";
    out << op << lp.b[static_cast<Eigen::Index>(i)] << '\n';
  }
  out << "End\n";
}

}  // namespace dcrl
