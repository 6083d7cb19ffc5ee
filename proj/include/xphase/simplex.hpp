#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "xphase/error.hpp"

namespace xphase {

enum class LpStatus { optimal, infeasible, unbounded };

/// Solution of a linear program in standard inequality form.
struct LpResult {
  LpStatus status = LpStatus::infeasible;
  Eigen::VectorXd x;        ///< structural variables (meaningful iff optimal)
  double objective = 0.0;   ///< cᵀx at the optimum
};

/// Dense two-phase tableau simplex for desk-scale problems:
///
///   minimize cᵀx   subject to   A·x ≤ b,   x ≥ 0
///
/// `b` may have any sign. Bland's anti-cycling rule (lowest eligible index
/// enters; lowest basic index leaves among ratio ties) keeps degenerate
/// problems terminating. Templated on the scalar so exact-arithmetic types
/// can be dropped in; production use is `double`.
template <typename Scalar = double>
class SimplexSolver {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit SimplexSolver(Scalar tolerance = Scalar(1e-9)) : tol_(tolerance) {}

  LpResult solve(const Vector& c, const Matrix& a, const Vector& b) const {
    const int m = static_cast<int>(a.rows());
    const int n = static_cast<int>(a.cols());
    if (c.size() != n || b.size() != m)
      throw Error(ErrorKind::usage, "simplex: inconsistent dimensions");

    // Columns: n structural, m slacks, then one artificial per negative-rhs
    // row. Rows with b >= 0 start basic on their slack.
    int n_art = 0;
    for (int i = 0; i < m; ++i)
      if (b(i) < Scalar(0)) ++n_art;
    const int cols = n + m + n_art;

    Matrix t = Matrix::Zero(m, cols);
    Vector rhs = b;
    std::vector<int> basis(m);
    int art = n + m;
    for (int i = 0; i < m; ++i) {
      t.row(i).head(n) = a.row(i);
      t(i, n + i) = Scalar(1);
      if (rhs(i) < Scalar(0)) {
        t.row(i) = -t.row(i);
        rhs(i) = -rhs(i);
        t(i, art) = Scalar(1);
        basis[i] = art++;
      } else {
        basis[i] = n + i;
      }
    }

    std::vector<char> allowed(cols, 1);

    if (n_art > 0) {
      Vector phase1 = Vector::Zero(cols);
      phase1.tail(n_art).setOnes();
      if (!run(t, rhs, basis, phase1, allowed))
        return {LpStatus::unbounded, {}, 0.0};
      Scalar infeas = Scalar(0);
      for (int i = 0; i < m; ++i)
        if (basis[i] >= n + m) infeas += rhs(i);
      if (infeas > tol_) return {LpStatus::infeasible, {}, 0.0};

      // Pivot any residual (zero-valued) artificial out of the basis, then
      // bar artificial columns from ever re-entering.
      for (int i = 0; i < m; ++i) {
        if (basis[i] < n + m) continue;
        int enter = -1;
        for (int j = 0; j < n + m; ++j)
          if (std::abs(t(i, j)) > tol_) {
            enter = j;
            break;
          }
        if (enter >= 0) pivot(t, rhs, basis, i, enter);
        // An all-zero row is redundant; its artificial stays basic at zero.
      }
      for (int j = n + m; j < cols; ++j) allowed[j] = 0;
    }

    Vector cost = Vector::Zero(cols);
    cost.head(n) = c;
    if (!run(t, rhs, basis, cost, allowed))
      return {LpStatus::unbounded, {}, 0.0};

    LpResult result;
    result.status = LpStatus::optimal;
    result.x = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < m; ++i)
      if (basis[i] < n) result.x(basis[i]) = static_cast<double>(rhs(i));
    result.objective = static_cast<double>(c.dot(result.x.template cast<Scalar>()));
    return result;
  }

 private:
  /// Runs simplex iterations for one cost vector. Returns false on
  /// unboundedness.
  bool run(Matrix& t, Vector& rhs, std::vector<int>& basis, const Vector& cost,
           const std::vector<char>& allowed) const {
    const int m = static_cast<int>(t.rows());
    const int cols = static_cast<int>(t.cols());
    // Iteration bound: generous polynomial cap as a hard safety net; Bland's
    // rule guarantees finite termination well before it.
    const long max_pivots = 50L * (m + cols) * (m + cols > 64 ? 8 : 64);

    for (long step = 0; step < max_pivots; ++step) {
      // Reduced costs d_j = c_j − c_Bᵀ·T_j.
      Vector cb(m);
      for (int i = 0; i < m; ++i) cb(i) = cost(basis[i]);
      int enter = -1;
      for (int j = 0; j < cols; ++j) {
        if (!allowed[j]) continue;
        const Scalar d = cost(j) - cb.dot(t.col(j));
        if (d < -tol_) {
          enter = j;  // Bland: lowest index
          break;
        }
      }
      if (enter < 0) return true;  // optimal

      int leave = -1;
      Scalar best_ratio = Scalar(0);
      for (int i = 0; i < m; ++i) {
        if (t(i, enter) <= tol_) continue;
        const Scalar ratio = rhs(i) / t(i, enter);
        if (leave < 0 || ratio < best_ratio - tol_) {
          best_ratio = ratio;
          leave = i;
        } else if (ratio <= best_ratio + tol_ && basis[i] < basis[leave]) {
          // Bland: among (near-)ties, the lowest basic index leaves.
          if (ratio < best_ratio) best_ratio = ratio;
          leave = i;
        }
      }
      if (leave < 0) return false;  // unbounded
      pivot(t, rhs, basis, leave, enter);
    }
    throw Error(ErrorKind::convergence, "simplex exceeded its pivot budget");
  }

  void pivot(Matrix& t, Vector& rhs, std::vector<int>& basis, int row,
             int col) const {
    const Scalar p = t(row, col);
    t.row(row) /= p;
    rhs(row) /= p;
    for (int i = 0; i < t.rows(); ++i) {
      if (i == row) continue;
      const Scalar f = t(i, col);
      if (f != Scalar(0)) {
        t.row(i) -= f * t.row(row);
        rhs(i) -= f * rhs(row);
      }
    }
    basis[row] = col;
  }

  Scalar tol_;
};

/// Convenience wrapper: minimize cᵀx subject to A·x ≤ b, x ≥ 0.
inline LpResult solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& a,
                         const Eigen::VectorXd& b) {
  return SimplexSolver<double>().solve(c, a, b);
}

}  // namespace xphase
