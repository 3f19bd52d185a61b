#pragma once

#include <vector>

#include <Eigen/Dense>

namespace dpmpc {

// Strictly convex dense QP in Goldfarb-Idnani form:
//   min 1/2 x^T G x + g0^T x
//   s.t. CE^T x + ce0 = 0
//        CI^T x + ci0 >= 0
// Constraint normals are the COLUMNS of CE and CI.
struct QpProblem {
  Eigen::MatrixXd G;
  Eigen::VectorXd g0;
  Eigen::MatrixXd CE;
  Eigen::VectorXd ce0;
  Eigen::MatrixXd CI;
  Eigen::VectorXd ci0;

  int num_vars() const { return static_cast<int>(G.rows()); }
  int num_eq() const { return static_cast<int>(CE.cols()); }
  int num_ineq() const { return static_cast<int>(CI.cols()); }
};

enum class QpStatus { Optimal, Infeasible, Degenerate };

struct QpSolution {
  Eigen::VectorXd x;
  double objective = 0.0;
  std::vector<int> active_set;   // active inequality indices
  QpStatus status = QpStatus::Degenerate;
  Eigen::VectorXd lambda_eq;     // equality multipliers
  Eigen::VectorXd lambda_ineq;   // inequality multipliers, 0 when inactive
  int iterations = 0;
};

// Dual active-set method (Goldfarb-Idnani). Throws std::invalid_argument on
// malformed input or non-positive-definite G; infeasibility is a status.
QpSolution solve_qp(const QpProblem& prob);

}  // namespace dpmpc
