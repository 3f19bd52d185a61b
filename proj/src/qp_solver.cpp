/*
  qp_solver.cpp
  -------------
  Dense strictly-convex QP solver implementing the Goldfarb-Idnani dual
  active-set method. The factorization bookkeeping follows the classic
  scheme: G = L L^T, J = L^{-T}, and the active-set matrix N is kept as
  J^T N = [R; 0] updated by Givens rotations on constraint add/drop.
*/
#include "dpmpc/qp_solver.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dpmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();

// d = J^T np
void compute_d(Eigen::VectorXd& d, const Eigen::MatrixXd& J,
               const Eigen::VectorXd& np) {
  d.noalias() = J.transpose() * np;
}

// z = J_2 d_2 (primal step direction)
void update_z(Eigen::VectorXd& z, const Eigen::MatrixXd& J,
              const Eigen::VectorXd& d, int iq) {
  const int n = static_cast<int>(J.rows());
  if (iq < n) {
    z.noalias() = J.rightCols(n - iq) * d.tail(n - iq);
  } else {
    z.setZero();
  }
}

// r = R^{-1} d_1 (negative dual step direction), R upper triangular
void update_r(const Eigen::MatrixXd& R, Eigen::VectorXd& r,
              const Eigen::VectorXd& d, int iq) {
  for (int i = iq - 1; i >= 0; --i) {
    double sum = d(i);
    for (int k = i + 1; k < iq; ++k) {
      sum -= R(i, k) * r(k);
    }
    r(i) = sum / R(i, i);
  }
}

bool add_constraint(Eigen::MatrixXd& R, Eigen::MatrixXd& J, Eigen::VectorXd& d,
                    int& iq, double& R_norm) {
  const int n = static_cast<int>(J.rows());
  // Rotate d(iq+1..n-1) into d(iq), carrying J along.
  for (int j = n - 1; j >= iq + 1; --j) {
    double cc = d(j - 1);
    double ss = d(j);
    const double h = std::hypot(cc, ss);
    if (h == 0.0) {
      continue;
    }
    d(j) = 0.0;
    ss /= h;
    cc /= h;
    if (cc < 0.0) {
      cc = -cc;
      ss = -ss;
      d(j - 1) = -h;
    } else {
      d(j - 1) = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = 0; k < n; ++k) {
      const double t1 = J(k, j - 1);
      const double t2 = J(k, j);
      J(k, j - 1) = t1 * cc + t2 * ss;
      J(k, j) = xny * (t1 + J(k, j - 1)) - t2;
    }
  }
  ++iq;
  for (int i = 0; i < iq; ++i) {
    R(i, iq - 1) = d(i);
  }
  if (std::abs(d(iq - 1)) <= kEps * R_norm) {
    return false;  // linearly dependent on the active set
  }
  R_norm = std::max(R_norm, std::abs(d(iq - 1)));
  return true;
}

void delete_constraint(Eigen::MatrixXd& R, Eigen::MatrixXd& J,
                       std::vector<int>& A, Eigen::VectorXd& u, int p, int& iq,
                       int l) {
  const int n = static_cast<int>(J.rows());
  int qq = -1;
  for (int i = p; i < iq; ++i) {
    if (A[i] == l) {
      qq = i;
      break;
    }
  }
  if (qq < 0) {
    return;  // not in the active set
  }
  for (int i = qq; i < iq - 1; ++i) {
    A[i] = A[i + 1];
    u(i) = u(i + 1);
    R.col(i) = R.col(i + 1);
  }
  A[iq - 1] = A[iq];
  u(iq - 1) = u(iq);
  A[iq] = 0;
  u(iq) = 0.0;
  for (int j = 0; j < iq; ++j) {
    R(j, iq - 1) = 0.0;
  }
  --iq;
  if (iq == 0) {
    return;
  }
  for (int j = qq; j < iq; ++j) {
    double cc = R(j, j);
    double ss = R(j + 1, j);
    const double h = std::hypot(cc, ss);
    if (h == 0.0) {
      continue;
    }
    cc /= h;
    ss /= h;
    R(j + 1, j) = 0.0;
    if (cc < 0.0) {
      R(j, j) = -h;
      cc = -cc;
      ss = -ss;
    } else {
      R(j, j) = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = j + 1; k < iq; ++k) {
      const double t1 = R(j, k);
      const double t2 = R(j + 1, k);
      R(j, k) = t1 * cc + t2 * ss;
      R(j + 1, k) = xny * (R(j, k) + t1) - t2;
    }
    for (int k = 0; k < n; ++k) {
      const double t1 = J(k, j);
      const double t2 = J(k, j + 1);
      J(k, j) = t1 * cc + t2 * ss;
      J(k, j + 1) = xny * (J(k, j) + t1) - t2;
    }
  }
}

void validate_problem(const QpProblem& prob) {
  const int n = prob.num_vars();
  const int p = prob.num_eq();
  const int m = prob.num_ineq();
  if (n < 1 || prob.G.cols() != n) {
    throw std::invalid_argument("solve_qp: G must be square and non-empty");
  }
  if (prob.g0.size() != n) {
    throw std::invalid_argument("solve_qp: g0 size mismatch");
  }
  if ((p > 0 && prob.CE.rows() != n) || prob.ce0.size() != p) {
    throw std::invalid_argument("solve_qp: equality constraint size mismatch");
  }
  if ((m > 0 && prob.CI.rows() != n) || prob.ci0.size() != m) {
    throw std::invalid_argument("solve_qp: inequality constraint size mismatch");
  }
  if (p > n) {
    throw std::invalid_argument("solve_qp: more equalities than variables");
  }
  const double scale = std::max(1.0, prob.G.cwiseAbs().maxCoeff());
  if ((prob.G - prob.G.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw std::invalid_argument("solve_qp: G is not symmetric");
  }
}

}  // namespace

QpSolution solve_qp(const QpProblem& prob) {
  validate_problem(prob);
  const int n = prob.num_vars();
  const int p = prob.num_eq();
  const int m = prob.num_ineq();

  QpSolution sol;
  sol.lambda_eq = Eigen::VectorXd::Zero(p);
  sol.lambda_ineq = Eigen::VectorXd::Zero(m);

  const double c1 = prob.G.trace();

  Eigen::LLT<Eigen::MatrixXd> llt(prob.G);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("solve_qp: G is not positive definite");
  }
  // J = L^{-T}
  Eigen::MatrixXd J =
      llt.matrixU().solve(Eigen::MatrixXd::Identity(n, n));
  const double c2 = J.trace();

  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
  double R_norm = 1.0;

  // unconstrained minimizer
  Eigen::VectorXd x = -llt.solve(prob.g0);

  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n + 1);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd np = Eigen::VectorXd::Zero(n);
  std::vector<int> A(n + 1, 0);       // active ids; equalities use -i-1
  std::vector<int> iai(m, 0);         // i when inactive, -1 when active
  std::vector<bool> iaexcl(m, false);
  std::vector<int> A_old(n + 1, 0);
  Eigen::VectorXd u_old = Eigen::VectorXd::Zero(n + 1);
  Eigen::VectorXd x_old = Eigen::VectorXd::Zero(n);

  int iq = 0;

  auto finish = [&](QpStatus status) {
    sol.status = status;
    sol.x = x;
    sol.objective = 0.5 * x.dot(prob.G * x) + prob.g0.dot(x);
    sol.active_set.clear();
    sol.lambda_eq.setZero();
    sol.lambda_ineq.setZero();
    for (int i = 0; i < iq; ++i) {
      if (A[i] < 0) {
        sol.lambda_eq(-A[i] - 1) = u(i);
      } else {
        sol.active_set.push_back(A[i]);
        sol.lambda_ineq(A[i]) = u(i);
      }
    }
    return sol;
  };

  // add equality constraints one at a time
  for (int i = 0; i < p; ++i) {
    np = prob.CE.col(i);
    compute_d(d, J, np);
    update_z(z, J, d, iq);
    update_r(R, r, d, iq);

    const double resid = np.dot(x) + prob.ce0(i);
    double t2 = 0.0;
    const double znorm2 = z.dot(z);
    if (znorm2 > kEps) {
      t2 = -resid / z.dot(np);
    } else {
      // z == 0: the equality is in the span of the active set
      if (std::abs(resid) <= 1e-8 * std::max(1.0, std::abs(prob.ce0(i)))) {
        continue;  // redundant but consistent; multiplier stays 0
      }
      return finish(QpStatus::Infeasible);
    }

    x += t2 * z;
    u.head(iq) -= t2 * r.head(iq);
    u(iq) = t2;
    A[iq] = -i - 1;
    if (!add_constraint(R, J, d, iq, R_norm)) {
      return finish(QpStatus::Degenerate);
    }
  }

  // slots 0..eq_slots-1 hold equalities and are never dropped
  const int eq_slots = iq;

  const int max_iter = 20 * (n + m + p) + 100;
  int iter = 0;
  int ip = 0;  // chosen violated constraint

  while (true) {
    // step 1: pick the most violated inequality
    ++iter;
    sol.iterations = iter;
    if (iter > max_iter) {
      return finish(QpStatus::Degenerate);
    }
    for (int i = eq_slots; i < iq; ++i) {
      if (A[i] >= 0) {
        iai[A[i]] = -1;
      }
    }
    double psi = 0.0;
    for (int i = 0; i < m; ++i) {
      iaexcl[i] = true;
      s(i) = prob.CI.col(i).dot(x) + prob.ci0(i);
      psi += std::min(0.0, s(i));
    }
    if (std::abs(psi) <= static_cast<double>(m) * kEps * std::abs(c1) *
                             std::abs(c2) * 100.0) {
      return finish(QpStatus::Optimal);
    }

    for (int i = 0; i < iq; ++i) {
      u_old(i) = u(i);
      A_old[i] = A[i];
    }
    x_old = x;

  step2:
    double ss_min = 0.0;
    ip = -1;
    for (int i = 0; i < m; ++i) {
      if (s(i) < ss_min && iai[i] != -1 && iaexcl[i]) {
        ss_min = s(i);
        ip = i;
      }
    }
    if (ip < 0) {
      return finish(QpStatus::Optimal);
    }

    np = prob.CI.col(ip);
    u(iq) = 0.0;
    A[iq] = ip;

  step2a:
    compute_d(d, J, np);
    update_z(z, J, d, iq);
    update_r(R, r, d, iq);

    // partial step length (dual blocking constraint l)
    double t1 = kInf;
    int l = -1;
    for (int k = eq_slots; k < iq; ++k) {
      if (r(k) > 0.0) {
        const double ratio = u(k) / r(k);
        if (ratio < t1) {
          t1 = ratio;
          l = A[k];
        }
      }
    }
    // full step length
    double t2 = kInf;
    if (z.dot(z) > kEps) {
      t2 = -s(ip) / z.dot(np);
    }
    const double t = std::min(t1, t2);

    if (t >= kInf) {
      return finish(QpStatus::Infeasible);  // dual unbounded
    }

    if (t2 >= kInf) {
      // dual-only step
      u.head(iq) -= t * r.head(iq);
      u(iq) += t;
      iai[l] = l;
      delete_constraint(R, J, A, u, eq_slots, iq, l);
      goto step2a;
    }

    x += t * z;
    u.head(iq) -= t * r.head(iq);
    u(iq) += t;

    if (t == t2) {
      // full step: ip joins the active set
      if (!add_constraint(R, J, d, iq, R_norm)) {
        iaexcl[ip] = false;
        delete_constraint(R, J, A, u, eq_slots, iq, ip);
        for (int i = 0; i < m; ++i) {
          iai[i] = i;
        }
        for (int i = 0; i < iq; ++i) {
          A[i] = A_old[i];
          u(i) = u_old(i);
          if (A[i] >= 0) {
            iai[A[i]] = -1;
          }
        }
        x = x_old;
        goto step2;
      }
      iai[ip] = -1;
      continue;  // back to step 1
    }

    // partial step: drop l and retry with the same ip
    iai[l] = l;
    delete_constraint(R, J, A, u, eq_slots, iq, l);
    s(ip) = prob.CI.col(ip).dot(x) + prob.ci0(ip);
    goto step2a;
  }
}

}  // namespace dpmpc
