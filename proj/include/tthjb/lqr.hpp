#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tthjb/dynamics.hpp"

namespace tthjb {

/// Solution of the differential Riccati equation on a uniform grid over [0, T].
struct RiccatiSolution {
    std::vector<double> times;
    std::vector<Eigen::MatrixXd> P;
    Eigen::MatrixXd gain_factor;  ///< R^{-1} B'

    Eigen::MatrixXd at(double t) const;
    double value(double t, const Eigen::VectorXd& x) const;
};

/// Integrates -Pdot = A'P + PA - P B R^{-1} B' P + Q backward from P(T) = Q_T by RK4 with
/// symmetrization after every step. The step is shrunk to divide T exactly.
RiccatiSolution solve_riccati(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                              const Eigen::MatrixXd& R, const Eigen::MatrixXd& QT, double T, double dt);

/// Exact value matrices S_k (value y'S_k y from t_k = k dt) of the time-discrete LQ problem
/// used by the open-loop solvers: one RK4 step per control value, piecewise-constant control,
/// trapezoidal running cost and y'Q_T y at T.
RiccatiSolution discrete_riccati(const LinearQuadratic& lq, double T, double dt);

/// u = -R^{-1} B' P(t) x with P linearly interpolated in t.
Eigen::VectorXd lqr_feedback(const RiccatiSolution& sol, double t, const Eigen::VectorXd& x);

/// Jacobians of drift and control map at the origin.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> linearize(const ControlProblem& problem);

/// Linearization with the problem's quadratic costs; requires quadratic c and c_T, which holds
/// for every built-in problem.
LinearQuadratic linear_quadratic_model(const ControlProblem& problem);

RiccatiSolution solve_riccati(const LinearQuadratic& lq, double T, double dt);

Policy lqr_policy(RiccatiSolution sol);

}  // namespace tthjb
