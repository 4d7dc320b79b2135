#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "tthjb/basis.hpp"
#include "tthjb/dynamics.hpp"
#include "tthjb/tensor_train.hpp"

namespace tthjb {

/// Differentiable terminal function of a local problem.
struct TerminalFunction {
    std::function<double(const Eigen::VectorXd&)> value;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
};

TerminalFunction zero_terminal(Index state_dim);
TerminalFunction terminal_cost_of(const ControlProblem& problem);
TerminalFunction tt_terminal(TT tt, Basis basis);

/// Total cost of a control with the discrete adjoint of the RK4 scheme.
struct CostEvaluation {
    double value = 0.0;        ///< running cost plus terminal value
    Trajectory trajectory;
    Eigen::MatrixXd gradient;  ///< m_u x N, derivative of value w.r.t. each control column
    Eigen::MatrixXd costate;   ///< d x (N+1), discrete costate; last column is grad terminal + dt/2 grad c
};

CostEvaluation evaluate_cost(const ControlProblem& problem, const TerminalFunction& terminal, const ControlSignal& u,
                             const Eigen::VectorXd& x, bool with_gradient = true);

/// Per-step gradient vectors of the total cost (each column carries the dt factor).
Eigen::MatrixXd cost_gradient(const ControlProblem& problem, const TerminalFunction& terminal, const ControlSignal& u,
                              const Eigen::VectorXd& x);

struct OcpOptions {
    double dt = 1e-3;
    /// Step size applied to the (2R)^{-1}-preconditioned L2 gradient.
    double step_size = 0.25;
    double momentum = 0.5;
    int max_iters = 100;
    double grad_tol = 1e-8;
    double rel_decrease_tol = 1e-8;
    int max_nondecrease = 5;

    void validate() const;
};

struct OcpResult {
    double value = 0.0;
    ControlSignal control;
    Eigen::VectorXd u_at_start;
    int iterations = 0;
    double grad_norm = 0.0;  ///< L2-in-time norm of the cost gradient at the returned control
    std::vector<double> costs;
};

/// Heavy-ball gradient descent u <- u - s (p_k + momentum p_{k-1}) with p_k the preconditioned
/// gradient. Stops when the relative cost change drops below rel_decrease_tol, the gradient
/// norm below grad_tol, or after max_iters. Returns the lowest-cost iterate. Throws SolverError after max_nondecrease
/// consecutive non-decreasing steps and BlowUpError when the initial control blows up.
OcpResult solve_local_ocp(const ControlProblem& problem, const TerminalFunction& terminal, double t0, double t1,
                          const Eigen::VectorXd& x, const ControlSignal& u_init, const OcpOptions& opts = {});

OcpResult solve_full_ocp(const ControlProblem& problem, const Eigen::VectorXd& x, const ControlSignal& u_init,
                         const OcpOptions& opts = {});

/// Samples a feedback law along its own closed-loop trajectory as a piecewise-constant signal.
ControlSignal sample_feedback(const ControlProblem& problem, const Policy& policy, double t0, double t1,
                              const Eigen::VectorXd& x, double dt);

}  // namespace tthjb
