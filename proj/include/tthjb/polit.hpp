#pragma once

#include <vector>

#include <Eigen/Dense>

#include "tthjb/als.hpp"
#include "tthjb/dynamics.hpp"
#include "tthjb/schedule.hpp"

namespace tthjb {

/// Value on [t_l, t_{l+1}] interpolated linearly between a candidate v (at t_l) and the
/// fitted next slice (at t_{l+1}).
struct InterpolatedValue {
    TT current;
    const TT* next = nullptr;
    const Basis* basis = nullptr;
    double t_start = 0.0;
    double tau = 0.0;

    double weight(double t) const;
    double value(double t, const Eigen::VectorXd& x) const;
    Eigen::VectorXd gradient(double t, const Eigen::VectorXd& x) const;
};

struct RolloutResult {
    double running_cost = 0.0;
    Eigen::VectorXd end_state;
};

/// Closed-loop RK4 rollout from x at t_l to t_end. Steps starting before t_split use alpha,
/// later steps use the fitted schedule feedback. The running cost is trapezoidal per step
/// with the feedback of that step.
RolloutResult policy_rollout(const ControlProblem& problem, const ValueSchedule& schedule, const Policy& alpha,
                             double t_l, double t_split, double t_end, const Eigen::VectorXd& x, double dt);

struct PolicyIterationOptions {
    double tol = 1e-6;
    int max_iters = 50;
    int lookahead_steps = 1;
    double dt = 1e-3;
    int als_sweeps = 10;
    double als_rel_tol = 1e-6;

    void validate() const;
};

struct PolicyIterationResult {
    TT value;                  ///< fitted v_l
    Eigen::VectorXd targets;   ///< right-hand sides of the last regression (NaN where the rollout failed)
    FitReport fit;             ///< report of the last regression
    int iterations = 0;
    bool converged = false;
    Index failed_samples = 0;
    std::vector<double> changes;  ///< max_j |v_{k+1}(x_j) - v_k(x_j)| per iteration
};

/// Policy iteration on [t_l, t_{l+1}] with schedule.slice(l+1) as the fitted next value.
/// schedule must hold slices for t_{l+1}, ..., T with schedule.start_time = t_{l+1}.
/// Starts from v_0 = schedule.slice(0) and alpha_0 from it by the optimality condition.
PolicyIterationResult policy_iteration_local(const ControlProblem& problem, const ValueSchedule& schedule,
                                             double t_l, const Eigen::MatrixXd& samples,
                                             const PolicyIterationOptions& opts);

/// Feedback -1/2 R^{-1} g' grad v for an interpolated value; problem and value are held by
/// reference and must outlive the policy.
Policy interpolated_policy(const ControlProblem& problem, const InterpolatedValue& value);

}  // namespace tthjb
