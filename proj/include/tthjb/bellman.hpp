#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tthjb/als.hpp"
#include "tthjb/dynamics.hpp"
#include "tthjb/ocp.hpp"
#include "tthjb/polit.hpp"
#include "tthjb/schedule.hpp"

namespace tthjb {

/// States drawn uniformly on the sampling box, fixed for a whole backward pass.
struct SampleSet {
    Eigen::MatrixXd points;  ///< J x d
    std::uint64_t seed = 0;

    static SampleSet uniform(Index count, Index dim, double a, double b, std::uint64_t seed);
};

enum class Backend { OpenLoop, PolicyIteration };

Backend parse_backend(const std::string& name);
std::string to_string(Backend backend);

struct BellmanConfig {
    Backend backend = Backend::OpenLoop;
    double tau = 0.01;
    double dt_ode = 1e-3;
    Index basis_size = 5;
    std::vector<Index> ranks;
    double eta = 0.0;
    int lookahead_steps = 1;
    std::uint64_t seed = 0;
    int als_sweeps = 10;
    double als_rel_tol = 1e-6;
    /// Sweeps for the terminal fit, which must reach the exact-representation level.
    int terminal_sweeps = 60;
    bool warm_start = true;
    /// Abort when a slice's empirical residual exceeds this value.
    double abort_residual = std::numeric_limits<double>::infinity();
    OcpOptions ocp;
    double pi_tol = 1e-6;
    int pi_max_iters = 50;

    void validate(const ControlProblem& problem) const;
};

/// J = 6 x (TT degrees of freedom) for the configured shape.
Index default_sample_count(Index dim, Index basis_size, const std::vector<Index>& ranks);

struct StepReport {
    Index slice = 0;
    double time = 0.0;
    double empirical_residual = 0.0;  ///< final empirical loss of the fit
    double max_train_error = 0.0;     ///< max_j |v_l(x_j) - target_j|
    double validation_error = std::numeric_limits<double>::quiet_NaN();  ///< max over held-out points
    double final_delta = 0.0;
    int sweeps = 0;
    Index failed_samples = 0;
    int pi_iterations = 0;
    bool pi_converged = true;
    double seconds = 0.0;
    std::vector<std::string> warnings;

    /// Per-step approximation error used by the propagation bound.
    double fit_error() const;
};

struct SolveReport {
    std::vector<StepReport> steps;  ///< in order of computation, terminal slice first
    Eigen::VectorXd sample_values;  ///< regression targets of the first slice
    Eigen::MatrixXd sample_controls;  ///< J x m_u controls at t_0 (open-loop backend)
    bool aborted = false;
    std::string abort_reason;

    /// Per-slice fit errors indexed by slice l (NaN for slices not computed).
    std::vector<double> fit_errors(Index num_steps) const;
};

struct BackwardResult {
    ValueSchedule schedule;  ///< a partial schedule (start_time > 0) after an abort
    SolveReport report;
};

/// Backward recursion: fit v_L to c_T, then for l = L-1..0 compute per-sample targets with the
/// chosen backend and fit v_l. When validation points are given, each slice is also compared
/// with freshly computed targets at those points.
BackwardResult run_backward(const ControlProblem& problem, const BellmanConfig& config, const SampleSet& samples,
                            const Eigen::MatrixXd* validation = nullptr,
                            const std::function<void(const StepReport&)>& progress = {});

struct ControllerEvaluation {
    double cost = std::numeric_limits<double>::quiet_NaN();
    double bellman_error = std::numeric_limits<double>::quiet_NaN();
    bool blown_up = false;
};

/// Threshold of the "cost < 100" success bucket.
inline constexpr double kCostFailure = 100.0;

/// Closed-loop cost over [0, T] plus c_T; bellman_error = |estimate(x0) - cost| when an estimate
/// is given. blown_up marks a blow-up signal or cost >= 100.
ControllerEvaluation evaluate_controller(const ControlProblem& problem, const Policy& policy,
                                         const Eigen::VectorXd& x0, double dt,
                                         const std::function<double(const Eigen::VectorXd&)>& estimate = {});
ControllerEvaluation evaluate_controller(const ControlProblem& problem, const ValueSchedule& schedule,
                                         const Eigen::VectorXd& x0, double dt);

/// Random initial profile: p(x) = q(x)(x-1)(x+1) with q of uniform random degree 2..20 and
/// standard normal coefficients, scaled to max |p| = 1.9 on [-1,1], sampled at the d grid points.
Eigen::VectorXd sample_polynomial_initial(std::uint64_t seed, Index d);

struct ErrorPropagationReport {
    std::vector<double> errors;  ///< index l: max held-out error of slice L-l against the reference
    std::vector<double> bounds;  ///< factor * (l * max fit error + terminal fit error)
    double max_fit_error = 0.0;
    bool holds = true;
};

/// Compares every slice with a reference value function at the given points and checks
/// err_l <= factor * (l * max_k fit_errors[k] + fit_errors[L]).
ErrorPropagationReport check_error_propagation(
    const ValueSchedule& schedule, const std::function<double(double, const Eigen::VectorXd&)>& reference,
    const Eigen::MatrixXd& points, const std::vector<double>& fit_errors, double factor = 2.0);

}  // namespace tthjb
