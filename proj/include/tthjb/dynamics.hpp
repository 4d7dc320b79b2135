#pragma once

#include <functional>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "tthjb/errors.hpp"

namespace tthjb {

using Eigen::Index;

/// State norm above which a trajectory is declared blown up.
inline constexpr double kBlowUpNorm = 1e6;

using VectorField = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;
/// Feedback law alpha(t, y) -> control.
using Policy = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

enum class PdeKind { UnstableDiffusion, AllenCahn, LinearHeat };

PdeKind parse_pde_kind(const std::string& name);
std::string to_string(PdeKind kind);

/// Finite-difference semi-discretization of a 1D reaction-diffusion equation on [-1, 1]
/// with Neumann boundary and a scalar actuator supported on omega_ctrl.
struct GridPDE {
    PdeKind kind = PdeKind::UnstableDiffusion;
    Index points = 0;
    double sigma = 1.0;
    double omega_lo = -0.4;
    double omega_hi = 0.4;
    double cost_weight = 0.0;  ///< h in c(y) = h |y|^2
    double mesh = 0.0;         ///< spatial step of the Laplacian stencil

    /// Grid point x_i = -1 + 2 i / (d + 1), i = 1..d.
    double node(Index i) const;
    Eigen::MatrixXd laplacian() const;
    Eigen::VectorXd actuator() const;
    Eigen::VectorXd reaction(const Eigen::VectorXd& y) const;
    Eigen::VectorXd reaction_derivative(const Eigen::VectorXd& y) const;
};

/// Linear dynamics A y + B u with quadratic costs y'Qy + u'Ru and terminal y'Q_T y.
struct LinearQuadratic {
    Eigen::MatrixXd A, B, Q, R, QT;
};

/// Control-affine problem ydot = f(t,y) + g(t,y) u with cost
///   int_0^T c(t,y) + u'Ru dt + c_T(y(T)).
struct ControlProblem {
    Index state_dim = 0;
    Index control_dim = 0;
    VectorField drift;
    /// (d f / d y)' w
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&)> drift_vjp;
    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&)> control_map;
    /// (d (g(t,y) u) / d y)' w; leave empty when g does not depend on y.
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::VectorXd&)>
        control_vjp;
    std::function<double(double, const Eigen::VectorXd&)> running_cost;
    VectorField running_cost_gradient;
    Eigen::MatrixXd R;
    std::function<double(const Eigen::VectorXd&)> terminal_cost;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> terminal_gradient;
    double horizon = 0.0;
    double omega_a = -2.0;
    double omega_b = 2.0;
    std::optional<GridPDE> grid;
    /// Set when the problem is exactly linear-quadratic.
    std::optional<LinearQuadratic> linear;

    void validate() const;
    Eigen::VectorXd rhs(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& u) const;
    double stage_cost(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& u) const;
    /// -1/2 R^{-1} g(t,y)' p, the minimizer of u'Ru + p'g u.
    Eigen::VectorXd optimal_control(double t, const Eigen::VectorXd& y, const Eigen::VectorXd& p) const;
};

struct BenchmarkParams {
    std::optional<double> sigma;
    std::optional<double> omega_lo, omega_hi;
    double horizon = 0.3;
    double terminal_weight = 1.0;
    double control_weight = 0.1;
    std::optional<double> cost_weight;  ///< default 1/(d+1)
    std::optional<double> mesh;         ///< default 2/(d+1)
    double domain_a = -2.0;
    double domain_b = 2.0;
};

ControlProblem make_benchmark(PdeKind kind, Index d, const BenchmarkParams& params = {});

ControlProblem make_linear_quadratic(const LinearQuadratic& lq, double horizon, double domain_a = -2.0,
                                     double domain_b = 2.0);

/// Classical RK4 step; throws BlowUpError carrying t when the result is not finite.
Eigen::VectorXd rk4_step(const VectorField& rhs, double t, const Eigen::VectorXd& y, double dt);

/// Number of steps of size dt covering tau; throws if tau is not an integral multiple.
Index step_count(double tau, double dt);

/// Piecewise-constant control: values.col(k) acts on [start + k dt, start + (k+1) dt).
struct ControlSignal {
    double start = 0.0;
    double dt = 1e-3;
    Eigen::MatrixXd values;

    Index steps() const { return values.cols(); }
    double end() const { return start + dt * static_cast<double>(values.cols()); }
    static ControlSignal zeros(Index control_dim, double start, double dt, Index steps);
};

struct FlowResult {
    Eigen::VectorXd end_state;
    double cost = 0.0;  ///< running cost only
};

/// Closed-loop RK4 integration with the feedback evaluated at every stage; running cost
/// c + alpha'R alpha is accumulated by the trapezoidal rule on the ODE grid.
FlowResult flow_closed_loop(const ControlProblem& problem, const Policy& policy, double t0,
                            const Eigen::VectorXd& x, double tau, double dt);

struct Trajectory {
    double start = 0.0;
    double dt = 0.0;
    Eigen::MatrixXd states;  ///< d x (N+1)
    double cost = 0.0;       ///< running cost only

    Eigen::VectorXd end_state() const { return states.col(states.cols() - 1); }
};

/// Open-loop RK4 integration with a piecewise-constant control. The running cost is
/// sum_k dt/2 (c(t_k,y_k) + c(t_{k+1},y_{k+1})) + dt u_k'R u_k.
Trajectory flow_open_loop(const ControlProblem& problem, const ControlSignal& u, const Eigen::VectorXd& x);

}  // namespace tthjb
