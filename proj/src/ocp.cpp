#include "tthjb/ocp.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace tthjb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

TerminalFunction zero_terminal(Index state_dim) {
    return {[](const VectorXd&) { return 0.0; },
            [state_dim](const VectorXd&) -> VectorXd { return VectorXd::Zero(state_dim); }};
}

TerminalFunction terminal_cost_of(const ControlProblem& problem) {
    return {problem.terminal_cost, problem.terminal_gradient};
}

TerminalFunction tt_terminal(TT tt, Basis basis) {
    auto shared = std::make_shared<const std::pair<TT, Basis>>(std::move(tt), std::move(basis));
    return {[shared](const VectorXd& x) { return evaluate(shared->first, shared->second, x); },
            [shared](const VectorXd& x) -> VectorXd { return gradient(shared->first, shared->second, x); }};
}

namespace {

VectorXd state_vjp(const ControlProblem& p, double t, const VectorXd& y, const VectorXd& u, const VectorXd& w) {
    VectorXd out = p.drift_vjp(t, y, w);
    if (p.control_vjp) out += p.control_vjp(t, y, u, w);
    return out;
}

}  // namespace

CostEvaluation evaluate_cost(const ControlProblem& problem, const TerminalFunction& terminal, const ControlSignal& u,
                             const VectorXd& x, bool with_gradient) {
    CostEvaluation out;
    out.trajectory = flow_open_loop(problem, u, x);
    const Index n = u.steps();
    const VectorXd y_end = out.trajectory.end_state();
    out.value = out.trajectory.cost + terminal.value(y_end);
    if (!with_gradient) return out;

    const double h = u.dt;
    const auto& states = out.trajectory.states;
    out.gradient.resize(problem.control_dim, n);
    out.costate.resize(problem.state_dim, n + 1);
    VectorXd lam = terminal.gradient(y_end) + 0.5 * h * problem.running_cost_gradient(u.end(), y_end);
    out.costate.col(n) = lam;
    const MatrixXd r2 = 2.0 * h * problem.R;
    for (Index k = n - 1; k >= 0; --k) {
        const double t = u.start + static_cast<double>(k) * h;
        const VectorXd uk = u.values.col(k);
        const VectorXd z1 = states.col(k);
        const VectorXd k1 = problem.rhs(t, z1, uk);
        const VectorXd z2 = z1 + 0.5 * h * k1;
        const VectorXd k2 = problem.rhs(t + 0.5 * h, z2, uk);
        const VectorXd z3 = z1 + 0.5 * h * k2;
        const VectorXd k3 = problem.rhs(t + 0.5 * h, z3, uk);
        const VectorXd z4 = z1 + h * k3;

        const VectorXd kb4 = h / 6.0 * lam;
        VectorXd kb3 = h / 3.0 * lam;
        VectorXd kb2 = h / 3.0 * lam;
        VectorXd kb1 = h / 6.0 * lam;
        VectorXd ybar = lam;
        VectorXd ubar = problem.control_map(t + h, z4).transpose() * kb4;
        VectorXd zb = state_vjp(problem, t + h, z4, uk, kb4);
        ybar += zb;
        kb3 += h * zb;

        ubar += problem.control_map(t + 0.5 * h, z3).transpose() * kb3;
        zb = state_vjp(problem, t + 0.5 * h, z3, uk, kb3);
        ybar += zb;
        kb2 += 0.5 * h * zb;

        ubar += problem.control_map(t + 0.5 * h, z2).transpose() * kb2;
        zb = state_vjp(problem, t + 0.5 * h, z2, uk, kb2);
        ybar += zb;
        kb1 += 0.5 * h * zb;

        ubar += problem.control_map(t, z1).transpose() * kb1;
        ybar += state_vjp(problem, t, z1, uk, kb1);

        out.gradient.col(k) = ubar + r2 * uk;
        lam = ybar + (k > 0 ? h : 0.5 * h) * problem.running_cost_gradient(t, z1);
        out.costate.col(k) = lam;
    }
    return out;
}

MatrixXd cost_gradient(const ControlProblem& problem, const TerminalFunction& terminal, const ControlSignal& u,
                       const VectorXd& x) {
    return evaluate_cost(problem, terminal, u, x, true).gradient;
}

void OcpOptions::validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("ocp: dt must be positive");
    if (!(step_size > 0.0)) throw std::invalid_argument("ocp: step_size must be positive");
    if (!(momentum >= 0.0)) throw std::invalid_argument("ocp: momentum must be non-negative");
    if (max_iters < 0) throw std::invalid_argument("ocp: max_iters must be non-negative");
    if (max_nondecrease < 1) throw std::invalid_argument("ocp: max_nondecrease must be positive");
}

OcpResult solve_local_ocp(const ControlProblem& problem, const TerminalFunction& terminal, double t0, double t1,
                          const VectorXd& x, const ControlSignal& u_init, const OcpOptions& opts) {
    opts.validate();
    if (!(t0 < t1)) throw std::invalid_argument("solve_local_ocp: need t0 < t1");
    const Index n = step_count(t1 - t0, opts.dt);
    if (u_init.steps() != n || u_init.values.rows() != problem.control_dim ||
        std::abs(u_init.start - t0) > 1e-9 * std::max(1.0, std::abs(t0)) || std::abs(u_init.dt - opts.dt) > 1e-15)
        throw DimensionError("solve_local_ocp: initial control does not match the time grid");

    const Eigen::LLT<MatrixXd> precond(2.0 * problem.R);
    ControlSignal u = u_init;
    u.start = t0;
    u.dt = opts.dt;

    OcpResult best;
    CostEvaluation eval = evaluate_cost(problem, terminal, u, x, true);
    MatrixXd dir_prev = MatrixXd::Zero(problem.control_dim, n);
    auto l2_norm = [&](const MatrixXd& g) { return g.norm() / std::sqrt(opts.dt); };
    best.value = eval.value;
    best.control = u;
    best.grad_norm = l2_norm(eval.gradient);
    best.costs.push_back(eval.value);

    int nondecrease = 0;
    double prev = eval.value;
    for (int it = 0; it < opts.max_iters; ++it) {
        const double gnorm = l2_norm(eval.gradient);
        if (gnorm < opts.grad_tol) break;
        const MatrixXd dir = precond.solve(eval.gradient / opts.dt);
        u.values -= opts.step_size * (dir + opts.momentum * dir_prev);
        dir_prev = dir;
        try {
            eval = evaluate_cost(problem, terminal, u, x, true);
        } catch (const BlowUpError& e) {
            throw SolverError(std::string("solve_local_ocp: descent step blew up (step size too large?): ") +
                              e.what());
        }
        best.iterations = it + 1;
        best.costs.push_back(eval.value);
        if (eval.value < best.value) {
            best.value = eval.value;
            best.control = u;
            best.grad_norm = l2_norm(eval.gradient);
        }
        const double decrease = prev - eval.value;
        if (std::abs(decrease) < opts.rel_decrease_tol * std::abs(eval.value)) break;
        if (decrease <= 0.0) {
            if (++nondecrease >= opts.max_nondecrease)
                throw SolverError("solve_local_ocp: cost did not decrease for " + std::to_string(nondecrease) +
                                  " consecutive iterations (step size too large?)");
        } else {
            nondecrease = 0;
        }
        prev = eval.value;
    }
    best.u_at_start = best.control.values.col(0);
    return best;
}

OcpResult solve_full_ocp(const ControlProblem& problem, const VectorXd& x, const ControlSignal& u_init,
                         const OcpOptions& opts) {
    return solve_local_ocp(problem, terminal_cost_of(problem), 0.0, problem.horizon, x, u_init, opts);
}

ControlSignal sample_feedback(const ControlProblem& problem, const Policy& policy, double t0, double t1,
                              const VectorXd& x, double dt) {
    const Index n = step_count(t1 - t0, dt);
    ControlSignal u = ControlSignal::zeros(problem.control_dim, t0, dt, n);
    VectorXd y = x;
    for (Index k = 0; k < n; ++k) {
        const double t = t0 + static_cast<double>(k) * dt;
        const VectorXd uk = policy(t, y);
        u.values.col(k) = uk;
        const VectorField rhs = [&](double s, const VectorXd& z) -> VectorXd { return problem.rhs(s, z, uk); };
        y = rk4_step(rhs, t, y, dt);
        if (!y.allFinite() || y.norm() > kBlowUpNorm) throw BlowUpError("sample_feedback: trajectory blew up", t + dt);
    }
    return u;
}

}  // namespace tthjb
