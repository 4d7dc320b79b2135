#include "tthjb/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tthjb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

bool blown_up(const VectorXd& y) { return !y.allFinite() || y.norm() > kBlowUpNorm; }

}  // namespace

PdeKind parse_pde_kind(const std::string& name) {
    if (name == "unstable-diffusion") return PdeKind::UnstableDiffusion;
    if (name == "allen-cahn") return PdeKind::AllenCahn;
    if (name == "linear-heat") return PdeKind::LinearHeat;
    throw std::invalid_argument("unknown problem kind '" + name + "'");
}

std::string to_string(PdeKind kind) {
    switch (kind) {
        case PdeKind::UnstableDiffusion: return "unstable-diffusion";
        case PdeKind::AllenCahn: return "allen-cahn";
        case PdeKind::LinearHeat: return "linear-heat";
    }
    return "unknown";
}

double GridPDE::node(Index i) const { return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(points + 1); }

MatrixXd GridPDE::laplacian() const {
    const Index d = points;
    const double s = 1.0 / (mesh * mesh);
    MatrixXd a = MatrixXd::Zero(d, d);
    for (Index i = 0; i < d; ++i) {
        a(i, i) = -2.0 * s;
        if (i > 0) a(i, i - 1) = s;
        if (i + 1 < d) a(i, i + 1) = s;
    }
    // ghost-point reflection at both ends
    a(0, 1) = 2.0 * s;
    a(d - 1, d - 2) = 2.0 * s;
    return a;
}

VectorXd GridPDE::actuator() const {
    VectorXd g = VectorXd::Zero(points);
    for (Index i = 1; i <= points; ++i) {
        const double x = node(i);
        if (x >= omega_lo && x <= omega_hi) g(i - 1) = 1.0;
    }
    return g;
}

VectorXd GridPDE::reaction(const VectorXd& y) const {
    switch (kind) {
        case PdeKind::UnstableDiffusion: return y.array().cube().matrix();
        case PdeKind::AllenCahn: return (y.array() - y.array().cube()).matrix();
        case PdeKind::LinearHeat: return VectorXd::Zero(y.size());
    }
    return VectorXd::Zero(y.size());
}

VectorXd GridPDE::reaction_derivative(const VectorXd& y) const {
    switch (kind) {
        case PdeKind::UnstableDiffusion: return (3.0 * y.array().square()).matrix();
        case PdeKind::AllenCahn: return (1.0 - 3.0 * y.array().square()).matrix();
        case PdeKind::LinearHeat: return VectorXd::Zero(y.size());
    }
    return VectorXd::Zero(y.size());
}

void ControlProblem::validate() const {
    if (state_dim < 1 || control_dim < 1) throw DimensionError("ControlProblem: empty state or control");
    if (!drift || !drift_vjp || !control_map || !running_cost || !running_cost_gradient || !terminal_cost ||
        !terminal_gradient)
        throw std::invalid_argument("ControlProblem: missing callback");
    if (R.rows() != control_dim || R.cols() != control_dim) throw DimensionError("ControlProblem: R has wrong shape");
    if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + R.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("ControlProblem: R is not symmetric");
    Eigen::LLT<MatrixXd> llt(R);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("ControlProblem: R is not positive definite");
    if (!(horizon > 0.0)) throw std::invalid_argument("ControlProblem: horizon must be positive");
    if (!(omega_a < omega_b)) throw std::invalid_argument("ControlProblem: empty sampling box");
}

VectorXd ControlProblem::rhs(double t, const VectorXd& y, const VectorXd& u) const {
    return drift(t, y) + control_map(t, y) * u;
}

double ControlProblem::stage_cost(double t, const VectorXd& y, const VectorXd& u) const {
    return running_cost(t, y) + u.dot(R * u);
}

VectorXd ControlProblem::optimal_control(double t, const VectorXd& y, const VectorXd& p) const {
    return -0.5 * R.llt().solve(control_map(t, y).transpose() * p);
}

ControlProblem make_linear_quadratic(const LinearQuadratic& lq, double horizon, double domain_a, double domain_b) {
    const Index d = lq.A.rows(), m = lq.B.cols();
    if (lq.A.cols() != d || lq.B.rows() != d || lq.Q.rows() != d || lq.Q.cols() != d || lq.QT.rows() != d ||
        lq.QT.cols() != d || lq.R.rows() != m || lq.R.cols() != m)
        throw DimensionError("make_linear_quadratic: inconsistent matrix shapes");
    ControlProblem p;
    p.state_dim = d;
    p.control_dim = m;
    const MatrixXd a = lq.A, b = lq.B, q = lq.Q, qt = lq.QT;
    const MatrixXd q_sym = q + q.transpose(), qt_sym = qt + qt.transpose();
    p.drift = [a](double, const VectorXd& y) -> VectorXd { return a * y; };
    p.drift_vjp = [a](double, const VectorXd&, const VectorXd& w) -> VectorXd { return a.transpose() * w; };
    p.control_map = [b](double, const VectorXd&) -> MatrixXd { return b; };
    p.running_cost = [q](double, const VectorXd& y) { return y.dot(q * y); };
    p.running_cost_gradient = [q_sym](double, const VectorXd& y) -> VectorXd { return q_sym * y; };
    p.R = lq.R;
    p.terminal_cost = [qt](const VectorXd& y) { return y.dot(qt * y); };
    p.terminal_gradient = [qt_sym](const VectorXd& y) -> VectorXd { return qt_sym * y; };
    p.horizon = horizon;
    p.omega_a = domain_a;
    p.omega_b = domain_b;
    p.linear = lq;
    p.validate();
    return p;
}

ControlProblem make_benchmark(PdeKind kind, Index d, const BenchmarkParams& params) {
    if (d < 2) throw std::invalid_argument("make_benchmark: need at least two grid points");
    GridPDE grid;
    grid.kind = kind;
    grid.points = d;
    const bool test2 = kind == PdeKind::AllenCahn;
    grid.sigma = params.sigma.value_or(test2 ? 0.2 : 1.0);
    grid.omega_lo = params.omega_lo.value_or(test2 ? -0.5 : -0.4);
    grid.omega_hi = params.omega_hi.value_or(test2 ? 0.2 : 0.4);
    grid.cost_weight = params.cost_weight.value_or(1.0 / static_cast<double>(d + 1));
    grid.mesh = params.mesh.value_or(2.0 / static_cast<double>(d + 1));
    if (!(grid.mesh > 0.0) || !(grid.cost_weight > 0.0))
        throw std::invalid_argument("make_benchmark: mesh and cost weight must be positive");
    if (!(grid.omega_lo <= grid.omega_hi)) throw std::invalid_argument("make_benchmark: empty actuation interval");

    const MatrixXd a = grid.sigma * grid.laplacian();
    const MatrixXd b = grid.actuator();
    if (b.isZero()) throw std::invalid_argument("make_benchmark: actuation interval contains no grid point");

    ControlProblem p;
    p.state_dim = d;
    p.control_dim = 1;
    p.drift = [a, grid](double, const VectorXd& y) -> VectorXd { return a * y + grid.reaction(y); };
    p.drift_vjp = [a, grid](double, const VectorXd& y, const VectorXd& w) -> VectorXd {
        return a.transpose() * w + grid.reaction_derivative(y).cwiseProduct(w);
    };
    p.control_map = [b](double, const VectorXd&) -> MatrixXd { return b; };
    const double h = grid.cost_weight, ct = params.terminal_weight;
    p.running_cost = [h](double, const VectorXd& y) { return h * y.squaredNorm(); };
    p.running_cost_gradient = [h](double, const VectorXd& y) -> VectorXd { return 2.0 * h * y; };
    p.R = params.control_weight * MatrixXd::Identity(1, 1);
    p.terminal_cost = [h, ct](const VectorXd& y) { return ct * h * y.squaredNorm(); };
    p.terminal_gradient = [h, ct](const VectorXd& y) -> VectorXd { return 2.0 * ct * h * y; };
    p.horizon = params.horizon;
    p.omega_a = params.domain_a;
    p.omega_b = params.domain_b;
    p.grid = grid;
    if (kind == PdeKind::LinearHeat)
        p.linear = LinearQuadratic{a, b, h * MatrixXd::Identity(d, d), p.R, ct * h * MatrixXd::Identity(d, d)};
    p.validate();
    return p;
}

VectorXd rk4_step(const VectorField& rhs, double t, const VectorXd& y, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be positive");
    const VectorXd k1 = rhs(t, y);
    const VectorXd k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1);
    const VectorXd k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2);
    const VectorXd k4 = rhs(t + dt, y + dt * k3);
    VectorXd out = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!out.allFinite()) throw BlowUpError("rk4_step: non-finite state", t);
    return out;
}

Index step_count(double tau, double dt) {
    if (!(tau > 0.0) || !(dt > 0.0)) throw std::invalid_argument("step_count: tau and dt must be positive");
    const double ratio = tau / dt;
    const auto n = static_cast<Index>(std::llround(ratio));
    if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, ratio))
        throw std::invalid_argument("step_count: interval is not an integral number of steps");
    return n;
}

ControlSignal ControlSignal::zeros(Index control_dim, double start, double dt, Index steps) {
    return ControlSignal{start, dt, MatrixXd::Zero(control_dim, steps)};
}

FlowResult flow_closed_loop(const ControlProblem& problem, const Policy& policy, double t0, const VectorXd& x,
                            double tau, double dt) {
    if (x.size() != problem.state_dim) throw DimensionError("flow_closed_loop: state has wrong size");
    const Index n = step_count(tau, dt);
    const VectorField rhs = [&](double t, const VectorXd& y) -> VectorXd { return problem.rhs(t, y, policy(t, y)); };
    VectorXd y = x;
    double t = t0;
    double stage = problem.stage_cost(t, y, policy(t, y));
    double cost = 0.0;
    for (Index k = 0; k < n; ++k) {
        y = rk4_step(rhs, t, y, dt);
        t = t0 + static_cast<double>(k + 1) * dt;
        if (blown_up(y)) throw BlowUpError("flow_closed_loop: trajectory blew up", t);
        const double next = problem.stage_cost(t, y, policy(t, y));
        cost += 0.5 * dt * (stage + next);
        stage = next;
    }
    return {y, cost};
}

Trajectory flow_open_loop(const ControlProblem& problem, const ControlSignal& u, const VectorXd& x) {
    if (x.size() != problem.state_dim) throw DimensionError("flow_open_loop: state has wrong size");
    if (u.values.rows() != problem.control_dim) throw DimensionError("flow_open_loop: control has wrong size");
    if (!u.values.allFinite()) throw std::invalid_argument("flow_open_loop: non-finite control");
    const Index n = u.steps();
    Trajectory out;
    out.start = u.start;
    out.dt = u.dt;
    out.states.resize(problem.state_dim, n + 1);
    out.states.col(0) = x;
    double c_prev = problem.running_cost(u.start, x);
    for (Index k = 0; k < n; ++k) {
        const double t = u.start + static_cast<double>(k) * u.dt;
        const VectorXd uk = u.values.col(k);
        const VectorField rhs = [&](double s, const VectorXd& y) -> VectorXd { return problem.rhs(s, y, uk); };
        const VectorXd y = rk4_step(rhs, t, out.states.col(k), u.dt);
        const double t1 = u.start + static_cast<double>(k + 1) * u.dt;
        if (blown_up(y)) throw BlowUpError("flow_open_loop: trajectory blew up", t1);
        out.states.col(k + 1) = y;
        const double c_next = problem.running_cost(t1, y);
        out.cost += 0.5 * u.dt * (c_prev + c_next) + u.dt * uk.dot(problem.R * uk);
        c_prev = c_next;
    }
    return out;
}

}  // namespace tthjb
