#include "tthjb/lqr.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace tthjb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd RiccatiSolution::at(double t) const {
    if (times.empty()) throw std::logic_error("RiccatiSolution: empty");
    if (t <= times.front()) return P.front();
    if (t >= times.back()) return P.back();
    const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    auto k = static_cast<std::size_t>((t - times.front()) / dt);
    k = std::min(k, times.size() - 2);
    const double w = (t - times[k]) / (times[k + 1] - times[k]);
    return (1.0 - w) * P[k] + w * P[k + 1];
}

double RiccatiSolution::value(double t, const VectorXd& x) const { return x.dot(at(t) * x); }

RiccatiSolution solve_riccati(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R,
                              const MatrixXd& QT, double T, double dt) {
    const Index d = A.rows();
    if (A.cols() != d || B.rows() != d || Q.rows() != d || Q.cols() != d || QT.rows() != d || QT.cols() != d ||
        R.rows() != B.cols() || R.cols() != B.cols())
        throw DimensionError("solve_riccati: inconsistent matrix shapes");
    if (!(dt > 0.0) || !(T > 0.0)) throw std::invalid_argument("solve_riccati: T and dt must be positive");
    Eigen::LLT<MatrixXd> llt(R);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("solve_riccati: R is not positive definite");

    const auto n = static_cast<Index>(std::ceil(T / dt - 1e-9));
    const double h = T / static_cast<double>(n);
    const MatrixXd gain_factor = llt.solve(B.transpose());
    const MatrixXd s = B * gain_factor;
    // dP/ds in reversed time s = T - t
    auto rhs = [&](const MatrixXd& p) -> MatrixXd { return A.transpose() * p + p * A - p * s * p + Q; };

    RiccatiSolution sol;
    sol.gain_factor = gain_factor;
    sol.times.resize(static_cast<std::size_t>(n + 1));
    sol.P.resize(static_cast<std::size_t>(n + 1));
    MatrixXd p = 0.5 * (QT + QT.transpose());
    sol.P[static_cast<std::size_t>(n)] = p;
    for (Index k = n; k > 0; --k) {
        const MatrixXd k1 = rhs(p);
        const MatrixXd k2 = rhs(p + 0.5 * h * k1);
        const MatrixXd k3 = rhs(p + 0.5 * h * k2);
        const MatrixXd k4 = rhs(p + h * k3);
        p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        p = 0.5 * (p + p.transpose()).eval();
        const double t = static_cast<double>(k - 1) * h;
        if (!p.allFinite()) throw BlowUpError("solve_riccati: solution is not finite", t);
        sol.P[static_cast<std::size_t>(k - 1)] = p;
    }
    for (Index k = 0; k <= n; ++k) sol.times[static_cast<std::size_t>(k)] = static_cast<double>(k) * h;
    sol.times.back() = T;
    return sol;
}

RiccatiSolution solve_riccati(const LinearQuadratic& lq, double T, double dt) {
    return solve_riccati(lq.A, lq.B, lq.Q, lq.R, lq.QT, T, dt);
}

RiccatiSolution discrete_riccati(const LinearQuadratic& lq, double T, double dt) {
    const Index n = step_count(T, dt);
    const Index d = lq.A.rows();
    const MatrixXd ha = dt * lq.A;
    const MatrixXd id = MatrixXd::Identity(d, d);
    const MatrixXd ha2 = ha * ha, ha3 = ha2 * ha;
    const MatrixXd phi = id + ha + ha2 / 2.0 + ha3 / 6.0 + ha3 * ha / 24.0;
    const MatrixXd gamma = dt * (id + ha / 2.0 + ha2 / 6.0 + ha3 / 24.0) * lq.B;
    const MatrixXd half_q = 0.5 * dt * lq.Q;

    RiccatiSolution sol;
    sol.gain_factor = lq.R.llt().solve(lq.B.transpose());
    sol.times.resize(static_cast<std::size_t>(n + 1));
    sol.P.resize(static_cast<std::size_t>(n + 1));
    MatrixXd s = lq.QT;
    sol.P[static_cast<std::size_t>(n)] = s;
    for (Index k = n - 1; k >= 0; --k) {
        const MatrixXd m = s + half_q;
        const MatrixXd mphi = m * phi;
        const MatrixXd gm = gamma.transpose() * mphi;
        const MatrixXd h = dt * lq.R + gamma.transpose() * m * gamma;
        s = half_q + phi.transpose() * mphi - gm.transpose() * h.llt().solve(gm);
        s = 0.5 * (s + s.transpose()).eval();
        if (!s.allFinite()) throw BlowUpError("discrete_riccati: solution is not finite", static_cast<double>(k) * dt);
        sol.P[static_cast<std::size_t>(k)] = s;
    }
    for (Index k = 0; k <= n; ++k) sol.times[static_cast<std::size_t>(k)] = static_cast<double>(k) * dt;
    return sol;
}

VectorXd lqr_feedback(const RiccatiSolution& sol, double t, const VectorXd& x) {
    return -sol.gain_factor * (sol.at(t) * x);
}

std::pair<MatrixXd, MatrixXd> linearize(const ControlProblem& problem) {
    if (problem.linear) return {problem.linear->A, problem.linear->B};
    if (!problem.grid) throw std::invalid_argument("linearize: only built-in problem kinds are supported");
    const GridPDE& g = *problem.grid;
    MatrixXd a = g.sigma * g.laplacian();
    a.diagonal() += g.reaction_derivative(VectorXd::Zero(g.points));
    return {a, MatrixXd(g.actuator())};
}

LinearQuadratic linear_quadratic_model(const ControlProblem& problem) {
    if (problem.linear) return *problem.linear;
    auto [a, b] = linearize(problem);
    const Index d = problem.state_dim;
    // running and terminal costs of the built-in problems are h|y|^2 and c h |y|^2
    const VectorXd zero = VectorXd::Zero(d);
    MatrixXd q(d, d), qt(d, d);
    for (Index i = 0; i < d; ++i) {
        const VectorXd e = VectorXd::Unit(d, i);
        q.col(i) = 0.5 * (problem.running_cost_gradient(0.0, e) - problem.running_cost_gradient(0.0, zero));
        qt.col(i) = 0.5 * (problem.terminal_gradient(e) - problem.terminal_gradient(zero));
    }
    return {a, b, q, problem.R, qt};
}

Policy lqr_policy(RiccatiSolution sol) {
    auto shared = std::make_shared<const RiccatiSolution>(std::move(sol));
    return [shared](double t, const VectorXd& x) -> VectorXd { return lqr_feedback(*shared, t, x); };
}

}  // namespace tthjb
