#include "tthjb/als.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tthjb {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Row-wise Kronecker product: out(j, a*q + b) = A(j, a) * B(j, b).
MatrixXd kron_rows(const MatrixXd& a, const MatrixXd& b) {
    const Index rows = a.rows(), p = a.cols(), q = b.cols();
    MatrixXd out(rows, p * q);
    for (Index ia = 0; ia < p; ++ia)
        for (Index ib = 0; ib < q; ++ib) out.col(ia * q + ib) = a.col(ia).cwiseProduct(b.col(ib));
    return out;
}

// Cached per-sample contractions for a sweep over one TT.
class Workspace {
public:
    Workspace(const RegressionSpec& spec, const Basis& basis, Index order)
        : spec_(spec), samples_(spec.samples.rows()), order_(order) {
        const Index m = basis.size();
        phi_.resize(static_cast<std::size_t>(order));
        dphi_.resize(static_cast<std::size_t>(order));
        for (Index i = 0; i < order; ++i) {
            auto& p = phi_[static_cast<std::size_t>(i)];
            p.resize(samples_, m);
            Eigen::VectorXd row(m);
            for (Index j = 0; j < samples_; ++j) {
                basis.values_into(spec.samples(j, i), row);
                p.row(j) = row.transpose();
            }
        }
        if (has_gradient()) {
            const auto& gt = *spec.gradient_targets;
            controls_ = gt.controls.cols();
            weights_.assign(static_cast<std::size_t>(controls_), MatrixXd(samples_, order));
            for (Index j = 0; j < samples_; ++j) {
                const MatrixXd& c = gt.control_map(j);
                for (Index q = 0; q < controls_; ++q) weights_[static_cast<std::size_t>(q)].row(j) = c.row(q);
            }
            for (Index i = 0; i < order; ++i) {
                auto& dp = dphi_[static_cast<std::size_t>(i)];
                dp.resize(samples_, m);
                Eigen::VectorXd row(m);
                for (Index j = 0; j < samples_; ++j) {
                    basis.derivatives_into(spec.samples(j, i), row);
                    dp.row(j) = row.transpose();
                }
            }
        }
    }

    bool has_gradient() const { return spec_.gradient_targets && spec_.gradient_targets->eta > 0.0; }

    // Rebuilds right stacks for cores pivot+1..d-1 and the left stack for cores 0..pivot-1.
    void prepare(const TT& tt, Index pivot) {
        right_.assign(static_cast<std::size_t>(order_), MatrixXd());
        dright_.assign(static_cast<std::size_t>(order_), std::vector<MatrixXd>(static_cast<std::size_t>(controls_)));
        right_.back() = MatrixXd::Ones(samples_, 1);
        for (auto& dr : dright_.back()) dr = MatrixXd::Zero(samples_, 1);
        for (Index i = order_ - 1; i > pivot; --i) push_right(tt, i);

        left_ = MatrixXd::Ones(samples_, 1);
        dleft_.assign(static_cast<std::size_t>(controls_), MatrixXd::Zero(samples_, 1));
        for (Index i = 0; i < pivot; ++i) push_left(tt, i);
    }

    // Absorb core i into the left stack (core i must be left of the new pivot).
    void push_left(const TT& tt, Index i) {
        const auto ui = static_cast<std::size_t>(i);
        const auto& core = tt.core(i);
        const MatrixXd unf = core.left_unfolding();
        if (has_gradient()) {
            for (Index q = 0; q < controls_; ++q) {
                auto& dl = dleft_[static_cast<std::size_t>(q)];
                const MatrixXd weighted = dphi_[ui].array().colwise() * weights_[static_cast<std::size_t>(q)].col(i).array();
                dl = (kron_rows(dl, phi_[ui]) + kron_rows(left_, weighted)) * unf;
            }
        }
        left_ = kron_rows(left_, phi_[ui]) * unf;
    }

    void push_right(const TT& tt, Index i) {
        const auto ui = static_cast<std::size_t>(i);
        const auto& core = tt.core(i);
        const MatrixXd unf_t = core.right_unfolding().transpose();
        if (has_gradient()) {
            for (Index q = 0; q < controls_; ++q) {
                const auto uq = static_cast<std::size_t>(q);
                const MatrixXd weighted = dphi_[ui].array().colwise() * weights_[uq].col(i).array();
                dright_[ui - 1][uq] = (kron_rows(phi_[ui], dright_[ui][uq]) + kron_rows(weighted, right_[ui])) * unf_t;
            }
        }
        right_[ui - 1] = kron_rows(phi_[ui], right_[ui]) * unf_t;
    }

    // Value design matrix for the pivot core (J x left*m*right, row-major core layout).
    MatrixXd value_design(Index pivot) const {
        const auto up = static_cast<std::size_t>(pivot);
        return kron_rows(kron_rows(left_, phi_[up]), right_[up]);
    }

    // Design matrix of (C_j grad v(x_j))_q with respect to the pivot core.
    MatrixXd gradient_design(Index pivot, Index q) const {
        const auto up = static_cast<std::size_t>(pivot);
        const auto uq = static_cast<std::size_t>(q);
        const MatrixXd weighted = dphi_[up].array().colwise() * weights_[uq].col(pivot).array();
        return kron_rows(kron_rows(dleft_[uq], phi_[up]), right_[up]) +
               kron_rows(kron_rows(left_, weighted), right_[up]) +
               kron_rows(kron_rows(left_, phi_[up]), dright_[up][uq]);
    }

    Index controls() const { return controls_; }

private:
    const RegressionSpec& spec_;
    Index samples_;
    Index order_;
    Index controls_ = 0;
    std::vector<MatrixXd> phi_, dphi_;
    std::vector<MatrixXd> weights_;  // per control component: J x d
    MatrixXd left_;
    std::vector<MatrixXd> dleft_;
    std::vector<MatrixXd> right_;
    std::vector<std::vector<MatrixXd>> dright_;
};

struct LocalSolve {
    VectorXd coeffs;
    double empirical = 0.0;   // data + eta term
    double max_abs = 0.0;
    bool rank_deficient = false;
};

struct LocalLoss {
    double empirical = 0.0;
    double max_abs = 0.0;
};

LocalLoss local_loss(const Workspace& ws, const RegressionSpec& spec, Index pivot, const MatrixXd& design,
                     const VectorXd& c) {
    const double j = static_cast<double>(spec.targets.size());
    const VectorXd resid = design * c - spec.targets;
    LocalLoss out;
    out.empirical = resid.squaredNorm() / j;
    out.max_abs = resid.size() ? resid.cwiseAbs().maxCoeff() : 0.0;
    if (ws.has_gradient()) {
        const auto& gt = *spec.gradient_targets;
        for (Index q = 0; q < ws.controls(); ++q)
            out.empirical += gt.eta * (gt.controls.col(q) - ws.gradient_design(pivot, q) * c).squaredNorm() / j;
    }
    return out;
}

LocalSolve solve_pivot(const Workspace& ws, const RegressionSpec& spec, Index pivot, double delta) {
    const MatrixXd design = ws.value_design(pivot);
    const Index n = design.cols();
    const double j = static_cast<double>(spec.targets.size());

    MatrixXd normal = MatrixXd::Zero(n, n);
    normal.selfadjointView<Eigen::Lower>().rankUpdate(design.transpose(), 1.0 / j);
    VectorXd rhs = design.transpose() * spec.targets / j;
    if (ws.has_gradient()) {
        const auto& gt = *spec.gradient_targets;
        for (Index q = 0; q < ws.controls(); ++q) {
            const MatrixXd gd = ws.gradient_design(pivot, q);
            normal.selfadjointView<Eigen::Lower>().rankUpdate(gd.transpose(), gt.eta / j);
            rhs += gt.eta / j * (gd.transpose() * gt.controls.col(q));
        }
    }
    normal = normal.selfadjointView<Eigen::Lower>();
    normal.diagonal().array() += delta;

    LocalSolve out;
    if (delta > 0.0) {
        Eigen::LLT<MatrixXd> llt(normal);
        if (llt.info() == Eigen::Success) out.coeffs = llt.solve(rhs);
    }
    if (out.coeffs.size() != n) {
        Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(normal);
        out.coeffs = cod.solve(rhs);
        out.rank_deficient = cod.rank() < n;
    }
    const LocalLoss loss = local_loss(ws, spec, pivot, design, out.coeffs);
    out.empirical = loss.empirical;
    out.max_abs = loss.max_abs;
    return out;
}

// Replace pivot core with QR factor Q and push R into the next core.
void shift_pivot_right(TT& tt, Index pivot) {
    auto& c = tt.core(pivot);
    auto& nxt = tt.core(pivot + 1);
    const MatrixXd unf = c.left_unfolding();
    Eigen::HouseholderQR<MatrixXd> qr(unf);
    const Index k = std::min(unf.rows(), unf.cols());
    const MatrixXd q = qr.householderQ() * MatrixXd::Identity(unf.rows(), k);
    const MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    Core<double> nc(c.left, c.modes, k);
    nc.left_unfolding() = q;
    const RowMatrixXd merged = r * nxt.right_unfolding();
    Core<double> nn(k, nxt.modes, nxt.right);
    nn.right_unfolding() = merged;
    c = std::move(nc);
    nxt = std::move(nn);
}

}  // namespace

double penalty_scale(const Basis& basis, Index order) {
    return std::pow(basis.upper() - basis.lower(), -static_cast<double>(order));
}

void RegressionSpec::validate(Index order) const {
    if (samples.rows() < 1) throw std::invalid_argument("RegressionSpec: need at least one sample");
    if (samples.cols() != order) throw DimensionError("RegressionSpec: sample dimension does not match TT order");
    if (targets.size() != samples.rows()) throw DimensionError("RegressionSpec: one target per sample required");
    if (!samples.allFinite() || !targets.allFinite()) throw std::invalid_argument("RegressionSpec: non-finite data");
    if (delta0 && !(*delta0 >= 0.0)) throw std::invalid_argument("RegressionSpec: delta0 must be >= 0");
    if (max_sweeps < 1) throw std::invalid_argument("RegressionSpec: max_sweeps must be >= 1");
    if (gradient_targets) {
        const auto& gt = *gradient_targets;
        if (!(gt.eta >= 0.0)) throw std::invalid_argument("RegressionSpec: eta must be >= 0");
        if (gt.controls.rows() != samples.rows()) throw DimensionError("RegressionSpec: one control target per sample");
        if (gt.control_maps.size() != 1 && static_cast<Index>(gt.control_maps.size()) != samples.rows())
            throw DimensionError("RegressionSpec: need one shared control map or one per sample");
        for (const auto& c : gt.control_maps)
            if (c.rows() != gt.controls.cols() || c.cols() != order)
                throw DimensionError("RegressionSpec: control map must be m_u x d");
        if (!gt.controls.allFinite()) throw std::invalid_argument("RegressionSpec: non-finite control targets");
    }
}

double empirical_loss(const TT& tt, const RegressionSpec& spec, const Basis& basis) {
    spec.validate(tt.order());
    const Index n = spec.samples.rows();
    const bool with_grad = spec.gradient_targets && spec.gradient_targets->eta > 0.0;
    double data = 0.0, grad = 0.0;
    for (Index j = 0; j < n; ++j) {
        const Eigen::VectorXd x = spec.samples.row(j).transpose();
        const double r = evaluate(tt, basis, x) - spec.targets(j);
        data += r * r;
        if (with_grad) {
            const auto& gt = *spec.gradient_targets;
            const Eigen::VectorXd g = gradient(tt, basis, x);
            grad += (gt.controls.row(j).transpose() - gt.control_map(j) * g).squaredNorm();
        }
    }
    const double eta = with_grad ? spec.gradient_targets->eta : 0.0;
    return (data + eta * grad) / static_cast<double>(n);
}

TT micro_step(const TT& tt, Index pivot, const RegressionSpec& spec, const Basis& basis, double delta,
              double* loss_before, double* loss_after) {
    spec.validate(tt.order());
    if (basis.size() != tt.mode_size()) throw DimensionError("micro_step: basis size does not match TT mode size");
    if (!(delta >= 0.0)) throw std::invalid_argument("micro_step: delta must be >= 0");
    TT out = orthogonalize(tt, pivot);
    const double weight = delta * penalty_scale(basis, out.order());
    Workspace ws(spec, basis, out.order());
    ws.prepare(out, pivot);
    auto& core = out.core(pivot);
    if (loss_before) {
        const LocalLoss before = local_loss(ws, spec, pivot, ws.value_design(pivot), core.data);
        *loss_before = before.empirical + weight * core.data.squaredNorm();
    }
    const LocalSolve sol = solve_pivot(ws, spec, pivot, weight);
    core.data = sol.coeffs;
    if (loss_after) *loss_after = sol.empirical + weight * sol.coeffs.squaredNorm();
    return out;
}

FitResult fit(const RegressionSpec& spec, const TT& init, const Basis& basis) {
    spec.validate(init.order());
    if (basis.size() != init.mode_size()) throw DimensionError("fit: basis size does not match TT mode size");

    FitResult result;
    FitReport& report = result.report;
    TT tt = init;
    const Index d = tt.order();

    report.initial_empirical = empirical_loss(tt, spec, basis);
    double delta = spec.delta0 ? *spec.delta0 : 1e-3 * report.initial_empirical;
    double previous = report.initial_empirical;
    bool warned = false;
    const double scale = penalty_scale(basis, d);

    Workspace ws(spec, basis, d);
    for (int sweep = 0; sweep < spec.max_sweeps; ++sweep) {
        tt = orthogonalize(std::move(tt), 0);
        ws.prepare(tt, 0);

        std::vector<double> micro;
        {
            const LocalLoss before = local_loss(ws, spec, 0, ws.value_design(0), tt.core(0).data);
            micro.push_back(before.empirical + delta * scale * tt.core(0).data.squaredNorm());
        }
        LocalSolve last;
        for (Index mu = 0; mu < d; ++mu) {
            last = solve_pivot(ws, spec, mu, delta * scale);
            if (last.rank_deficient && !warned) {
                report.warnings.emplace_back("rank-deficient local least-squares problem with delta = 0; "
                                             "minimum-norm solution used");
                warned = true;
            }
            tt.core(mu).data = last.coeffs;
            micro.push_back(last.empirical + delta * scale * last.coeffs.squaredNorm());
            if (mu + 1 < d) {
                shift_pivot_right(tt, mu);
                ws.push_left(tt, mu);
            }
        }
        const double emp = last.empirical;
        report.micro_losses.push_back(std::move(micro));
        report.deltas.push_back(delta);
        report.empirical.push_back(emp);
        report.residuals.push_back(emp + delta * scale * last.coeffs.squaredNorm());
        report.max_abs_error = last.max_abs;
        report.sweeps_run = sweep + 1;

        const double change = std::abs(previous - emp) / std::max(previous, std::numeric_limits<double>::min());
        previous = emp;
        delta = std::min(delta, 1e-3 * emp);
        if (emp <= spec.abs_tol || change < spec.rel_tol) break;
    }
    report.final_delta = report.deltas.back();
    result.tt = std::move(tt);
    return result;
}

}  // namespace tthjb
