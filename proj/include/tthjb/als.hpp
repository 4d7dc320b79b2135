#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tthjb/basis.hpp"
#include "tthjb/tensor_train.hpp"

namespace tthjb {

/// Control targets for the gradient-augmented loss
///   eta * (1/J) sum_j |u*_j - C_j grad v(x_j)|^2,   C_j = -1/2 R^{-1} g(t, x_j)'.
struct GradientTargets {
    Eigen::MatrixXd controls;                  ///< J x m_u
    std::vector<Eigen::MatrixXd> control_maps;  ///< C_j (m_u x d); a single entry is shared by all samples
    double eta = 0.0;

    const Eigen::MatrixXd& control_map(Index j) const {
        return control_maps.size() == 1 ? control_maps.front() : control_maps[static_cast<std::size_t>(j)];
    }
};

struct RegressionSpec {
    Eigen::MatrixXd samples;  ///< J x d
    Eigen::VectorXd targets;  ///< J
    std::optional<GradientTargets> gradient_targets;
    /// Initial penalty weight; unset means 1e-3 times the residual of the initial guess.
    std::optional<double> delta0;
    int max_sweeps = 10;
    double rel_tol = 1e-6;
    /// Stop once the empirical loss is at or below this value.
    double abs_tol = 0.0;

    void validate(Index order) const;
};

struct FitReport {
    /// Regularised loss at the end of each sweep (evaluated with that sweep's delta).
    std::vector<double> residuals;
    /// Empirical loss (data term plus eta term) at the end of each sweep.
    std::vector<double> empirical;
    /// Penalty weight used during each sweep.
    std::vector<double> deltas;
    /// Regularised loss before the sweep followed by the loss after every micro-step.
    std::vector<std::vector<double>> micro_losses;
    double initial_empirical = 0.0;
    double final_delta = 0.0;
    int sweeps_run = 0;
    /// max_j |v(x_j) - target_j| of the returned fit.
    double max_abs_error = 0.0;
    std::vector<std::string> warnings;
};

struct FitResult {
    TT tt;
    FitReport report;
};

/// The empirical loss is a mean over samples, i.e. an L^2 norm for the uniform probability
/// measure on the box; the penalty uses the H^2_mix norm for the same measure, which is
/// ||c||_F^2 / (b - a)^d for an H^2(a,b)-orthonormal basis.
double penalty_scale(const Basis& basis, Index order);

/// Empirical loss (1/J) sum |v(x_j) - y_j|^2 plus the eta-weighted control term.
double empirical_loss(const TT& tt, const RegressionSpec& spec, const Basis& basis);

/// Regularised ALS with left-to-right sweeps. The H^2_mix penalty is
/// delta * penalty_scale * ||pivot core||_F^2 in mixed-canonical gauge; after each sweep delta <- min(delta, 1e-3 * empirical residual).
/// Ranks of init are kept (up to feasibility caps).
FitResult fit(const RegressionSpec& spec, const TT& init, const Basis& basis);

/// One exact minimisation over the pivot core. Returns the updated TT (in mixed-canonical gauge
/// at pivot); loss_before / loss_after receive the regularised loss.
TT micro_step(const TT& tt, Index pivot, const RegressionSpec& spec, const Basis& basis, double delta,
              double* loss_before = nullptr, double* loss_after = nullptr);

}  // namespace tthjb
