#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tthjb/basis.hpp"
#include "tthjb/dynamics.hpp"
#include "tthjb/tensor_train.hpp"

namespace tthjb {

/// Value function slices v_l at t_l = start_time + l tau, linearly interpolated in time.
struct ValueSchedule {
    Basis basis;
    double start_time = 0.0;
    double tau = 0.01;
    std::vector<TT> slices;

    Index num_steps() const { return static_cast<Index>(slices.size()) - 1; }
    Index dim() const { return slices.empty() ? 0 : slices.front().order(); }
    double time(Index l) const { return start_time + tau * static_cast<double>(l); }
    double end_time() const { return time(num_steps()); }
    const TT& slice(Index l) const { return slices.at(static_cast<std::size_t>(l)); }

    /// Slice index l and weight w with t = (1 - w) t_l + w t_{l+1}; times outside the schedule clamp.
    std::pair<Index, double> locate(double t) const;
    double value(double t, const Eigen::VectorXd& x) const;
    Eigen::VectorXd gradient(double t, const Eigen::VectorXd& x) const;
    void validate() const;
};

/// Feedback -1/2 R^{-1} g(t,x)' grad v(t,x) with v interpolated linearly between slices.
Eigen::VectorXd feedback(const ValueSchedule& schedule, const ControlProblem& problem, double t,
                         const Eigen::VectorXd& x);
Policy schedule_policy(const ValueSchedule& schedule, const ControlProblem& problem);

/// Line-oriented text format; all reals are written with 17 significant digits.
void write_schedule(std::ostream& out, const ValueSchedule& schedule);
ValueSchedule read_schedule(std::istream& in);
void save_schedule(const std::string& path, const ValueSchedule& schedule);
ValueSchedule load_schedule(const std::string& path);

}  // namespace tthjb
