#include "tthjb/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>

namespace tthjb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::pair<Index, double> ValueSchedule::locate(double t) const {
    const Index steps = num_steps();
    if (steps < 1) return {0, 0.0};
    const double s = (t - start_time) / tau;
    if (s <= 0.0) return {0, 0.0};
    if (s >= static_cast<double>(steps)) return {steps - 1, 1.0};
    auto l = static_cast<Index>(std::floor(s));
    l = std::min(l, steps - 1);
    return {l, s - static_cast<double>(l)};
}

double ValueSchedule::value(double t, const VectorXd& x) const {
    const auto [l, w] = locate(t);
    const double v0 = evaluate(slice(l), basis, x);
    if (w == 0.0) return v0;
    return (1.0 - w) * v0 + w * evaluate(slice(l + 1), basis, x);
}

VectorXd ValueSchedule::gradient(double t, const VectorXd& x) const {
    const auto [l, w] = locate(t);
    if (w == 0.0) return tthjb::gradient(slice(l), basis, x);
    if (w == 1.0) return tthjb::gradient(slice(l + 1), basis, x);
    return (1.0 - w) * tthjb::gradient(slice(l), basis, x) + w * tthjb::gradient(slice(l + 1), basis, x);
}

void ValueSchedule::validate() const {
    if (slices.empty()) throw DimensionError("ValueSchedule: no slices");
    if (!(tau > 0.0)) throw std::invalid_argument("ValueSchedule: tau must be positive");
    for (const auto& s : slices) {
        s.validate();
        if (s.order() != dim() || s.mode_size() != basis.size())
            throw DimensionError("ValueSchedule: slice shape does not match the basis");
    }
}

VectorXd feedback(const ValueSchedule& schedule, const ControlProblem& problem, double t, const VectorXd& x) {
    return problem.optimal_control(t, x, schedule.gradient(t, x));
}

Policy schedule_policy(const ValueSchedule& schedule, const ControlProblem& problem) {
    if (schedule.dim() != problem.state_dim) throw DimensionError("schedule_policy: dimension mismatch");
    auto s = std::make_shared<const ValueSchedule>(schedule);
    auto p = std::make_shared<const ControlProblem>(problem);
    return [s, p](double t, const VectorXd& x) -> VectorXd { return feedback(*s, *p, t, x); };
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename Range>
void write_line(std::ostream& out, const char* key, const Range& values) {
    out << key;
    for (const double v : values) out << ' ' << fmt(v);
    out << '\n';
}

// Reads the next non-empty line and checks its key.
std::istringstream expect_line(std::istream& in, const std::string& key) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        std::string k;
        ss >> k;
        if (k != key) throw IoError("schedule file: expected '" + key + "', found '" + k + "'");
        return ss;
    }
    throw IoError("schedule file: unexpected end of input, expected '" + key + "'");
}

template <typename T>
T read_scalar(std::istream& in, const std::string& key) {
    auto ss = expect_line(in, key);
    T v{};
    if (!(ss >> v)) throw IoError("schedule file: bad value for '" + key + "'");
    return v;
}

std::vector<double> read_values(std::istringstream& ss, const std::string& key, std::size_t count) {
    std::vector<double> out;
    out.reserve(count);
    std::string tok;
    while (ss >> tok) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw IoError("schedule file: malformed number '" + tok + "' in '" + key + "'");
        }
    }
    if (out.size() != count)
        throw IoError("schedule file: '" + key + "' has " + std::to_string(out.size()) + " entries, expected " +
                      std::to_string(count));
    return out;
}

}  // namespace

void write_schedule(std::ostream& out, const ValueSchedule& schedule) {
    schedule.validate();
    const Index d = schedule.dim(), m = schedule.basis.size();
    out << "dim " << d << '\n';
    out << "mode_size " << m << '\n';
    out << "num_steps " << schedule.num_steps() << '\n';
    out << "tau " << fmt(schedule.tau) << '\n';
    if (schedule.start_time != 0.0) out << "start_time " << fmt(schedule.start_time) << '\n';
    out << "domain_a " << fmt(schedule.basis.lower()) << '\n';
    out << "domain_b " << fmt(schedule.basis.upper()) << '\n';
    std::vector<double> coeffs;
    const auto& c = schedule.basis.coefficients();
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < m; ++j) coeffs.push_back(c(i, j));
    write_line(out, "basis_coeffs", coeffs);
    for (const auto& s : schedule.slices) {
        out << "ranks";
        for (Index i = 1; i < d; ++i) out << ' ' << s.core(i).left;
        out << '\n';
        for (Index i = 0; i < d; ++i) {
            const auto& core = s.core(i);
            write_line(out, "core", std::vector<double>(core.data.data(), core.data.data() + core.data.size()));
        }
    }
    if (!out) throw IoError("schedule file: write failed");
}

ValueSchedule read_schedule(std::istream& in) {
    const auto d = read_scalar<Index>(in, "dim");
    const auto m = read_scalar<Index>(in, "mode_size");
    const auto steps = read_scalar<Index>(in, "num_steps");
    if (d < 1 || m < 1 || steps < 0) throw IoError("schedule file: invalid header sizes");
    ValueSchedule out;
    out.tau = read_scalar<double>(in, "tau");

    std::string line;
    double a = 0.0;
    {
        // optional start_time before domain_a
        while (std::getline(in, line) && line.find_first_not_of(" \t\r") == std::string::npos) {
        }
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "start_time") {
            if (!(ss >> out.start_time)) throw IoError("schedule file: bad value for 'start_time'");
            a = read_scalar<double>(in, "domain_a");
        } else if (key == "domain_a") {
            if (!(ss >> a)) throw IoError("schedule file: bad value for 'domain_a'");
        } else {
            throw IoError("schedule file: expected 'domain_a', found '" + key + "'");
        }
    }
    const auto b = read_scalar<double>(in, "domain_b");
    auto coeff_line = expect_line(in, "basis_coeffs");
    const auto coeffs = read_values(coeff_line, "basis_coeffs", static_cast<std::size_t>(m * m));
    MatrixXd c(m, m);
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < m; ++j) c(i, j) = coeffs[static_cast<std::size_t>(i * m + j)];
    try {
        out.basis = Basis(a, b, c);
    } catch (const std::exception& e) {
        throw IoError(std::string("schedule file: invalid basis: ") + e.what());
    }

    for (Index l = 0; l <= steps; ++l) {
        auto rank_line = expect_line(in, "ranks");
        std::vector<Index> ranks;
        Index r = 0;
        while (rank_line >> r) ranks.push_back(r);
        if (static_cast<Index>(ranks.size()) != d - 1) throw IoError("schedule file: wrong number of ranks");
        TT tt;
        try {
            tt = TT::zeros(d, m, ranks);
        } catch (const std::exception& e) {
            throw IoError(std::string("schedule file: invalid ranks: ") + e.what());
        }
        for (Index i = 0; i < d; ++i) {
            auto core_line = expect_line(in, "core");
            auto& core = tt.core(i);
            const auto values = read_values(core_line, "core", static_cast<std::size_t>(core.data.size()));
            for (Index k = 0; k < core.data.size(); ++k) core.data(k) = values[static_cast<std::size_t>(k)];
        }
        out.slices.push_back(std::move(tt));
    }
    out.validate();
    return out;
}

void save_schedule(const std::string& path, const ValueSchedule& schedule) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_schedule(out, schedule);
    out.close();
    if (!out) throw IoError("failed writing '" + path + "'");
}

ValueSchedule load_schedule(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return read_schedule(in);
}

}  // namespace tthjb
