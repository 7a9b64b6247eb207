#pragma once

// Damped nonlinear least squares (Levenberg-Marquardt with Nielsen's damping
// update and Marquardt diagonal scaling).
//
// Parameters are either free, positive (optimised internally as log p) or
// fixed. The objective is 1/2 sum_i w_i (f_i(p) - y_i)^2.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cavspin/error.hpp"

namespace cavspin {

enum class Bound
{
    free,
    positive,
    fixed,
};

struct Parameter
{
    std::string name;
    double value = 0.0;
    Bound bound = Bound::free;
};

struct NllsOptions
{
    int max_iterations = 200;
    double cost_rtol = 1e-10;      // attainable relative cost decrease
    double gradient_tol = 1e-8;    // scaled (cosine) gradient infinity norm
    double initial_lambda = 1e-3;
    double fd_relative_step = 1e-6;
    bool absolute_weights = false; // true: weights are 1/sigma^2, no chi2 rescale
};

struct FitResult
{
    std::vector<std::string> names;
    std::vector<double> values;
    std::vector<double> variances;  // +inf along unidentifiable directions, 0 when fixed
    std::vector<bool> fixed;
    double residual_norm = 0.0;     // sqrt(sum w r^2)
    double gradient_norm = 0.0;     // scaled, at the returned point
    int iterations = 0;
    std::size_t data_points = 0;
    bool converged = false;
    bool degenerate = false;
    std::string termination;
    std::vector<std::string> notes;

    std::size_t index(std::string_view name) const
    {
        for (std::size_t k = 0; k < names.size(); ++k)
            if (names[k] == name)
                return k;
        fail(ErrorKind::invalid_argument, "FitResult: no parameter named " + std::string(name));
    }

    double value(std::string_view name) const { return values[index(name)]; }
    double sigma(std::string_view name) const { return std::sqrt(variances[index(name)]); }
    bool is_fixed(std::string_view name) const { return fixed[index(name)]; }
};

// Model predictions f_i(p) for every data point, plus an optional analytic
// Jacobian d f_i / d p_j (rows = data points, columns = all parameters).
struct LeastSquaresProblem
{
    using Predict = std::function<void(std::span<const double> params, std::span<double> out)>;
    using Jacobian = std::function<void(std::span<const double> params, Eigen::Ref<Eigen::MatrixXd> jac)>;

    std::vector<double> observed;
    std::vector<double> weights;  // empty: uniform
    Predict predict;
    Jacobian jacobian;            // empty: central finite differences

    std::size_t size() const { return observed.size(); }
};

// Central differences with step h_j = rel_step * max(|p_j|, 1e-300 + |p_j|)
// (falls back to rel_step when p_j = 0).
inline Eigen::MatrixXd finite_difference_jacobian(const LeastSquaresProblem::Predict& predict, std::size_t rows,
                                                  std::span<const double> params, double rel_step = 1e-6)
{
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(params.size()));
    std::vector<double> p(params.begin(), params.end());
    std::vector<double> up(rows), down(rows);
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double p0 = p[j];
        const double h = p0 != 0.0 ? rel_step * std::abs(p0) : rel_step;
        p[j] = p0 + h;
        predict(p, up);
        p[j] = p0 - h;
        predict(p, down);
        p[j] = p0;
        for (std::size_t i = 0; i < rows; ++i)
            jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (up[i] - down[i]) / (2.0 * h);
    }
    return jac;
}

namespace detail {

class NllsState
{
public:
    NllsState(const LeastSquaresProblem& problem, std::vector<Parameter> params, const NllsOptions& opt)
        : problem_(problem), params_(std::move(params)), opt_(opt)
    {
        for (std::size_t k = 0; k < params_.size(); ++k) {
            const auto& p = params_[k];
            require(std::isfinite(p.value), "nlls: initial value of " + p.name + " is not finite");
            if (p.bound == Bound::positive)
                require(p.value > 0.0, "nlls: initial value of " + p.name + " must be positive");
            if (p.bound != Bound::fixed)
                free_.push_back(k);
        }
        require(problem_.predict != nullptr, "nlls: problem has no model");
        require(!problem_.weights.size() || problem_.weights.size() == problem_.size(),
                "nlls: weight count does not match data");
        require(problem_.size() >= free_.size(), "nlls: fewer data points than free parameters");
        sqrt_w_.assign(problem_.size(), 1.0);
        for (std::size_t i = 0; i < problem_.weights.size(); ++i) {
            require(problem_.weights[i] >= 0.0, "nlls: weights must be non-negative");
            sqrt_w_[i] = std::sqrt(problem_.weights[i]);
        }
    }

    std::size_t n_free() const { return free_.size(); }
    std::size_t m() const { return problem_.size(); }

    Eigen::VectorXd theta_of(const std::vector<double>& values) const
    {
        Eigen::VectorXd t(static_cast<Eigen::Index>(free_.size()));
        for (std::size_t a = 0; a < free_.size(); ++a) {
            const std::size_t k = free_[a];
            t(static_cast<Eigen::Index>(a)) =
                params_[k].bound == Bound::positive ? std::log(values[k]) : values[k];
        }
        return t;
    }

    std::vector<double> values_of(const Eigen::VectorXd& t) const
    {
        std::vector<double> v(params_.size());
        for (std::size_t k = 0; k < params_.size(); ++k)
            v[k] = params_[k].value;
        for (std::size_t a = 0; a < free_.size(); ++a) {
            const std::size_t k = free_[a];
            const double x = t(static_cast<Eigen::Index>(a));
            v[k] = params_[k].bound == Bound::positive ? std::max(std::exp(x), std::numeric_limits<double>::min()) : x;
        }
        return v;
    }

    // Weighted residual r_i = sqrt(w_i) (f_i - y_i); returns 1/2 |r|^2.
    double residuals(const std::vector<double>& values, Eigen::VectorXd& r) const
    {
        std::vector<double> f(m());
        problem_.predict(values, f);
        r.resize(static_cast<Eigen::Index>(m()));
        for (std::size_t i = 0; i < m(); ++i)
            r(static_cast<Eigen::Index>(i)) = sqrt_w_[i] * (f[i] - problem_.observed[i]);
        const double c = 0.5 * r.squaredNorm();
        return std::isfinite(c) ? c : std::numeric_limits<double>::infinity();
    }

    // Weighted Jacobian with respect to the original (un-transformed) values,
    // restricted to free parameters.
    Eigen::MatrixXd jacobian_values(const std::vector<double>& values) const
    {
        Eigen::MatrixXd full;
        if (problem_.jacobian) {
            full.resize(static_cast<Eigen::Index>(m()), static_cast<Eigen::Index>(params_.size()));
            problem_.jacobian(values, full);
        } else {
            full = finite_difference_jacobian(problem_.predict, m(), values, opt_.fd_relative_step);
        }
        Eigen::MatrixXd j(static_cast<Eigen::Index>(m()), static_cast<Eigen::Index>(free_.size()));
        for (std::size_t a = 0; a < free_.size(); ++a)
            j.col(static_cast<Eigen::Index>(a)) = full.col(static_cast<Eigen::Index>(free_[a]));
        for (std::size_t i = 0; i < m(); ++i)
            j.row(static_cast<Eigen::Index>(i)) *= sqrt_w_[i];
        return j;
    }

    Eigen::MatrixXd jacobian_theta(const std::vector<double>& values) const
    {
        Eigen::MatrixXd j = jacobian_values(values);
        for (std::size_t a = 0; a < free_.size(); ++a)
            if (params_[free_[a]].bound == Bound::positive)
                j.col(static_cast<Eigen::Index>(a)) *= values[free_[a]];
        return j;
    }

    const std::vector<Parameter>& params() const { return params_; }
    const std::vector<std::size_t>& free_indices() const { return free_; }

private:
    const LeastSquaresProblem& problem_;
    std::vector<Parameter> params_;
    NllsOptions opt_;
    std::vector<std::size_t> free_;
    std::vector<double> sqrt_w_;
};

inline double scaled_gradient(const Eigen::MatrixXd& j, const Eigen::VectorXd& r)
{
    const double rn = r.norm();
    if (rn == 0.0)
        return 0.0;
    double worst = 0.0;
    for (Eigen::Index a = 0; a < j.cols(); ++a) {
        const double cn = j.col(a).norm();
        if (cn > 0.0)
            worst = std::max(worst, std::abs(j.col(a).dot(r)) / (cn * rn));
    }
    return worst;
}

// Largest decrease the Gauss-Newton model can still deliver: 1/2 g^T A^+ g.
inline double attainable_decrease(const Eigen::MatrixXd& a, const Eigen::VectorXd& g)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double cutoff = 1e-14 * std::max(ev.maxCoeff(), 0.0);
    const Eigen::VectorXd proj = es.eigenvectors().transpose() * g;
    double s = 0.0;
    for (Eigen::Index k = 0; k < ev.size(); ++k)
        if (ev(k) > cutoff)
            s += proj(k) * proj(k) / ev(k);
    return 0.5 * s;
}

} // namespace detail

inline FitResult nlls_solve(const LeastSquaresProblem& problem, std::vector<Parameter> params,
                            const NllsOptions& opt = {})
{
    detail::NllsState st(problem, std::move(params), opt);
    const std::size_t n = st.n_free();

    std::vector<double> values(st.params().size());
    for (std::size_t k = 0; k < values.size(); ++k)
        values[k] = st.params()[k].value;

    FitResult out;
    for (const auto& p : st.params()) {
        out.names.push_back(p.name);
        out.fixed.push_back(p.bound == Bound::fixed);
    }
    out.data_points = st.m();

    Eigen::VectorXd r;
    double cost = st.residuals(values, r);
    require(std::isfinite(cost), "nlls: model is not finite at the initial guess", ErrorKind::fit);

    Eigen::VectorXd theta = st.theta_of(values);
    double lambda = opt.initial_lambda;
    double nu = 2.0;
    bool done = n == 0;
    out.termination = n == 0 ? "no free parameters" : "iteration cap";

    Eigen::MatrixXd jac;
    if (!done) {
        jac = st.jacobian_theta(values);
        const Eigen::VectorXd d = (jac.transpose() * jac).diagonal();
        if (d.minCoeff() <= 0.0) {
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
            const auto& s = svd.singularValues();
            const double cond = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1)
                                                     : std::numeric_limits<double>::infinity();
            fail(ErrorKind::fit, "nlls: singular normal equations at the initial guess (condition number " +
                                     std::to_string(cond) + "); a parameter has no effect on the model");
        }
    }

    // Cost at a trial point; points the model cannot evaluate (an overflowed
    // rate, say) count as infinitely bad so the step is rejected.
    auto trial_cost_at = [&st](const std::vector<double>& v, Eigen::VectorXd& tr) {
        for (double x : v)
            if (!std::isfinite(x))
                return std::numeric_limits<double>::infinity();
        try {
            return st.residuals(v, tr);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::invalid_argument)
                throw;
            return std::numeric_limits<double>::infinity();
        }
    };

    int it = 0;
    while (!done && it < opt.max_iterations) {
        const Eigen::MatrixXd a = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;

        if (cost == 0.0) {
            out.termination = "zero residual";
            done = true;
            break;
        }
        if (detail::scaled_gradient(jac, r) < opt.gradient_tol) {
            out.termination = "gradient tolerance";
            done = true;
            break;
        }
        if (detail::attainable_decrease(a, g) <= opt.cost_rtol * cost) {
            // Polish with undamped Gauss-Newton steps while they still help.
            for (int polish = 0; polish < 3; ++polish) {
                const Eigen::VectorXd step =
                    -(jac.completeOrthogonalDecomposition().solve(r));
                if (!step.allFinite())
                    break;
                const Eigen::VectorXd trial_theta = theta + step;
                const std::vector<double> trial_values = st.values_of(trial_theta);
                Eigen::VectorXd trial_r;
                const double trial_cost = trial_cost_at(trial_values, trial_r);
                if (!(trial_cost < cost))
                    break;
                theta = trial_theta;
                values = trial_values;
                r = trial_r;
                cost = trial_cost;
                jac = st.jacobian_theta(values);
            }
            out.termination = "cost tolerance";
            done = true;
            break;
        }

        Eigen::VectorXd diag = a.diagonal();
        const double floor = 1e-30 * std::max(diag.maxCoeff(), std::numeric_limits<double>::min());
        for (Eigen::Index k = 0; k < diag.size(); ++k)
            diag(k) = std::max(diag(k), floor);

        bool accepted = false;
        while (!accepted) {
            ++it;
            Eigen::MatrixXd damped = a;
            damped.diagonal() += lambda * diag;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
            Eigen::VectorXd step = -ldlt.solve(g);
            if (ldlt.info() != Eigen::Success || !step.allFinite()) {
                lambda *= nu;
                nu *= 2.0;
            } else {
                const Eigen::VectorXd trial_theta = theta + step;
                const std::vector<double> trial_values = st.values_of(trial_theta);
                Eigen::VectorXd trial_r;
                const double trial_cost = trial_cost_at(trial_values, trial_r);
                const double predicted = -(g.dot(step) + 0.5 * step.dot(a * step));
                const double rho = predicted > 0.0 ? (cost - trial_cost) / predicted : -1.0;
                if (trial_cost < cost) {
                    theta = trial_theta;
                    values = trial_values;
                    r = trial_r;
                    cost = trial_cost;
                    lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
                    nu = 2.0;
                    accepted = true;
                    jac = st.jacobian_theta(values);
                } else {
                    // A rejected step that no longer moves any parameter beyond
                    // rounding means the cost is flat to machine precision.
                    const bool negligible =
                        (step.array().abs() <= 1e-13 * (theta.array().abs() + 1e-13)).all();
                    if (negligible) {
                        out.termination = "step tolerance";
                        done = true;
                        break;
                    }
                    lambda *= nu;
                    nu *= 2.0;
                }
            }
            if (lambda > 1e300) {
                out.termination = "damping overflow";
                done = true;
                break;
            }
            if (it >= opt.max_iterations)
                break;
        }
    }

    out.iterations = it;
    out.values = values;
    out.residual_norm = std::sqrt(2.0 * cost);
    if (n > 0)
        out.gradient_norm = detail::scaled_gradient(jac, r);
    out.converged = out.termination == "zero residual" || out.termination == "gradient tolerance" ||
                    out.termination == "cost tolerance" || out.termination == "step tolerance" ||
                    out.termination == "no free parameters";

    // Covariance in the original parameterisation.
    out.variances.assign(values.size(), 0.0);
    if (n > 0) {
        Eigen::MatrixXd jv = st.jacobian_values(values);
        // Columns are equilibrated first so that parameters of very different
        // magnitude (a field in T next to a rate in rad/s) do not fall under
        // the rank cutoff.
        // A parameter whose full relative change barely moves the residuals
        // compared to the others is treated as unidentified, since the
        // equilibration would otherwise hide it.
        Eigen::VectorXd scale(jv.cols()), reach(jv.cols());
        for (Eigen::Index k = 0; k < jv.cols(); ++k) {
            const double norm = jv.col(k).norm();
            reach(k) = std::abs(values[st.free_indices()[static_cast<std::size_t>(k)]]) * norm;
            scale(k) = norm > 0.0 ? 1.0 / norm : 1.0;
            jv.col(k) *= scale(k);
        }
        const double max_reach = reach.size() > 0 ? reach.maxCoeff() : 0.0;
        const Eigen::MatrixXd a = jv.transpose() * jv;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
        const Eigen::VectorXd& ev = es.eigenvalues();
        const Eigen::MatrixXd& vec = es.eigenvectors();
        const double cutoff = 1e-14 * std::max(ev.maxCoeff(), 0.0);
        const double dof = static_cast<double>(st.m() - n);
        const double s2 = opt.absolute_weights ? 1.0 : (dof > 0.0 ? 2.0 * cost / dof : 0.0);
        for (std::size_t a_idx = 0; a_idx < n; ++a_idx) {
            const auto row = static_cast<Eigen::Index>(a_idx);
            double var = 0.0;
            if (reach(row) > 0.0 && reach(row) < 1e-10 * max_reach) {
                var = std::numeric_limits<double>::infinity();
                out.degenerate = true;
            }
            for (Eigen::Index k = 0; k < ev.size() && !std::isinf(var); ++k) {
                const double v2 = vec(row, k) * vec(row, k);
                if (ev(k) > cutoff) {
                    var += v2 / ev(k);
                } else if (v2 > 1e-12) {
                    var = std::numeric_limits<double>::infinity();
                    out.degenerate = true;
                    break;
                }
            }
            out.variances[st.free_indices()[a_idx]] = std::isinf(var) ? var : s2 * var * scale(row) * scale(row);
        }
        if (out.degenerate)
            out.notes.push_back("normal matrix is rank deficient at the solution");
    }
    return out;
}

// One-dimensional curve fit y ~ f(x; p).
struct DataPoint
{
    double x = 0.0;
    double y = 0.0;
    double weight = 1.0;
};

struct CurveModel
{
    std::function<double(double x, std::span<const double> p)> value;
    // Writes d f / d p_j into grad; optional.
    std::function<void(double x, std::span<const double> p, std::span<double> grad)> gradient;
};

inline LeastSquaresProblem make_curve_problem(const CurveModel& model, std::span<const DataPoint> data)
{
    LeastSquaresProblem problem;
    std::vector<double> xs;
    bool uniform = true;
    for (const auto& d : data) {
        xs.push_back(d.x);
        problem.observed.push_back(d.y);
        problem.weights.push_back(d.weight);
        uniform = uniform && d.weight == 1.0;
    }
    if (uniform)
        problem.weights.clear();
    problem.predict = [model, xs](std::span<const double> p, std::span<double> out) {
        for (std::size_t i = 0; i < xs.size(); ++i)
            out[i] = model.value(xs[i], p);
    };
    if (model.gradient) {
        problem.jacobian = [model, xs](std::span<const double> p, Eigen::Ref<Eigen::MatrixXd> jac) {
            std::vector<double> grad(p.size());
            for (std::size_t i = 0; i < xs.size(); ++i) {
                model.gradient(xs[i], p, grad);
                for (std::size_t j = 0; j < p.size(); ++j)
                    jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = grad[j];
            }
        };
    }
    return problem;
}

inline FitResult nlls_solve(const CurveModel& model, std::span<const DataPoint> data, std::vector<Parameter> params,
                            const NllsOptions& opt = {})
{
    return nlls_solve(make_curve_problem(model, data), std::move(params), opt);
}

} // namespace cavspin
