#pragma once
// Brute-force reference solvers. Not part of the umbrella header: include
// explicitly from tests, benchmarks or debugging tools.
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <Eigen/Core>
#include <grouplp/errors.hpp>
#include <grouplp/glm.hpp>
#include <grouplp/norms.hpp>
#include <grouplp/projection.hpp>

namespace grouplp::oracle {

struct OracleBudget
{
    double grid_step = 1e-4;
    double refine_step = 1e-6;
    long max_iters = 1'000'000;
    double tol = 1e-12;
    double time_limit_seconds = 0.0;  ///< 0 disables the limit

    void validate() const
    {
        detail::require(grid_step > 0 && refine_step > 0 && tol > 0 && max_iters > 0,
                        "OracleBudget: values must be positive");
    }
};

/**
 * Minimizes ||b - beta||^2 + mu ||beta||_p over the box [-||b||_inf, ||b||_inf]^dim
 * by repeated grid search: a 41-point-per-axis grid is laid over the
 * current window and the window shrinks around the best point until the
 * cell width reaches grid_step, then continues down to refine_step.
 */
inline Eigen::VectorXd prox_grid_oracle(const Eigen::VectorXd& b, double mu, const PNorm& p,
                                        const OracleBudget& budget = {})
{
    budget.validate();
    const auto dim = b.size();
    detail::require(dim >= 1 && dim <= 3, "prox_grid_oracle: dimension must be 1..3");
    detail::require(mu >= 0, "prox_grid_oracle: mu must be >= 0");

    auto objective = [&](const Eigen::VectorXd& x) {
        return (b - x).squaredNorm() + mu * detail::p_norm_unchecked(x, p);
    };

    constexpr int N = 41;
    const double box = b.cwiseAbs().maxCoeff();
    if (box == 0.0) return Eigen::VectorXd::Zero(dim);

    Eigen::VectorXd center = Eigen::VectorXd::Zero(dim);
    double half = box;
    Eigen::VectorXd x(dim), best = center;
    double best_val = objective(center);

    for (;;) {
        const double h = 2.0 * half / (N - 1);
        long total = 1;
        for (Eigen::Index k = 0; k < dim; ++k) total *= N;
        for (long idx = 0; idx < total; ++idx) {
            long rem = idx;
            bool inside = true;
            for (Eigen::Index k = 0; k < dim; ++k) {
                x[k] = center[k] - half + h * static_cast<double>(rem % N);
                rem /= N;
                if (std::abs(x[k]) > box) inside = false;
            }
            if (!inside) continue;
            const double v = objective(x);
            if (v < best_val) {
                best_val = v;
                best = x;
            }
        }
        if (h <= budget.refine_step) break;
        center = best;
        half = 8.0 * h;
    }
    return best;
}

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
inline Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                                  const Eigen::VectorXd& x, double h)
{
    detail::require(h > 0, "finite_difference_gradient: h must be positive");
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        xp[i] = xi + h;
        const double fp = f(xp);
        xp[i] = xi - h;
        const double fm = f(xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Largest singular value of X squared, by power iteration on X^T X.
template <class M>
double spectral_norm_squared(const M& X, int iters = 200)
{
    Eigen::VectorXd v = Eigen::VectorXd::Ones(X.cols()) / std::sqrt(static_cast<double>(X.cols()));
    double est = 0.0;
    for (int k = 0; k < iters; ++k) {
        const Eigen::VectorXd w = X.transpose() * (X * v);
        const double nw = w.norm();
        if (nw == 0.0) return 0.0;
        const double next = v.dot(w);
        v = w / nw;
        if (std::abs(next - est) <= 1e-10 * next) {
            est = next;
            break;
        }
        est = next;
    }
    return est;
}

/**
 * Accelerated projected gradient over all groups with a fixed step 1/L,
 * L = curvature bound * ||X||_2^2, and function-value restarts. No active
 * set: every iteration touches every column and every group.
 */
template <class M>
Coefficients full_set_projected_gradient(const GlmFamily& fam, const GroupedDesign<M>& design, double kappa,
                                         const PNorm& p, const OracleBudget& budget = {})
{
    budget.validate();
    detail::require(kappa > 0, "full_set_projected_gradient: kappa must be positive");
    const auto& X = design.X();
    const auto& y = design.y();
    const auto& part = design.partition();
    const double L = 1.01 * fam.curvature_bound() * spectral_norm_squared(X);
    const auto start = std::chrono::steady_clock::now();

    ProxTolerances ptol;
    ptol.outer_kappa_tol = std::max(1e-11, budget.tol * (1.0 + kappa));

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
    if (L == 0.0) return {beta, part};
    Eigen::VectorXd z = beta, prev = beta;
    double f = loss_from_nu(fam, y, X * beta);
    double t = 1.0;
    int quiet = 0;

    for (long it = 0; it < budget.max_iters; ++it) {
        const Eigen::VectorXd nu_z = X * z;
        const Eigen::VectorXd g = X.transpose() * grad_nu(fam, y, nu_z);
        Eigen::VectorXd next = project_l1p_ball(Coefficients(z - g / L, part), p, kappa, ptol).beta.values;
        double f_next = loss_from_nu(fam, y, X * next);

        if (f_next > f) {
            // A plain 1/L step cannot increase the loss beyond rounding: converged.
            if (t == 1.0) return {beta, part};
            // Restart momentum from the last iterate.
            t = 1.0;
            z = beta;
            quiet = 0;
            continue;
        }
        const double decrease = f - f_next;
        const double move = (next - beta).cwiseAbs().maxCoeff();
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        z = next + ((t - 1.0) / t_next) * (next - beta);
        prev = std::move(beta);
        beta = std::move(next);
        f = f_next;
        t = t_next;

        const bool small = decrease <= budget.tol * (1.0 + std::abs(f)) &&
                           move <= std::sqrt(budget.tol) * (1.0 + beta.cwiseAbs().maxCoeff());
        quiet = small ? quiet + 1 : 0;
        if (quiet >= 3) return {beta, part};

        if (budget.time_limit_seconds > 0 && (it & 15) == 0) {
            const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
            if (el.count() > budget.time_limit_seconds)
                throw ConvergenceError("full_set_projected_gradient: time limit reached", beta);
        }
    }
    throw ConvergenceError("full_set_projected_gradient: iteration budget exhausted", beta);
}

} // namespace grouplp::oracle
