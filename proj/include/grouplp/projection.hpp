#pragma once
#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <vector>
#include <Eigen/Core>
#include <grouplp/errors.hpp>
#include <grouplp/norms.hpp>
#include <grouplp/partition.hpp>

namespace grouplp {

/// Root search for the projection multiplier mu.
enum class MultiplierSearch {
    bisection,  ///< interval halving; at most ~log2(mu_max / tol) steps
    illinois,   ///< bracketed regula falsi with Illinois damping, bisecting when it stalls
};

/**
 * Tolerances for the l1,p proximal machinery.
 *
 * outer_kappa_tol: absolute tolerance on |mixed_norm - kappa| for the
 *                  bisection on the multiplier mu.
 * inner_root_tol:  relative tolerance of the scalar root solves inside a
 *                  single group prox (general finite p only).
 */
struct ProxTolerances
{
    double outer_kappa_tol = 1e-8;
    double inner_root_tol = 1e-12;
    int max_outer_bisections = 200;
    int max_inner_iters = 200;
    MultiplierSearch search = MultiplierSearch::bisection;

    void validate() const
    {
        detail::require(outer_kappa_tol > 0 && inner_root_tol > 0, "ProxTolerances: tolerances must be positive");
        detail::require(max_outer_bisections >= 1 && max_inner_iters >= 1,
                        "ProxTolerances: iteration limits must be >= 1");
    }
};

struct ProjectionReport
{
    Coefficients beta;
    double mu = 0.0;
    int outer_iterations = 0;
    bool constraint_active = false;
};

namespace detail {

/// Count of group proxes that needed the scan-then-bisect fallback.
inline std::atomic<long>& prox_fallback_counter()
{
    static std::atomic<long> counter{0};
    return counter;
}

inline double soft_threshold(double x, double t)
{
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

/**
 * Clipping level theta such that sum_i max(|b_i| - theta, 0) = radius.
 * Assumes ||b||_1 > radius. Sort-and-threshold.
 */
template <class Derived>
double l1_ball_threshold(const Eigen::MatrixBase<Derived>& b, double radius)
{
    thread_local std::vector<double> u;
    u.resize(static_cast<std::size_t>(b.size()));
    for (Eigen::Index i = 0; i < b.size(); ++i) u[static_cast<std::size_t>(i)] = std::abs(b[i]);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        cum += u[k];
        const double t = (cum - radius) / static_cast<double>(k + 1);
        if (u[k] > t) theta = t;
        else break;
    }
    return std::max(theta, 0.0);
}

/**
 * Root of x + c x^(p-1) = a on [0, a] for a > 0, c > 0, 1 < p < inf.
 * p = 1.5 and p = 3 reduce to quadratics. Otherwise Newton from the
 * right on a convex increasing function, in x for p > 2 and in
 * t = x^(p-1) for p < 2, with a bisection fallback if a step leaves
 * the bracket.
 */
inline double scalar_shrink(double a, double c, double p, double tol, int max_iters)
{
    if (p == 2.0) return a / (1.0 + c);
    if (p == 3.0) return 2.0 * a / (1.0 + std::sqrt(1.0 + 4.0 * a * c));
    if (p == 1.5) {
        const double u = 2.0 * a / (c + std::sqrt(c * c + 4.0 * a));
        return u * u;
    }
    if (p > 2.0) {
        double lo = 0.0, hi = a;
        double x = std::min(a, std::pow(a / c, 1.0 / (p - 1.0)));
        for (int it = 0; it < max_iters; ++it) {
            const double xp2 = std::pow(x, p - 2.0);
            const double f = x + c * xp2 * x - a;
            if (f == 0.0) return x;
            if (f > 0) hi = x;
            else lo = x;
            const double df = 1.0 + c * (p - 1.0) * xp2;
            double next = x - f / df;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - x) <= tol * x) return next;
            x = next;
        }
        return x;
    }
    // 1 < p < 2: solve t^r + c t = a in t = x^(p-1), r = 1 / (p - 1) > 1.
    const double r = 1.0 / (p - 1.0);
    double lo = 0.0, hi = std::pow(a, p - 1.0);
    double t = std::min(hi, a / c);
    for (int it = 0; it < max_iters; ++it) {
        const double tr1 = std::pow(t, r - 1.0);
        const double f = tr1 * t + c * t - a;
        if (f == 0.0) break;
        if (f > 0) hi = t;
        else lo = t;
        const double df = r * tr1 + c;
        double next = t - f / df;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - t) <= tol * t) {
            t = next;
            break;
        }
        t = next;
    }
    return std::pow(t, r);
}

/**
 * General finite p in (1, inf), p != 2, operating on magnitudes a >= 0.
 * For a given rho = ||beta||_p each coordinate solves
 *     2 (x_i - a_i) + mu x_i^(p-1) / rho^(p-1) = 0,
 * and rho is the root of phi(rho) = ||x(rho)||_p - rho on (0, ||a||_p].
 * The root is found by Newton on phi, safeguarded by the sign bracket.
 * Writes magnitudes into x and returns rho; rho_hint (if > 0) seeds Newton.
 */
inline double prox_magnitudes_general(const Eigen::VectorXd& a, double mu, double p,
                                      const ProxTolerances& tol, Eigen::VectorXd& x, double rho_hint)
{
    const Eigen::Index n = a.size();
    x.resize(n);
    const double anorm = p_norm_unchecked(a, PNorm(p));

    // x(rho), ||x(rho)||_p and d||x||_p / d rho
    auto evaluate = [&](double rho, double& norm, double& dnorm) {
        const double c = mu / (2.0 * std::pow(rho, p - 1.0));
        double xmax = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            x[i] = a[i] > 0 ? scalar_shrink(a[i], c, p, tol.inner_root_tol, tol.max_inner_iters) : 0.0;
            xmax = std::max(xmax, x[i]);
        }
        if (xmax == 0.0) {
            norm = 0.0;
            dnorm = 0.0;
            return;
        }
        double acc = 0.0, dacc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (x[i] <= 0.0) continue;
            const double s = std::pow(x[i] / xmax, p - 1.0);
            acc += s * (x[i] / xmax);
            // dx_i/drho using c x^(p-1) = a - x
            const double gap = a[i] - x[i];
            const double dx = (p - 1.0) * gap * x[i] / (rho * (x[i] + (p - 1.0) * gap));
            dacc += s * dx;
        }
        norm = xmax * std::pow(acc, 1.0 / p);
        // d||x||_p = sum (x_i/||x||)^(p-1) dx_i; rescale from xmax to norm.
        dnorm = dacc * std::pow(xmax / norm, p - 1.0);
    };

    double lo = 0.0, hi = anorm;
    double rho = (rho_hint > 0.0 && rho_hint < anorm) ? rho_hint : 0.5 * anorm;
    double norm = 0.0, dnorm = 0.0;
    bool converged = false;
    for (int it = 0; it < tol.max_inner_iters; ++it) {
        evaluate(rho, norm, dnorm);
        const double phi = norm - rho;
        if (phi == 0.0) {
            converged = true;
            break;
        }
        if (phi > 0) lo = rho;
        else hi = rho;
        const double dphi = dnorm - 1.0;
        double next = dphi != 0.0 ? rho - phi / dphi : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - rho) <= tol.inner_root_tol * rho || hi - lo <= tol.inner_root_tol * hi) {
            rho = next;
            evaluate(rho, norm, dnorm);
            converged = true;
            break;
        }
        rho = next;
    }

    if (!converged || std::abs(norm - rho) > 1e3 * tol.inner_root_tol * std::max(rho, 1e-300)) {
        // Scan a geometric grid for the first + to - sign change and bisect there.
        prox_fallback_counter().fetch_add(1, std::memory_order_relaxed);
        double left = 0.0, right = anorm;
        double probe = anorm;
        for (int k = 0; k < 64; ++k) {
            probe *= 0.5;
            evaluate(probe, norm, dnorm);
            if (norm - probe > 0) {
                left = probe;
                break;
            }
            right = probe;
        }
        for (int it = 0; it < 200 && right - left > tol.inner_root_tol * right; ++it) {
            const double mid = 0.5 * (left + right);
            evaluate(mid, norm, dnorm);
            if (norm - mid > 0) left = mid;
            else right = mid;
        }
        rho = 0.5 * (left + right);
        evaluate(rho, norm, dnorm);
    }
    return rho;
}

/**
 * Prox of mu ||.||_p under ||b - beta||^2 (no 1/2 factor) written into out.
 * Returns ||out||_p. rho_hint is read and updated for general finite p.
 */
template <class InDerived, class OutDerived>
double prox_group_into(const Eigen::MatrixBase<InDerived>& b, double mu, const PNorm& p,
                       const ProxTolerances& tol, const Eigen::MatrixBase<OutDerived>& out_,
                       double* rho_hint = nullptr, bool force_general = false)
{
    auto& out = const_cast<Eigen::MatrixBase<OutDerived>&>(out_);
    const Eigen::Index n = b.size();
    if (mu == 0.0) {
        out = b;
        return p_norm_unchecked(b, p);
    }
    const double half = 0.5 * mu;

    if (n == 1 || p.is_one()) {
        for (Eigen::Index i = 0; i < n; ++i) out[i] = soft_threshold(b[i], half);
        return p_norm_unchecked(out, p);
    }

    const PNorm q = p.dual();
    const double bq = p_norm_unchecked(b, q);
    if (2.0 * bq <= mu) {
        out.setZero();
        if (rho_hint) *rho_hint = 0.0;
        return 0.0;
    }

    if (p.is_two() && !force_general) {
        out = b * (1.0 - half / bq);
        return bq * (1.0 - half / bq);
    }
    if (p.is_infinite()) {
        // Moreau: b minus its projection onto the l1 ball of radius mu/2.
        const double theta = l1_ball_threshold(b, half);
        for (Eigen::Index i = 0; i < n; ++i) out[i] = std::clamp(b[i], -theta, theta);
        return theta;
    }

    thread_local Eigen::VectorXd a, x;
    a = b.cwiseAbs();
    const double hint = rho_hint ? *rho_hint : 0.0;
    const double rho = prox_magnitudes_general(a, mu, p.value(), tol, x, hint);
    if (rho_hint) *rho_hint = rho;
    for (Eigen::Index i = 0; i < n; ++i) out[i] = b[i] < 0 ? -x[i] : (b[i] > 0 ? x[i] : 0.0);
    return p_norm_unchecked(out, p);
}

} // namespace detail

/**
 * argmin_beta ||b - beta||_2^2 + mu ||beta||_p.
 *
 * Returns zero exactly when 2 ||b||_q <= mu. Closed forms for p = 1
 * (soft threshold at mu/2), p = 2 (block soft threshold) and p = inf
 * (Moreau decomposition through an l1-ball projection).
 */
template <class Derived>
Eigen::VectorXd prox_group(const Eigen::MatrixBase<Derived>& b, double mu, const PNorm& p,
                           const ProxTolerances& tol = {})
{
    detail::require(mu >= 0.0 && std::isfinite(mu), "prox_group: mu must be finite and >= 0");
    detail::require(b.allFinite(), "prox_group: non-finite input");
    Eigen::VectorXd out(b.size());
    detail::prox_group_into(b, mu, p, tol, out);
    return out;
}

namespace detail {

/// Route used when the closed forms are bypassed; p = 2 goes through the general solver.
template <class Derived>
Eigen::VectorXd prox_group_general(const Eigen::MatrixBase<Derived>& b, double mu, const PNorm& p,
                                   const ProxTolerances& tol = {})
{
    Eigen::VectorXd out(b.size());
    prox_group_into(b, mu, p, tol, out, nullptr, true);
    return out;
}

/// sum_j ||prox(b_j, mu)||_p - kappa, with prox results left in out.
inline double shrunk_excess(const Coefficients& b, double mu, const PNorm& p, double kappa,
                            const ProxTolerances& tol, Eigen::VectorXd& out, std::vector<double>& hints)
{
    const auto& part = b.partition;
    double total = 0.0;
    for (std::size_t j = 0; j < part.group_count(); ++j) {
        const auto off = static_cast<Eigen::Index>(part.offset(j));
        const auto len = static_cast<Eigen::Index>(part.size(j));
        total += prox_group_into(b.values.segment(off, len), mu, p, tol, out.segment(off, len), &hints[j]);
    }
    return total - kappa;
}

} // namespace detail

/**
 * Euclidean projection of b onto { beta : sum_j ||beta_j||_p <= kappa }.
 *
 * Interior points (including the boundary) are returned unchanged with
 * mu = 0. Otherwise mu is found by interval bisection on (0, mu_max],
 * mu_max = 2 max_j ||b_j||_q, until sum_j ||beta_j(mu)||_p lies in
 * [kappa - outer_kappa_tol, kappa]. tol.search = illinois replaces the midpoint by
 * a damped secant point inside the same bracket.
 */
inline ProjectionReport project_l1p_ball(const Coefficients& b, const PNorm& p, double kappa,
                                         const ProxTolerances& tol = {})
{
    detail::require(kappa > 0.0 && std::isfinite(kappa), "project_l1p_ball: kappa must be positive");
    tol.validate();
    const double norm0 = mixed_norm(b, p);
    if (norm0 <= kappa) return {b, 0.0, 0, false};

    const auto& part = b.partition;
    const PNorm q = p.dual();
    double mu_max = 0.0;
    for (std::size_t j = 0; j < part.group_count(); ++j) {
        mu_max = std::max(mu_max, 2.0 * detail::p_norm_unchecked(b.group(j), q));
    }

    Eigen::VectorXd out(b.values.size());
    std::vector<double> hints(part.group_count(), 0.0);
    double g_hi = detail::shrunk_excess(b, mu_max, p, kappa, tol, out, hints);
    if (g_hi > 0.0) throw InternalError("project_l1p_ball: multiplier bracket is invalid");

    // Invariant: g(lo) > 0 > g(hi).
    double lo = 0.0, hi = mu_max;
    double g_lo = norm0 - kappa;
    int side = 0, stalled = 0;
    double width = hi - lo;
    for (int it = 1; it <= tol.max_outer_bisections; ++it) {
        double mu = 0.5 * (lo + hi);
        if (tol.search == MultiplierSearch::illinois && stalled < 3) {
            const double t = lo + (hi - lo) * g_lo / (g_lo - g_hi);
            if (t > lo && t < hi) mu = t;
        }
        if (mu <= lo || mu >= hi) {
            // Bracket exhausted at machine precision; return the feasible side.
            detail::shrunk_excess(b, hi, p, kappa, tol, out, hints);
            return {Coefficients(out, part), hi, it, true};
        }
        const double g = detail::shrunk_excess(b, mu, p, kappa, tol, out, hints);
        // Stop on the feasible side so that re-projecting is the identity.
        if (g <= 0.0 && g >= -tol.outer_kappa_tol) return {Coefficients(out, part), mu, it, true};
        if (g > 0) {
            lo = mu;
            g_lo = g;
            if (side == 1) g_hi *= 0.5;
            side = 1;
        } else {
            hi = mu;
            g_hi = g;
            if (side == -1) g_lo *= 0.5;
            side = -1;
        }
        if (hi - lo > 0.5 * width) ++stalled;
        else stalled = 0;
        width = hi - lo;
    }
    throw ConvergenceError("project_l1p_ball: bisection budget exhausted", out);
}

/// Evaluates sum_j ||prox(b_j, mu)||_p - kappa at a single multiplier.
inline double projection_excess(const Coefficients& b, double mu, const PNorm& p, double kappa,
                                const ProxTolerances& tol = {})
{
    Eigen::VectorXd out(b.values.size());
    std::vector<double> hints(b.partition.group_count(), 0.0);
    return detail::shrunk_excess(b, mu, p, kappa, tol, out, hints);
}

} // namespace grouplp
