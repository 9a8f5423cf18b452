#pragma once
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>
#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <grouplp/errors.hpp>
#include <grouplp/glm.hpp>
#include <grouplp/norms.hpp>
#include <grouplp/partition.hpp>
#include <grouplp/projection.hpp>

namespace grouplp {

/**
 * Step-size rule for the projected gradient inner loop.
 * Each iteration starts from a trial step (the Barzilai-Borwein step when
 * enabled and well defined, initial_step otherwise) and backtracks by
 * `backtrack` until the Armijo condition along the projection arc holds:
 *     l(beta+) <= l(beta) + sufficient_decrease * grad . (beta+ - beta).
 */
struct StepPolicy
{
    double initial_step = 1.0;
    double backtrack = 0.5;
    double sufficient_decrease = 1e-4;
    bool barzilai_borwein = true;
};

struct FitConfig
{
    double kappa = 1.0;
    PNorm p{2.0};
    StepPolicy step{};
    double inner_tol = 1e-9;           ///< relative objective decrease
    double lambda_tol = 1e-6;          ///< relative tolerance on dual-norm comparisons with lambda
    double active_tol = 1e-10;         ///< ||beta_j||_p above this puts j in the active set
    double completeness_tol = 1e-6;    ///< relative tolerance for membership in B
    int max_outer_iterations = 0;      ///< 0 selects 2 J + 10
    long max_inner_iterations = 200000;
    /// Inner projections run tighter than the standalone default so that
    /// projection error stays below the objective decrease near the optimum.
    ProxTolerances projection{1e-12, 1e-12, 200, 200, MultiplierSearch::illinois};
    std::optional<std::size_t> initial_group{};  ///< overrides the steepest-group start

    void validate() const
    {
        detail::require(kappa > 0 && std::isfinite(kappa), "FitConfig: kappa must be positive");
        detail::require(step.initial_step > 0 && step.backtrack > 0 && step.backtrack < 1,
                        "FitConfig: invalid step policy");
        detail::require(step.sufficient_decrease > 0 && step.sufficient_decrease < 1,
                        "FitConfig: sufficient_decrease must be in (0, 1)");
        detail::require(inner_tol > 0 && lambda_tol > 0 && active_tol > 0 && completeness_tol > 0,
                        "FitConfig: tolerances must be positive");
        detail::require(max_outer_iterations >= 0 && max_inner_iterations >= 1,
                        "FitConfig: invalid iteration limits");
        projection.validate();
    }
};

struct FitResult
{
    Coefficients beta;
    double lambda = 0.0;
    std::vector<std::size_t> active;            ///< A = { j : ||beta_j||_p > active_tol }
    std::vector<std::size_t> completeness_set;  ///< B = { j : ||h_j||_q >= lambda (1 - tol) }
    std::vector<double> dual_norms;             ///< ||h_j||_q at the solution
    bool complete = false;
    bool unique_certified = false;
    bool constraint_active = false;
    bool kkt_pass = false;
    double objective = 0.0;  ///< negative log-likelihood up to an additive constant
    int outer_iterations = 0;
    long inner_iteration_total = 0;
    std::string warning;
};

struct KktReport
{
    double lambda = 0.0;
    std::vector<double> dual_norms;
    bool pass = false;
};

namespace detail {

inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& cols)
{
    return X(Eigen::all, cols);
}

inline Eigen::SparseMatrix<double> select_columns(const Eigen::SparseMatrix<double>& X,
                                                  const std::vector<Eigen::Index>& cols)
{
    Eigen::SparseMatrix<double> out(X.rows(), static_cast<Eigen::Index>(cols.size()));
    Eigen::Index nnz = 0;
    for (auto c : cols) nnz += X.col(c).nonZeros();
    out.reserve(nnz);
    for (std::size_t k = 0; k < cols.size(); ++k) {
        out.startVec(static_cast<Eigen::Index>(k));
        for (Eigen::SparseMatrix<double>::InnerIterator it(X, cols[k]); it; ++it) {
            out.insertBack(it.row(), static_cast<Eigen::Index>(k)) = it.value();
        }
    }
    out.finalize();
    return out;
}

/// Column indices covered by the listed groups, in group order.
inline std::vector<Eigen::Index> group_columns(const GroupPartition& part, const std::vector<std::size_t>& groups)
{
    std::vector<Eigen::Index> cols;
    cols.reserve(part.dim_of(groups));
    for (auto j : groups) {
        for (std::size_t i = 0; i < part.size(j); ++i) cols.push_back(static_cast<Eigen::Index>(part.offset(j) + i));
    }
    return cols;
}

inline GroupPartition sub_partition(const GroupPartition& part, const std::vector<std::size_t>& groups)
{
    std::vector<std::size_t> sizes;
    sizes.reserve(groups.size());
    for (auto j : groups) sizes.push_back(part.size(j));
    return GroupPartition(std::move(sizes));
}

struct InnerStats
{
    long iterations = 0;
};

/**
 * Armijo projected gradient on a compact problem: all columns of X belong
 * to groups of `part`. beta must satisfy the constraint on entry.
 *
 * Stops when the relative objective decrease falls below inner_tol and the
 * step taken is small relative to the gradient (gradient mapping
 * criterion), or when the line search underflows at a stationary point.
 */
template <class M>
Eigen::VectorXd projected_gradient_compact(const GlmFamily& fam, const M& X, const Eigen::VectorXd& y,
                                           const GroupPartition& part, Eigen::VectorXd beta,
                                           const FitConfig& cfg, double gradient_floor, InnerStats& stats)
{
    const auto& sp = cfg.step;
    Eigen::VectorXd nu = X * beta;
    double f = loss_from_nu(fam, y, nu);
    Eigen::VectorXd g = X.transpose() * grad_nu(fam, y, nu);

    Eigen::VectorXd prev_beta, prev_g;
    bool have_prev = false;
    const double mapping_tol = 0.01 * cfg.lambda_tol;

    // Gradient mapping at the reference step, for points where the accepted
    // steps have shrunk to rounding level. Also stationary when the linear
    // model predicts a decrease the loss cannot resolve in double precision.
    auto stationary = [&](const Eigen::VectorXd& b0, const Eigen::VectorXd& g0, double f0, double gmax0, double rel) {
        Coefficients b(b0 - sp.initial_step * g0, part);
        const Eigen::VectorXd probe = project_l1p_ball(b, cfg.p, cfg.kappa, cfg.projection).beta.values;
        const double move = (probe - b0).cwiseAbs().maxCoeff();
        if (move <= rel * sp.initial_step * std::max(gmax0, gradient_floor) + 1e-12 * (1.0 + b0.cwiseAbs().maxCoeff()))
            return true;
        const double pred = g0.dot(probe - b0);
        return std::abs(pred) <= 1e3 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f0));
    };

    for (long it = 0; it < cfg.max_inner_iterations; ++it) {
        const double gmax = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
        if (gmax == 0.0) return beta;

        double s = sp.initial_step;
        if (sp.barzilai_borwein && have_prev) {
            const Eigen::VectorXd ds = beta - prev_beta;
            const Eigen::VectorXd dg = g - prev_g;
            const double sy = ds.dot(dg);
            if (sy > 0) s = std::clamp(ds.squaredNorm() / sy, 1e-12, 1e12);
        }

        bool accepted = false;
        Eigen::VectorXd cand, cand_nu;
        double f_new = f;
        while (s > 1e-30) {
            Coefficients b(beta - s * g, part);
            cand = project_l1p_ball(b, cfg.p, cfg.kappa, cfg.projection).beta.values;
            cand_nu = X * cand;
            f_new = loss_from_nu(fam, y, cand_nu);
            const double pred = g.dot(cand - beta);
            if (f_new <= f + sp.sufficient_decrease * pred) {
                accepted = true;
                break;
            }
            s *= sp.backtrack;
        }
        ++stats.iterations;

        if (!accepted) {
            // Line search exhausted: accept only if beta is stationary to projection accuracy.
            if (stationary(beta, g, f, gmax, 1e-6)) return beta;
            throw ConvergenceError("projected gradient: line search failed at a non-stationary point", beta);
        }

        const double decrease = f - f_new;
        const double step_inf = (cand - beta).cwiseAbs().maxCoeff();
        prev_beta = std::move(beta);
        prev_g = std::move(g);
        have_prev = true;
        beta = std::move(cand);
        nu = std::move(cand_nu);
        f = f_new;
        g = X.transpose() * grad_nu(fam, y, nu);

        const bool small_decrease = decrease <= cfg.inner_tol * (1.0 + std::abs(f));
        const bool small_step = step_inf <= mapping_tol * s * std::max(gmax, gradient_floor);
        if (small_decrease && small_step) return beta;
        if (small_decrease && s < 1e-6 * sp.initial_step && stationary(beta, g, f, g.cwiseAbs().maxCoeff(), mapping_tol))
            return beta;
    }
    throw ConvergenceError("projected gradient: inner iteration budget exhausted", beta);
}

inline double dual_norm_floor(const FitConfig& cfg, double lambda0) { return 1e-3 * cfg.lambda_tol * lambda0; }

/// Runs the compact solver; a ConvergenceError is rethrown with the iterate
/// scattered into the full coefficient vector `full`.
template <class M>
Eigen::VectorXd restricted_solve(const GlmFamily& fam, const M& XA, const Eigen::VectorXd& y, const GroupPartition& part,
                                 const std::vector<std::size_t>& active, const std::vector<Eigen::Index>& cols,
                                 const Eigen::VectorXd& bA, const FitConfig& config, double gradient_floor,
                                 InnerStats& stats, Eigen::VectorXd full)
{
    try {
        return projected_gradient_compact(fam, XA, y, sub_partition(part, active), bA, config, gradient_floor, stats);
    } catch (const ConvergenceError& e) {
        for (std::size_t k = 0; k < cols.size(); ++k) full[cols[k]] = e.last_iterate()[static_cast<Eigen::Index>(k)];
        throw ConvergenceError(e.what(), std::move(full));
    }
}

} // namespace detail

/**
 * Projected gradient over the groups in `active` only. Coordinates of
 * other groups are zero on entry and stay zero.
 */
template <class M>
Coefficients projected_gradient_restricted(const GlmFamily& fam, const GroupedDesign<M>& design,
                                           const Coefficients& beta, const std::vector<std::size_t>& active,
                                           const FitConfig& config)
{
    config.validate();
    const auto& part = design.partition();
    detail::require(beta.partition == part, "projected_gradient_restricted: partition mismatch");
    for (auto j : active) detail::require(j < part.group_count(), "projected_gradient_restricted: bad group index");

    Coefficients out = Coefficients::zeros(part);
    if (active.empty()) return out;
    const auto cols = detail::group_columns(part, active);
    const auto XA = detail::select_columns(design.X(), cols);
    Eigen::VectorXd bA(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) bA[static_cast<Eigen::Index>(k)] = beta.values[cols[k]];

    detail::InnerStats stats;
    const Eigen::VectorXd solved = detail::restricted_solve(fam, XA, design.y(), part, active, cols, bA, config, 0.0,
                                                            stats, beta.values);
    for (std::size_t k = 0; k < cols.size(); ++k) out.values[cols[k]] = solved[static_cast<Eigen::Index>(k)];
    return out;
}

/**
 * Optimality check of the constrained problem at beta.
 * lambda is the largest dual norm over active groups (over all groups if
 * none is active). With an inactive constraint the gradient must vanish.
 */
template <class M>
KktReport check_kkt(const GlmFamily& fam, const GroupedDesign<M>& design, const Coefficients& beta,
                    const FitConfig& config)
{
    const auto& part = design.partition();
    const PNorm q = config.p.dual();
    KktReport rep;
    rep.dual_norms = group_dual_norms(grad_beta(fam, design, beta), part, q);

    const Coefficients zero = Coefficients::zeros(part);
    const auto dn0 = group_dual_norms(grad_beta(fam, design, zero), part, q);
    const double lambda0 = dn0.empty() ? 0.0 : *std::max_element(dn0.begin(), dn0.end());
    const double floor = detail::dual_norm_floor(config, lambda0);

    std::vector<bool> is_active(part.group_count());
    bool any_active = false;
    double lam = 0.0;
    for (std::size_t j = 0; j < part.group_count(); ++j) {
        is_active[j] = detail::p_norm_unchecked(beta.group(j), config.p) > config.active_tol;
        if (is_active[j]) {
            any_active = true;
            lam = std::max(lam, rep.dual_norms[j]);
        }
    }
    const double dn_max = *std::max_element(rep.dual_norms.begin(), rep.dual_norms.end());
    if (!any_active) {
        rep.lambda = dn_max;
        rep.pass = dn_max <= floor;
        return rep;
    }
    rep.lambda = lam;
    const bool on_boundary = std::abs(mixed_norm(beta, config.p) - config.kappa) <= 1e-6 * (1.0 + config.kappa);
    if (!on_boundary) {
        rep.pass = dn_max <= std::max(floor, config.lambda_tol * lambda0);
        return rep;
    }
    rep.pass = true;
    for (std::size_t j = 0; j < part.group_count(); ++j) {
        const double v = rep.dual_norms[j];
        if (is_active[j] && v < lam * (1.0 - config.lambda_tol) - floor) rep.pass = false;
        if (v > lam * (1.0 + config.lambda_tol) + floor) rep.pass = false;
    }
    return rep;
}

/// B = { j : ||h_j||_q >= lambda (1 - completeness_tol) }; complete iff A = B.
inline std::pair<std::vector<std::size_t>, bool> check_completeness(const FitResult& result,
                                                                    const FitConfig& config)
{
    std::vector<std::size_t> B;
    for (std::size_t j = 0; j < result.dual_norms.size(); ++j) {
        if (result.dual_norms[j] >= result.lambda * (1.0 - config.completeness_tol)) B.push_back(j);
    }
    const bool complete = B == result.active;
    return {std::move(B), complete};
}

template <class M>
std::pair<std::vector<std::size_t>, bool> check_completeness(const GlmFamily&, const GroupedDesign<M>&,
                                                             const FitResult& result, const FitConfig& config)
{
    return check_completeness(result, config);
}

/**
 * Uniqueness certificate: complete and the active groups span at most n
 * coordinates. Assumes every n x n submatrix of X has full rank; that
 * hypothesis is not checked.
 */
template <class M>
bool check_uniqueness(const GroupedDesign<M>& design, const FitResult& result)
{
    if (!result.complete) return false;
    const auto s = design.partition().dim_of(result.active);
    return s <= static_cast<std::size_t>(design.n());
}

/**
 * Active-set solver for  min l(beta)  s.t.  sum_j ||beta_j||_p <= kappa.
 *
 * A starts from the group with the largest dual norm at zero (or the
 * support of `warm_start`). Each outer iteration optimizes over A by
 * projected gradient, drops groups that shrank to zero, and adds the
 * single largest violator of ||h_j||_q <= lambda.
 */
template <class M>
FitResult fit_active_set(const GlmFamily& fam, const GroupedDesign<M>& design, const FitConfig& config,
                         const Coefficients* warm_start = nullptr)
{
    config.validate();
    const auto& part = design.partition();
    const std::size_t J = part.group_count();
    const PNorm q = config.p.dual();
    const int max_outer = config.max_outer_iterations > 0 ? config.max_outer_iterations
                                                          : static_cast<int>(2 * J + 10);

    FitResult res;
    res.beta = Coefficients::zeros(part);
    Eigen::VectorXd& beta = res.beta.values;

    const Eigen::VectorXd r0 = grad_nu(fam, design.y(), Eigen::VectorXd::Zero(design.n()));
    const auto dn0 = group_dual_norms(design.X().transpose() * r0, part, q);
    const double lambda0 = *std::max_element(dn0.begin(), dn0.end());
    const double floor = detail::dual_norm_floor(config, lambda0);

    std::vector<std::size_t> A;
    if (warm_start && warm_start->values.cwiseAbs().maxCoeff() > 0.0) {
        detail::require(warm_start->partition == part, "fit_active_set: warm start partition mismatch");
        Coefficients ws = *warm_start;
        const double wn = mixed_norm(ws, config.p);
        if (wn > config.kappa) ws.values *= config.kappa / wn;
        beta = ws.values;
        for (std::size_t j = 0; j < J; ++j) {
            if (detail::p_norm_unchecked(ws.group(j), config.p) > 0.0) A.push_back(j);
        }
    } else {
        std::size_t j0 = static_cast<std::size_t>(std::max_element(dn0.begin(), dn0.end()) - dn0.begin());
        if (config.initial_group) {
            detail::require(*config.initial_group < J, "fit_active_set: initial_group out of range");
            j0 = *config.initial_group;
        }
        if (lambda0 == 0.0) {
            // Zero is already stationary for the unconstrained loss.
            res.dual_norms = dn0;
            res.objective = loss_from_nu(fam, design.y(), Eigen::VectorXd::Zero(design.n()));
            res.kkt_pass = true;
            res.warning = "gradient vanishes at zero; constraint inactive";
            auto [B, complete] = check_completeness(res, config);
            res.completeness_set = std::move(B);
            res.complete = complete;
            res.unique_certified = check_uniqueness(design, res);
            return res;
        }
        A.push_back(j0);
        const Eigen::VectorXd h0 = design.X().transpose() * r0;
        auto seg = res.beta.group(j0);
        const auto hj = h0.segment(static_cast<Eigen::Index>(part.offset(j0)), static_cast<Eigen::Index>(part.size(j0)));
        const double hn = detail::p_norm_unchecked(hj, config.p);
        if (hn > 0) seg = -hj * (config.kappa / hn);
        else seg.setConstant(config.kappa / std::pow(static_cast<double>(seg.size()), config.p.is_infinite() ? 0.0 : 1.0 / config.p.value()));
    }

    std::vector<double> dn;
    double lam = 0.0;
    int outer = 0;
    for (;;) {
        if (++outer > max_outer) {
            throw ConvergenceError("fit_active_set: outer iteration budget exhausted", beta);
        }
        std::sort(A.begin(), A.end());

        // Step B: optimize over A.
        const auto cols = detail::group_columns(part, A);
        const auto XA = detail::select_columns(design.X(), cols);
        Eigen::VectorXd bA(static_cast<Eigen::Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) bA[static_cast<Eigen::Index>(k)] = beta[cols[k]];
        detail::InnerStats stats;
        bA = detail::restricted_solve(fam, XA, design.y(), part, A, cols, bA, config, lambda0, stats, beta);
        res.inner_iteration_total += stats.iterations;
        for (std::size_t k = 0; k < cols.size(); ++k) beta[cols[k]] = bA[static_cast<Eigen::Index>(k)];

        std::vector<std::size_t> A_plus;
        for (auto j : A) {
            if (detail::p_norm_unchecked(res.beta.group(j), config.p) > config.active_tol) A_plus.push_back(j);
            else res.beta.group(j).setZero();
        }

        const Eigen::VectorXd nu = design.X() * beta;
        const Eigen::VectorXd h = design.X().transpose() * grad_nu(fam, design.y(), nu);
        dn = group_dual_norms(h, part, q);
        lam = 0.0;
        if (A_plus.empty()) lam = *std::max_element(dn.begin(), dn.end());
        for (auto j : A_plus) lam = std::max(lam, dn[j]);
        A = std::move(A_plus);

        // Step C: largest violator outside A.
        std::vector<bool> in_A(J, false);
        for (auto j : A) in_A[j] = true;
        std::size_t worst = J;
        double worst_val = lam * (1.0 + config.lambda_tol) + floor;
        for (std::size_t j = 0; j < J; ++j) {
            if (!in_A[j] && dn[j] > worst_val) {
                worst_val = dn[j];
                worst = j;
            }
        }
        if (worst == J) break;
        A.push_back(worst);
    }

    // Step D: diagnostics.
    res.active = A;
    res.lambda = lam;
    res.dual_norms = std::move(dn);
    res.outer_iterations = outer;
    res.objective = negative_log_likelihood(fam, design, res.beta);
    const double mn = mixed_norm(res.beta, config.p);
    res.constraint_active = std::abs(mn - config.kappa) <= std::max(config.projection.outer_kappa_tol, 1e-12 * config.kappa);
    if (!res.constraint_active) {
        res.warning = "constraint inactive at the solution (kappa above kappa0); uniqueness reduces to d <= n";
    }
    auto [B, complete] = check_completeness(res, config);
    res.completeness_set = std::move(B);
    res.complete = complete;
    res.unique_certified = check_uniqueness(design, res);
    res.kkt_pass = check_kkt(fam, design, res.beta, config).pass;
    return res;
}

struct PathPoint
{
    double kappa = 0.0;
    std::optional<FitResult> result;
    std::string error;
};

/**
 * Fits along a non-increasing kappa grid, warm-starting each point from the
 * previous solution scaled into the new ball. A failure at one point is
 * recorded and the path continues.
 */
template <class M>
std::vector<PathPoint> regularization_path(const GlmFamily& fam, const GroupedDesign<M>& design,
                                           const std::vector<double>& kappa_grid, const FitConfig& config)
{
    for (std::size_t i = 1; i < kappa_grid.size(); ++i) {
        detail::require(kappa_grid[i] <= kappa_grid[i - 1], "regularization_path: kappa grid must be non-increasing");
    }
    std::vector<PathPoint> out;
    out.reserve(kappa_grid.size());
    std::optional<Coefficients> warm;
    for (double kappa : kappa_grid) {
        PathPoint pt;
        pt.kappa = kappa;
        FitConfig cfg = config;
        cfg.kappa = kappa;
        try {
            pt.result = fit_active_set(fam, design, cfg, warm ? &*warm : nullptr);
            warm = pt.result->beta;
        } catch (const ConvergenceError& e) {
            pt.error = e.what();
        } catch (const InvalidInput& e) {
            pt.error = e.what();
        }
        out.push_back(std::move(pt));
    }
    return out;
}

} // namespace grouplp
