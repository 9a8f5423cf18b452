#pragma once
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>
#include <Eigen/Core>
#include <grouplp/multitask.hpp>
#include <grouplp/solver.hpp>

namespace grouplp::experiment {

enum class Method { pooled, single_task, group_lasso };

inline std::string method_name(Method m, const PNorm& p)
{
    switch (m) {
    case Method::pooled: return "pooled";
    case Method::single_task: return "single_l1";
    case Method::group_lasso: return "group_l1_" + p.to_string();
    }
    return "unknown";
}

/**
 * Synthetic multi-task comparison: every (share_frac, seed, method) cell
 * generates its data, picks kappa on a validation slice of the training
 * data, refits on the full training data and reports the test error.
 *
 * The kappa grid is given in per-task units: a scale c maps to
 * kappa = c * m^(1/p) for the stacked l1,p problem (the mixed norm of m
 * tasks whose coefficient on a shared feature is c) and to kappa = c for
 * the single-task and pooled fits.
 */
struct SynthExperimentConfig
{
    SynthSpec base{};  ///< seed and share_frac are overridden per cell
    std::vector<std::uint64_t> seeds{};
    std::vector<double> share_fracs{1.0, 0.75, 0.5, 0.3};
    std::vector<PNorm> p_values{PNorm(1.0), PNorm(1.5), PNorm(2.0), PNorm(3.0), PNorm::infinity()};
    bool include_pooled = true;
    bool include_single_task = true;
    std::vector<double> kappa_scales{12.0, 8.0, 6.0, 4.0, 3.0, 2.0, 1.5, 1.0, 0.5};
    double validation_frac = 1.0 / 3.0;
    FitConfig fit{};
    unsigned jobs = 1;
};

struct Cell
{
    double share_frac = 1.0;
    std::uint64_t seed = 0;
    Method method = Method::group_lasso;
    PNorm p{1.0};
};

struct CellResult
{
    Cell cell;
    std::string status = "ok";
    double kappa = std::numeric_limits<double>::quiet_NaN();
    double kappa_scale = std::numeric_limits<double>::quiet_NaN();
    double validation_error = std::numeric_limits<double>::quiet_NaN();
    double mean_error = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> per_task_error;
    double lambda = std::numeric_limits<double>::quiet_NaN();  ///< max over the fits of the cell
    std::size_t active_groups = 0;                             ///< summed over the fits of the cell
    bool complete = false;                                     ///< all fits complete
    bool unique_certified = false;                             ///< all fits certified
    bool constraint_active = false;                            ///< all fits on the boundary
    long outer_iterations = 0;
    long inner_iterations = 0;
    double wall_ms = 0.0;  ///< not deterministic; kept out of the main table
};

/// Cells in deterministic order: share, seed, then method.
inline std::vector<Cell> enumerate_cells(const SynthExperimentConfig& cfg)
{
    std::vector<Cell> cells;
    for (double share : cfg.share_fracs) {
        for (auto seed : cfg.seeds) {
            if (cfg.include_pooled) cells.push_back({share, seed, Method::pooled, PNorm(1.0)});
            if (cfg.include_single_task) cells.push_back({share, seed, Method::single_task, PNorm(1.0)});
            for (const auto& p : cfg.p_values) cells.push_back({share, seed, Method::group_lasso, p});
        }
    }
    return cells;
}

namespace detail {

/// First `fit_rows` rows of every task, and the rest.
inline std::pair<TaskCollection, TaskCollection> split_rows(const TaskCollection& tasks, double validation_frac)
{
    TaskCollection fit, val;
    for (const auto& t : tasks.tasks) {
        const auto n = t.X.rows();
        auto nval = static_cast<Eigen::Index>(std::llround(validation_frac * static_cast<double>(n)));
        nval = std::clamp<Eigen::Index>(nval, 1, n - 1);
        const auto nfit = n - nval;
        fit.tasks.push_back({t.X.topRows(nfit), t.labels.head(nfit)});
        val.tasks.push_back({t.X.bottomRows(nval), t.labels.tail(nval)});
    }
    return {std::move(fit), std::move(val)};
}

/// Mean logistic loss of sign-label predictions; tie-breaker for kappa selection.
inline double validation_deviance(const Eigen::MatrixXd& B, const TaskCollection& val)
{
    double s = 0.0;
    long count = 0;
    const auto fam = GlmFamily::bernoulli();
    for (std::size_t k = 0; k < val.task_count(); ++k) {
        const auto& t = val.tasks[k];
        const Eigen::VectorXd nu = t.X * B.col(static_cast<Eigen::Index>(k));
        for (Eigen::Index i = 0; i < nu.size(); ++i) {
            s += fam.log_partition(nu[i]) - (t.labels[i] > 0 ? 1.0 : 0.0) * nu[i];
            ++count;
        }
    }
    return s / static_cast<double>(count);
}

inline double kappa_for(const Cell& c, double scale, std::size_t m)
{
    if (c.method != Method::group_lasso || c.p.is_infinite()) return scale;
    return scale * std::pow(static_cast<double>(m), 1.0 / c.p.value());
}

inline MultitaskFit fit_method(const Cell& c, const TaskCollection& tasks, const FitConfig& cfg,
                               const MultitaskFit* warm)
{
    switch (c.method) {
    case Method::pooled: return pooled_baseline(tasks, cfg);
    case Method::single_task: return single_task_baseline(tasks, cfg);
    case Method::group_lasso: {
        FitConfig g = cfg;
        g.p = c.p;
        if (warm && !warm->fits.empty()) return fit_multitask(tasks, g, &warm->fits.front().beta);
        return fit_multitask(tasks, g);
    }
    }
    throw InternalError("fit_method: unknown method");
}

} // namespace detail

inline CellResult run_cell(const SynthExperimentConfig& cfg, const Cell& cell)
{
    const auto t0 = std::chrono::steady_clock::now();
    CellResult out;
    out.cell = cell;
    try {
        SynthSpec spec = cfg.base;
        spec.seed = cell.seed;
        spec.share_frac = cell.share_frac;
        const auto data = generate_synthetic(spec);
        const auto [fit_part, val_part] = detail::split_rows(data.train, cfg.validation_frac);

        std::vector<double> scales = cfg.kappa_scales;
        // Ascending, so each warm start is feasible for the next, larger ball.
        std::sort(scales.begin(), scales.end());

        double best_err = std::numeric_limits<double>::infinity();
        double best_dev = std::numeric_limits<double>::infinity();
        double best_scale = std::numeric_limits<double>::quiet_NaN();
        std::optional<MultitaskFit> warm;
        for (double scale : scales) {
            FitConfig fc = cfg.fit;
            fc.kappa = detail::kappa_for(cell, scale, spec.m);
            MultitaskFit fit;
            try {
                fit = detail::fit_method(cell, fit_part, fc, warm ? &*warm : nullptr);
            } catch (const ConvergenceError&) {
                warm.reset();
                continue;
            }
            const double err = evaluate_error(fit.B_hat, val_part).mean;
            const double dev = detail::validation_deviance(fit.B_hat, val_part);
            if (err < best_err || (err == best_err && dev < best_dev)) {
                best_err = err;
                best_dev = dev;
                best_scale = scale;
            }
            warm = std::move(fit);
        }
        if (std::isnan(best_scale)) throw ConvergenceError("no kappa on the grid converged", Eigen::VectorXd());

        FitConfig fc = cfg.fit;
        fc.kappa = detail::kappa_for(cell, best_scale, spec.m);
        const auto fit = detail::fit_method(cell, data.train, fc, nullptr);
        const auto err = evaluate_error(fit.B_hat, data.test);

        out.kappa = fc.kappa;
        out.kappa_scale = best_scale;
        out.validation_error = best_err;
        out.mean_error = err.mean;
        out.per_task_error = err.per_task;
        out.lambda = 0.0;
        out.complete = out.unique_certified = out.constraint_active = true;
        for (const auto& f : fit.fits) {
            out.lambda = std::max(out.lambda, f.lambda);
            out.active_groups += f.active.size();
            out.complete = out.complete && f.complete;
            out.unique_certified = out.unique_certified && f.unique_certified;
            out.constraint_active = out.constraint_active && f.constraint_active;
            out.outer_iterations += f.outer_iterations;
            out.inner_iterations += f.inner_iteration_total;
        }
    } catch (const std::exception& e) {
        out.status = std::string("error: ") + e.what();
    }
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

/// Runs fn(i) for i in [0, count) on `jobs` threads; fn must be thread-safe.
template <class Fn>
void parallel_for(std::size_t count, unsigned jobs, Fn&& fn)
{
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < jobs; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

/// All cells, results in enumerate_cells order regardless of completion order.
inline std::vector<CellResult> run_synth_experiment(const SynthExperimentConfig& cfg)
{
    const auto cells = enumerate_cells(cfg);
    std::vector<CellResult> results(cells.size());
    parallel_for(cells.size(), cfg.jobs, [&](std::size_t i) { results[i] = run_cell(cfg, cells[i]); });
    return results;
}

struct SummaryRow
{
    double share_frac = 0.0;
    std::string method;
    std::size_t count = 0;  ///< successful cells
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double mean = 0.0;
    double sd = 0.0;
};

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q)
{
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Median, IQR, mean and sd of the test error per (share_frac, method).
inline std::vector<SummaryRow> summarize(const std::vector<CellResult>& results)
{
    std::vector<SummaryRow> rows;
    auto find = [&](double share, const std::string& name) -> SummaryRow* {
        for (auto& r : rows)
            if (r.share_frac == share && r.method == name) return &r;
        return nullptr;
    };
    std::vector<std::vector<double>> samples;
    for (const auto& r : results) {
        const auto name = method_name(r.cell.method, r.cell.p);
        SummaryRow* row = find(r.cell.share_frac, name);
        if (!row) {
            rows.push_back({r.cell.share_frac, name});
            samples.emplace_back();
            row = &rows.back();
        }
        if (r.status == "ok") samples[static_cast<std::size_t>(row - rows.data())].push_back(r.mean_error);
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& v = samples[i];
        std::sort(v.begin(), v.end());
        auto& row = rows[i];
        row.count = v.size();
        row.median = quantile_sorted(v, 0.5);
        row.q1 = quantile_sorted(v, 0.25);
        row.q3 = quantile_sorted(v, 0.75);
        double s = 0.0;
        for (double x : v) s += x;
        row.mean = v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - row.mean) * (x - row.mean);
        row.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    }
    return rows;
}

} // namespace grouplp::experiment
