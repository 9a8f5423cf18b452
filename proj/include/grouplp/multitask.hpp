#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <grouplp/errors.hpp>
#include <grouplp/glm.hpp>
#include <grouplp/solver.hpp>

namespace grouplp {

/// One task: rows of X with labels in {-1, +1}.
struct Task
{
    Eigen::MatrixXd X;
    Eigen::VectorXd labels;
};

struct TaskCollection
{
    std::vector<Task> tasks;

    std::size_t task_count() const noexcept { return tasks.size(); }
    std::size_t dim() const { return tasks.empty() ? 0 : static_cast<std::size_t>(tasks.front().X.cols()); }
    Eigen::Index total_rows() const
    {
        Eigen::Index n = 0;
        for (const auto& t : tasks) n += t.X.rows();
        return n;
    }

    void validate() const
    {
        detail::require(!tasks.empty(), "TaskCollection: no tasks");
        const auto d = tasks.front().X.cols();
        detail::require(d >= 1, "TaskCollection: empty feature dimension");
        for (const auto& t : tasks) {
            detail::require(t.X.cols() == d, "TaskCollection: inconsistent feature dimension across tasks");
            detail::require(t.X.rows() >= 1, "TaskCollection: empty task");
            detail::require(t.labels.size() == t.X.rows(), "TaskCollection: label count mismatch");
            for (Eigen::Index i = 0; i < t.labels.size(); ++i) {
                detail::require(t.labels[i] == 1.0 || t.labels[i] == -1.0, "TaskCollection: labels must be in {-1, +1}");
            }
        }
    }
};

struct GroundTruth
{
    Eigen::MatrixXd B;                             ///< d x m
    std::vector<std::size_t> relevant;             ///< union of the task supports
    std::vector<std::vector<std::size_t>> supports;
};

struct SynthSpec
{
    std::uint64_t seed = 0;
    std::size_t d = 100;
    std::size_t m = 10;
    std::size_t n = 100;
    double relevant_frac = 0.02;
    double share_frac = 1.0;
    double test_frac = 1.0 / 3.0;

    std::size_t support_size() const
    {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(relevant_frac * static_cast<double>(d))));
    }
    std::size_t core_size() const
    {
        return static_cast<std::size_t>(std::llround(share_frac * static_cast<double>(support_size())));
    }
    std::size_t test_rows() const { return static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(n))); }
    std::size_t train_rows() const { return n - test_rows(); }

    void validate() const
    {
        detail::require(d >= 1 && m >= 1 && n >= 1, "SynthSpec: d, m, n must be positive");
        detail::require(relevant_frac > 0 && relevant_frac <= 1, "SynthSpec: relevant_frac must be in (0, 1]");
        detail::require(share_frac > 0 && share_frac <= 1, "SynthSpec: share_frac must be in (0, 1]");
        detail::require(test_frac > 0 && test_frac < 1, "SynthSpec: test_frac must be in (0, 1)");
        detail::require(train_rows() >= 1 && test_rows() >= 1, "SynthSpec: n too small for the split");
        detail::require(support_size() - core_size() <= d - core_size(),
                        "SynthSpec: not enough off-core features for the task supports");
    }
};

struct SyntheticData
{
    TaskCollection train;
    TaskCollection test;
    GroundTruth truth;
};

/**
 * Stacks m tasks into one grouped problem over the d*m coefficients.
 * Column j*m + k holds feature j of task k, so group j (size m) collects
 * feature j across tasks. Rows of task k only touch task k's columns.
 */
inline GroupedDesign<Eigen::SparseMatrix<double>> build_multitask_problem(const TaskCollection& tasks)
{
    tasks.validate();
    const auto m = static_cast<Eigen::Index>(tasks.task_count());
    const auto d = static_cast<Eigen::Index>(tasks.dim());
    const Eigen::Index n = tasks.total_rows();

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(n * d));
    Eigen::VectorXd y(n);
    Eigen::Index row = 0;
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& t = tasks.tasks[static_cast<std::size_t>(k)];
        for (Eigen::Index i = 0; i < t.X.rows(); ++i, ++row) {
            for (Eigen::Index j = 0; j < d; ++j) {
                if (t.X(i, j) != 0.0) trip.emplace_back(row, j * m + k, t.X(i, j));
            }
            y[row] = t.labels[i] > 0 ? 1.0 : 0.0;
        }
    }
    Eigen::SparseMatrix<double> X(n, d * m);
    X.setFromTriplets(trip.begin(), trip.end());
    X.makeCompressed();
    return {std::move(X), GroupPartition::uniform(static_cast<std::size_t>(d), static_cast<std::size_t>(m)), std::move(y)};
}

/// d x m parameter matrix from the stacked coefficient layout.
inline Eigen::MatrixXd stacked_to_matrix(const Eigen::VectorXd& beta, std::size_t d, std::size_t m)
{
    detail::require(static_cast<std::size_t>(beta.size()) == d * m, "stacked_to_matrix: size mismatch");
    Eigen::MatrixXd B(d, m);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < m; ++k) B(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = beta[static_cast<Eigen::Index>(j * m + k)];
    return B;
}

namespace detail {

inline std::vector<std::size_t> sample_without_replacement(boost::random::mt19937_64& rng,
                                                           std::vector<std::size_t> pool, std::size_t count)
{
    // Partial Fisher-Yates; the first `count` entries are the sample.
    for (std::size_t i = 0; i < count; ++i) {
        boost::random::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

inline Task draw_task(boost::random::mt19937_64& rng, const Eigen::VectorXd& beta, std::size_t rows)
{
    boost::random::normal_distribution<double> normal(0.0, 1.0);
    const auto d = beta.size();
    Task t{Eigen::MatrixXd(static_cast<Eigen::Index>(rows), d), Eigen::VectorXd(static_cast<Eigen::Index>(rows))};
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(rows); ++i) {
        for (;;) {
            for (Eigen::Index j = 0; j < d; ++j) t.X(i, j) = normal(rng);
            const double s = t.X.row(i).dot(beta);
            if (s != 0.0) {
                t.labels[i] = s > 0 ? 1.0 : -1.0;
                break;
            }
        }
    }
    return t;
}

} // namespace detail

/**
 * Synthetic shared-sparsity multi-task data.
 *
 * Each task has support_size() relevant features: a common core of
 * core_size() features shared by every task, plus a per-task remainder
 * drawn without replacement from the off-core features. B has N(0, 1)
 * entries on the supports, zeros elsewhere. Inputs are N(0, 1) and labels
 * are sign(beta_k . x); exact zeros are redrawn. The test split is a fresh
 * draw of test_rows() examples per task.
 */
inline SyntheticData generate_synthetic(const SynthSpec& spec)
{
    spec.validate();
    boost::random::mt19937_64 rng(spec.seed);
    boost::random::normal_distribution<double> normal(0.0, 1.0);
    const auto d = spec.d, m = spec.m;

    std::vector<std::size_t> all(d);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto core = detail::sample_without_replacement(rng, all, spec.core_size());
    std::vector<std::size_t> off_core;
    std::set_difference(all.begin(), all.end(), core.begin(), core.end(), std::back_inserter(off_core));

    SyntheticData out;
    auto& truth = out.truth;
    truth.B.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m));
    for (Eigen::Index k = 0; k < truth.B.cols(); ++k)
        for (Eigen::Index j = 0; j < truth.B.rows(); ++j) truth.B(j, k) = normal(rng);

    std::vector<bool> relevant(d, false);
    Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) {
        auto rest = detail::sample_without_replacement(rng, off_core, spec.support_size() - core.size());
        std::vector<std::size_t> s;
        std::merge(core.begin(), core.end(), rest.begin(), rest.end(), std::back_inserter(s));
        for (auto j : s) {
            mask(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = 1.0;
            relevant[j] = true;
        }
        truth.supports.push_back(std::move(s));
    }
    truth.B = truth.B.cwiseProduct(mask);
    for (std::size_t j = 0; j < d; ++j)
        if (relevant[j]) truth.relevant.push_back(j);

    for (std::size_t k = 0; k < m; ++k)
        out.train.tasks.push_back(detail::draw_task(rng, truth.B.col(static_cast<Eigen::Index>(k)), spec.train_rows()));
    for (std::size_t k = 0; k < m; ++k)
        out.test.tasks.push_back(detail::draw_task(rng, truth.B.col(static_cast<Eigen::Index>(k)), spec.test_rows()));
    return out;
}

struct ErrorReport
{
    std::vector<double> per_task;
    double mean = 0.0;
};

/// Misclassification of sign(beta_k . x), with sign(0) read as +1.
inline ErrorReport evaluate_error(const Eigen::MatrixXd& B_hat, const TaskCollection& test)
{
    detail::require(!test.tasks.empty(), "evaluate_error: no tasks");
    detail::require(static_cast<std::size_t>(B_hat.cols()) == test.task_count() &&
                        static_cast<std::size_t>(B_hat.rows()) == test.dim(),
                    "evaluate_error: parameter matrix does not match tasks");
    ErrorReport rep;
    for (std::size_t k = 0; k < test.task_count(); ++k) {
        const auto& t = test.tasks[k];
        detail::require(t.X.rows() >= 1, "evaluate_error: empty test task");
        const Eigen::VectorXd s = t.X * B_hat.col(static_cast<Eigen::Index>(k));
        long wrong = 0;
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            const double pred = s[i] >= 0 ? 1.0 : -1.0;
            if (pred != t.labels[i]) ++wrong;
        }
        rep.per_task.push_back(static_cast<double>(wrong) / static_cast<double>(s.size()));
    }
    rep.mean = std::accumulate(rep.per_task.begin(), rep.per_task.end(), 0.0) / static_cast<double>(rep.per_task.size());
    return rep;
}

struct MultitaskFit
{
    Eigen::MatrixXd B_hat;         ///< d x m
    std::vector<FitResult> fits;   ///< one per independent problem solved
};

/// l1,p Group-Lasso over the stacked problem; p and kappa come from config.
inline MultitaskFit fit_multitask(const TaskCollection& tasks, const FitConfig& config,
                                  const Coefficients* warm_start = nullptr)
{
    const auto design = build_multitask_problem(tasks);
    auto fit = fit_active_set(GlmFamily::bernoulli(), design, config, warm_start);
    MultitaskFit out{stacked_to_matrix(fit.beta.values, tasks.dim(), tasks.task_count()), {}};
    out.fits.push_back(std::move(fit));
    return out;
}

inline GroupedDesign<Eigen::MatrixXd> single_task_design(const Task& t)
{
    return {t.X, GroupPartition::singletons(static_cast<std::size_t>(t.X.cols())), labels_to_bernoulli(t.labels)};
}

/// All rows in one task with d coefficients, l1-constrained, broadcast to every task.
inline MultitaskFit pooled_baseline(const TaskCollection& tasks, const FitConfig& config)
{
    tasks.validate();
    const auto d = static_cast<Eigen::Index>(tasks.dim());
    Task pooled{Eigen::MatrixXd(tasks.total_rows(), d), Eigen::VectorXd(tasks.total_rows())};
    Eigen::Index row = 0;
    for (const auto& t : tasks.tasks) {
        pooled.X.middleRows(row, t.X.rows()) = t.X;
        pooled.labels.segment(row, t.X.rows()) = t.labels;
        row += t.X.rows();
    }
    FitConfig cfg = config;
    cfg.p = PNorm(1.0);
    auto fit = fit_active_set(GlmFamily::bernoulli(), single_task_design(pooled), cfg);
    MultitaskFit out;
    out.B_hat = fit.beta.values.replicate(1, static_cast<Eigen::Index>(tasks.task_count()));
    out.fits.push_back(std::move(fit));
    return out;
}

/// Independent l1-constrained logistic fits, one column of B_hat per task.
inline MultitaskFit single_task_baseline(const TaskCollection& tasks, const FitConfig& config)
{
    tasks.validate();
    FitConfig cfg = config;
    cfg.p = PNorm(1.0);
    MultitaskFit out;
    out.B_hat.resize(static_cast<Eigen::Index>(tasks.dim()), static_cast<Eigen::Index>(tasks.task_count()));
    for (std::size_t k = 0; k < tasks.task_count(); ++k) {
        auto fit = fit_active_set(GlmFamily::bernoulli(), single_task_design(tasks.tasks[k]), cfg);
        out.B_hat.col(static_cast<Eigen::Index>(k)) = fit.beta.values;
        out.fits.push_back(std::move(fit));
    }
    return out;
}

} // namespace grouplp
