#pragma once
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <grouplp/cli/config.hpp>
#include <grouplp/cli/io.hpp>
#include <grouplp/experiment.hpp>
#include <grouplp/grouplp.hpp>
#include <grouplp/oracle.hpp>

namespace grouplp::cli {

enum ExitCode : int { ok = 0, usage_error = 1, convergence_failure = 2, io_error = 3 };

namespace detail {

/// Writes to `path`, or to stdout when empty.
inline void emit(const std::string& path, const std::string& text)
{
    if (path.empty()) {
        std::cout << text;
        std::cout.flush();
    } else {
        write_text(path, text);
    }
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Commas and line breaks would break a CSV cell.
inline std::string csv_safe(std::string s)
{
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

inline json sparse_beta(const Coefficients& beta, const std::vector<std::string>& names)
{
    json groups = json::array();
    for (std::size_t j = 0; j < beta.partition.group_count(); ++j) {
        const auto g = beta.group(j);
        if (g.cwiseAbs().maxCoeff() == 0.0) continue;
        json offsets = json::array(), values = json::array();
        for (Eigen::Index k = 0; k < g.size(); ++k) {
            if (g[k] == 0.0) continue;
            offsets.push_back(k);
            values.push_back(g[k]);
        }
        groups.push_back({{"group", j}, {"name", names[j]}, {"start", beta.partition.offset(j)},
                          {"offsets", offsets}, {"values", values}});
    }
    return groups;
}

inline double median_of(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    return experiment::quantile_sorted(v, 0.5);
}

} // namespace detail

// ---- fit ------------------------------------------------------------------

struct FitOptions
{
    std::string design;    ///< CSV, header row of column names
    std::string response;  ///< single-column CSV
    std::string groups;    ///< name,start,size; singletons when empty
    std::string tasks;     ///< multi-task CSV (task,label,x...); replaces design/response/groups
    std::string config;
    std::optional<std::string> p;
    std::optional<double> kappa;
    std::optional<std::string> family;
    std::string output;
};

inline FitCommandConfig resolve_fit_config(const FitOptions& o)
{
    FitCommandConfig c = o.config.empty() ? FitCommandConfig{} : fit_command_config_from_json(load_config(o.config));
    if (o.p) {
        try {
            c.fit.p = PNorm::parse(*o.p);
        } catch (const InvalidInput& e) {
            throw ParseError(std::string("--p: ") + e.what());
        }
    }
    if (o.kappa) c.fit.kappa = *o.kappa;
    if (o.family) {
        try {
            c.family = GlmFamily::parse(*o.family);
        } catch (const InvalidInput& e) {
            throw ParseError(std::string("--family: ") + e.what());
        }
    }
    if (!o.tasks.empty()) c.family = GlmFamily::bernoulli();
    try {
        c.fit.validate();
    } catch (const InvalidInput& e) {
        throw ParseError(e.what());
    }
    return c;
}

inline int cmd_fit(const FitOptions& o)
{
    const auto cfg = resolve_fit_config(o);

    std::optional<GroupedDesign<Eigen::MatrixXd>> dense;
    std::optional<GroupedDesign<Eigen::SparseMatrix<double>>> stacked;
    std::vector<std::string> names;
    std::size_t tasks_m = 0;
    if (!o.tasks.empty()) {
        const auto tc = read_tasks_csv(o.tasks);
        try {
            stacked.emplace(build_multitask_problem(tc));
        } catch (const InvalidInput& e) {
            throw ParseError(o.tasks + ": " + e.what());
        }
        names = multitask_groups(tc.dim(), tc.task_count()).names;
        tasks_m = tc.task_count();
    } else {
        if (o.design.empty() || o.response.empty()) throw ParseError("fit: --design and --response (or --tasks) are required");
        const auto table = read_csv(o.design);
        Eigen::MatrixXd X = read_matrix_csv(o.design);
        Eigen::VectorXd y = read_vector_csv(o.response);
        if (y.size() != X.rows())
            throw ParseError(o.response + ": " + std::to_string(y.size()) + " responses for " + std::to_string(X.rows()) +
                             " design rows in " + o.design);
        if (cfg.family.tag == Family::bernoulli) {
            try {
                y = labels_to_bernoulli(y);
            } catch (const InvalidInput& e) {
                throw ParseError(o.response + ": " + e.what());
            }
        }
        GroupSpec g;
        if (o.groups.empty()) {
            g.partition = GroupPartition::singletons(static_cast<std::size_t>(X.cols()));
            g.names = table.header;
        } else {
            g = read_groups(o.groups, static_cast<std::size_t>(X.cols()));
        }
        names = g.names;
        try {
            dense.emplace(std::move(X), g.partition, std::move(y));
        } catch (const InvalidInput& e) {
            throw ParseError(o.design + ": " + e.what());
        }
    }

    const json config = to_json(cfg);
    json out = {{"command", "fit"}, {"config", config}, {"config_hash", config_hash(config)}};
    if (tasks_m) out["tasks"] = tasks_m;
    const auto n = dense ? dense->n() : stacked->n();
    const auto d = dense ? dense->d() : stacked->d();
    out["n"] = n;
    out["d"] = d;
    out["group_count"] = names.size();

    try {
        const FitResult r = dense ? fit_active_set(cfg.family, *dense, cfg.fit) : fit_active_set(cfg.family, *stacked, cfg.fit);
        out["status"] = "converged";
        out["lambda"] = r.lambda;
        out["objective"] = r.objective;
        out["mixed_norm"] = mixed_norm(r.beta, cfg.fit.p);
        out["constraint_active"] = r.constraint_active;
        out["kkt_pass"] = r.kkt_pass;
        out["complete"] = r.complete;
        out["unique_certified"] = r.unique_certified;
        out["active"] = r.active;
        out["completeness_set"] = r.completeness_set;
        out["outer_iterations"] = r.outer_iterations;
        out["inner_iterations"] = r.inner_iteration_total;
        out["warning"] = r.warning;
        out["beta"] = detail::sparse_beta(r.beta, names);
        detail::emit(o.output, detail::dump(out));
        return ExitCode::ok;
    } catch (const ConvergenceError& e) {
        out["status"] = "convergence_failure";
        out["message"] = e.what();
        const auto& part = dense ? dense->partition() : stacked->partition();
        if (static_cast<std::size_t>(e.last_iterate().size()) == part.dim())
            out["beta"] = detail::sparse_beta(Coefficients(e.last_iterate(), part), names);
        detail::emit(o.output, detail::dump(out));
        std::cerr << "grouplp fit: " << e.what() << "\n";
        return ExitCode::convergence_failure;
    }
}

// ---- project --------------------------------------------------------------

struct ProjectOptions
{
    std::string vector;  ///< single-column CSV
    std::string groups;
    std::string config;
    std::optional<std::string> p;
    std::optional<double> kappa;
    std::string output;
};

inline int cmd_project(const ProjectOptions& o)
{
    ProjectCommandConfig cfg = o.config.empty() ? ProjectCommandConfig{} : project_command_config_from_json(load_config(o.config));
    if (o.p) {
        try {
            cfg.p = PNorm::parse(*o.p);
        } catch (const InvalidInput& e) {
            throw ParseError(std::string("--p: ") + e.what());
        }
    }
    if (o.kappa) cfg.kappa = *o.kappa;
    if (!(cfg.kappa > 0)) throw ParseError("--kappa: must be positive");

    const Eigen::VectorXd v = read_vector_csv(o.vector);
    GroupSpec g;
    if (o.groups.empty()) {
        g.partition = GroupPartition::uniform(1, static_cast<std::size_t>(v.size()));
        g.names = {"g0"};
    } else {
        g = read_groups(o.groups, static_cast<std::size_t>(v.size()));
    }
    const Coefficients b(v, g.partition);

    const json config = to_json(cfg);
    json out = {{"command", "project"}, {"config", config}, {"config_hash", config_hash(config)}};
    try {
        const auto rep = project_l1p_ball(b, cfg.p, cfg.kappa, cfg.tolerances);
        out["status"] = "converged";
        out["mu"] = rep.mu;
        out["outer_iterations"] = rep.outer_iterations;
        out["constraint_active"] = rep.constraint_active;
        out["input_mixed_norm"] = mixed_norm(b, cfg.p);
        out["mixed_norm"] = mixed_norm(rep.beta, cfg.p);
        out["beta"] = std::vector<double>(rep.beta.values.data(), rep.beta.values.data() + rep.beta.values.size());
        detail::emit(o.output, detail::dump(out));
        return ExitCode::ok;
    } catch (const ConvergenceError& e) {
        out["status"] = "convergence_failure";
        out["message"] = e.what();
        detail::emit(o.output, detail::dump(out));
        std::cerr << "grouplp project: " << e.what() << "\n";
        return ExitCode::convergence_failure;
    }
}

// ---- synth-experiment -----------------------------------------------------

struct SynthOptions
{
    std::string config;
    std::optional<std::uint64_t> seed;  ///< replaces the seed list
    unsigned jobs = 1;
    std::string output;  ///< results CSV; summary and timings go next to it
};

inline std::string results_table(const std::vector<experiment::CellResult>& results, const json& config)
{
    const auto hash = config_hash(config);
    std::string s = "# config: " + config.dump() + "\n";
    s += "config_hash,seed,share_frac,method,p,status,kappa_scale,kappa,validation_error,mean_error,per_task_error,"
         "lambda,active_groups,complete,unique_certified,constraint_active,outer_iterations,inner_iterations\n";
    for (const auto& r : results) {
        std::string per_task;
        for (std::size_t k = 0; k < r.per_task_error.size(); ++k) per_task += (k ? ";" : "") + format_double(r.per_task_error[k]);
        s += hash + "," + std::to_string(r.cell.seed) + "," + format_double(r.cell.share_frac) + "," +
             experiment::method_name(r.cell.method, r.cell.p) + "," + r.cell.p.to_string() + "," +
             detail::csv_safe(r.status) + "," + format_double(r.kappa_scale) + "," + format_double(r.kappa) + "," +
             format_double(r.validation_error) + "," + format_double(r.mean_error) + "," + per_task + "," +
             format_double(r.lambda) + "," + std::to_string(r.active_groups) + "," + (r.complete ? "1" : "0") + "," +
             (r.unique_certified ? "1" : "0") + "," + (r.constraint_active ? "1" : "0") + "," +
             std::to_string(r.outer_iterations) + "," + std::to_string(r.inner_iterations) + "\n";
    }
    return s;
}

inline std::string summary_table(const std::vector<experiment::SummaryRow>& rows, const json& config)
{
    const auto hash = config_hash(config);
    std::string s = "# config: " + config.dump() + "\n";
    s += "config_hash,share_frac,method,count,median,q1,q3,mean,sd\n";
    for (const auto& r : rows) {
        s += hash + "," + format_double(r.share_frac) + "," + r.method + "," + std::to_string(r.count) + "," +
             format_double(r.median) + "," + format_double(r.q1) + "," + format_double(r.q3) + "," +
             format_double(r.mean) + "," + format_double(r.sd) + "\n";
    }
    return s;
}

inline std::string timings_table(const std::vector<experiment::CellResult>& results, const json& config)
{
    const auto hash = config_hash(config);
    std::string s = "config_hash,seed,share_frac,method,wall_ms\n";
    for (const auto& r : results) {
        s += hash + "," + std::to_string(r.cell.seed) + "," + format_double(r.cell.share_frac) + "," +
             experiment::method_name(r.cell.method, r.cell.p) + "," + format_double(r.wall_ms) + "\n";
    }
    return s;
}

inline experiment::SynthExperimentConfig resolve_synth_config(const SynthOptions& o)
{
    auto cfg = o.config.empty() ? synth_defaults() : synth_config_from_json(load_config(o.config));
    if (o.seed) cfg.seeds = {*o.seed};
    cfg.jobs = std::max(1u, o.jobs);
    return cfg;
}

/// Exit 0 even when cells fail; failures are recorded in their rows.
inline int cmd_synth_experiment(const SynthOptions& o)
{
    const auto cfg = resolve_synth_config(o);
    const json config = to_json(cfg);
    const auto results = experiment::run_synth_experiment(cfg);
    const auto summary = experiment::summarize(results);
    detail::emit(o.output, results_table(results, config));
    if (o.output.empty()) {
        std::cerr << summary_table(summary, config);
    } else {
        write_text(o.output + ".summary.csv", summary_table(summary, config));
        write_text(o.output + ".timings.csv", timings_table(results, config));
    }
    return ExitCode::ok;
}

// ---- bench ----------------------------------------------------------------

struct BenchOptions
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string output;
};

struct BenchInstance
{
    GroupedDesign<Eigen::MatrixXd> design;
    std::vector<std::size_t> planted;
    Coefficients truth;
};

/// Gaussian design with `relevant` planted groups at random positions.
inline BenchInstance make_bench_instance(const BenchConfig& c, std::size_t J, std::uint64_t seed)
{
    boost::random::mt19937_64 rng(seed);
    boost::random::normal_distribution<double> normal(0.0, 1.0);
    const auto part = GroupPartition::uniform(J, c.group_size);
    const auto d = static_cast<Eigen::Index>(part.dim());
    const auto n = static_cast<Eigen::Index>(c.n);
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < n; ++i) X(i, j) = normal(rng);
    std::vector<std::size_t> all(J);
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto planted = grouplp::detail::sample_without_replacement(rng, all, std::min(c.relevant_groups, J));
    Coefficients truth = Coefficients::zeros(part);
    for (auto j : planted)
        for (Eigen::Index k = 0; k < truth.group(j).size(); ++k) truth.group(j)[k] = normal(rng);
    Eigen::VectorXd y = X * truth.values;
    for (Eigen::Index i = 0; i < n; ++i) y[i] += c.noise * normal(rng);
    return {GroupedDesign<Eigen::MatrixXd>(std::move(X), part, std::move(y)), std::move(planted), std::move(truth)};
}

struct BenchRow
{
    std::size_t J = 0;
    PNorm p{2.0};
    std::string method;
    std::string status = "ok";
    double median_ms = 0.0;
    double min_ms = 0.0;
    int runs = 0;
    std::size_t active_groups = 0;
    double objective = 0.0;
};

inline std::vector<BenchRow> run_bench(const BenchConfig& c, std::ostream* progress = nullptr)
{
    using clock = std::chrono::steady_clock;
    std::vector<BenchRow> rows;
    const auto fam = GlmFamily::gaussian();
    for (auto J : c.J_grid) {
        const auto inst = make_bench_instance(c, J, c.seed + J);
        for (const auto& p : c.p_values) {
            FitConfig fc = c.fit;
            fc.p = p;
            fc.kappa = c.kappa_fraction * mixed_norm(inst.truth, p);

            BenchRow as{J, p, "active_set"};
            std::vector<double> times;
            for (int r = 0; r < c.repeats; ++r) {
                const auto t0 = clock::now();
                try {
                    const auto fit = fit_active_set(fam, inst.design, fc);
                    as.active_groups = fit.active.size();
                    as.objective = fit.objective;
                } catch (const ConvergenceError& e) {
                    as.status = detail::csv_safe(std::string("error: ") + e.what());
                }
                times.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
            }
            as.runs = static_cast<int>(times.size());
            as.median_ms = detail::median_of(times);
            as.min_ms = *std::min_element(times.begin(), times.end());
            rows.push_back(as);

            BenchRow fs{J, p, "full_set"};
            oracle::OracleBudget budget;
            budget.tol = c.oracle_tol;
            budget.max_iters = c.oracle_max_iters;
            budget.time_limit_seconds = c.timeout_seconds;
            times.clear();
            for (int r = 0; r < c.repeats; ++r) {
                const auto t0 = clock::now();
                try {
                    const auto beta = oracle::full_set_projected_gradient(fam, inst.design, fc.kappa, p, budget);
                    std::size_t active = 0;
                    for (std::size_t j = 0; j < J; ++j)
                        if (p_norm(beta.group(j), p) > fc.active_tol) ++active;
                    fs.active_groups = active;
                    fs.objective = negative_log_likelihood(fam, inst.design, beta);
                } catch (const ConvergenceError& e) {
                    // A timed-out run is recorded at the limit: the median is then a lower bound.
                    fs.status = std::string(e.what()).find("time limit") != std::string::npos
                                    ? "timeout"
                                    : detail::csv_safe(std::string("error: ") + e.what());
                    times.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
                    break;
                }
                times.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
            }
            fs.runs = static_cast<int>(times.size());
            fs.median_ms = detail::median_of(times);
            fs.min_ms = *std::min_element(times.begin(), times.end());
            rows.push_back(fs);
            if (progress) {
                *progress << "J=" << J << " p=" << p.to_string() << " active_set " << as.median_ms << " ms, full_set "
                          << fs.median_ms << " ms (" << fs.status << ")\n";
            }
        }
    }
    return rows;
}

inline std::string bench_table(const std::vector<BenchRow>& rows, const json& config)
{
    const auto hash = config_hash(config);
    std::string s = "# config: " + config.dump() + "\n";
    s += "config_hash,J,p,method,status,median_ms,min_ms,runs,active_groups,objective\n";
    for (const auto& r : rows) {
        s += hash + "," + std::to_string(r.J) + "," + r.p.to_string() + "," + r.method + "," + r.status + "," +
             format_double(r.median_ms) + "," + format_double(r.min_ms) + "," + std::to_string(r.runs) + "," +
             std::to_string(r.active_groups) + "," + format_double(r.objective) + "\n";
    }
    return s;
}

inline int cmd_bench(const BenchOptions& o)
{
    BenchConfig cfg = o.config.empty() ? BenchConfig{} : bench_config_from_json(load_config(o.config));
    if (o.seed) cfg.seed = *o.seed;
    const json config = to_json(cfg);
    const auto rows = run_bench(cfg, &std::cerr);
    detail::emit(o.output, bench_table(rows, config));
    return ExitCode::ok;
}

// ---- generate -------------------------------------------------------------

struct GenerateOptions
{
    std::string config;  ///< synth-experiment config; only "spec" is used
    std::optional<std::uint64_t> seed;
    double share_frac = 1.0;
    std::string output;  ///< directory
};

/// Writes train.csv, test.csv, truth.csv, groups.csv and config.json into the output directory.
inline int cmd_generate(const GenerateOptions& o)
{
    if (o.output.empty()) throw ParseError("generate: --output directory is required");
    const auto base = o.config.empty() ? synth_defaults() : synth_config_from_json(load_config(o.config));
    SynthSpec spec = base.base;
    spec.seed = o.seed.value_or(0);
    spec.share_frac = o.share_frac;
    try {
        spec.validate();
    } catch (const InvalidInput& e) {
        throw ParseError(e.what());
    }
    const auto data = generate_synthetic(spec);

    std::error_code ec;
    std::filesystem::create_directories(o.output, ec);
    if (ec) throw IoError("cannot create " + o.output + ": " + ec.message());
    const std::filesystem::path dir(o.output);

    const json config = {{"d", spec.d},
                         {"m", spec.m},
                         {"n", spec.n},
                         {"relevant_frac", spec.relevant_frac},
                         {"share_frac", spec.share_frac},
                         {"test_frac", spec.test_frac},
                         {"seed", spec.seed}};
    json meta = {{"command", "generate"}, {"config", config}, {"config_hash", config_hash(config)},
                 {"relevant", data.truth.relevant}, {"supports", data.truth.supports}};
    write_text((dir / "train.csv").string(), tasks_to_csv(data.train));
    write_text((dir / "test.csv").string(), tasks_to_csv(data.test));
    write_text((dir / "truth.csv").string(), matrix_to_csv(data.truth.B, numbered_header("task", data.truth.B.cols())));
    write_text((dir / "groups.csv").string(), groups_to_csv(multitask_groups(spec.d, spec.m)));
    write_text((dir / "config.json").string(), detail::dump(meta));
    return ExitCode::ok;
}

} // namespace grouplp::cli
