// grouplp: command-line front end for the l1,p Group-Lasso library.
//
// Exit codes: 0 success, 1 usage or parse error, 2 convergence failure, 3 I/O error.

#include <iostream>
#include <CLI11.hpp>
#include <grouplp/cli/commands.hpp>

namespace cli = grouplp::cli;

int main(int argc, char** argv)
{
    CLI::App app{"l1,p Group-Lasso solver"};
    app.require_subcommand(1);

    cli::FitOptions fit;
    std::string fit_p, fit_family;
    double fit_kappa = 0;
    auto* f = app.add_subcommand("fit", "Fit the constrained Group-Lasso to CSV data");
    f->add_option("--design", fit.design, "design matrix CSV (header row)");
    f->add_option("--response", fit.response, "response CSV (one column)");
    f->add_option("--groups", fit.groups, "group file: name,start,size");
    f->add_option("--tasks", fit.tasks, "multi-task CSV: task,label,x0,...");
    f->add_option("--config", fit.config, "JSON config");
    auto* fp = f->add_option("--p", fit_p, "inner norm exponent, or inf");
    auto* fk = f->add_option("--kappa", fit_kappa, "constraint radius");
    auto* ff = f->add_option("--family", fit_family, "gaussian or bernoulli");
    f->add_option("--output", fit.output, "result JSON (stdout if omitted)");

    cli::ProjectOptions proj;
    std::string proj_p;
    double proj_kappa = 0;
    auto* p = app.add_subcommand("project", "Project a vector onto the l1,p ball");
    p->add_option("--vector", proj.vector, "vector CSV (one column)")->required();
    p->add_option("--groups", proj.groups, "group file: name,start,size");
    p->add_option("--config", proj.config, "JSON config");
    auto* pp = p->add_option("--p", proj_p, "inner norm exponent, or inf");
    auto* pk = p->add_option("--kappa", proj_kappa, "ball radius");
    p->add_option("--output", proj.output, "report JSON (stdout if omitted)");

    cli::SynthOptions synth;
    std::uint64_t synth_seed = 0;
    auto* s = app.add_subcommand("synth-experiment", "Run the synthetic multi-task comparison");
    s->add_option("--config", synth.config, "JSON config");
    auto* ss = s->add_option("--seed", synth_seed, "run this seed only");
    s->add_option("--jobs", synth.jobs, "worker threads")->envname("GROUPLP_JOBS")->check(CLI::PositiveNumber);
    s->add_option("--output", synth.output, "results CSV (stdout if omitted)");

    cli::BenchOptions bench;
    std::uint64_t bench_seed = 0;
    auto* b = app.add_subcommand("bench", "Time the active-set solver against the full-set baseline");
    b->add_option("--config", bench.config, "JSON config");
    auto* bs = b->add_option("--seed", bench_seed, "instance seed");
    b->add_option("--output", bench.output, "timing CSV (stdout if omitted)");

    cli::GenerateOptions gen;
    std::uint64_t gen_seed = 0;
    auto* g = app.add_subcommand("generate", "Write a synthetic multi-task dataset");
    g->add_option("--config", gen.config, "synth-experiment JSON config (spec section)");
    auto* gs = g->add_option("--seed", gen_seed, "generator seed");
    g->add_option("--share", gen.share_frac, "shared fraction of the support")->check(CLI::Range(0.0, 1.0));
    g->add_option("--output", gen.output, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? cli::ExitCode::ok : cli::ExitCode::usage_error;
    }

    try {
        if (*f) {
            if (*fp) fit.p = fit_p;
            if (*fk) fit.kappa = fit_kappa;
            if (*ff) fit.family = fit_family;
            return cli::cmd_fit(fit);
        }
        if (*p) {
            if (*pp) proj.p = proj_p;
            if (*pk) proj.kappa = proj_kappa;
            return cli::cmd_project(proj);
        }
        if (*s) {
            if (*ss) synth.seed = synth_seed;
            return cli::cmd_synth_experiment(synth);
        }
        if (*b) {
            if (*bs) bench.seed = bench_seed;
            return cli::cmd_bench(bench);
        }
        if (*g) {
            if (*gs) gen.seed = gen_seed;
            return cli::cmd_generate(gen);
        }
    } catch (const cli::IoError& e) {
        std::cerr << "grouplp: " << e.what() << "\n";
        return cli::ExitCode::io_error;
    } catch (const grouplp::InvalidInput& e) {
        std::cerr << "grouplp: " << e.what() << "\n";
        return cli::ExitCode::usage_error;
    } catch (const grouplp::ConvergenceError& e) {
        std::cerr << "grouplp: " << e.what() << "\n";
        return cli::ExitCode::convergence_failure;
    } catch (const std::exception& e) {
        std::cerr << "grouplp: internal error: " << e.what() << "\n";
        return cli::ExitCode::convergence_failure;
    }
    return cli::ExitCode::usage_error;
}
