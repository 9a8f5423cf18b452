#pragma once
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>
#include <json.hpp>
#include <grouplp/cli/io.hpp>
#include <grouplp/experiment.hpp>
#include <grouplp/glm.hpp>
#include <grouplp/oracle.hpp>
#include <grouplp/solver.hpp>

namespace grouplp::cli {

using json = nlohmann::json;

/// 64-bit FNV-1a of the compact JSON text, as 16 hex digits.
inline std::string config_hash(const json& config)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : config.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

/// Throws on keys outside `allowed`; `where` prefixes the message.
inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) throw ParseError(where + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ParseError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
void get_if(const json& j, const char* key, T& out, const std::string& where)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ParseError(where + "." + key + ": wrong type");
    }
}

inline PNorm p_from_json(const json& v, const std::string& where)
{
    try {
        if (v.is_string()) return PNorm::parse(v.get<std::string>());
        if (v.is_number()) return PNorm(v.get<double>());
    } catch (const InvalidInput& e) {
        throw ParseError(where + ": " + e.what());
    }
    throw ParseError(where + ": p must be a number or \"inf\"");
}

inline json p_to_json(const PNorm& p)
{
    if (p.is_infinite()) return "inf";
    return p.value();
}

} // namespace detail

inline json to_json(const ProxTolerances& t)
{
    return {{"outer_kappa_tol", t.outer_kappa_tol},
            {"inner_root_tol", t.inner_root_tol},
            {"max_outer_bisections", t.max_outer_bisections},
            {"max_inner_iters", t.max_inner_iters},
            {"search", t.search == MultiplierSearch::illinois ? "illinois" : "bisection"}};
}

inline ProxTolerances prox_tolerances_from_json(const json& j, ProxTolerances t, const std::string& where)
{
    detail::check_keys(j, {"outer_kappa_tol", "inner_root_tol", "max_outer_bisections", "max_inner_iters", "search"},
                       where);
    detail::get_if(j, "outer_kappa_tol", t.outer_kappa_tol, where);
    detail::get_if(j, "inner_root_tol", t.inner_root_tol, where);
    detail::get_if(j, "max_outer_bisections", t.max_outer_bisections, where);
    detail::get_if(j, "max_inner_iters", t.max_inner_iters, where);
    if (j.contains("search")) {
        std::string s;
        detail::get_if(j, "search", s, where);
        if (s == "bisection") t.search = MultiplierSearch::bisection;
        else if (s == "illinois") t.search = MultiplierSearch::illinois;
        else throw ParseError(where + ".search: expected \"bisection\" or \"illinois\"");
    }
    try {
        t.validate();
    } catch (const InvalidInput& e) {
        throw ParseError(where + ": " + e.what());
    }
    return t;
}

inline json to_json(const FitConfig& c)
{
    return {{"kappa", c.kappa},
            {"p", detail::p_to_json(c.p)},
            {"step",
             {{"initial_step", c.step.initial_step},
              {"backtrack", c.step.backtrack},
              {"sufficient_decrease", c.step.sufficient_decrease},
              {"barzilai_borwein", c.step.barzilai_borwein}}},
            {"inner_tol", c.inner_tol},
            {"lambda_tol", c.lambda_tol},
            {"active_tol", c.active_tol},
            {"completeness_tol", c.completeness_tol},
            {"max_outer_iterations", c.max_outer_iterations},
            {"max_inner_iterations", c.max_inner_iterations},
            {"projection", to_json(c.projection)},
            {"initial_group", c.initial_group ? json(*c.initial_group) : json(nullptr)}};
}

inline FitConfig fit_config_from_json(const json& j, const std::string& where)
{
    detail::check_keys(j,
                       {"kappa", "p", "step", "inner_tol", "lambda_tol", "active_tol", "completeness_tol",
                        "max_outer_iterations", "max_inner_iterations", "projection", "initial_group"},
                       where);
    FitConfig c;
    detail::get_if(j, "kappa", c.kappa, where);
    if (j.contains("p")) c.p = detail::p_from_json(j.at("p"), where + ".p");
    if (j.contains("step")) {
        const auto& s = j.at("step");
        const auto w = where + ".step";
        detail::check_keys(s, {"initial_step", "backtrack", "sufficient_decrease", "barzilai_borwein"}, w);
        detail::get_if(s, "initial_step", c.step.initial_step, w);
        detail::get_if(s, "backtrack", c.step.backtrack, w);
        detail::get_if(s, "sufficient_decrease", c.step.sufficient_decrease, w);
        detail::get_if(s, "barzilai_borwein", c.step.barzilai_borwein, w);
    }
    detail::get_if(j, "inner_tol", c.inner_tol, where);
    detail::get_if(j, "lambda_tol", c.lambda_tol, where);
    detail::get_if(j, "active_tol", c.active_tol, where);
    detail::get_if(j, "completeness_tol", c.completeness_tol, where);
    detail::get_if(j, "max_outer_iterations", c.max_outer_iterations, where);
    detail::get_if(j, "max_inner_iterations", c.max_inner_iterations, where);
    if (j.contains("projection"))
        c.projection = prox_tolerances_from_json(j.at("projection"), c.projection, where + ".projection");
    if (j.contains("initial_group") && !j.at("initial_group").is_null()) {
        std::size_t g = 0;
        detail::get_if(j, "initial_group", g, where);
        c.initial_group = g;
    }
    try {
        c.validate();
    } catch (const InvalidInput& e) {
        throw ParseError(where + ": " + e.what());
    }
    return c;
}

// ---- fit ------------------------------------------------------------------

struct FitCommandConfig
{
    GlmFamily family = GlmFamily::gaussian();
    FitConfig fit{};
};

inline json to_json(const FitCommandConfig& c)
{
    return {{"family", c.family.name()}, {"fit", to_json(c.fit)}};
}

inline FitCommandConfig fit_command_config_from_json(const json& j)
{
    detail::check_keys(j, {"family", "fit"}, "config");
    FitCommandConfig c;
    if (j.contains("family")) {
        std::string f;
        detail::get_if(j, "family", f, "config");
        try {
            c.family = GlmFamily::parse(f);
        } catch (const InvalidInput& e) {
            throw ParseError(std::string("config.family: ") + e.what());
        }
    }
    if (j.contains("fit")) c.fit = fit_config_from_json(j.at("fit"), "config.fit");
    return c;
}

// ---- project --------------------------------------------------------------

struct ProjectCommandConfig
{
    PNorm p{2.0};
    double kappa = 1.0;
    ProxTolerances tolerances{};
};

inline json to_json(const ProjectCommandConfig& c)
{
    return {{"p", detail::p_to_json(c.p)}, {"kappa", c.kappa}, {"tolerances", to_json(c.tolerances)}};
}

inline ProjectCommandConfig project_command_config_from_json(const json& j)
{
    detail::check_keys(j, {"p", "kappa", "tolerances"}, "config");
    ProjectCommandConfig c;
    if (j.contains("p")) c.p = detail::p_from_json(j.at("p"), "config.p");
    detail::get_if(j, "kappa", c.kappa, "config");
    if (j.contains("tolerances"))
        c.tolerances = prox_tolerances_from_json(j.at("tolerances"), c.tolerances, "config.tolerances");
    if (!(c.kappa > 0)) throw ParseError("config.kappa: must be positive");
    return c;
}

// ---- synth-experiment -----------------------------------------------------

inline json to_json(const experiment::SynthExperimentConfig& c)
{
    json ps = json::array();
    for (const auto& p : c.p_values) ps.push_back(detail::p_to_json(p));
    return {{"spec",
             {{"d", c.base.d},
              {"m", c.base.m},
              {"n", c.base.n},
              {"relevant_frac", c.base.relevant_frac},
              {"test_frac", c.base.test_frac}}},
            {"seeds", c.seeds},
            {"share_fracs", c.share_fracs},
            {"p_values", ps},
            {"include_pooled", c.include_pooled},
            {"include_single_task", c.include_single_task},
            {"kappa_scales", c.kappa_scales},
            {"validation_frac", c.validation_frac},
            {"fit", to_json(c.fit)}};
}

/// Defaults: the desk-scale study (d=100, m=10, n=100, 2% relevant, 20 seeds).
inline experiment::SynthExperimentConfig synth_defaults()
{
    experiment::SynthExperimentConfig c;
    for (std::uint64_t s = 1; s <= 20; ++s) c.seeds.push_back(s);
    return c;
}

inline experiment::SynthExperimentConfig synth_config_from_json(const json& j)
{
    detail::check_keys(j,
                       {"spec", "seeds", "share_fracs", "p_values", "include_pooled", "include_single_task",
                        "kappa_scales", "validation_frac", "fit"},
                       "config");
    auto c = synth_defaults();
    if (j.contains("spec")) {
        const auto& s = j.at("spec");
        detail::check_keys(s, {"d", "m", "n", "relevant_frac", "test_frac"}, "config.spec");
        detail::get_if(s, "d", c.base.d, "config.spec");
        detail::get_if(s, "m", c.base.m, "config.spec");
        detail::get_if(s, "n", c.base.n, "config.spec");
        detail::get_if(s, "relevant_frac", c.base.relevant_frac, "config.spec");
        detail::get_if(s, "test_frac", c.base.test_frac, "config.spec");
    }
    detail::get_if(j, "seeds", c.seeds, "config");
    detail::get_if(j, "share_fracs", c.share_fracs, "config");
    if (j.contains("p_values")) {
        if (!j.at("p_values").is_array()) throw ParseError("config.p_values: expected an array");
        c.p_values.clear();
        for (const auto& v : j.at("p_values")) c.p_values.push_back(detail::p_from_json(v, "config.p_values"));
    }
    detail::get_if(j, "include_pooled", c.include_pooled, "config");
    detail::get_if(j, "include_single_task", c.include_single_task, "config");
    detail::get_if(j, "kappa_scales", c.kappa_scales, "config");
    detail::get_if(j, "validation_frac", c.validation_frac, "config");
    if (j.contains("fit")) c.fit = fit_config_from_json(j.at("fit"), "config.fit");

    if (c.seeds.empty()) throw ParseError("config.seeds: at least one seed required");
    if (c.kappa_scales.empty()) throw ParseError("config.kappa_scales: at least one value required");
    for (double k : c.kappa_scales)
        if (!(k > 0)) throw ParseError("config.kappa_scales: values must be positive");
    if (!(c.validation_frac > 0 && c.validation_frac < 1)) throw ParseError("config.validation_frac: must be in (0, 1)");
    for (double s : c.share_fracs) {
        SynthSpec probe = c.base;
        probe.share_frac = s;
        try {
            probe.validate();
        } catch (const InvalidInput& e) {
            throw ParseError(std::string("config.spec: ") + e.what());
        }
    }
    return c;
}

// ---- bench ----------------------------------------------------------------

struct BenchConfig
{
    std::vector<std::size_t> J_grid{100, 500, 1000, 2000};
    std::size_t relevant_groups = 10;
    std::size_t group_size = 4;
    std::size_t n = 200;
    std::vector<PNorm> p_values{PNorm(2.0)};
    int repeats = 5;
    double timeout_seconds = 600.0;  ///< per full-set run
    std::uint64_t seed = 1;
    double noise = 0.1;
    double kappa_fraction = 0.8;     ///< kappa as a fraction of the planted mixed norm
    FitConfig fit{};
    double oracle_tol = 1e-9;
    long oracle_max_iters = 1'000'000;
};

inline json to_json(const BenchConfig& c)
{
    json ps = json::array();
    for (const auto& p : c.p_values) ps.push_back(detail::p_to_json(p));
    return {{"J_grid", c.J_grid},
            {"relevant_groups", c.relevant_groups},
            {"group_size", c.group_size},
            {"n", c.n},
            {"p_values", ps},
            {"repeats", c.repeats},
            {"timeout_seconds", c.timeout_seconds},
            {"seed", c.seed},
            {"noise", c.noise},
            {"kappa_fraction", c.kappa_fraction},
            {"fit", to_json(c.fit)},
            {"oracle_tol", c.oracle_tol},
            {"oracle_max_iters", c.oracle_max_iters}};
}

inline BenchConfig bench_config_from_json(const json& j)
{
    detail::check_keys(j,
                       {"J_grid", "relevant_groups", "group_size", "n", "p_values", "repeats", "timeout_seconds",
                        "seed", "noise", "kappa_fraction", "fit", "oracle_tol", "oracle_max_iters"},
                       "config");
    BenchConfig c;
    detail::get_if(j, "J_grid", c.J_grid, "config");
    detail::get_if(j, "relevant_groups", c.relevant_groups, "config");
    detail::get_if(j, "group_size", c.group_size, "config");
    detail::get_if(j, "n", c.n, "config");
    if (j.contains("p_values")) {
        if (!j.at("p_values").is_array()) throw ParseError("config.p_values: expected an array");
        c.p_values.clear();
        for (const auto& v : j.at("p_values")) c.p_values.push_back(detail::p_from_json(v, "config.p_values"));
    }
    detail::get_if(j, "repeats", c.repeats, "config");
    detail::get_if(j, "timeout_seconds", c.timeout_seconds, "config");
    detail::get_if(j, "seed", c.seed, "config");
    detail::get_if(j, "noise", c.noise, "config");
    detail::get_if(j, "kappa_fraction", c.kappa_fraction, "config");
    if (j.contains("fit")) c.fit = fit_config_from_json(j.at("fit"), "config.fit");
    detail::get_if(j, "oracle_tol", c.oracle_tol, "config");
    detail::get_if(j, "oracle_max_iters", c.oracle_max_iters, "config");

    if (c.J_grid.empty()) throw ParseError("config.J_grid: at least one value required");
    for (auto J : c.J_grid)
        if (J < 1) throw ParseError("config.J_grid: values must be >= 1");
    if (c.group_size < 1 || c.n < 1) throw ParseError("config: group_size and n must be >= 1");
    if (c.repeats < 1) throw ParseError("config.repeats: must be >= 1");
    if (!(c.timeout_seconds >= 0)) throw ParseError("config.timeout_seconds: must be >= 0");
    if (!(c.kappa_fraction > 0)) throw ParseError("config.kappa_fraction: must be positive");
    if (!(c.oracle_tol > 0) || c.oracle_max_iters < 1) throw ParseError("config: invalid oracle budget");
    return c;
}

// ---- loading --------------------------------------------------------------

/**
 * Reads a JSON config. Also accepts a results file written by this tool:
 * a JSON result with a "config" member, or a CSV whose first line is
 * "# config: <json>".
 */
inline json load_config(const std::string& path)
{
    const auto text = read_text(path);
    static const std::string marker = "# config: ";
    try {
        if (text.rfind(marker, 0) == 0) {
            const auto end = text.find('\n');
            return json::parse(text.substr(marker.size(), end == std::string::npos ? std::string::npos : end - marker.size()));
        }
        auto j = json::parse(text);
        if (j.is_object() && j.contains("config") && j.contains("config_hash")) return j.at("config");
        return j;
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

} // namespace grouplp::cli
