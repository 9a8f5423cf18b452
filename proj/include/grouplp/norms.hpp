#pragma once
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>
#include <Eigen/Core>
#include <grouplp/errors.hpp>
#include <grouplp/partition.hpp>

namespace grouplp {

/**
 * Exponent of an l_p norm, p in [1, inf].
 * Infinity is a distinct state rather than a large finite exponent.
 */
class PNorm
{
public:
    explicit PNorm(double p) : p_(p)
    {
        detail::require(!std::isnan(p) && p >= 1.0, "PNorm: p must be >= 1");
        if (std::isinf(p)) infinite_ = true;
    }

    static PNorm infinity() { return PNorm(std::numeric_limits<double>::infinity()); }

    bool is_infinite() const noexcept { return infinite_; }
    bool is_one() const noexcept { return !infinite_ && p_ == 1.0; }
    bool is_two() const noexcept { return !infinite_ && p_ == 2.0; }

    /// Exponent as a double; +inf for the infinite norm.
    double value() const noexcept { return p_; }

    /// Dual exponent q with 1/p + 1/q = 1 (1 <-> inf).
    PNorm dual() const
    {
        if (infinite_) return PNorm(1.0);
        if (p_ == 1.0) return infinity();
        if (p_ == 2.0) return PNorm(2.0);
        return PNorm(p_ / (p_ - 1.0));
    }

    /// "inf" or the shortest decimal that round-trips.
    std::string to_string() const
    {
        if (infinite_) return "inf";
        char buf[32];
        for (int prec = 1; prec <= 17; ++prec) {
            std::snprintf(buf, sizeof(buf), "%.*g", prec, p_);
            if (std::strtod(buf, nullptr) == p_) break;
        }
        return buf;
    }

    static PNorm parse(const std::string& text)
    {
        if (text == "inf" || text == "Inf" || text == "INF") return infinity();
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(text, &used);
        } catch (const std::exception&) {
            throw InvalidInput("PNorm: cannot parse '" + text + "'");
        }
        if (used != text.size()) throw InvalidInput("PNorm: cannot parse '" + text + "'");
        return PNorm(v);
    }

    bool operator==(const PNorm& o) const noexcept
    {
        return infinite_ == o.infinite_ && (infinite_ || p_ == o.p_);
    }

private:
    double p_;
    bool infinite_ = false;
};

inline PNorm dual_exponent(PNorm p) { return p.dual(); }

namespace detail {

/// p-norm without input validation; rescales by the max entry for p > 1.
template <class Derived>
double p_norm_unchecked(const Eigen::MatrixBase<Derived>& v, const PNorm& p)
{
    if (v.size() == 0) return 0.0;
    if (p.is_one()) return v.cwiseAbs().sum();
    const double vmax = v.cwiseAbs().maxCoeff();
    if (p.is_infinite() || vmax == 0.0) return vmax;
    if (p.is_two()) {
        return vmax * (v / vmax).norm();
    }
    const double e = p.value();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double r = std::abs(v[i]) / vmax;
        if (r > 0.0) acc += std::pow(r, e);
    }
    return vmax * std::pow(acc, 1.0 / e);
}

} // namespace detail

/// (sum |v_i|^p)^(1/p), or max |v_i| for p = inf.
template <class Derived>
double p_norm(const Eigen::MatrixBase<Derived>& v, const PNorm& p)
{
    detail::require(v.allFinite(), "p_norm: non-finite input");
    return detail::p_norm_unchecked(v, p);
}

/// Sum over groups of the per-group p-norm.
inline double mixed_norm(const Coefficients& beta, const PNorm& p)
{
    detail::require(static_cast<std::size_t>(beta.values.size()) == beta.partition.dim(),
                    "mixed_norm: coefficient length does not match partition");
    detail::require(beta.values.allFinite(), "mixed_norm: non-finite input");
    double s = 0.0;
    for (std::size_t j = 0; j < beta.partition.group_count(); ++j) {
        s += detail::p_norm_unchecked(beta.group(j), p);
    }
    return s;
}

/// Entry j is ||h_j||_q.
inline std::vector<double> group_dual_norms(const Eigen::Ref<const Eigen::VectorXd>& h,
                                            const GroupPartition& partition, const PNorm& q)
{
    detail::require(static_cast<std::size_t>(h.size()) == partition.dim(),
                    "group_dual_norms: dimension mismatch");
    std::vector<double> out(partition.group_count());
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = detail::p_norm_unchecked(
            h.segment(static_cast<Eigen::Index>(partition.offset(j)),
                      static_cast<Eigen::Index>(partition.size(j))),
            q);
    }
    return out;
}

/**
 * How far s is from the subdifferential of ||.||_p at v, in max-abs terms.
 * 0 means s is a subgradient. At v = 0 the subdifferential is the dual unit
 * ball. For p = inf, entries within `tie_tol` (relative) of the max count
 * as attaining it.
 */
inline double subgradient_residual(const Eigen::Ref<const Eigen::VectorXd>& v,
                                   const Eigen::Ref<const Eigen::VectorXd>& s, const PNorm& p,
                                   double tie_tol = 1e-12)
{
    detail::require(v.size() == s.size(), "subgradient_residual: dimension mismatch");
    detail::require(v.allFinite() && s.allFinite(), "subgradient_residual: non-finite input");
    if (v.size() == 0) return 0.0;
    const double vmax = v.cwiseAbs().maxCoeff();
    if (vmax == 0.0) return std::max(0.0, detail::p_norm_unchecked(s, p.dual()) - 1.0);

    double r = 0.0;
    if (p.is_one()) {
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (v[i] != 0.0) r = std::max(r, std::abs(s[i] - (v[i] > 0 ? 1.0 : -1.0)));
            else r = std::max(r, std::abs(s[i]) - 1.0);
        }
        return r;
    }
    if (p.is_infinite()) {
        double l1 = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            l1 += std::abs(s[i]);
            if (std::abs(v[i]) < vmax * (1.0 - tie_tol)) r = std::max(r, std::abs(s[i]));
            else r = std::max(r, -s[i] * (v[i] > 0 ? 1.0 : -1.0));
        }
        return std::max(r, std::abs(l1 - 1.0));
    }
    // Gradient sign(v_i) |v_i|^(p-1) / ||v||_p^(p-1), computed on v / max|v|.
    const double e = p.value();
    const double nrm = detail::p_norm_unchecked(v, p) / vmax;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double a = std::abs(v[i]) / vmax;
        const double gi = std::pow(a / nrm, e - 1.0) * (v[i] >= 0 ? 1.0 : -1.0);
        r = std::max(r, std::abs(s[i] - gi));
    }
    return r;
}

} // namespace grouplp
