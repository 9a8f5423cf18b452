#pragma once
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>
#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <grouplp/errors.hpp>
#include <grouplp/partition.hpp>

namespace grouplp {

enum class Family { gaussian, bernoulli };

/**
 * Canonical-link exponential family with unit scale.
 *
 * gaussian:  b(nu) = nu^2 / 2,        mean(nu) = nu
 * bernoulli: b(nu) = log(1 + e^nu),   mean(nu) = 1 / (1 + e^-nu)
 *
 * The c(y, theta) term of the density is dropped, so losses are reported
 * up to an additive constant that does not depend on the coefficients.
 */
struct GlmFamily
{
    Family tag = Family::gaussian;

    static GlmFamily gaussian() { return {Family::gaussian}; }
    static GlmFamily bernoulli() { return {Family::bernoulli}; }

    double log_partition(double nu) const noexcept
    {
        if (tag == Family::gaussian) return 0.5 * nu * nu;
        return std::max(nu, 0.0) + std::log1p(std::exp(-std::abs(nu)));
    }

    /// Inverse canonical link, equal to b'(nu).
    double mean(double nu) const noexcept
    {
        if (tag == Family::gaussian) return nu;
        if (nu >= 0) return 1.0 / (1.0 + std::exp(-nu));
        const double e = std::exp(nu);
        return e / (1.0 + e);
    }

    /// sup over nu of b''(nu).
    double curvature_bound() const noexcept { return tag == Family::gaussian ? 1.0 : 0.25; }

    std::string name() const { return tag == Family::gaussian ? "gaussian" : "bernoulli"; }

    static GlmFamily parse(const std::string& s)
    {
        if (s == "gaussian") return gaussian();
        if (s == "bernoulli" || s == "binomial" || s == "logistic") return bernoulli();
        throw InvalidInput("unknown family '" + s + "'");
    }

    bool operator==(const GlmFamily&) const = default;
};

namespace detail {

inline bool all_finite(const Eigen::MatrixXd& X) { return X.allFinite(); }

inline bool all_finite(const Eigen::SparseMatrix<double>& X)
{
    return Eigen::Map<const Eigen::VectorXd>(X.valuePtr(), X.nonZeros()).allFinite();
}

} // namespace detail

/**
 * Design matrix X (n x d) with a column partition and a response vector.
 * Bernoulli responses are stored in {0, 1}; see labels_to_bernoulli.
 */
template <class MatrixType = Eigen::MatrixXd>
class GroupedDesign
{
public:
    using matrix_t = MatrixType;

    GroupedDesign(MatrixType X, GroupPartition partition, Eigen::VectorXd y)
        : X_(std::move(X)), partition_(std::move(partition)), y_(std::move(y))
    {
        detail::require(X_.rows() >= 1 && X_.cols() >= 1, "GroupedDesign: empty design");
        detail::require(static_cast<std::size_t>(X_.cols()) == partition_.dim(),
                        "GroupedDesign: column count does not match partition");
        detail::require(y_.size() == X_.rows(), "GroupedDesign: response length mismatch");
        detail::require(detail::all_finite(X_), "GroupedDesign: non-finite design entry");
        detail::require(y_.allFinite(), "GroupedDesign: non-finite response");
    }

    const MatrixType& X() const noexcept { return X_; }
    const GroupPartition& partition() const noexcept { return partition_; }
    const Eigen::VectorXd& y() const noexcept { return y_; }
    Eigen::Index n() const noexcept { return X_.rows(); }
    Eigen::Index d() const noexcept { return X_.cols(); }

private:
    MatrixType X_;
    GroupPartition partition_;
    Eigen::VectorXd y_;
};

/// Maps labels in {-1, +1} (or already {0, 1}) to {0, 1}.
inline Eigen::VectorXd labels_to_bernoulli(const Eigen::VectorXd& labels)
{
    Eigen::VectorXd out(labels.size());
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        const double l = labels[i];
        if (l == -1.0 || l == 0.0) out[i] = 0.0;
        else if (l == 1.0) out[i] = 1.0;
        else throw InvalidInput("bernoulli labels must be in {-1, 0, 1}");
    }
    return out;
}

/// sum_i b(nu_i) - y_i nu_i.
inline double loss_from_nu(const GlmFamily& fam, const Eigen::VectorXd& y, const Eigen::VectorXd& nu)
{
    detail::require(y.size() == nu.size(), "loss: length mismatch");
    double s = 0.0;
    for (Eigen::Index i = 0; i < nu.size(); ++i) s += fam.log_partition(nu[i]) - y[i] * nu[i];
    return s;
}

/// Component i is mean(nu_i) - y_i.
inline Eigen::VectorXd grad_nu(const GlmFamily& fam, const Eigen::VectorXd& y, const Eigen::VectorXd& nu)
{
    detail::require(y.size() == nu.size(), "grad_nu: length mismatch");
    Eigen::VectorXd g(nu.size());
    for (Eigen::Index i = 0; i < nu.size(); ++i) g[i] = fam.mean(nu[i]) - y[i];
    return g;
}

template <class M>
double negative_log_likelihood(const GlmFamily& fam, const GroupedDesign<M>& design,
                               const Coefficients& beta)
{
    detail::require(beta.values.size() == design.d(), "negative_log_likelihood: dimension mismatch");
    const Eigen::VectorXd nu = design.X() * beta.values;
    return loss_from_nu(fam, design.y(), nu);
}

/// X^T (mean(X beta) - y).
template <class M>
Eigen::VectorXd grad_beta(const GlmFamily& fam, const GroupedDesign<M>& design, const Coefficients& beta)
{
    detail::require(beta.values.size() == design.d(), "grad_beta: dimension mismatch");
    const Eigen::VectorXd nu = design.X() * beta.values;
    return design.X().transpose() * grad_nu(fam, design.y(), nu);
}

/// grad_beta split into per-group slices h_j.
template <class M>
std::vector<Eigen::VectorXd> group_gradients(const GlmFamily& fam, const GroupedDesign<M>& design,
                                             const Coefficients& beta)
{
    const Eigen::VectorXd h = grad_beta(fam, design, beta);
    const auto& part = design.partition();
    std::vector<Eigen::VectorXd> out(part.group_count());
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = h.segment(static_cast<Eigen::Index>(part.offset(j)),
                           static_cast<Eigen::Index>(part.size(j)));
    }
    return out;
}

} // namespace grouplp
