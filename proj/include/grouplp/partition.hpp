#pragma once
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>
#include <Eigen/Core>
#include <grouplp/errors.hpp>

namespace grouplp {

/**
 * Partition of a flat coordinate vector into contiguous, disjoint groups.
 * Group j covers [offset(j), offset(j) + size(j)).
 */
class GroupPartition
{
public:
    GroupPartition() = default;

    explicit GroupPartition(std::vector<std::size_t> sizes)
        : sizes_(std::move(sizes)), offsets_(sizes_.size() + 1, 0)
    {
        for (std::size_t j = 0; j < sizes_.size(); ++j) {
            detail::require(sizes_[j] > 0, "GroupPartition: group sizes must be positive");
            offsets_[j + 1] = offsets_[j] + sizes_[j];
        }
    }

    /// J groups of identical size.
    static GroupPartition uniform(std::size_t n_groups, std::size_t group_size)
    {
        return GroupPartition(std::vector<std::size_t>(n_groups, group_size));
    }

    /// Every coordinate its own group (plain lasso layout).
    static GroupPartition singletons(std::size_t dim) { return uniform(dim, 1); }

    std::size_t group_count() const noexcept { return sizes_.size(); }
    std::size_t dim() const noexcept { return offsets_.back(); }
    std::size_t size(std::size_t j) const { return sizes_[j]; }
    std::size_t offset(std::size_t j) const { return offsets_[j]; }
    std::span<const std::size_t> sizes() const noexcept { return sizes_; }

    /// Total dimension of the listed groups.
    std::size_t dim_of(std::span<const std::size_t> groups) const
    {
        std::size_t s = 0;
        for (auto j : groups) s += sizes_[j];
        return s;
    }

    bool operator==(const GroupPartition&) const = default;

private:
    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offsets_{0};
};

/// Flat coefficient vector together with its group partition.
struct Coefficients
{
    Eigen::VectorXd values;
    GroupPartition partition;

    Coefficients() = default;

    Coefficients(Eigen::VectorXd v, GroupPartition part)
        : values(std::move(v)), partition(std::move(part))
    {
        detail::require(static_cast<std::size_t>(values.size()) == partition.dim(),
                        "Coefficients: vector length does not match partition");
    }

    static Coefficients zeros(const GroupPartition& part)
    {
        return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(part.dim())), part};
    }

    auto group(std::size_t j)
    {
        return values.segment(static_cast<Eigen::Index>(partition.offset(j)),
                              static_cast<Eigen::Index>(partition.size(j)));
    }
    auto group(std::size_t j) const
    {
        return values.segment(static_cast<Eigen::Index>(partition.offset(j)),
                              static_cast<Eigen::Index>(partition.size(j)));
    }
};

} // namespace grouplp
