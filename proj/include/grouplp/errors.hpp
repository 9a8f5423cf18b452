#pragma once
#include <stdexcept>
#include <string>
#include <utility>
#include <Eigen/Core>

namespace grouplp {

/// Raised when an argument violates a documented precondition.
class InvalidInput : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative routine runs out of budget.
/// Carries the last iterate so callers can inspect or resume.
class ConvergenceError : public std::runtime_error
{
public:
    ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate)
        : std::runtime_error(what), last_iterate_(std::move(last_iterate))
    {}

    const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }

private:
    Eigen::VectorXd last_iterate_;
};

/// Signals a broken internal invariant (should be unreachable).
class InternalError : public std::logic_error
{
public:
    using std::logic_error::logic_error;
};

namespace detail {

inline void require(bool cond, const char* msg)
{
    if (!cond) throw InvalidInput(msg);
}

inline void require(bool cond, const std::string& msg)
{
    if (!cond) throw InvalidInput(msg);
}

} // namespace detail
} // namespace grouplp
