#pragma once
#include <cstdint>
#include <random>
#include <vector>
#include <Eigen/Core>
#include <grouplp/norms.hpp>

namespace testing_support {

struct Rng
{
    explicit Rng(std::uint64_t seed) : eng(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng); }

    Eigen::VectorXd normal_vector(Eigen::Index n)
    {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

    Eigen::MatrixXd normal_matrix(Eigen::Index r, Eigen::Index c)
    {
        Eigen::MatrixXd m(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal();
        return m;
    }

    std::mt19937_64 eng;
};

inline const std::vector<grouplp::PNorm>& prox_exponents()
{
    static const std::vector<grouplp::PNorm> ps{grouplp::PNorm(1.0), grouplp::PNorm(1.2), grouplp::PNorm(1.5),
                                                grouplp::PNorm(2.0), grouplp::PNorm(3.0), grouplp::PNorm(7.0),
                                                grouplp::PNorm::infinity()};
    return ps;
}

} // namespace testing_support
