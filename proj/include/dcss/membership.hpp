#pragma once

// Fuzzy memberships in the latent space, weighted center refresh and the
// k-means initialization used on the pretrained latent codes.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "dcss/errors.hpp"
#include "dcss/tensor_nn.hpp"

namespace dcss {

using nn::Matrix;
using nn::MatrixXd;

inline constexpr double kDistanceFloor = 1e-12;
inline constexpr double kClusterMassFloor = 1e-12;

// N×K squared euclidean distances between rows of points and rows of centers.
template <typename DerivedU, typename DerivedC>
Matrix<typename DerivedU::Scalar> squared_distances(const Eigen::MatrixBase<DerivedU>& points,
                                                    const Eigen::MatrixBase<DerivedC>& centers) {
    using Scalar = typename DerivedU::Scalar;
    if (points.cols() != centers.cols())
        throw ShapeError("latent codes have " + std::to_string(points.cols()) + " columns, centers have " +
                         std::to_string(centers.cols()));
    Matrix<Scalar> d2(points.rows(), centers.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        for (Eigen::Index k = 0; k < centers.rows(); ++k) d2(i, k) = (points.row(i) - centers.row(k)).squaredNorm();
    return d2;
}

/// p_ik ∝ ‖u_i − μ_k‖^(−2/(m−1)), normalized over the K clusters of each row.
/// Squared distances are clamped below at 1e-12, so a point sitting on a
/// center gets an (almost) one-hot row.
template <typename DerivedU, typename DerivedC>
Matrix<typename DerivedU::Scalar> memberships(const Eigen::MatrixBase<DerivedU>& latent,
                                              const Eigen::MatrixBase<DerivedC>& centers, double m) {
    using Scalar = typename DerivedU::Scalar;
    if (!(m > 1.0)) throw ConfigError("fuzziness m must be > 1, got " + std::to_string(m));
    Matrix<Scalar> p = squared_distances(latent, centers).cwiseMax(Scalar(kDistanceFloor));
    const Scalar exponent = Scalar(1) / static_cast<Scalar>(m - 1.0);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        // Ratios against the nearest center keep the powers bounded by 1.
        const Scalar nearest = p.row(i).minCoeff();
        for (Eigen::Index k = 0; k < p.cols(); ++k) p(i, k) = std::pow(nearest / p(i, k), exponent);
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

/// μ_k = Σ_i p_ik^m u_i / Σ_i p_ik^m over all rows.
template <typename DerivedU, typename DerivedP>
Matrix<typename DerivedU::Scalar> update_centers(const Eigen::MatrixBase<DerivedU>& latent,
                                                 const Eigen::MatrixBase<DerivedP>& membership, double m) {
    using Scalar = typename DerivedU::Scalar;
    if (latent.rows() != membership.rows())
        throw ShapeError("latent has " + std::to_string(latent.rows()) + " rows, memberships have " +
                         std::to_string(membership.rows()));
    const Matrix<Scalar> weights = membership.array().pow(static_cast<Scalar>(m)).matrix();
    Matrix<Scalar> centers = Matrix<Scalar>::Zero(membership.cols(), latent.cols());
    for (Eigen::Index k = 0; k < membership.cols(); ++k) {
        Scalar mass = 0;
        for (Eigen::Index i = 0; i < latent.rows(); ++i) {
            mass += weights(i, k);
            centers.row(k) += weights(i, k) * latent.row(i);
        }
        if (!(mass >= Scalar(kClusterMassFloor))) throw DegenerateClusterError(k);
        centers.row(k) /= mass;
    }
    return centers;
}

// Index of the closest center for every row (ties → lowest index).
template <typename DerivedU, typename DerivedC>
std::vector<int> nearest_center(const Eigen::MatrixBase<DerivedU>& latent, const Eigen::MatrixBase<DerivedC>& centers) {
    const auto d2 = squared_distances(latent, centers);
    std::vector<int> labels(static_cast<std::size_t>(d2.rows()));
    for (Eigen::Index i = 0; i < d2.rows(); ++i) {
        Eigen::Index best = 0;
        d2.row(i).minCoeff(&best);
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return labels;
}

struct KMeansResult {
    MatrixXd centers;
    std::vector<int> labels;
    double inertia = 0.0;
    int iterations = 0;
};

namespace detail {

// One Lloyd run from D²-weighted seeding.
inline KMeansResult lloyd_run(const MatrixXd& data, Eigen::Index k, std::mt19937_64& rng, int max_iters) {
    const Eigen::Index n = data.rows();
    MatrixXd centers(k, data.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.row(0) = data.row(pick(rng));
    Eigen::VectorXd closest = (data.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (Eigen::Index c = 1; c < k; ++c) {
        const double total = closest.sum();
        Eigen::Index chosen = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            for (chosen = 0; chosen < n - 1; ++chosen) {
                target -= closest(chosen);
                if (target <= 0.0) break;
            }
        } else {
            chosen = pick(rng);
        }
        centers.row(c) = data.row(chosen);
        closest = closest.cwiseMin((data.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    KMeansResult result;
    result.labels.assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < max_iters; ++iter) {
        result.iterations = iter + 1;
        const MatrixXd d2 = squared_distances(data, centers);
        bool changed = false;
        Eigen::VectorXd best(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index arg = 0;
            best(i) = d2.row(i).minCoeff(&arg);
            auto& label = result.labels[static_cast<std::size_t>(i)];
            if (label != static_cast<int>(arg)) {
                label = static_cast<int>(arg);
                changed = true;
            }
        }
        // Empty clusters steal the point currently farthest from its center.
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (int l : result.labels) ++counts[static_cast<std::size_t>(l)];
        for (Eigen::Index c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) continue;
            Eigen::Index far = 0;
            best.maxCoeff(&far);
            --counts[static_cast<std::size_t>(result.labels[static_cast<std::size_t>(far)])];
            result.labels[static_cast<std::size_t>(far)] = static_cast<int>(c);
            ++counts[static_cast<std::size_t>(c)];
            best(far) = 0.0;
            changed = true;
        }
        MatrixXd next = MatrixXd::Zero(k, data.cols());
        for (Eigen::Index i = 0; i < n; ++i) next.row(result.labels[static_cast<std::size_t>(i)]) += data.row(i);
        for (Eigen::Index c = 0; c < k; ++c) next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        centers = std::move(next);
        if (!changed) break;
    }
    result.centers = std::move(centers);
    result.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        result.inertia += (data.row(i) - result.centers.row(result.labels[static_cast<std::size_t>(i)])).squaredNorm();
    return result;
}

}  // namespace detail

inline constexpr int kKMeansRestarts = 10;

/// Lloyd's algorithm from seeded D²-weighted starts; the lowest-inertia run of
/// `restarts` is kept. Deterministic for a given seed.
inline KMeansResult kmeans(const MatrixXd& data, Eigen::Index k, std::uint64_t seed, int max_iters = 300,
                           int restarts = kKMeansRestarts) {
    if (k < 1) throw ConfigError("K must be at least 1");
    if (data.rows() < k)
        throw ConfigError("k-means needs N >= K (N=" + std::to_string(data.rows()) + ", K=" + std::to_string(k) + ")");
    if (max_iters < 1 || restarts < 1) throw ConfigError("k-means needs max_iters >= 1 and restarts >= 1");
    std::mt19937_64 rng(seed);
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        auto run = detail::lloyd_run(data, k, rng, max_iters);
        if (run.inertia < best.inertia) best = std::move(run);
    }
    return best;
}

inline MatrixXd kmeans_init(const MatrixXd& latent, Eigen::Index k, std::uint64_t seed, int max_iters = 300) {
    return kmeans(latent, k, seed, max_iters).centers;
}

}  // namespace dcss
