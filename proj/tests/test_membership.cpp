#include <cmath>
#include <random>

#include "dcss/membership.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace dcss;
using dcss::testing::random_matrix;

TEST_SUITE("membership") {

TEST_CASE("equidistant point gets uniform memberships") {
    MatrixXd centers(4, 2);
    centers << 1, 0, -1, 0, 0, 1, 0, -1;
    const MatrixXd p = memberships(MatrixXd::Zero(1, 2), centers, 1.5);
    for (Eigen::Index k = 0; k < 4; ++k) CHECK(std::abs(p(0, k) - 0.25) < 1e-15);
}

TEST_CASE("1-D centers {0, 4}, u = 1, m = 1.5 gives [81/82, 1/82]") {
    MatrixXd centers(2, 1);
    centers << 0, 4;
    MatrixXd u(1, 1);
    u << 1;
    const MatrixXd p = memberships(u, centers, 1.5);
    CHECK(std::abs(p(0, 0) - 81.0 / 82.0) <= 1e-12);
    CHECK(std::abs(p(0, 1) - 1.0 / 82.0) <= 1e-12);
}

TEST_CASE("point on a center is one-hot within the distance floor") {
    MatrixXd centers(3, 2);
    centers << 0, 0, 5, 5, -3, 2;
    const MatrixXd p = memberships(centers.row(1), centers, 1.5);
    CHECK(p(0, 1) > 1.0 - 1e-12);
    CHECK(p(0, 0) < 1e-12);
}

TEST_CASE("m <= 1 is a config error") {
    CHECK_THROWS_AS(memberships(MatrixXd::Zero(1, 2), MatrixXd::Ones(2, 2), 1.0), ConfigError);
    CHECK_THROWS_AS(memberships(MatrixXd::Zero(1, 2), MatrixXd::Ones(2, 2), 0.5), ConfigError);
}

TEST_CASE("memberships agree with the ratio-form oracle and stay on the simplex") {
    std::mt19937_64 rng(1);
    for (double m : {1.2, 1.5, 2.0, 3.0}) {
        const MatrixXd u = random_matrix(40, 3, rng, 2.0);
        const MatrixXd c = random_matrix(5, 3, rng, 2.0);
        const MatrixXd p = memberships(u, c, m);
        CHECK((p - dcss::testing::membership_oracle(u, c, m)).cwiseAbs().maxCoeff() < 1e-12);
        for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);
        CHECK(p.minCoeff() >= 0.0);
        CHECK(p.maxCoeff() <= 1.0);
    }
}

TEST_CASE("a nearer center always gets the larger membership") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 200; ++t) {
        const MatrixXd c = random_matrix(4, 3, rng, 3.0);
        const MatrixXd u = random_matrix(1, 3, rng, 3.0);
        const MatrixXd p = memberships(u, c, 1.5);
        for (Eigen::Index a = 0; a < 4; ++a)
            for (Eigen::Index b = 0; b < 4; ++b)
                if ((u.row(0) - c.row(a)).norm() < (u.row(0) - c.row(b)).norm()) CHECK(p(0, a) > p(0, b));
    }
}

TEST_CASE("update_centers: one-hot memberships give class means") {
    MatrixXd u(4, 2);
    u << 0, 0, 2, 2, 10, 0, 12, 4;
    MatrixXd p(4, 2);
    p << 1, 0, 1, 0, 0, 1, 0, 1;
    const MatrixXd c = update_centers(u, p, 1.5);
    CHECK(c(0, 0) == 1.0);
    CHECK(c(0, 1) == 1.0);
    CHECK(c(1, 0) == 11.0);
    CHECK(c(1, 1) == 2.0);
}

TEST_CASE("update_centers: uniform memberships give the global mean") {
    std::mt19937_64 rng(3);
    const MatrixXd u = random_matrix(30, 3, rng);
    const MatrixXd p = MatrixXd::Constant(30, 3, 1.0 / 3.0);
    const MatrixXd c = update_centers(u, p, 1.5);
    for (Eigen::Index k = 0; k < 3; ++k) CHECK((c.row(k) - u.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("update_centers: two-point weighted example") {
    MatrixXd u(2, 1);
    u << 0, 2;
    MatrixXd p(2, 2);
    p << 0.9, 0.1, 0.1, 0.9;
    const MatrixXd c = update_centers(u, p, 1.5);
    const double w0 = std::pow(0.9, 1.5), w1 = std::pow(0.1, 1.5);
    CHECK(std::abs(c(0, 0) - (w0 * 0.0 + w1 * 2.0) / (w0 + w1)) < 1e-14);
}

TEST_CASE("update_centers is scale-equivariant") {
    std::mt19937_64 rng(4);
    const MatrixXd u = random_matrix(25, 2, rng);
    const MatrixXd p = dcss::testing::random_simplex_rows(25, 3, rng);
    const MatrixXd c = update_centers(u, p, 1.5);
    const MatrixXd c3 = update_centers((3.0 * u).eval(), p, 1.5);
    CHECK((c3 - 3.0 * c).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("update_centers names the degenerate cluster") {
    MatrixXd u(2, 1);
    u << 0, 1;
    MatrixXd p(2, 3);
    p << 0.5, 0, 0.5, 0.5, 0, 0.5;
    try {
        update_centers(u, p, 1.5);
        FAIL("expected DegenerateClusterError");
    } catch (const DegenerateClusterError& e) {
        CHECK(e.cluster() == 1);
    }
}

TEST_CASE("refreshed centers keep memberships on the simplex") {
    std::mt19937_64 rng(5);
    const MatrixXd u = random_matrix(60, 4, rng);
    const MatrixXd c0 = random_matrix(3, 4, rng);
    const MatrixXd c1 = update_centers(u, memberships(u, c0, 1.5), 1.5);
    const MatrixXd p = memberships(u, c1, 1.5);
    for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);
}

TEST_CASE("kmeans: duplicated singletons are recovered exactly") {
    MatrixXd u(9, 2);
    u << 0, 0, 0, 0, 0, 0, 5, 5, 5, 5, 5, 5, -4, 7, -4, 7, -4, 7;
    const auto r = kmeans(u, 3, 1);
    std::vector<std::pair<double, double>> got;
    for (Eigen::Index k = 0; k < 3; ++k) got.emplace_back(r.centers(k, 0), r.centers(k, 1));
    std::sort(got.begin(), got.end());
    CHECK(got[0] == std::make_pair(-4.0, 7.0));
    CHECK(got[1] == std::make_pair(0.0, 0.0));
    CHECK(got[2] == std::make_pair(5.0, 5.0));
    CHECK(r.inertia == 0.0);
}

TEST_CASE("kmeans: same seed, same centers") {
    std::mt19937_64 rng(6);
    const MatrixXd u = random_matrix(200, 3, rng);
    CHECK(kmeans_init(u, 4, 77) == kmeans_init(u, 4, 77));
}

TEST_CASE("kmeans: two 1-D blobs at ±10 match the brute-force 2-means optimum") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise(0.0, 0.1);
    MatrixXd u(100, 1);
    for (Eigen::Index i = 0; i < 100; ++i) u(i, 0) = (i < 50 ? -10.0 : 10.0) + noise(rng);
    // Oracle: in 1-D the optimal 2-partition is a split of the sorted values.
    std::vector<double> v(u.data(), u.data() + 100);
    std::sort(v.begin(), v.end());
    double best = std::numeric_limits<double>::infinity(), lo = 0, hi = 0;
    for (std::size_t s = 1; s < v.size(); ++s) {
        auto stats = [&](std::size_t a, std::size_t b) {
            double mean = 0;
            for (std::size_t i = a; i < b; ++i) mean += v[i];
            mean /= static_cast<double>(b - a);
            double sse = 0;
            for (std::size_t i = a; i < b; ++i) sse += (v[i] - mean) * (v[i] - mean);
            return std::make_pair(mean, sse);
        };
        const auto [m0, s0] = stats(0, s);
        const auto [m1, s1] = stats(s, v.size());
        if (s0 + s1 < best) best = s0 + s1, lo = m0, hi = m1;
    }
    const auto r = kmeans(u, 2, 3);
    const double a = std::min(r.centers(0, 0), r.centers(1, 0));
    const double b = std::max(r.centers(0, 0), r.centers(1, 0));
    CHECK(std::abs(a - lo) < 1e-9);
    CHECK(std::abs(b - hi) < 1e-9);
    CHECK(std::abs(a + 10.0) < 0.1);
    CHECK(std::abs(b - 10.0) < 0.1);
}

TEST_CASE("kmeans: fewer points than clusters is a config error") {
    CHECK_THROWS_AS(kmeans(MatrixXd::Zero(2, 2), 3, 0), ConfigError);
}

TEST_CASE("kmeans never returns an empty cluster") {
    // Heavy duplicates make empty clusters likely during Lloyd iterations.
    MatrixXd u(12, 1);
    u << 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 100;
    const auto r = kmeans(u, 3, 4);
    std::vector<int> counts(3, 0);
    for (int l : r.labels) ++counts[static_cast<std::size_t>(l)];
    for (int c : counts) CHECK(c > 0);
}

TEST_CASE("nearest_center breaks ties to the lowest index") {
    MatrixXd c(2, 1);
    c << -1, 1;
    CHECK(nearest_center(MatrixXd::Zero(1, 1), c) == std::vector<int>{0});
}

}  // TEST_SUITE
