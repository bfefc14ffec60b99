#pragma once

// Test-side oracles shared by the unit tests and the acceptance binary. Every
// loss here is written out directly from its defining formula with plain
// loops, independently of the library implementation it is checked against.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dcss/tensor_nn.hpp"

namespace dcss::testing {

using nn::MatrixXd;
using nn::MlpParamsd;

inline MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
}

// Dirichlet(1) draw: normalized exponentials.
inline Eigen::VectorXd random_simplex(Eigen::Index k, std::mt19937_64& rng) {
    std::exponential_distribution<double> expo(1.0);
    Eigen::VectorXd v(k);
    for (Eigen::Index i = 0; i < k; ++i) v(i) = expo(rng);
    return v / v.sum();
}

// Mixture (1 − t)·e_c + t·Dirichlet(1) with t ~ U(0, spread): rows concentrated
// near a vertex, so that adjacent pairs are common.
inline Eigen::VectorXd near_vertex(Eigen::Index k, Eigen::Index c, double spread, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, spread);
    const double t = unif(rng);
    Eigen::VectorXd v = t * random_simplex(k, rng);
    v(c) += 1.0 - t;
    return v;
}

inline MatrixXd random_simplex_rows(Eigen::Index n, Eigen::Index k, std::mt19937_64& rng) {
    MatrixXd q(n, k);
    for (Eigen::Index i = 0; i < n; ++i) q.row(i) = random_simplex(k, rng).transpose();
    return q;
}

// Visits every scalar parameter of a network.
template <typename Fn>
void for_each_parameter(MlpParamsd& params, Fn&& fn) {
    for (auto& layer : params.layers) {
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) fn(layer.weight.data()[i]);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) fn(layer.bias.data()[i]);
    }
}

inline std::vector<double> flatten(const MlpParamsd& params) {
    std::vector<double> out;
    auto copy = params;
    for_each_parameter(copy, [&](double& v) { out.push_back(v); });
    return out;
}

// Central differences of `loss` with respect to every parameter of `params`.
// The parameters are perturbed in place and restored.
inline std::vector<double> numeric_gradient(MlpParamsd& params, const std::function<double()>& loss, double h = 1e-5) {
    std::vector<double> grad;
    for_each_parameter(params, [&](double& v) {
        const double saved = v;
        v = saved + h;
        const double up = loss();
        v = saved - h;
        const double down = loss();
        v = saved;
        grad.push_back((up - down) / (2.0 * h));
    });
    return grad;
}

// Five-point central stencil, error O(h⁴). With h = 1e-5 the two-point
// version loses ~1e-10 absolute to cancellation, which is already 1e-4
// relative on gradient entries of size 1e-6; the wider step avoids that.
inline std::vector<double> numeric_gradient_5pt(MlpParamsd& params, const std::function<double()>& loss,
                                                double h = 1e-4) {
    std::vector<double> grad;
    for_each_parameter(params, [&](double& v) {
        const double saved = v;
        auto at = [&](double offset) {
            v = saved + offset;
            return loss();
        };
        const double d1 = at(h) - at(-h), d2 = at(2.0 * h) - at(-2.0 * h);
        v = saved;
        grad.push_back((8.0 * d1 - d2) / (12.0 * h));
    });
    return grad;
}

// Largest elementwise |a − n| / max(|a|, |n|, floor). The floor keeps entries
// that are zero analytically (dead relu units) from dividing by round-off.
inline double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                 double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

// True when every relu pre-activation is at least `margin` away from zero, so
// a finite-difference step cannot cross a kink.
inline bool relu_margin_ok(const MlpParamsd& params, const MatrixXd& input, double margin) {
    MatrixXd x = input;
    for (const auto& layer : params.layers) {
        MatrixXd z = x * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        if (layer.activation == nn::Activation::relu) {
            if (z.cwiseAbs().minCoeff() < margin) return false;
            x = z.cwiseMax(0.0);
        } else if (layer.activation == nn::Activation::softmax) {
            x = nn::softmax_rows(z);
        } else {
            x = z;
        }
    }
    return true;
}

// Fuzzy membership straight from the ratio form
// p_ik = 1 / Σ_j (d²_ik / d²_ij)^(1/(m−1)), distances floored at 1e-12.
inline MatrixXd membership_oracle(const MatrixXd& u, const MatrixXd& centers, double m) {
    MatrixXd p(u.rows(), centers.rows());
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        std::vector<double> d2(static_cast<std::size_t>(centers.rows()));
        for (Eigen::Index k = 0; k < centers.rows(); ++k) {
            double s = 0.0;
            for (Eigen::Index c = 0; c < u.cols(); ++c) s += (u(i, c) - centers(k, c)) * (u(i, c) - centers(k, c));
            d2[static_cast<std::size_t>(k)] = std::max(s, 1e-12);
        }
        for (Eigen::Index k = 0; k < centers.rows(); ++k) {
            double denom = 0.0;
            for (Eigen::Index j = 0; j < centers.rows(); ++j)
                denom += std::pow(d2[static_cast<std::size_t>(k)] / d2[static_cast<std::size_t>(j)], 1.0 / (m - 1.0));
            p(i, k) = 1.0 / denom;
        }
    }
    return p;
}

// Σ_i w_i (‖x_i − x̂_i‖² + α‖u_i − μ_k‖²) with w_i = p_ik^m held fixed.
inline double cluster_loss_oracle(const MatrixXd& x, const nn::Autoencoder& ae, const MatrixXd& centers,
                                  Eigen::Index k, double alpha, double m, const MatrixXd& p_fixed) {
    const MatrixXd u = nn::mlp_forward(ae.encoder, x).output();
    const MatrixXd xr = nn::mlp_forward(ae.decoder, u).output();
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double w = std::pow(p_fixed(i, k), m);
        double rec = 0.0, cen = 0.0;
        for (Eigen::Index c = 0; c < x.cols(); ++c) rec += (x(i, c) - xr(i, c)) * (x(i, c) - xr(i, c));
        for (Eigen::Index c = 0; c < u.cols(); ++c) cen += (u(i, c) - centers(k, c)) * (u(i, c) - centers(k, c));
        total += w * (rec + alpha * cen);
    }
    return total;
}

// Pair classes: +1 similar, −1 dissimilar, 0 ambiguous, from a gate matrix's rows.
inline std::vector<int> pair_classes(const MatrixXd& gate_rows, double zeta, double gamma) {
    const Eigen::Index b = gate_rows.rows();
    std::vector<int> cls(static_cast<std::size_t>(b * b));
    for (Eigen::Index i = 0; i < b; ++i)
        for (Eigen::Index j = 0; j < b; ++j) {
            const double g = gate_rows.row(i).dot(gate_rows.row(j));
            cls[static_cast<std::size_t>(i * b + j)] = g >= zeta ? 1 : (g <= gamma ? -1 : 0);
        }
    return cls;
}

// Smallest distance of any pair gate value to either threshold.
inline double gate_margin(const MatrixXd& gate_rows, double zeta, double gamma) {
    double margin = 1.0;
    for (Eigen::Index i = 0; i < gate_rows.rows(); ++i)
        for (Eigen::Index j = 0; j < gate_rows.rows(); ++j) {
            const double g = gate_rows.row(i).dot(gate_rows.row(j));
            margin = std::min({margin, std::abs(g - zeta), std::abs(g - gamma)});
        }
    return margin;
}

// Σ over ordered pairs: similar → 1 − q_i·q_j, dissimilar → q_i·q_j.
inline double pair_loss_oracle(const MatrixXd& q, const std::vector<int>& cls) {
    const Eigen::Index b = q.rows();
    double total = 0.0;
    for (Eigen::Index i = 0; i < b; ++i)
        for (Eigen::Index j = 0; j < b; ++j) {
            double s = 0.0;
            for (Eigen::Index c = 0; c < q.cols(); ++c) s += q(i, c) * q(j, c);
            const int c = cls[static_cast<std::size_t>(i * b + j)];
            if (c == 1) total += 1.0 - s;
            if (c == -1) total += s;
        }
    return total;
}

// Exhaustive maximum over permutations of Σ_r w(r, perm[r]).
inline double brute_force_assignment(const MatrixXd& w) {
    std::vector<int> perm(static_cast<std::size_t>(w.rows()));
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
    double best = -std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (std::size_t r = 0; r < perm.size(); ++r) s += w(static_cast<Eigen::Index>(r), perm[r]);
        best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace dcss::testing
