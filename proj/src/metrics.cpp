#include "dcss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "dcss/errors.hpp"

namespace dcss {
namespace {

void require_same_length(const LabelVector& a, const LabelVector& b) {
    if (a.size() != b.size())
        throw ShapeError("label vectors differ in length (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
}

// Maps arbitrary label values to 0..n-1 preserving order.
LabelVector compact(const LabelVector& labels, int& n_values) {
    std::map<int, int> index;
    for (int l : labels) index.emplace(l, 0);
    int next = 0;
    for (auto& [value, idx] : index) idx = next++;
    n_values = next;
    LabelVector out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = index[labels[i]];
    return out;
}

// −Σ p log p over the given counts; summed in ascending order so the result
// does not depend on label order.
double entropy(std::vector<double> counts, double total) {
    std::sort(counts.begin(), counts.end());
    double h = 0.0;
    for (double c : counts) {
        if (c <= 0.0) continue;
        const double p = c / total;
        h -= p * std::log(p);
    }
    return h;
}

}  // namespace

nn::MatrixXd confusion_matrix(const LabelVector& truth, const LabelVector& pred) {
    require_same_length(truth, pred);
    int n_true = 0;
    int n_pred = 0;
    const auto t = compact(truth, n_true);
    const auto p = compact(pred, n_pred);
    const int n = std::max(n_true, n_pred);
    nn::MatrixXd counts = nn::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < t.size(); ++i) counts(t[i], p[i]) += 1.0;
    return counts;
}

std::vector<int> hungarian(const nn::MatrixXd& weights) {
    if (weights.rows() != weights.cols())
        throw ShapeError("assignment needs a square matrix, got " + std::to_string(weights.rows()) + "x" +
                         std::to_string(weights.cols()));
    const auto n = static_cast<std::size_t>(weights.rows());
    if (n == 0) return {};
    const double inf = std::numeric_limits<double>::infinity();
    // Shortest augmenting path with potentials on cost = −weight, 1-based.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t row = 1; row <= n; ++row) {
        match[0] = row;
        std::size_t col0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[col0] = true;
            const std::size_t r0 = match[col0];
            double delta = inf;
            std::size_t col1 = 0;
            for (std::size_t c = 1; c <= n; ++c) {
                if (used[c]) continue;
                const double cur = -weights(static_cast<Eigen::Index>(r0 - 1), static_cast<Eigen::Index>(c - 1)) -
                                   u[r0] - v[c];
                if (cur < minv[c]) {
                    minv[c] = cur;
                    way[c] = col0;
                }
                if (minv[c] < delta) {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for (std::size_t c = 0; c <= n; ++c) {
                if (used[c]) {
                    u[match[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
        } while (match[col0] != 0);
        do {
            const std::size_t col1 = way[col0];
            match[col0] = match[col1];
            col0 = col1;
        } while (col0 != 0);
    }
    std::vector<int> perm(n);
    for (std::size_t c = 1; c <= n; ++c) perm[match[c] - 1] = static_cast<int>(c - 1);
    return perm;
}

double accuracy(const LabelVector& truth, const LabelVector& pred) {
    require_same_length(truth, pred);
    if (truth.empty()) return 0.0;
    const auto counts = confusion_matrix(truth, pred);
    const auto perm = hungarian(counts);
    double matched = 0.0;
    for (std::size_t r = 0; r < perm.size(); ++r) matched += counts(static_cast<Eigen::Index>(r), perm[r]);
    return matched / static_cast<double>(truth.size());
}

double nmi(const LabelVector& truth, const LabelVector& pred) {
    require_same_length(truth, pred);
    if (truth.empty()) return 0.0;
    const auto counts = confusion_matrix(truth, pred);
    const double total = static_cast<double>(truth.size());
    std::vector<double> rows, cols, joint;
    for (Eigen::Index r = 0; r < counts.rows(); ++r) rows.push_back(counts.row(r).sum());
    for (Eigen::Index c = 0; c < counts.cols(); ++c) cols.push_back(counts.col(c).sum());
    for (Eigen::Index r = 0; r < counts.rows(); ++r)
        for (Eigen::Index c = 0; c < counts.cols(); ++c) joint.push_back(counts(r, c));
    const double h_true = entropy(rows, total);
    const double h_pred = entropy(cols, total);
    const double mutual = h_true + h_pred - entropy(joint, total);
    const double denom = std::max(h_true, h_pred);
    if (!(mutual > 0.0) || !(denom > 0.0)) return 0.0;
    return std::clamp(mutual / denom, 0.0, 1.0);
}

}  // namespace dcss
