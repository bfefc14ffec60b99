#pragma once

// Checkable consequences of the soft-assignment threshold theory:
//   * q_i·q_j <= min(max q_i, max q_j) for any simplex pair;
//   * with zeta > 2/3, adjacent rows (q_i·q_j >= zeta) share their argmax and
//     both maxima are >= zeta;
//   * with gamma < zeta², two rows adjacent to a common row are never
//     dissimilar, and confident rows sharing an argmax are never dissimilar.
// Every checker reports violations rather than assuming they cannot occur.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dcss/phase2.hpp"

namespace dcss {

inline constexpr double kTheoryTolerance = 1e-12;
inline constexpr std::size_t kMaxReportedViolations = 100;

struct ThresholdVerdict {
    bool valid = false;
    std::vector<std::string> reasons;  // empty when valid
};

/// Valid iff zeta > 2/3, gamma < zeta² and 0 <= gamma < zeta <= 1.
ThresholdVerdict thresholds_valid(const PairThresholds& thr);

/// True iff qi·qj <= min(max qi, max qj) + 1e-12.
bool check_inner_bound(const Eigen::VectorXd& qi, const Eigen::VectorXd& qj);

/// Unordered pairs (i < j) of rows violating the inner-product bound.
std::int64_t count_inner_bound_violations(const MatrixXd& q);

using IndexPair = std::pair<Eigen::Index, Eigen::Index>;

struct AdjacencyReport {
    std::vector<Eigen::Index> adjacency_count;  // neighbours j != i with q_i·q_j >= zeta
    std::vector<Eigen::Index> orphans;
    std::int64_t adjacent_pairs = 0;              // unordered, i < j
    std::int64_t argmax_violations = 0;           // adjacent but different argmax
    std::int64_t confidence_violations = 0;       // adjacent but a maximum below zeta
    std::vector<IndexPair> argmax_examples;       // first few violating pairs
};

/// Throws ContractError when zeta <= 2/3 (the argmax guarantee needs it).
AdjacencyReport check_adjacency_cluster(const MatrixXd& q, double zeta);

struct DissimilarReport {
    std::vector<std::string> precondition_failures;
    std::int64_t shared_argmax_violations = 0;    // dissimilar, same argmax, both maxima >= zeta
    std::int64_t common_neighbour_violations = 0; // triples i~j, i~k with q_j·q_k <= gamma
    std::vector<IndexPair> shared_argmax_examples;
    std::vector<std::array<Eigen::Index, 3>> common_neighbour_examples;  // (i, j, k)

    std::int64_t total() const { return shared_argmax_violations + common_neighbour_violations; }
};

/// Preconditions (valid thresholds, no orphans) are reported, not thrown.
DissimilarReport check_dissimilar_cluster(const MatrixXd& q, const PairThresholds& thr);

struct OrphanCount {
    Eigen::Index count = 0;
    double fraction = 0.0;
};

OrphanCount orphan_count(const MatrixXd& q, double zeta);

inline constexpr int kResidualBins = 20;

struct ResidualSummary {
    Eigen::VectorXd h;                                // ‖onehot(argmax q_i) − q_i‖₁
    std::array<Eigen::Index, kResidualBins> histogram{};  // bins of width 0.1 over [0, 2]

    double fraction_at_most(double threshold) const;
    double mean() const { return h.size() > 0 ? h.mean() : 0.0; }
};

ResidualSummary residuals(const MatrixXd& q);

}  // namespace dcss
