#include "dcss/theory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

namespace dcss {
namespace {

// Fixed-width adjacency rows, one bit per sample.
class BitRows {
public:
    BitRows(Eigen::Index rows, Eigen::Index cols)
        : words_((static_cast<std::size_t>(cols) + 63) / 64),
          bits_(static_cast<std::size_t>(rows) * words_, 0) {}

    void set(Eigen::Index r, Eigen::Index c) {
        bits_[static_cast<std::size_t>(r) * words_ + static_cast<std::size_t>(c) / 64] |= std::uint64_t{1}
                                                                                            << (c % 64);
    }

    // Number of columns set in both rows; the first common column goes to `first`.
    std::int64_t common(Eigen::Index a, Eigen::Index b, Eigen::Index& first) const {
        const std::uint64_t* ra = &bits_[static_cast<std::size_t>(a) * words_];
        const std::uint64_t* rb = &bits_[static_cast<std::size_t>(b) * words_];
        std::int64_t n = 0;
        first = -1;
        for (std::size_t w = 0; w < words_; ++w) {
            const std::uint64_t both = ra[w] & rb[w];
            if (both == 0) continue;
            if (first < 0) first = static_cast<Eigen::Index>(w * 64 + static_cast<std::size_t>(std::countr_zero(both)));
            n += std::popcount(both);
        }
        return n;
    }

private:
    std::size_t words_;
    std::vector<std::uint64_t> bits_;
};

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

ThresholdVerdict thresholds_valid(const PairThresholds& thr) {
    ThresholdVerdict v;
    if (!thr.in_range())
        v.reasons.push_back("need 0 <= gamma < zeta <= 1 (zeta=" + fmt(thr.zeta) + ", gamma=" + fmt(thr.gamma) + ")");
    if (!(thr.zeta > 2.0 / 3.0)) v.reasons.push_back("zeta=" + fmt(thr.zeta) + " must exceed 2/3");
    if (!(thr.gamma < thr.zeta * thr.zeta))
        v.reasons.push_back("gamma=" + fmt(thr.gamma) + " must be below zeta^2=" + fmt(thr.zeta * thr.zeta));
    v.valid = v.reasons.empty();
    return v;
}

bool check_inner_bound(const Eigen::VectorXd& qi, const Eigen::VectorXd& qj) {
    if (qi.size() != qj.size()) throw ShapeError("assignment vectors differ in length");
    require_simplex_rows(qi.transpose(), "q_i");
    require_simplex_rows(qj.transpose(), "q_j");
    return qi.dot(qj) <= std::min(qi.maxCoeff(), qj.maxCoeff()) + kTheoryTolerance;
}

std::int64_t count_inner_bound_violations(const MatrixXd& q) {
    require_simplex_rows(q, "assignment");
    const Eigen::VectorXd maxima = q.rowwise().maxCoeff();
    std::int64_t violations = 0;
    for (Eigen::Index i = 0; i < q.rows(); ++i)
        for (Eigen::Index j = i + 1; j < q.rows(); ++j)
            if (q.row(i).dot(q.row(j)) > std::min(maxima(i), maxima(j)) + kTheoryTolerance) ++violations;
    return violations;
}

AdjacencyReport check_adjacency_cluster(const MatrixXd& q, double zeta) {
    if (!(zeta > 2.0 / 3.0)) throw ContractError("adjacency check needs zeta > 2/3, got " + fmt(zeta));
    require_simplex_rows(q, "assignment");
    const Eigen::Index n = q.rows();
    const auto labels = assign(q);
    const Eigen::VectorXd maxima = q.rowwise().maxCoeff();

    AdjacencyReport report;
    report.adjacency_count.assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (q.row(i).dot(q.row(j)) < zeta) continue;
            ++report.adjacent_pairs;
            ++report.adjacency_count[static_cast<std::size_t>(i)];
            ++report.adjacency_count[static_cast<std::size_t>(j)];
            if (labels[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(j)]) {
                ++report.argmax_violations;
                if (report.argmax_examples.size() < kMaxReportedViolations) report.argmax_examples.emplace_back(i, j);
            }
            if (std::min(maxima(i), maxima(j)) < zeta - kTheoryTolerance) ++report.confidence_violations;
        }
    }
    for (Eigen::Index i = 0; i < n; ++i)
        if (report.adjacency_count[static_cast<std::size_t>(i)] == 0) report.orphans.push_back(i);
    return report;
}

DissimilarReport check_dissimilar_cluster(const MatrixXd& q, const PairThresholds& thr) {
    require_simplex_rows(q, "assignment");
    DissimilarReport report;
    const auto verdict = thresholds_valid(thr);
    report.precondition_failures = verdict.reasons;

    const Eigen::Index n = q.rows();
    const auto labels = assign(q);
    const Eigen::VectorXd maxima = q.rowwise().maxCoeff();

    BitRows adjacent(n, n);
    std::vector<bool> has_neighbour(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (q.row(i).dot(q.row(j)) >= thr.zeta) {
                adjacent.set(i, j);
                adjacent.set(j, i);
                has_neighbour[static_cast<std::size_t>(i)] = has_neighbour[static_cast<std::size_t>(j)] = true;
            }
        }
    }
    Eigen::Index orphans = 0;
    for (bool b : has_neighbour) orphans += b ? 0 : 1;
    if (orphans > 0)
        report.precondition_failures.push_back(std::to_string(orphans) + " sample(s) have no adjacent neighbour");

    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = j + 1; k < n; ++k) {
            if (q.row(j).dot(q.row(k)) > thr.gamma) continue;
            if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(k)] &&
                std::min(maxima(j), maxima(k)) >= thr.zeta) {
                ++report.shared_argmax_violations;
                if (report.shared_argmax_examples.size() < kMaxReportedViolations)
                    report.shared_argmax_examples.emplace_back(j, k);
            }
            Eigen::Index first = -1;
            const auto triples = adjacent.common(j, k, first);
            if (triples > 0) {
                report.common_neighbour_violations += triples;
                if (report.common_neighbour_examples.size() < kMaxReportedViolations)
                    report.common_neighbour_examples.push_back({first, j, k});
            }
        }
    }
    return report;
}

OrphanCount orphan_count(const MatrixXd& q, double zeta) {
    require_simplex_rows(q, "assignment");
    const Eigen::Index n = q.rows();
    std::vector<bool> has_neighbour(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (has_neighbour[static_cast<std::size_t>(i)]) continue;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i || q.row(i).dot(q.row(j)) < zeta) continue;
            has_neighbour[static_cast<std::size_t>(i)] = has_neighbour[static_cast<std::size_t>(j)] = true;
            break;
        }
    }
    OrphanCount out;
    for (bool b : has_neighbour) out.count += b ? 0 : 1;
    out.fraction = n > 0 ? static_cast<double>(out.count) / static_cast<double>(n) : 0.0;
    return out;
}

double ResidualSummary::fraction_at_most(double threshold) const {
    if (h.size() == 0) return 0.0;
    return static_cast<double>((h.array() <= threshold).count()) / static_cast<double>(h.size());
}

ResidualSummary residuals(const MatrixXd& q) {
    require_simplex_rows(q, "assignment");
    const auto labels = assign(q);
    ResidualSummary out;
    out.h.resize(q.rows());
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        Eigen::RowVectorXd onehot = Eigen::RowVectorXd::Zero(q.cols());
        onehot(labels[static_cast<std::size_t>(i)]) = 1.0;
        out.h(i) = (onehot - q.row(i)).lpNorm<1>();
        const int bin = std::clamp(static_cast<int>(std::floor(out.h(i) / 0.1)), 0, kResidualBins - 1);
        ++out.histogram[static_cast<std::size_t>(bin)];
    }
    return out;
}

}  // namespace dcss
