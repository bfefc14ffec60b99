#include "dcss/phase2.hpp"

#include <cmath>

#include "dcss/phase1.hpp"

namespace dcss {
namespace {

void require_thresholds(const PairThresholds& thr) {
    if (!thr.in_range())
        throw ConfigError("thresholds need 0 <= gamma < zeta <= 1 (zeta=" + std::to_string(thr.zeta) +
                          ", gamma=" + std::to_string(thr.gamma) + ")");
}

// Σ_ij gate_ij: similar → (1 − s_ij), dissimilar → s_ij, where gates come from
// `gate` and penalties from `sim`. Both are symmetric, so
// dL/dQ = 2 · C · Q with C = −1 (similar), +1 (dissimilar), 0 (ambiguous).
PairLossReport gated_pair_loss(const MatrixXd& gate, const MatrixXd& sim, const MatrixXd& q,
                               const PairThresholds& thr, SupervisionSource source, MatrixXd* grad_q) {
    const Eigen::Index b = sim.rows();
    PairLossReport report;
    report.source = source;
    MatrixXd coeff = MatrixXd::Zero(b, b);
    for (Eigen::Index i = 0; i < b; ++i) {
        for (Eigen::Index j = 0; j < b; ++j) {
            const double g = gate(i, j);
            if (g >= thr.zeta) {
                ++report.similar;
                report.loss += 1.0 - sim(i, j);
                coeff(i, j) = -1.0;
            } else if (g <= thr.gamma) {
                ++report.dissimilar;
                report.loss += sim(i, j);
                coeff(i, j) = 1.0;
            } else {
                ++report.ambiguous;
            }
        }
    }
    if (grad_q != nullptr) *grad_q = 2.0 * coeff * q;
    return report;
}

}  // namespace

void require_simplex_rows(const MatrixXd& rows, const char* what) {
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        const double sum = rows.row(i).sum();
        if (!(std::abs(sum - 1.0) <= kSimplexTolerance) || rows.row(i).minCoeff() < -kSimplexTolerance)
            throw ContractError(std::string(what) + " row " + std::to_string(i) + " is not on the simplex (sum " +
                                std::to_string(sum) + ")");
    }
}

MatrixXd pairwise_inner(const MatrixXd& rows) {
    require_simplex_rows(rows, "assignment");
    const Eigen::Index n = rows.rows();
    MatrixXd s(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            s(i, j) = rows.row(i).dot(rows.row(j));
            s(j, i) = s(i, j);
        }
    }
    return s;
}

PairLossReport loss_M(const MatrixXd& p, const MatrixXd& q, const PairThresholds& thr, MatrixXd* grad_q) {
    require_thresholds(thr);
    if (p.rows() != q.rows()) throw ShapeError("memberships and assignments have different row counts");
    const MatrixXd gate = pairwise_inner(p);
    const MatrixXd sim = pairwise_inner(q);
    return gated_pair_loss(gate, sim, q, thr, SupervisionSource::u_space, grad_q);
}

PairLossReport loss_M_prime(const MatrixXd& q, const PairThresholds& thr, MatrixXd* grad_q) {
    require_thresholds(thr);
    const MatrixXd sim = pairwise_inner(q);
    return gated_pair_loss(sim, sim, q, thr, SupervisionSource::q_space, grad_q);
}

PairLossReport pair_census(const MatrixXd& gate, const PairThresholds& thr, SupervisionSource source) {
    require_thresholds(thr);
    require_simplex_rows(gate, "assignment");
    PairLossReport report;
    report.source = source;
    const Eigen::Index n = gate.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double g = gate.row(i).dot(gate.row(j));
            const std::int64_t w = i == j ? 1 : 2;
            if (g >= thr.zeta)
                report.similar += w;
            else if (g <= thr.gamma)
                report.dissimilar += w;
            else
                report.ambiguous += w;
        }
    }
    return report;
}

std::vector<int> assign(const MatrixXd& q) {
    std::vector<int> labels(static_cast<std::size_t>(q.rows()));
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < q.cols(); ++k)
            if (q(i, k) > q(i, best)) best = k;
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return labels;
}

PairLossReport phase2_batch_loss(const MatrixXd& batch, const nn::MlpParamsd& encoder, const nn::MlpParamsd& mnet,
                                 const MatrixXd& centers, const PairThresholds& thr, double m,
                                 SupervisionSource source, Phase2Gradients* grads) {
    const auto enc = nn::mlp_forward(encoder, batch);
    const auto net = nn::mlp_forward(mnet, enc.output());
    MatrixXd grad_q;
    MatrixXd* want = grads != nullptr ? &grad_q : nullptr;
    const PairLossReport report = source == SupervisionSource::u_space
                                      ? loss_M(memberships(enc.output(), centers, m), net.output(), thr, want)
                                      : loss_M_prime(net.output(), thr, want);
    if (grads != nullptr) {
        auto mnet_back = nn::mlp_backward(mnet, net, grad_q);
        grads->encoder = nn::mlp_backward(encoder, enc, mnet_back.input_grad).grads;
        grads->mnet = std::move(mnet_back.grads);
    }
    return report;
}

Phase2Trainer::Phase2Trainer(nn::MlpParamsd encoder, nn::MlpParamsd mnet, MatrixXd centers, Phase2Config config)
    : encoder_(std::move(encoder)),
      mnet_(std::move(mnet)),
      centers_(std::move(centers)),
      config_(config),
      encoder_opt_(encoder_),
      mnet_opt_(mnet_),
      rng_(config.seed) {
    require_thresholds(config_.thresholds);
    if (config_.t2 < 0) throw ConfigError("T2 must be >= 0");
    if (!(config_.m > 1.0)) throw ConfigError("fuzziness m must be > 1");
    if (encoder_.output_dim() != mnet_.input_dim()) throw ShapeError("MNet input does not match latent dimension");
    if (centers_.cols() != encoder_.output_dim()) throw ShapeError("centers do not match latent dimension");
    if (centers_.rows() != mnet_.output_dim()) throw ShapeError("MNet output count does not match cluster count");
    if (mnet_.layers.back().activation != nn::Activation::softmax)
        throw ConfigError("MNet must end in a softmax layer");
}

Phase2LogEntry Phase2Trainer::run_epoch(const MatrixXd& data) {
    Phase2LogEntry entry;
    entry.epoch = ++epoch_;
    const bool latent_supervision = epoch_ <= config_.t2;
    entry.report.source = latent_supervision ? SupervisionSource::u_space : SupervisionSource::q_space;

    for (const auto& rows : make_batches(data.rows(), config_.batch_size, rng_)) {
        Phase2Gradients grads;
        entry.report += phase2_batch_loss(gather_rows(data, rows), encoder_, mnet_, centers_, config_.thresholds,
                                          config_.m, entry.report.source, &grads);
        nn::adam_step(mnet_, grads.mnet, mnet_opt_, config_.lr_mnet);
        nn::adam_step(encoder_, grads.encoder, encoder_opt_, config_.lr_encoder);
    }

    if (latent_supervision) {
        const MatrixXd latent = encode(encoder_, data);
        centers_ = update_centers(latent, memberships(latent, centers_, config_.m), config_.m);
        entry.centers_updated = true;
    }
    entry.census = pair_census(latent_supervision ? memberships_of(data) : soft_assign(data), config_.thresholds,
                               entry.report.source);
    log_.push_back(entry);
    return entry;
}

MatrixXd Phase2Trainer::soft_assign(const MatrixXd& data) const { return predict(mnet_, encode(encoder_, data)); }

MatrixXd Phase2Trainer::memberships_of(const MatrixXd& data) const {
    return memberships(encode(encoder_, data), centers_, config_.m);
}

}  // namespace dcss
