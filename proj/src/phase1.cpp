#include "dcss/phase1.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace dcss {
namespace {

constexpr Eigen::Index kChunkRows = 1024;

struct AeForward {
    nn::ForwardCache<double> enc;
    nn::ForwardCache<double> dec;
};

AeForward forward_ae(const nn::Autoencoder& ae, const MatrixXd& batch) {
    auto enc = nn::mlp_forward(ae.encoder, batch);
    auto dec = nn::mlp_forward(ae.decoder, enc.output());
    return {std::move(enc), std::move(dec)};
}

// Backpropagates d/dx̂ through the decoder and d/du (direct term) plus the
// decoder's input gradient through the encoder.
void backprop_ae(const nn::Autoencoder& ae, const AeForward& fwd, const MatrixXd& grad_recon,
                 const MatrixXd& grad_latent_direct, AeGradients& out) {
    auto dec = nn::mlp_backward(ae.decoder, fwd.dec, grad_recon);
    MatrixXd grad_latent = dec.input_grad + grad_latent_direct;
    auto enc = nn::mlp_backward(ae.encoder, fwd.enc, grad_latent);
    out.encoder = std::move(enc.grads);
    out.decoder = std::move(dec.grads);
}

}  // namespace

LossBreakdown cluster_loss(const MatrixXd& batch, Eigen::Index k, const nn::Autoencoder& ae, const MatrixXd& centers,
                           double alpha, double m, AeGradients* grads) {
    if (k < 0 || k >= centers.rows())
        throw IndexError("cluster index " + std::to_string(k) + " out of range [0, " + std::to_string(centers.rows()) +
                         ")");
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");

    const auto fwd = forward_ae(ae, batch);
    const MatrixXd& latent = fwd.enc.output();
    const MatrixXd& recon = fwd.dec.output();
    const Eigen::VectorXd weight = memberships(latent, centers, m).col(k).array().pow(m).matrix();

    const MatrixXd recon_diff = batch - recon;
    const MatrixXd center_diff = latent.rowwise() - centers.row(k);
    LossBreakdown loss;
    loss.alpha = alpha;
    loss.reconstruction = weight.dot(recon_diff.rowwise().squaredNorm());
    loss.centering = weight.dot(center_diff.rowwise().squaredNorm());
    loss.total = loss.reconstruction + alpha * loss.centering;

    if (grads != nullptr) {
        const MatrixXd grad_recon = -2.0 * (recon_diff.array().colwise() * weight.array()).matrix();
        const MatrixXd grad_latent = 2.0 * alpha * (center_diff.array().colwise() * weight.array()).matrix();
        backprop_ae(ae, fwd, grad_recon, grad_latent, *grads);
    }
    return loss;
}

LossBreakdown aggregated_loss(const MatrixXd& batch, const nn::Autoencoder& ae, const MatrixXd& centers, double alpha,
                              double m, AeGradients* grads) {
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
    const auto fwd = forward_ae(ae, batch);
    const MatrixXd& latent = fwd.enc.output();
    const MatrixXd& recon = fwd.dec.output();
    const MatrixXd weights = memberships(latent, centers, m).array().pow(m).matrix();  // B×K
    const Eigen::VectorXd row_mass = weights.rowwise().sum();

    const MatrixXd recon_diff = batch - recon;
    LossBreakdown loss;
    loss.alpha = alpha;
    loss.reconstruction = row_mass.dot(recon_diff.rowwise().squaredNorm());
    loss.centering = weights.cwiseProduct(squared_distances(latent, centers)).sum();
    loss.total = loss.reconstruction + alpha * loss.centering;

    if (grads != nullptr) {
        const MatrixXd grad_recon = -2.0 * (recon_diff.array().colwise() * row_mass.array()).matrix();
        // Σ_k w_ik (u_i − μ_k) = (Σ_k w_ik) u_i − Σ_k w_ik μ_k
        const MatrixXd pull = (latent.array().colwise() * row_mass.array()).matrix() - weights * centers;
        backprop_ae(ae, fwd, grad_recon, 2.0 * alpha * pull, *grads);
    }
    return loss;
}

double reconstruction_loss(const MatrixXd& data, const nn::Autoencoder& ae, AeGradients* grads) {
    const auto fwd = forward_ae(ae, data);
    const MatrixXd diff = data - fwd.dec.output();
    const double n = static_cast<double>(data.rows());
    const double loss = diff.rowwise().squaredNorm().sum() / n;
    if (grads != nullptr) {
        backprop_ae(ae, fwd, (-2.0 / n) * diff, MatrixXd::Zero(fwd.enc.output().rows(), fwd.enc.output().cols()),
                    *grads);
    }
    return loss;
}

MatrixXd predict(const nn::MlpParamsd& net, const MatrixXd& data) {
    MatrixXd out(data.rows(), net.output_dim());
    for (Eigen::Index start = 0; start < data.rows(); start += kChunkRows) {
        const Eigen::Index len = std::min(kChunkRows, data.rows() - start);
        out.middleRows(start, len) = nn::mlp_forward(net, MatrixXd(data.middleRows(start, len))).output();
    }
    return out;
}

MatrixXd encode(const nn::MlpParamsd& encoder, const MatrixXd& data) { return predict(encoder, data); }

std::vector<std::vector<Eigen::Index>> make_batches(Eigen::Index n, Eigen::Index batch_size, std::mt19937_64& rng) {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    // Fisher-Yates with an explicit draw so the order is library-independent.
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    std::vector<std::vector<Eigen::Index>> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const auto end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

MatrixXd gather_rows(const MatrixXd& data, const std::vector<Eigen::Index>& rows) {
    MatrixXd out(static_cast<Eigen::Index>(rows.size()), data.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = data.row(rows[i]);
    return out;
}

PretrainResult pretrain_reconstruction(const MatrixXd& data, nn::Autoencoder& ae, int epochs, double lr,
                                       Eigen::Index batch_size, std::uint64_t seed) {
    PretrainResult result;
    if (epochs <= 0) return result;
    std::mt19937_64 rng(seed);
    nn::AdamState<double> enc_opt(ae.encoder);
    nn::AdamState<double> dec_opt(ae.decoder);
    AeGradients grads;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (const auto& rows : make_batches(data.rows(), batch_size, rng)) {
            reconstruction_loss(gather_rows(data, rows), ae, &grads);
            nn::adam_step(ae.encoder, grads.encoder, enc_opt, lr);
            nn::adam_step(ae.decoder, grads.decoder, dec_opt, lr);
        }
        double total = 0.0;
        for (Eigen::Index start = 0; start < data.rows(); start += kChunkRows) {
            const Eigen::Index len = std::min(kChunkRows, data.rows() - start);
            total += reconstruction_loss(data.middleRows(start, len), ae) * static_cast<double>(len);
        }
        result.epoch_losses.push_back(total / static_cast<double>(data.rows()));
    }
    return result;
}

Phase1Trainer::Phase1Trainer(nn::Autoencoder ae, MatrixXd centers, Phase1Config config)
    : ae_(std::move(ae)),
      centers_(std::move(centers)),
      config_(config),
      encoder_opt_(ae_.encoder),
      decoder_opt_(ae_.decoder),
      rng_(config.seed) {
    if (config_.t1 < 1) throw ConfigError("T1 must be >= 1");
    if (!(config_.m > 1.0)) throw ConfigError("fuzziness m must be > 1");
    if (centers_.cols() != ae_.encoder.output_dim()) throw ShapeError("centers do not match latent dimension");
}

void Phase1Trainer::apply(const AeGradients& grads) {
    nn::adam_step(ae_.encoder, grads.encoder, encoder_opt_, config_.lr);
    nn::adam_step(ae_.decoder, grads.decoder, decoder_opt_, config_.lr);
    ++steps_;
}

template <typename StepFn>
Phase1LogEntry Phase1Trainer::run(const MatrixXd& data, StepFn&& step) {
    Phase1LogEntry entry;
    entry.epoch = ++epoch_;
    std::int64_t terms = 0;
    for (const auto& rows : make_batches(data.rows(), config_.batch_size, rng_)) {
        const MatrixXd batch = gather_rows(data, rows);
        step(batch, [&](const LossBreakdown& loss) {
            entry.mean_reconstruction += loss.reconstruction;
            entry.mean_centering += loss.centering;
            entry.mean_total += loss.total;
            ++terms;
        });
    }
    if (terms > 0) {
        entry.mean_reconstruction /= static_cast<double>(terms);
        entry.mean_centering /= static_cast<double>(terms);
        entry.mean_total /= static_cast<double>(terms);
    }
    if (epoch_ % config_.t1 == 0) {
        const MatrixXd latent = encode(ae_.encoder, data);
        centers_ = update_centers(latent, memberships(latent, centers_, config_.m), config_.m);
        entry.centers_updated = true;
    }
    log_.push_back(entry);
    return entry;
}

Phase1LogEntry Phase1Trainer::run_epoch(const MatrixXd& data) {
    return run(data, [&](const MatrixXd& batch, auto&& record) {
        AeGradients grads;
        for (Eigen::Index k = 0; k < centers_.rows(); ++k) {
            record(cluster_loss(batch, k, ae_, centers_, config_.alpha, config_.m, &grads));
            apply(grads);
        }
    });
}

Phase1LogEntry Phase1Trainer::run_aggregated_epoch(const MatrixXd& data) {
    return run(data, [&](const MatrixXd& batch, auto&& record) {
        AeGradients grads;
        LossBreakdown sum = aggregated_loss(batch, ae_, centers_, config_.alpha, config_.m, &grads);
        const double k = static_cast<double>(centers_.rows());
        // Logged per cluster so the two variants share a scale.
        record({sum.reconstruction / k, sum.centering / k, sum.total / k, sum.alpha});
        apply(grads);
    });
}

}  // namespace dcss
