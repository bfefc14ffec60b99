#pragma once

// Phase 1: autoencoder training with K cluster-specific weighted losses per batch.

#include <cstdint>
#include <random>
#include <vector>

#include "dcss/membership.hpp"
#include "dcss/tensor_nn.hpp"

namespace dcss {

struct LossBreakdown {
    double reconstruction = 0.0;  // Σ p_ik^m ‖x_i − x̂_i‖²
    double centering = 0.0;       // Σ p_ik^m ‖u_i − μ_k‖²
    double total = 0.0;           // reconstruction + alpha · centering
    double alpha = 0.0;
};

struct AeGradients {
    nn::MlpParamsd encoder;
    nn::MlpParamsd decoder;
};

/// Loss of the k-th run (k is 0-based) on one batch. Memberships are computed
/// from the current latent codes and held constant, so no gradient flows
/// through them. Gradients are written to `grads` when it is non-null.
LossBreakdown cluster_loss(const MatrixXd& batch, Eigen::Index k, const nn::Autoencoder& ae, const MatrixXd& centers,
                           double alpha, double m, AeGradients* grads = nullptr);

/// Σ_k of cluster_loss over all clusters, evaluated in one pass.
LossBreakdown aggregated_loss(const MatrixXd& batch, const nn::Autoencoder& ae, const MatrixXd& centers, double alpha,
                              double m, AeGradients* grads = nullptr);

/// Mean per-sample ‖x − x̂‖² over `data`, with gradients of that mean when requested.
double reconstruction_loss(const MatrixXd& data, const nn::Autoencoder& ae, AeGradients* grads = nullptr);

/// Encoder output for every row, computed in fixed-size chunks.
MatrixXd encode(const nn::MlpParamsd& encoder, const MatrixXd& data);

/// Runs the full network on every row, in fixed-size chunks.
MatrixXd predict(const nn::MlpParamsd& net, const MatrixXd& data);

// Seeded shuffled contiguous batches covering [0, n).
std::vector<std::vector<Eigen::Index>> make_batches(Eigen::Index n, Eigen::Index batch_size, std::mt19937_64& rng);

MatrixXd gather_rows(const MatrixXd& data, const std::vector<Eigen::Index>& rows);

struct PretrainResult {
    std::vector<double> epoch_losses;  // full-data reconstruction loss after each epoch
};

/// Plain reconstruction pretraining (mean squared error, Adam).
PretrainResult pretrain_reconstruction(const MatrixXd& data, nn::Autoencoder& ae, int epochs, double lr,
                                       Eigen::Index batch_size, std::uint64_t seed);

struct Phase1Config {
    double alpha = 0.1;
    double m = 1.5;
    int t1 = 2;
    Eigen::Index batch_size = 256;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

struct Phase1LogEntry {
    int epoch = 0;
    double mean_reconstruction = 0.0;
    double mean_centering = 0.0;
    double mean_total = 0.0;
    bool centers_updated = false;
};

class Phase1Trainer {
public:
    Phase1Trainer(nn::Autoencoder ae, MatrixXd centers, Phase1Config config);

    /// One epoch of K successive runs per batch; centers refresh every T1 epochs.
    Phase1LogEntry run_epoch(const MatrixXd& data);

    /// Ablation: one optimizer step per batch on the sum of all K losses.
    Phase1LogEntry run_aggregated_epoch(const MatrixXd& data);

    const nn::Autoencoder& autoencoder() const { return ae_; }
    const MatrixXd& centers() const { return centers_; }
    const Phase1Config& config() const { return config_; }
    const std::vector<Phase1LogEntry>& log() const { return log_; }
    std::int64_t optimizer_steps() const { return steps_; }
    int epochs_completed() const { return epoch_; }

private:
    template <typename StepFn>
    Phase1LogEntry run(const MatrixXd& data, StepFn&& step);

    void apply(const AeGradients& grads);

    nn::Autoencoder ae_;
    MatrixXd centers_;
    Phase1Config config_;
    nn::AdamState<double> encoder_opt_;
    nn::AdamState<double> decoder_opt_;
    std::mt19937_64 rng_;
    int epoch_ = 0;
    std::int64_t steps_ = 0;
    std::vector<Phase1LogEntry> log_;
};

}  // namespace dcss
