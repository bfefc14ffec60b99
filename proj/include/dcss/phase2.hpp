#pragma once

// Phase 2: MNet on top of the encoder, trained from pairwise similarities.
// The first T2 epochs gate pairs by membership inner products in the latent
// space; later epochs gate them by the MNet outputs themselves.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dcss/membership.hpp"
#include "dcss/tensor_nn.hpp"

namespace dcss {

struct PairThresholds {
    double zeta = 0.8;   // similar when inner product >= zeta
    double gamma = 0.2;  // dissimilar when inner product <= gamma

    // 0 <= gamma < zeta <= 1. Theory validity is a stronger check, see theory.hpp.
    bool in_range() const { return gamma >= 0.0 && gamma < zeta && zeta <= 1.0; }
};

enum class SupervisionSource { u_space, q_space };

inline const char* to_string(SupervisionSource s) { return s == SupervisionSource::u_space ? "u-space" : "q-space"; }

struct PairLossReport {
    double loss = 0.0;
    std::int64_t similar = 0;
    std::int64_t dissimilar = 0;
    std::int64_t ambiguous = 0;
    SupervisionSource source = SupervisionSource::u_space;

    std::int64_t participating() const { return similar + dissimilar; }
    std::int64_t total() const { return similar + dissimilar + ambiguous; }

    PairLossReport& operator+=(const PairLossReport& other) {
        loss += other.loss;
        similar += other.similar;
        dissimilar += other.dissimilar;
        ambiguous += other.ambiguous;
        return *this;
    }
};

inline constexpr double kSimplexTolerance = 1e-6;

/// Throws ContractError unless every row is non-negative and sums to 1 within 1e-6.
void require_simplex_rows(const MatrixXd& rows, const char* what);

/// Gram matrix of simplex rows, S(i, j) = row_i · row_j, exactly symmetric.
MatrixXd pairwise_inner(const MatrixXd& rows);

/// Pair loss over all ordered pairs (self-pairs included) of the batch, gated
/// by the membership inner products p_i·p_j. `grad_q` receives dL/dQ with the
/// gates treated as constants.
PairLossReport loss_M(const MatrixXd& p, const MatrixXd& q, const PairThresholds& thr, MatrixXd* grad_q = nullptr);

/// Same pair loss, gated by q_i·q_j itself.
PairLossReport loss_M_prime(const MatrixXd& q, const PairThresholds& thr, MatrixXd* grad_q = nullptr);

/// Row-wise argmax, ties broken to the lowest index.
std::vector<int> assign(const MatrixXd& q);

struct Phase2Gradients {
    nn::MlpParamsd encoder;
    nn::MlpParamsd mnet;
};

/// One batch of phase 2: encode, run MNet, evaluate loss_M (u-space, gates
/// from memberships against `centers`) or loss_M_prime (q-space), and
/// back-propagate into both networks when `grads` is non-null.
PairLossReport phase2_batch_loss(const MatrixXd& batch, const nn::MlpParamsd& encoder, const nn::MlpParamsd& mnet,
                                 const MatrixXd& centers, const PairThresholds& thr, double m,
                                 SupervisionSource source, Phase2Gradients* grads = nullptr);

struct Phase2Config {
    PairThresholds thresholds;
    double m = 1.5;
    int t2 = 5;
    Eigen::Index batch_size = 256;
    double lr_mnet = 1e-3;
    double lr_encoder = 1e-4;
    std::uint64_t seed = 0;
};

/// Similar/dissimilar/ambiguous counts over all ordered pairs (i = j included)
/// of `gate`, without materializing the N×N inner-product matrix. `loss` is 0.
PairLossReport pair_census(const MatrixXd& gate, const PairThresholds& thr, SupervisionSource source);

struct Phase2LogEntry {
    int epoch = 0;
    PairLossReport report;  // summed over the epoch's batches
    PairLossReport census;  // whole dataset after the epoch, same source as `report`
    bool centers_updated = false;
};

class Phase2Trainer {
public:
    Phase2Trainer(nn::MlpParamsd encoder, nn::MlpParamsd mnet, MatrixXd centers, Phase2Config config);

    Phase2LogEntry run_epoch(const MatrixXd& data);

    /// q_i = M(f(x_i)) for every row.
    MatrixXd soft_assign(const MatrixXd& data) const;

    /// Memberships of every row against the current centers.
    MatrixXd memberships_of(const MatrixXd& data) const;

    const nn::MlpParamsd& encoder() const { return encoder_; }
    const nn::MlpParamsd& mnet() const { return mnet_; }
    const MatrixXd& centers() const { return centers_; }
    const Phase2Config& config() const { return config_; }
    const std::vector<Phase2LogEntry>& log() const { return log_; }
    int epochs_completed() const { return epoch_; }

private:
    nn::MlpParamsd encoder_;
    nn::MlpParamsd mnet_;
    MatrixXd centers_;
    Phase2Config config_;
    nn::AdamState<double> encoder_opt_;
    nn::AdamState<double> mnet_opt_;
    std::mt19937_64 rng_;
    int epoch_ = 0;
    std::vector<Phase2LogEntry> log_;
};

}  // namespace dcss
