#pragma once

// End-to-end pipeline: pretrain → k-means init → phase 1 → phase 2 → assign →
// evaluate → theory checks, plus the external-embedding mode and persistence.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dcss/data_io.hpp"
#include "dcss/phase1.hpp"
#include "dcss/phase2.hpp"
#include "dcss/theory.hpp"

namespace dcss {

enum class Mode { full, dcss_u_only, agg_ablation, external_embeddings };

const char* to_string(Mode mode);
Mode mode_from_string(const std::string& s);

struct DatasetSpec {
    std::string kind = "blobs";  // blobs | csv | idx
    BlobSpec blobs;
    std::string path;            // csv
    bool has_labels = true;      // csv
    std::string images;          // idx
    std::string labels;          // idx
    std::int64_t limit = 0;      // idx, 0 = all
    double retention = 1.0;      // imbalance subsampling, 1 = off
    std::uint64_t retention_seed = 0;
    bool standardize = false;
};

struct DcssConfig {
    int k = 4;
    int latent_dim = 10;
    double m = 1.5;
    double alpha = 0.1;
    double zeta = 0.8;
    double gamma = 0.2;
    int t1 = 2;
    int t2 = 5;
    int epochs_pretrain = 50;
    int epochs_phase1 = 100;
    int epochs_phase2 = 20;
    int batch_size = 256;
    double lr_pretrain = 1e-3;
    double lr_phase1 = 1e-3;
    double lr_mnet = 1e-3;
    double lr_encoder_phase2 = 1e-4;
    std::uint64_t seed = 0;
    Mode mode = Mode::full;
    DatasetSpec dataset;

    PairThresholds thresholds() const { return {zeta, gamma}; }

    /// Throws ConfigError, naming the offending field.
    void validate() const;
};

void to_json(nlohmann::json& j, const DcssConfig& c);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
void from_json(const nlohmann::json& j, DcssConfig& c);

DcssConfig load_config(const std::filesystem::path& path);

struct Scores {
    double acc = 0.0;
    double nmi = 0.0;

    bool operator==(const Scores&) const = default;
};

struct TheoremViolations {
    std::int64_t inner_bound = 0;           // q_i·q_j > min of maxima
    std::int64_t adjacent_argmax = 0;       // adjacent pair, different argmax
    std::int64_t adjacent_confidence = 0;   // adjacent pair, a maximum below zeta
    std::int64_t dissimilar_shared = 0;     // dissimilar confident pair sharing argmax
    std::int64_t common_neighbour = 0;      // i~j, i~k, j and k dissimilar

    std::int64_t total() const {
        return inner_bound + adjacent_argmax + adjacent_confidence + dissimilar_shared + common_neighbour;
    }
    bool operator==(const TheoremViolations&) const = default;
};

struct ExperimentReport {
    std::string mode;
    std::int64_t samples = 0;
    std::optional<Scores> final_scores;     // after phase 2
    std::optional<Scores> phase1_scores;    // nearest center after phase 1 (DCSS_u / DCSS_agg)
    std::optional<Scores> baseline_scores;  // k-means on the pretrained latent, or on the embeddings
    std::optional<Scores> raw_kmeans_scores;
    double residual_mean = 0.0;
    double residual_fraction_le_0_2 = 0.0;
    std::vector<std::int64_t> residual_histogram;
    double orphan_fraction = 0.0;
    TheoremViolations violations;
    std::vector<std::string> theory_notes;
    double wall_clock_seconds = 0.0;
    nlohmann::json config;
    std::map<std::string, std::string> artifacts;

    bool operator==(const ExperimentReport&) const = default;
};

void to_json(nlohmann::json& j, const ExperimentReport& r);
void from_json(const nlohmann::json& j, ExperimentReport& r);

struct ExperimentResult {
    ExperimentReport report;
    MatrixXd latent;       // final u codes (or adapted embeddings)
    MatrixXd centers;
    MatrixXd p_final;      // memberships against the final centers
    MatrixXd q_final;      // empty when phase 2 did not run
    LabelVector assignments;
    std::vector<Phase1LogEntry> phase1_log;
    std::vector<Phase2LogEntry> phase2_log;
    std::int64_t phase1_steps = 0;
};

/// Reads or generates the configured dataset, then applies subsampling and scaling.
DatasetBundle load_dataset(const DatasetSpec& spec);

/// Any module error propagates; `StageError` wraps it with the stage name.
ExperimentResult run_experiment(const DcssConfig& config);

/// Same pipeline on an already materialized dataset.
ExperimentResult run_experiment(const DcssConfig& config, const DatasetBundle& bundle);

/// Phase 2 only, on externally produced embeddings, with an identity-initialized
/// linear adapter standing in for the encoder.
ExperimentResult run_general_framework(const DcssConfig& config, const DatasetBundle& embeddings);

/// Writes report.json, phase1_losses.csv, phase2_losses.csv, q_final.csv,
/// p_final.csv, centers.csv, latent.csv and assignments.csv. Updates
/// result.report.artifacts with the written paths.
void emit_report(ExperimentResult& result, const std::filesystem::path& out_dir);

// Stage-tagged wrapper; what() reads "<stage>: <original message>".
template <typename Base>
class StageError : public Base {
public:
    StageError(const std::string& stage, const std::string& what) : Base(stage + ": " + what), stage_(stage) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

}  // namespace dcss
