#pragma once

// Dataset construction and exchange: synthetic blobs, headered CSV, IDX image
// files, per-column normalization and retention-based imbalance subsampling.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dcss/metrics.hpp"
#include "dcss/tensor_nn.hpp"

namespace dcss {

using nn::MatrixXd;

enum class Provenance { blobs, csv, idx, external_embedding };

const char* to_string(Provenance p);

// x_normalized = (x_raw − offset) * scale, per column.
struct Normalization {
    Eigen::RowVectorXd offset;
    Eigen::RowVectorXd scale;

    bool is_identity() const;
    MatrixXd apply(const MatrixXd& raw) const;
    MatrixXd invert(const MatrixXd& normalized) const;

    static Normalization identity(Eigen::Index cols);
};

struct DatasetBundle {
    MatrixXd data;
    std::optional<LabelVector> labels;  // evaluation only; never handed to trainers
    Provenance provenance = Provenance::blobs;
    Normalization normalization;

    Eigen::Index size() const { return data.rows(); }
    Eigen::Index dim() const { return data.cols(); }

    // Throws on non-finite data, empty data or a label length mismatch.
    void validate() const;
};

struct BlobSpec {
    int k = 4;
    int per_cluster = 400;
    int dim = 16;
    double sigma = 1.0;
    double separation = 10.0;
    std::uint64_t seed = 0;
};

/// K isotropic gaussian clusters whose centers are pairwise >= separation
/// apart. Rows are grouped by cluster (labels 0,0,…,1,1,…).
DatasetBundle gen_blobs(const BlobSpec& spec);

/// Header line required. With `has_labels`, the final column must be named
/// `label` and is split off as integer labels.
DatasetBundle load_csv(const std::filesystem::path& path, bool has_labels);

/// Big-endian IDX pair (0x00000803 images, 0x00000801 labels). Pixels are
/// scaled by 1/255 and images flattened row-major. `limit` keeps the first rows.
DatasetBundle load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                       std::optional<Eigen::Index> limit = std::nullopt);

/// Keeps a class-k sample with probability r + k/(K−1)·(1−r), seeded.
DatasetBundle imbalance_subsample(const DatasetBundle& bundle, double retention, std::uint64_t seed);

/// Per-column zero-mean unit-variance scaling (constant columns keep scale 1).
DatasetBundle standardize(const DatasetBundle& bundle);

double retention_probability(int label, int classes, double retention);

// CSV exchange --------------------------------------------------------------

/// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

std::vector<std::string> column_names(const std::string& prefix, Eigen::Index count);

void write_matrix_csv(const std::filesystem::path& path, const MatrixXd& m, const std::vector<std::string>& header);

/// Reads a headered all-numeric CSV. The header goes to `header` when non-null.
MatrixXd read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header = nullptr);

void write_labels_csv(const std::filesystem::path& path, const LabelVector& labels, const std::string& column);

/// Single integer column with a header.
LabelVector read_labels_csv(const std::filesystem::path& path);

/// Writes features plus an optional trailing `label` column.
void save_csv(const std::filesystem::path& path, const DatasetBundle& bundle);

}  // namespace dcss
