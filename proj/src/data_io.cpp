#include "dcss/data_io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "dcss/errors.hpp"

namespace dcss {
namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

CsvTable read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_fields(line);
        if (!have_header) {
            bool numeric = true;
            for (const auto& f : fields) {
                double v;
                numeric = numeric && parse_double(f, v);
            }
            if (numeric) throw ParseError("missing header line in " + path.string(), line_no);
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size())
            throw ParseError("expected " + std::to_string(table.header.size()) + " fields, found " +
                                 std::to_string(fields.size()),
                             line_no);
        std::vector<double> row(fields.size());
        for (std::size_t c = 0; c < fields.size(); ++c) {
            if (!parse_double(fields[c], row[c]))
                throw ParseError("non-numeric cell '" + fields[c] + "' in column " + std::to_string(c + 1), line_no);
            if (!std::isfinite(row[c])) throw ParseError("non-finite cell in column " + std::to_string(c + 1), line_no);
        }
        table.rows.push_back(std::move(row));
    }
    if (!have_header) throw ParseError("empty file " + path.string(), line_no);
    return table;
}

std::uint32_t read_be32(std::istream& in, const std::string& what) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError("truncated header in " + what);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

std::string hex(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "0x%08X", v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void join_line(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << fields[i];
    out << '\n';
}

}  // namespace

const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::blobs: return "blobs";
        case Provenance::csv: return "csv";
        case Provenance::idx: return "idx";
        case Provenance::external_embedding: return "external-embedding";
    }
    return "?";
}

bool Normalization::is_identity() const {
    return (offset.array() == 0.0).all() && (scale.array() == 1.0).all();
}

MatrixXd Normalization::apply(const MatrixXd& raw) const {
    return ((raw.rowwise() - offset).array().rowwise() * scale.array()).matrix();
}

MatrixXd Normalization::invert(const MatrixXd& normalized) const {
    return (normalized.array().rowwise() / scale.array()).matrix().rowwise() + offset;
}

Normalization Normalization::identity(Eigen::Index cols) {
    return {Eigen::RowVectorXd::Zero(cols), Eigen::RowVectorXd::Ones(cols)};
}

void DatasetBundle::validate() const {
    if (data.rows() < 1 || data.cols() < 1) throw ShapeError("dataset must have at least one row and one column");
    if (!data.allFinite()) throw NumericError("dataset contains non-finite values");
    if (labels && static_cast<Eigen::Index>(labels->size()) != data.rows())
        throw ShapeError("label count does not match row count");
}

DatasetBundle gen_blobs(const BlobSpec& spec) {
    if (spec.k < 1 || spec.per_cluster < 1 || spec.dim < 1) throw ConfigError("blob counts must be >= 1");
    if (spec.sigma < 0.0 || spec.separation < 0.0) throw ConfigError("sigma and separation must be >= 0");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index k = spec.k;
    const Eigen::Index dim = spec.dim;

    MatrixXd centers(k, dim);
    if (k <= dim) {
        // Scaled simplex vertices (pairwise distance exactly `separation`),
        // rotated by a random orthogonal matrix.
        MatrixXd gauss(dim, dim);
        for (Eigen::Index r = 0; r < dim; ++r)
            for (Eigen::Index c = 0; c < dim; ++c) gauss(r, c) = normal(rng);
        const Eigen::MatrixXd rotation = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
        const MatrixXd vertices = MatrixXd::Identity(k, dim) * (spec.separation / std::sqrt(2.0));
        centers = vertices * rotation.transpose();
    } else {
        // Rejection sampling in a box that grows until every center fits.
        double side = spec.separation * std::max(1.0, std::pow(static_cast<double>(k), 1.0 / static_cast<double>(dim)));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        Eigen::Index placed = 0;
        int attempts = 0;
        while (placed < k) {
            Eigen::RowVectorXd c(dim);
            for (Eigen::Index d = 0; d < dim; ++d) c(d) = unit(rng) * side;
            bool ok = true;
            for (Eigen::Index j = 0; j < placed && ok; ++j) ok = (centers.row(j) - c).norm() >= spec.separation;
            if (ok) {
                centers.row(placed++) = c;
                attempts = 0;
            } else if (++attempts > 1000) {
                side *= 1.5;
                attempts = 0;
            }
        }
    }

    DatasetBundle bundle;
    bundle.provenance = Provenance::blobs;
    bundle.data.resize(k * spec.per_cluster, dim);
    bundle.labels = LabelVector(static_cast<std::size_t>(k * spec.per_cluster));
    for (Eigen::Index c = 0; c < k; ++c) {
        for (int s = 0; s < spec.per_cluster; ++s) {
            const Eigen::Index row = c * spec.per_cluster + s;
            for (Eigen::Index d = 0; d < dim; ++d) bundle.data(row, d) = centers(c, d) + spec.sigma * normal(rng);
            (*bundle.labels)[static_cast<std::size_t>(row)] = static_cast<int>(c);
        }
    }
    bundle.normalization = Normalization::identity(dim);
    return bundle;
}

DatasetBundle load_csv(const std::filesystem::path& path, bool has_labels) {
    const auto table = read_table(path);
    const std::size_t n_cols = table.header.size();
    if (has_labels && table.header.back() != "label")
        throw ParseError("expected a final 'label' column in " + path.string(), 1);
    const std::size_t n_features = has_labels ? n_cols - 1 : n_cols;
    if (n_features == 0) throw ParseError("no feature columns in " + path.string(), 1);
    if (table.rows.empty()) throw ParseError("no data rows in " + path.string(), 2);

    DatasetBundle bundle;
    bundle.provenance = Provenance::csv;
    bundle.data.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(n_features));
    if (has_labels) bundle.labels = LabelVector(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (std::size_t c = 0; c < n_features; ++c)
            bundle.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = table.rows[r][c];
        if (has_labels) {
            const double v = table.rows[r].back();
            if (v != std::floor(v) || v < 0.0)
                throw ParseError("label must be a non-negative integer", r + 2);
            (*bundle.labels)[r] = static_cast<int>(v);
        }
    }
    bundle.normalization = Normalization::identity(bundle.dim());
    return bundle;
}

DatasetBundle load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                       std::optional<Eigen::Index> limit) {
    std::ifstream img(images, std::ios::binary);
    if (!img) throw IoError("cannot open " + images.string());
    std::ifstream lab(labels, std::ios::binary);
    if (!lab) throw IoError("cannot open " + labels.string());

    const auto img_magic = read_be32(img, images.string());
    if (img_magic != kIdxImagesMagic)
        throw FormatError(images.string() + ": bad magic " + hex(img_magic) + ", expected " + hex(kIdxImagesMagic));
    const auto lab_magic = read_be32(lab, labels.string());
    if (lab_magic != kIdxLabelsMagic)
        throw FormatError(labels.string() + ": bad magic " + hex(lab_magic) + ", expected " + hex(kIdxLabelsMagic));

    const std::uint32_t n_images = read_be32(img, images.string());
    const std::uint32_t height = read_be32(img, images.string());
    const std::uint32_t width = read_be32(img, images.string());
    const std::uint32_t n_labels = read_be32(lab, labels.string());
    if (n_images != n_labels)
        throw FormatError("image count " + std::to_string(n_images) + " does not match label count " +
                          std::to_string(n_labels));

    Eigen::Index n = n_images;
    if (limit) n = std::min<Eigen::Index>(n, *limit);
    const Eigen::Index pixels = static_cast<Eigen::Index>(height) * width;
    if (n < 1 || pixels < 1) throw FormatError("IDX file has no samples");

    std::vector<unsigned char> raw(static_cast<std::size_t>(n * pixels));
    if (!img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw FormatError(images.string() + ": truncated payload");
    std::vector<unsigned char> raw_labels(static_cast<std::size_t>(n));
    if (!lab.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(raw_labels.size())))
        throw FormatError(labels.string() + ": truncated payload");

    DatasetBundle bundle;
    bundle.provenance = Provenance::idx;
    bundle.data.resize(n, pixels);
    for (Eigen::Index i = 0; i < n * pixels; ++i)
        bundle.data.data()[i] = static_cast<double>(raw[static_cast<std::size_t>(i)]) / 255.0;
    bundle.labels = LabelVector(raw_labels.begin(), raw_labels.end());
    bundle.normalization = {Eigen::RowVectorXd::Zero(pixels), Eigen::RowVectorXd::Constant(pixels, 1.0 / 255.0)};
    return bundle;
}

double retention_probability(int label, int classes, double retention) {
    if (classes <= 1) return 1.0;
    return retention + (static_cast<double>(label) / static_cast<double>(classes - 1)) * (1.0 - retention);
}

DatasetBundle imbalance_subsample(const DatasetBundle& bundle, double retention, std::uint64_t seed) {
    if (!bundle.labels) throw ConfigError("imbalance subsampling needs labels");
    if (!(retention > 0.0 && retention <= 1.0)) throw ConfigError("retention must be in (0, 1]");
    if (retention == 1.0) return bundle;
    int classes = 0;
    for (int l : *bundle.labels) classes = std::max(classes, l + 1);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < bundle.labels->size(); ++i)
        if (unit(rng) < retention_probability((*bundle.labels)[i], classes, retention))
            keep.push_back(static_cast<Eigen::Index>(i));

    DatasetBundle out;
    out.provenance = bundle.provenance;
    out.normalization = bundle.normalization;
    out.data.resize(static_cast<Eigen::Index>(keep.size()), bundle.dim());
    out.labels = LabelVector(keep.size());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        out.data.row(static_cast<Eigen::Index>(r)) = bundle.data.row(keep[r]);
        (*out.labels)[r] = (*bundle.labels)[static_cast<std::size_t>(keep[r])];
    }
    return out;
}

DatasetBundle standardize(const DatasetBundle& bundle) {
    const Eigen::RowVectorXd mean = bundle.data.colwise().mean();
    const Eigen::RowVectorXd var =
        (bundle.data.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(bundle.size());
    Eigen::RowVectorXd scale(bundle.dim());
    for (Eigen::Index c = 0; c < bundle.dim(); ++c) scale(c) = var(c) > 0.0 ? 1.0 / std::sqrt(var(c)) : 1.0;
    // Compose with the existing record so the raw values stay recoverable.
    const Normalization step{mean, scale};
    DatasetBundle out = bundle;
    out.data = step.apply(bundle.data);
    out.normalization.offset = bundle.normalization.offset + mean.cwiseProduct(bundle.normalization.scale.cwiseInverse());
    out.normalization.scale = bundle.normalization.scale.cwiseProduct(scale);
    return out;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> column_names(const std::string& prefix, Eigen::Index count) {
    std::vector<std::string> names;
    for (Eigen::Index i = 0; i < count; ++i) names.push_back(prefix + std::to_string(i));
    return names;
}

void write_matrix_csv(const std::filesystem::path& path, const MatrixXd& m, const std::vector<std::string>& header) {
    if (static_cast<Eigen::Index>(header.size()) != m.cols()) throw ShapeError("header does not match column count");
    auto out = open_out(path);
    join_line(out, header);
    std::vector<std::string> fields(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) fields[static_cast<std::size_t>(c)] = format_double(m(r, c));
        join_line(out, fields);
    }
    if (!out) throw IoError("write failed for " + path.string());
}

MatrixXd read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header) {
    const auto table = read_table(path);
    MatrixXd m(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(table.header.size()));
    for (std::size_t r = 0; r < table.rows.size(); ++r)
        for (std::size_t c = 0; c < table.header.size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = table.rows[r][c];
    if (header != nullptr) *header = table.header;
    return m;
}

void write_labels_csv(const std::filesystem::path& path, const LabelVector& labels, const std::string& column) {
    auto out = open_out(path);
    out << column << '\n';
    for (int l : labels) out << l << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

LabelVector read_labels_csv(const std::filesystem::path& path) {
    const auto table = read_table(path);
    if (table.header.size() != 1) throw ParseError("label file must have exactly one column", 1);
    LabelVector labels;
    labels.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const double v = table.rows[r][0];
        if (v != std::floor(v)) throw ParseError("label must be an integer", r + 2);
        labels.push_back(static_cast<int>(v));
    }
    return labels;
}

void save_csv(const std::filesystem::path& path, const DatasetBundle& bundle) {
    auto header = column_names("x", bundle.dim());
    if (bundle.labels) header.emplace_back("label");
    auto out = open_out(path);
    join_line(out, header);
    std::vector<std::string> fields;
    for (Eigen::Index r = 0; r < bundle.size(); ++r) {
        fields.clear();
        for (Eigen::Index c = 0; c < bundle.dim(); ++c) fields.push_back(format_double(bundle.data(r, c)));
        if (bundle.labels) fields.push_back(std::to_string((*bundle.labels)[static_cast<std::size_t>(r)]));
        join_line(out, fields);
    }
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace dcss
