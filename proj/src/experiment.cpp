#include "dcss/experiment.hpp"

#include <chrono>
#include <fstream>
#include <set>
#include <utility>

#include "dcss/errors.hpp"
#include "dcss/membership.hpp"
#include "dcss/metrics.hpp"

namespace dcss {
namespace {

using nlohmann::json;

// Independent stream per pipeline stage (splitmix64 of seed and stage).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stage) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stage + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

enum Stage : std::uint64_t { kAeInit, kPretrain, kLatentKMeans, kRawKMeans, kPhase1, kMnetInit, kPhase2 };

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw StageError<ConfigError>(name, e.what());
    } catch (const NumericError& e) {
        throw StageError<NumericError>(name, e.what());
    } catch (const IoError& e) {
        throw StageError<IoError>(name, e.what());
    } catch (const FormatError& e) {
        throw StageError<FormatError>(name, e.what());
    } catch (const Error& e) {
        throw StageError<Error>(name, e.what());
    }
}

std::optional<Scores> score(const std::optional<LabelVector>& truth, const LabelVector& pred) {
    if (!truth) return std::nullopt;
    return Scores{accuracy(*truth, pred), nmi(*truth, pred)};
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

// Residuals, orphans and theorem checks on the final soft assignment.
void check_theory(const MatrixXd& soft, const PairThresholds& thr, ExperimentReport& report) {
    const auto res = residuals(soft);
    report.residual_mean = res.mean();
    report.residual_fraction_le_0_2 = res.fraction_at_most(0.2);
    report.residual_histogram.assign(res.histogram.begin(), res.histogram.end());
    report.orphan_fraction = orphan_count(soft, thr.zeta).fraction;

    report.violations.inner_bound = count_inner_bound_violations(soft);
    const auto adj = check_adjacency_cluster(soft, thr.zeta);
    report.violations.adjacent_argmax = adj.argmax_violations;
    report.violations.adjacent_confidence = adj.confidence_violations;
    const auto dis = check_dissimilar_cluster(soft, thr);
    report.violations.dissimilar_shared = dis.shared_argmax_violations;
    report.violations.common_neighbour = dis.common_neighbour_violations;
    report.theory_notes = dis.precondition_failures;
}

ExperimentResult run_phase2(const DcssConfig& config, const MatrixXd& data, const std::optional<LabelVector>& truth,
                            nn::MlpParamsd encoder, MatrixXd centers, ExperimentResult result) {
    Phase2Config p2;
    p2.thresholds = config.thresholds();
    p2.m = config.m;
    p2.t2 = config.t2;
    p2.batch_size = config.batch_size;
    p2.lr_mnet = config.lr_mnet;
    p2.lr_encoder = config.lr_encoder_phase2;
    p2.seed = derive_seed(config.seed, kPhase2);

    auto mnet = nn::make_mnet(config.latent_dim, config.k, derive_seed(config.seed, kMnetInit));
    Phase2Trainer trainer(std::move(encoder), std::move(mnet), std::move(centers), p2);
    stage("phase2", [&] {
        for (int e = 0; e < config.epochs_phase2; ++e) trainer.run_epoch(data);
        return 0;
    });

    result.q_final = trainer.soft_assign(data);
    result.latent = encode(trainer.encoder(), data);
    result.centers = trainer.centers();
    result.p_final = memberships(result.latent, result.centers, config.m);
    result.assignments = assign(result.q_final);
    result.phase2_log = trainer.log();
    result.report.final_scores = score(truth, result.assignments);
    stage("theory", [&] {
        check_theory(result.q_final, config.thresholds(), result.report);
        return 0;
    });
    return result;
}

}  // namespace

const char* to_string(Mode mode) {
    switch (mode) {
        case Mode::full: return "full";
        case Mode::dcss_u_only: return "dcss_u_only";
        case Mode::agg_ablation: return "agg_ablation";
        case Mode::external_embeddings: return "external_embeddings";
    }
    return "?";
}

Mode mode_from_string(const std::string& s) {
    for (Mode m : {Mode::full, Mode::dcss_u_only, Mode::agg_ablation, Mode::external_embeddings})
        if (s == to_string(m)) return m;
    throw ConfigError("unknown mode '" + s + "'");
}

void DcssConfig::validate() const {
    require(k >= 2, "k must be >= 2");
    require(latent_dim >= 1, "latent_dim must be >= 1");
    require(m > 1.0, "m must be > 1");
    require(alpha >= 0.0, "alpha must be >= 0");
    const auto verdict = thresholds_valid(thresholds());
    if (!verdict.valid) {
        std::string msg = "invalid (zeta, gamma):";
        for (const auto& r : verdict.reasons) msg += " " + r + ";";
        throw ConfigError(msg);
    }
    require(t1 >= 1, "t1 must be >= 1");
    require(t2 >= 1, "t2 must be >= 1");
    require(epochs_pretrain >= 0, "epochs_pretrain must be >= 0");
    require(epochs_phase1 >= 1, "epochs_phase1 must be >= 1");
    require(epochs_phase2 >= 1, "epochs_phase2 must be >= 1");
    require(mode == Mode::dcss_u_only || mode == Mode::agg_ablation || t2 <= epochs_phase2,
            "t2 must not exceed epochs_phase2");
    require(batch_size >= 1, "batch_size must be >= 1");
    for (double lr : {lr_pretrain, lr_phase1, lr_mnet, lr_encoder_phase2}) require(lr > 0.0, "learning rates must be > 0");
    require(dataset.kind == "blobs" || dataset.kind == "csv" || dataset.kind == "idx",
            "dataset.kind must be blobs, csv or idx");
    require(dataset.retention > 0.0 && dataset.retention <= 1.0, "dataset.retention must be in (0, 1]");
    if (dataset.kind == "csv") require(!dataset.path.empty(), "dataset.path is required for csv");
    if (dataset.kind == "idx") require(!dataset.images.empty() && !dataset.labels.empty(), "dataset.images/labels required");
    require(dataset.limit >= 0, "dataset.limit must be >= 0");
}

void to_json(json& j, const DcssConfig& c) {
    const auto& d = c.dataset;
    j = json{{"k", c.k},
             {"latent_dim", c.latent_dim},
             {"m", c.m},
             {"alpha", c.alpha},
             {"zeta", c.zeta},
             {"gamma", c.gamma},
             {"t1", c.t1},
             {"t2", c.t2},
             {"epochs_pretrain", c.epochs_pretrain},
             {"epochs_phase1", c.epochs_phase1},
             {"epochs_phase2", c.epochs_phase2},
             {"batch_size", c.batch_size},
             {"lr_pretrain", c.lr_pretrain},
             {"lr_phase1", c.lr_phase1},
             {"lr_mnet", c.lr_mnet},
             {"lr_encoder_phase2", c.lr_encoder_phase2},
             {"seed", c.seed},
             {"mode", to_string(c.mode)},
             {"dataset",
              {{"kind", d.kind},
               {"k", d.blobs.k},
               {"per_cluster", d.blobs.per_cluster},
               {"dim", d.blobs.dim},
               {"sigma", d.blobs.sigma},
               {"separation", d.blobs.separation},
               {"blob_seed", d.blobs.seed},
               {"path", d.path},
               {"has_labels", d.has_labels},
               {"images", d.images},
               {"labels", d.labels},
               {"limit", d.limit},
               {"retention", d.retention},
               {"retention_seed", d.retention_seed},
               {"standardize", d.standardize}}}};
}

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out, std::set<std::string>& seen) {
    seen.insert(key);
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
    for (const auto& [key, value] : j.items())
        if (!seen.count(key)) throw ConfigError("unknown config key '" + where + key + "'");
}

}  // namespace

void from_json(const json& j, DcssConfig& c) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    std::set<std::string> seen;
    read_key(j, "k", c.k, seen);
    read_key(j, "latent_dim", c.latent_dim, seen);
    read_key(j, "m", c.m, seen);
    read_key(j, "alpha", c.alpha, seen);
    read_key(j, "zeta", c.zeta, seen);
    read_key(j, "gamma", c.gamma, seen);
    read_key(j, "t1", c.t1, seen);
    read_key(j, "t2", c.t2, seen);
    read_key(j, "epochs_pretrain", c.epochs_pretrain, seen);
    read_key(j, "epochs_phase1", c.epochs_phase1, seen);
    read_key(j, "epochs_phase2", c.epochs_phase2, seen);
    read_key(j, "batch_size", c.batch_size, seen);
    read_key(j, "lr_pretrain", c.lr_pretrain, seen);
    read_key(j, "lr_phase1", c.lr_phase1, seen);
    read_key(j, "lr_mnet", c.lr_mnet, seen);
    read_key(j, "lr_encoder_phase2", c.lr_encoder_phase2, seen);
    read_key(j, "seed", c.seed, seen);
    std::string mode = to_string(c.mode);
    read_key(j, "mode", mode, seen);
    c.mode = mode_from_string(mode);
    seen.insert("dataset");
    if (j.contains("dataset")) {
        const auto& dj = j.at("dataset");
        if (!dj.is_object()) throw ConfigError("dataset must be a JSON object");
        auto& d = c.dataset;
        std::set<std::string> dseen;
        read_key(dj, "kind", d.kind, dseen);
        read_key(dj, "k", d.blobs.k, dseen);
        read_key(dj, "per_cluster", d.blobs.per_cluster, dseen);
        read_key(dj, "dim", d.blobs.dim, dseen);
        read_key(dj, "sigma", d.blobs.sigma, dseen);
        read_key(dj, "separation", d.blobs.separation, dseen);
        read_key(dj, "blob_seed", d.blobs.seed, dseen);
        read_key(dj, "path", d.path, dseen);
        read_key(dj, "has_labels", d.has_labels, dseen);
        read_key(dj, "images", d.images, dseen);
        read_key(dj, "labels", d.labels, dseen);
        read_key(dj, "limit", d.limit, dseen);
        read_key(dj, "retention", d.retention, dseen);
        read_key(dj, "retention_seed", d.retention_seed, dseen);
        read_key(dj, "standardize", d.standardize, dseen);
        reject_unknown(dj, dseen, "dataset.");
    }
    reject_unknown(j, seen, "");
}

DcssConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    auto config = j.get<DcssConfig>();
    config.validate();
    return config;
}

namespace {

json scores_json(const std::optional<Scores>& s) {
    if (!s) return nullptr;
    return json{{"acc", s->acc}, {"nmi", s->nmi}};
}

std::optional<Scores> scores_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return Scores{j.at("acc").get<double>(), j.at("nmi").get<double>()};
}

}  // namespace

void to_json(json& j, const ExperimentReport& r) {
    const auto& v = r.violations;
    j = json{{"mode", r.mode},
             {"samples", r.samples},
             {"final", scores_json(r.final_scores)},
             {"phase1", scores_json(r.phase1_scores)},
             {"baseline_kmeans", scores_json(r.baseline_scores)},
             {"raw_kmeans", scores_json(r.raw_kmeans_scores)},
             {"residuals",
              {{"mean", r.residual_mean},
               {"fraction_le_0_2", r.residual_fraction_le_0_2},
               {"histogram", r.residual_histogram}}},
             {"orphan_fraction", r.orphan_fraction},
             {"violations",
              {{"inner_bound", v.inner_bound},
               {"adjacent_argmax", v.adjacent_argmax},
               {"adjacent_confidence", v.adjacent_confidence},
               {"dissimilar_shared", v.dissimilar_shared},
               {"common_neighbour", v.common_neighbour},
               {"total", v.total()}}},
             {"theory_notes", r.theory_notes},
             {"wall_clock_seconds", r.wall_clock_seconds},
             {"config", r.config},
             {"artifacts", r.artifacts}};
}

void from_json(const json& j, ExperimentReport& r) {
    r.mode = j.at("mode").get<std::string>();
    r.samples = j.at("samples").get<std::int64_t>();
    r.final_scores = scores_from(j.at("final"));
    r.phase1_scores = scores_from(j.at("phase1"));
    r.baseline_scores = scores_from(j.at("baseline_kmeans"));
    r.raw_kmeans_scores = scores_from(j.at("raw_kmeans"));
    const auto& res = j.at("residuals");
    r.residual_mean = res.at("mean").get<double>();
    r.residual_fraction_le_0_2 = res.at("fraction_le_0_2").get<double>();
    r.residual_histogram = res.at("histogram").get<std::vector<std::int64_t>>();
    r.orphan_fraction = j.at("orphan_fraction").get<double>();
    const auto& v = j.at("violations");
    r.violations.inner_bound = v.at("inner_bound").get<std::int64_t>();
    r.violations.adjacent_argmax = v.at("adjacent_argmax").get<std::int64_t>();
    r.violations.adjacent_confidence = v.at("adjacent_confidence").get<std::int64_t>();
    r.violations.dissimilar_shared = v.at("dissimilar_shared").get<std::int64_t>();
    r.violations.common_neighbour = v.at("common_neighbour").get<std::int64_t>();
    r.theory_notes = j.at("theory_notes").get<std::vector<std::string>>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    r.config = j.at("config");
    r.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
}

DatasetBundle load_dataset(const DatasetSpec& spec) {
    return stage("dataset", [&] {
        DatasetBundle bundle;
        if (spec.kind == "blobs") {
            bundle = gen_blobs(spec.blobs);
        } else if (spec.kind == "csv") {
            bundle = load_csv(spec.path, spec.has_labels);
        } else if (spec.kind == "idx") {
            std::optional<Eigen::Index> limit;
            if (spec.limit > 0) limit = static_cast<Eigen::Index>(spec.limit);
            bundle = load_idx(spec.images, spec.labels, limit);
        } else {
            throw ConfigError("unknown dataset kind '" + spec.kind + "'");
        }
        if (spec.retention < 1.0) bundle = imbalance_subsample(bundle, spec.retention, spec.retention_seed);
        if (spec.standardize) bundle = standardize(bundle);
        bundle.validate();
        return bundle;
    });
}

ExperimentResult run_experiment(const DcssConfig& config) {
    config.validate();
    auto bundle = load_dataset(config.dataset);
    if (config.mode == Mode::external_embeddings) bundle.provenance = Provenance::external_embedding;
    return config.mode == Mode::external_embeddings ? run_general_framework(config, bundle)
                                                    : run_experiment(config, bundle);
}

ExperimentResult run_experiment(const DcssConfig& config, const DatasetBundle& bundle) {
    config.validate();
    if (config.mode == Mode::external_embeddings) return run_general_framework(config, bundle);
    const auto start = std::chrono::steady_clock::now();
    bundle.validate();
    // Trainers only ever see the feature matrix.
    const MatrixXd& data = bundle.data;
    const auto& truth = bundle.labels;
    if (data.rows() < config.k) throw ConfigError("dataset has fewer rows than clusters");

    ExperimentResult result;
    auto& report = result.report;
    report.mode = to_string(config.mode);
    report.samples = data.rows();
    report.config = config;

    auto ae = nn::make_autoencoder(data.cols(), config.latent_dim, derive_seed(config.seed, kAeInit));
    stage("pretrain", [&] {
        return pretrain_reconstruction(data, ae, config.epochs_pretrain, config.lr_pretrain, config.batch_size,
                                       derive_seed(config.seed, kPretrain));
    });
    const auto init = stage("kmeans_init", [&] {
        return kmeans(encode(ae.encoder, data), config.k, derive_seed(config.seed, kLatentKMeans));
    });
    report.baseline_scores = score(truth, init.labels);
    if (truth) {
        const auto raw = stage("raw_kmeans", [&] { return kmeans(data, config.k, derive_seed(config.seed, kRawKMeans)); });
        report.raw_kmeans_scores = score(truth, raw.labels);
    }

    Phase1Config p1;
    p1.alpha = config.alpha;
    p1.m = config.m;
    p1.t1 = config.t1;
    p1.batch_size = config.batch_size;
    p1.lr = config.lr_phase1;
    p1.seed = derive_seed(config.seed, kPhase1);
    Phase1Trainer phase1(std::move(ae), init.centers, p1);
    const bool aggregated = config.mode == Mode::agg_ablation;
    // The aggregated variant takes one step per batch, so it gets K× the epochs.
    const int epochs = aggregated ? config.epochs_phase1 * config.k : config.epochs_phase1;
    stage("phase1", [&] {
        for (int e = 0; e < epochs; ++e) aggregated ? phase1.run_aggregated_epoch(data) : phase1.run_epoch(data);
        return 0;
    });
    result.phase1_log = phase1.log();
    result.phase1_steps = phase1.optimizer_steps();

    const MatrixXd latent = encode(phase1.autoencoder().encoder, data);
    report.phase1_scores = score(truth, nearest_center(latent, phase1.centers()));

    if (config.mode == Mode::full) {
        result = run_phase2(config, data, truth, phase1.autoencoder().encoder, phase1.centers(), std::move(result));
    } else {
        result.latent = latent;
        result.centers = phase1.centers();
        result.p_final = memberships(latent, result.centers, config.m);
        result.assignments = nearest_center(latent, result.centers);
        stage("theory", [&] {
            check_theory(result.p_final, config.thresholds(), result.report);
            return 0;
        });
    }
    result.report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

ExperimentResult run_general_framework(const DcssConfig& config, const DatasetBundle& embeddings) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    embeddings.validate();
    const MatrixXd& data = embeddings.data;
    if (data.cols() != config.latent_dim)
        throw ConfigError("latent_dim " + std::to_string(config.latent_dim) + " does not match embedding dimension " +
                          std::to_string(data.cols()));
    if (data.rows() < config.k) throw ConfigError("dataset has fewer rows than clusters");

    ExperimentResult result;
    auto& report = result.report;
    report.mode = to_string(Mode::external_embeddings);
    report.samples = data.rows();
    report.config = config;

    const auto init = stage("kmeans_init", [&] { return kmeans(data, config.k, derive_seed(config.seed, kLatentKMeans)); });
    report.baseline_scores = score(embeddings.labels, init.labels);
    report.raw_kmeans_scores = report.baseline_scores;

    result = run_phase2(config, data, embeddings.labels, nn::identity_linear<double>(config.latent_dim), init.centers,
                        std::move(result));
    result.report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

void emit_report(ExperimentResult& result, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    auto& artifacts = result.report.artifacts;
    artifacts.clear();
    auto path_of = [&](const std::string& name) {
        const auto p = out_dir / name;
        artifacts[name] = p.string();
        return p;
    };

    {
        auto out = std::ofstream(path_of("phase1_losses.csv"));
        if (!out) throw IoError("cannot write " + (out_dir / "phase1_losses.csv").string());
        out << "epoch,mean_Lr,mean_Lc,mean_Lu,centers_updated\n";
        for (const auto& e : result.phase1_log)
            out << e.epoch << ',' << format_double(e.mean_reconstruction) << ',' << format_double(e.mean_centering)
                << ',' << format_double(e.mean_total) << ',' << (e.centers_updated ? 1 : 0) << '\n';
    }
    {
        auto out = std::ofstream(path_of("phase2_losses.csv"));
        if (!out) throw IoError("cannot write " + (out_dir / "phase2_losses.csv").string());
        out << "epoch,source,loss,n_sim,n_dis,n_amb,all_sim,all_dis,all_amb\n";
        for (const auto& e : result.phase2_log)
            out << e.epoch << ',' << to_string(e.report.source) << ',' << format_double(e.report.loss) << ','
                << e.report.similar << ',' << e.report.dissimilar << ',' << e.report.ambiguous << ','
                << e.census.similar << ',' << e.census.dissimilar << ',' << e.census.ambiguous << '\n';
    }
    if (result.q_final.size() > 0)
        write_matrix_csv(path_of("q_final.csv"), result.q_final, column_names("q", result.q_final.cols()));
    write_matrix_csv(path_of("p_final.csv"), result.p_final, column_names("p", result.p_final.cols()));
    write_matrix_csv(path_of("centers.csv"), result.centers, column_names("u", result.centers.cols()));
    write_matrix_csv(path_of("latent.csv"), result.latent, column_names("u", result.latent.cols()));
    write_labels_csv(path_of("assignments.csv"), result.assignments, "cluster");

    const auto report_path = path_of("report.json");
    std::ofstream out(report_path);
    if (!out) throw IoError("cannot write " + report_path.string());
    out << json(result.report).dump(2) << '\n';
    if (!out) throw IoError("write failed for " + report_path.string());
}

}  // namespace dcss
