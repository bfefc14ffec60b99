// dcss: experiment runner and helpers.
//
//   dcss run --config cfg.json --out results/
//   dcss gen-blobs --k 4 --n 400 --dim 16 --sigma 1 --sep 10 --seed 0 --out blobs.csv
//   dcss metrics --true truth.csv --pred assignments.csv
//   dcss theory-check --q q_final.csv --zeta 0.8 --gamma 0.2
//
// Exit codes: 0 success, 2 config error, 3 numeric failure, 1 anything else.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dcss/data_io.hpp"
#include "dcss/errors.hpp"
#include "dcss/experiment.hpp"
#include "dcss/metrics.hpp"
#include "dcss/theory.hpp"

namespace {

using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void apply_thread_cap() {
    const char* env = std::getenv("DCSS_THREADS");
    if (env == nullptr) return;
    try {
        const int n = std::stoi(env);
        if (n < 1) throw std::invalid_argument("non-positive");
        Eigen::setNbThreads(n);
    } catch (const std::exception&) {
        throw dcss::ConfigError(std::string("DCSS_THREADS must be a positive integer, got '") + env + "'");
    }
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
    const auto config = dcss::load_config(config_path);
    auto result = dcss::run_experiment(config);
    dcss::emit_report(result, out_dir);
    json summary = json(result.report);
    summary.erase("config");
    std::cout << summary.dump(2) << '\n';
    return result.report.violations.total() == 0 ? 0 : kExitNumeric;
}

int cmd_gen_blobs(const dcss::BlobSpec& spec, const std::string& out) {
    dcss::save_csv(out, dcss::gen_blobs(spec));
    return 0;
}

int cmd_metrics(const std::string& truth_path, const std::string& pred_path) {
    const auto truth = dcss::read_labels_csv(truth_path);
    const auto pred = dcss::read_labels_csv(pred_path);
    std::cout << json{{"acc", dcss::accuracy(truth, pred)}, {"nmi", dcss::nmi(truth, pred)}}.dump(2) << '\n';
    return 0;
}

int cmd_theory_check(const std::string& q_path, double zeta, double gamma) {
    const dcss::PairThresholds thr{zeta, gamma};
    const auto verdict = dcss::thresholds_valid(thr);
    json out{{"thresholds", {{"zeta", zeta}, {"gamma", gamma}, {"valid", verdict.valid}, {"reasons", verdict.reasons}}}};
    if (!verdict.valid) {
        out["ok"] = false;
        std::cout << out.dump(2) << '\n';
        return kExitConfig;
    }
    const auto q = dcss::read_matrix_csv(q_path);
    const auto bound = dcss::count_inner_bound_violations(q);
    const auto adj = dcss::check_adjacency_cluster(q, zeta);
    const auto dis = dcss::check_dissimilar_cluster(q, thr);
    const auto orphans = dcss::orphan_count(q, zeta);
    const auto res = dcss::residuals(q);

    json dis_examples = json::array();
    for (const auto& t : dis.common_neighbour_examples) dis_examples.push_back({t[0], t[1], t[2]});
    out["samples"] = q.rows();
    out["clusters"] = q.cols();
    out["inner_bound_violations"] = bound;
    out["adjacency"] = {{"adjacent_pairs", adj.adjacent_pairs},
                        {"argmax_violations", adj.argmax_violations},
                        {"confidence_violations", adj.confidence_violations},
                        {"argmax_examples", adj.argmax_examples}};
    out["dissimilar"] = {{"shared_argmax_violations", dis.shared_argmax_violations},
                         {"common_neighbour_violations", dis.common_neighbour_violations},
                         {"shared_argmax_examples", dis.shared_argmax_examples},
                         {"common_neighbour_examples", dis_examples},
                         {"precondition_failures", dis.precondition_failures}};
    out["orphans"] = {{"count", orphans.count}, {"fraction", orphans.fraction}};
    out["residuals"] = {{"mean", res.mean()},
                        {"fraction_le_0_2", res.fraction_at_most(0.2)},
                        {"histogram", res.histogram}};
    const bool ok = bound == 0 && adj.argmax_violations == 0 && adj.confidence_violations == 0 && dis.total() == 0;
    out["ok"] = ok;
    std::cout << out.dump(2) << '\n';
    return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-phase deep clustering with pairwise self-supervision"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    auto* run = app.add_subcommand("run", "Run the full clustering pipeline from a JSON config");
    run->add_option("--config", config_path, "Config file (JSON)")->required();
    run->add_option("--out", out_dir, "Output directory")->required();

    dcss::BlobSpec blobs;
    std::string blobs_out;
    auto* gen = app.add_subcommand("gen-blobs", "Write a synthetic gaussian-blob dataset as CSV");
    gen->add_option("--k", blobs.k, "Number of clusters")->required();
    gen->add_option("--n", blobs.per_cluster, "Samples per cluster")->required();
    gen->add_option("--dim", blobs.dim, "Feature dimension")->required();
    gen->add_option("--sigma", blobs.sigma, "Per-coordinate standard deviation")->required();
    gen->add_option("--sep", blobs.separation, "Minimum distance between cluster centers")->required();
    gen->add_option("--seed", blobs.seed, "Random seed")->required();
    gen->add_option("--out", blobs_out, "Output CSV path")->required();

    std::string truth_path, pred_path;
    auto* metrics = app.add_subcommand("metrics", "ACC and NMI between two label files");
    metrics->add_option("--true", truth_path, "Ground-truth labels CSV")->required();
    metrics->add_option("--pred", pred_path, "Predicted labels CSV")->required();

    std::string q_path;
    double zeta = 0.8, gamma = 0.2;
    auto* theory = app.add_subcommand("theory-check", "Check threshold guarantees on a soft-assignment CSV");
    theory->add_option("--q", q_path, "Soft-assignment CSV (rows on the simplex)")->required();
    theory->add_option("--zeta", zeta, "Similarity threshold")->required();
    theory->add_option("--gamma", gamma, "Dissimilarity threshold")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        apply_thread_cap();
        if (*run) return cmd_run(config_path, out_dir);
        if (*gen) return cmd_gen_blobs(blobs, blobs_out);
        if (*metrics) return cmd_metrics(truth_path, pred_path);
        if (*theory) return cmd_theory_check(q_path, zeta, gamma);
    } catch (const dcss::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const dcss::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
