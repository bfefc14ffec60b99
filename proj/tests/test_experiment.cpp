#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "dcss/experiment.hpp"
#include "doctest.h"

using namespace dcss;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("dcss_experiment_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Small, fast configuration on three well-separated blobs.
DcssConfig small_config(std::uint64_t seed = 0) {
    DcssConfig c;
    c.k = 3;
    c.latent_dim = 3;
    c.epochs_pretrain = 5;
    c.epochs_phase1 = 4;
    c.epochs_phase2 = 4;
    c.t2 = 2;
    c.batch_size = 32;
    c.seed = seed;
    c.dataset.blobs.k = 3;
    c.dataset.blobs.per_cluster = 30;
    c.dataset.blobs.dim = 6;
    return c;
}

int run_cli(const std::string& args, const fs::path& stdout_file = "/dev/null") {
    const std::string cmd = std::string(DCSS_CLI_PATH) + " " + args + " > " + stdout_file.string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config JSON: defaults, round trip, unknown keys") {
    const DcssConfig defaults;
    CHECK(defaults.m == 1.5);
    CHECK(defaults.alpha == 0.1);
    CHECK(defaults.zeta == 0.8);
    CHECK(defaults.gamma == 0.2);
    CHECK(defaults.t1 == 2);
    CHECK(defaults.t2 == 5);
    CHECK(defaults.epochs_phase1 == 100);
    CHECK(defaults.epochs_phase2 == 20);
    CHECK(defaults.batch_size == 256);
    CHECK(defaults.lr_encoder_phase2 == 1e-4);

    auto c = small_config(9);
    c.mode = Mode::agg_ablation;
    c.dataset.retention = 0.5;
    const json j = c;
    const auto back = j.get<DcssConfig>();
    CHECK(json(back) == j);

    json bad = j;
    bad["zeta_typo"] = 0.9;
    CHECK_THROWS_AS(bad.get<DcssConfig>(), ConfigError);
    json bad_mode = j;
    bad_mode["mode"] = "everything";
    CHECK_THROWS_AS(bad_mode.get<DcssConfig>(), ConfigError);
}

TEST_CASE("config validation") {
    auto c = small_config();
    CHECK_NOTHROW(c.validate());
    c.zeta = 0.6;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.gamma = 0.7;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.m = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.t2 = c.epochs_phase2 + 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    // Invalid thresholds are rejected before any training starts.
    c = small_config();
    c.gamma = 0.7;
    CHECK_THROWS_AS(run_experiment(c), ConfigError);
}

TEST_CASE("full pipeline: artifacts, simplex persistence, offline recomputation") {
    const auto dir = scratch_dir("full");
    auto result = run_experiment(small_config());
    emit_report(result, dir);
    for (const char* f : {"report.json", "phase1_losses.csv", "phase2_losses.csv", "q_final.csv", "p_final.csv",
                          "centers.csv", "assignments.csv"})
        CHECK(fs::exists(dir / f));

    const auto q = read_matrix_csv(dir / "q_final.csv");
    CHECK(q.rows() == 90);
    for (Eigen::Index i = 0; i < q.rows(); ++i) CHECK(std::abs(q.row(i).sum() - 1.0) <= 1e-9);
    CHECK(read_labels_csv(dir / "assignments.csv") == assign(q));

    ExperimentReport parsed = json::parse(slurp(dir / "report.json")).get<ExperimentReport>();
    CHECK(parsed == result.report);
    REQUIRE(result.report.final_scores.has_value());
    CHECK(result.report.final_scores->acc >= 0.0);
    CHECK(result.report.final_scores->acc <= 1.0);
    CHECK(result.report.violations.total() == 0);
    CHECK(result.phase1_log.size() == 4);
    CHECK(result.phase2_log.size() == 4);
    CHECK(result.phase1_steps == 4 * 3 * 3);  // epochs × batches × K
}

TEST_CASE("same config and seed: identical report metrics and assignments") {
    const auto a_dir = scratch_dir("det_a"), b_dir = scratch_dir("det_b");
    auto a = run_experiment(small_config(4));
    auto b = run_experiment(small_config(4));
    emit_report(a, a_dir);
    emit_report(b, b_dir);
    CHECK(a.report.final_scores == b.report.final_scores);
    CHECK(a.report.phase1_scores == b.report.phase1_scores);
    CHECK(a.q_final == b.q_final);
    CHECK(slurp(a_dir / "assignments.csv") == slurp(b_dir / "assignments.csv"));
    CHECK(slurp(a_dir / "q_final.csv") == slurp(b_dir / "q_final.csv"));
}

TEST_CASE("dcss_u_only stops after phase 1 with nearest-center assignment") {
    auto c = small_config();
    c.mode = Mode::dcss_u_only;
    const auto r = run_experiment(c);
    CHECK(r.phase2_log.empty());
    CHECK(r.q_final.size() == 0);
    CHECK_FALSE(r.report.final_scores.has_value());
    REQUIRE(r.report.phase1_scores.has_value());
    CHECK(r.assignments == nearest_center(r.latent, r.centers));
}

TEST_CASE("agg_ablation gets K times the epochs at one step per batch") {
    auto c = small_config();
    c.mode = Mode::agg_ablation;
    const auto r = run_experiment(c);
    CHECK(r.phase1_log.size() == static_cast<std::size_t>(4 * 3));
    CHECK(r.phase1_steps == 4 * 3 * 3);  // same step budget as the per-cluster runs
}

TEST_CASE("general framework: one-hot embeddings are clustered perfectly") {
    DatasetBundle emb;
    emb.data = MatrixXd::Zero(60, 3);
    emb.labels = LabelVector(60);
    for (Eigen::Index i = 0; i < 60; ++i) {
        emb.data(i, i % 3) = 1.0;
        (*emb.labels)[static_cast<std::size_t>(i)] = static_cast<int>(i % 3);
    }
    emb.provenance = Provenance::external_embedding;
    auto c = small_config();
    c.mode = Mode::external_embeddings;
    const auto r = run_general_framework(c, emb);
    REQUIRE(r.report.final_scores.has_value());
    CHECK(r.report.final_scores->acc == 1.0);

    c.latent_dim = 4;
    CHECK_THROWS_AS(run_general_framework(c, emb), ConfigError);
}

TEST_CASE("errors are tagged with the failing stage") {
    auto c = small_config();
    c.dataset.kind = "csv";
    c.dataset.path = "/nonexistent/data.csv";
    try {
        run_experiment(c);
        FAIL("expected an IoError");
    } catch (const StageError<IoError>& e) {
        CHECK(e.stage() == "dataset");
    }
}

TEST_CASE("CLI exit codes and outputs") {
    const auto dir = scratch_dir("cli");
    CHECK(run_cli("") == 2);
    CHECK(run_cli("theory-check --q x.csv --zeta 0.6 --gamma 0.2") == 2);
    CHECK(run_cli("gen-blobs --k 3 --n 10 --dim 4 --sigma 1 --sep 10 --seed 1 --out " + (dir / "b.csv").string()) == 0);
    const auto blobs = load_csv(dir / "b.csv", true);
    CHECK(blobs.data.rows() == 30);

    write_labels_csv(dir / "t.csv", {0, 0, 1, 1}, "label");
    write_labels_csv(dir / "p.csv", {1, 1, 0, 0}, "cluster");
    CHECK(run_cli("metrics --true " + (dir / "t.csv").string() + " --pred " + (dir / "p.csv").string(),
                  dir / "m.json") == 0);
    const auto m = json::parse(slurp(dir / "m.json"));
    CHECK(m.at("acc") == 1.0);
    CHECK(m.at("nmi") == 1.0);

    MatrixXd q(2, 2);
    q << 1, 0, 0, 1;
    write_matrix_csv(dir / "q.csv", q, column_names("q", 2));
    CHECK(run_cli("theory-check --q " + (dir / "q.csv").string() + " --zeta 0.8 --gamma 0.2", dir / "t.json") == 0);
    CHECK(json::parse(slurp(dir / "t.json")).at("ok") == true);

    std::ofstream(dir / "bad.json") << R"({"k": 3, "unknown_key": 1})";
    CHECK(run_cli("run --config " + (dir / "bad.json").string() + " --out " + (dir / "o").string()) == 2);
    std::ofstream(dir / "invalid.json") << R"({"zeta": 0.6})";
    CHECK(run_cli("run --config " + (dir / "invalid.json").string() + " --out " + (dir / "o").string()) == 2);

    // Features around 1e200 overflow the reconstruction loss: numeric failure.
    std::ofstream(dir / "huge.csv") << "a,b,c\n1e200,2e200,3e200\n-1e200,5e199,1e200\n3e200,1e200,-2e200\n";
    auto c = small_config();
    c.dataset.kind = "csv";
    c.dataset.path = (dir / "huge.csv").string();
    c.dataset.has_labels = false;
    std::ofstream(dir / "huge.json") << json(c).dump();
    CHECK(run_cli("run --config " + (dir / "huge.json").string() + " --out " + (dir / "o").string()) == 3);

    std::ofstream(dir / "ok.json") << json(small_config()).dump();
    CHECK(run_cli("run --config " + (dir / "ok.json").string() + " --out " + (dir / "run").string()) == 0);
    CHECK(fs::exists(dir / "run" / "report.json"));
    CHECK(setenv("DCSS_THREADS", "zero", 1) == 0);
    CHECK(run_cli("gen-blobs --k 2 --n 2 --dim 2 --sigma 1 --sep 10 --seed 1 --out " + (dir / "c.csv").string()) == 2);
    unsetenv("DCSS_THREADS");
}

}  // TEST_SUITE
