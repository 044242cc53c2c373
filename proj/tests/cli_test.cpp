// End-to-end checks of the grcn binary: file contracts, flag handling, exit
// codes. The binary path arrives via GRCN_CLI_PATH from the build.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "grcn/checkpoint.hpp"
#include "grcn/features.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = GRCN_CLI_PATH;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        std::error_code ec;
        fs::remove_all(path, ec);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

int run(const std::string& args, const fs::path& log) {
    int rc = std::system((kCli + " " + args + " >> " + log.string() + " 2>&1").c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_spec(const fs::path& p, int users, double noise, std::uint64_t seed,
                bool two_modalities = true) {
    std::ofstream out(p);
    out << "{\"num_users\": " << users << ", \"num_items\": " << users * 2
        << ", \"num_clusters\": 2,\n\"modalities\": {\"visual\": 12"
        << (two_modalities ? ", \"acoustic\": 12" : "") << "},\n"
        << "\"interactions_per_user\": 8, \"noise_fraction\": " << noise
        << ", \"cluster_separation\": 1.0,\n\"feature_noise_scale\": 0.4, \"seed\": " << seed
        << "}\n";
}

void write_run_config(const fs::path& p, const fs::path& data, std::uint64_t seed,
                      const std::string& extra_hyper = "", bool with_labels = true) {
    std::ofstream out(p);
    out << "{\"interactions\": \"" << (data / "interactions.tsv").string() << "\",\n"
        << "\"features\": {\"visual\": \"" << (data / "features_visual.txt").string()
        << "\", \"acoustic\": \"" << (data / "features_acoustic.txt").string() << "\"},\n";
    if (with_labels) {
        out << "\"labels\": \"" << (data / "labels.tsv").string() << "\",\n";
    }
    out << "\"seed\": " << seed << ",\n"
        << "\"hyper\": {\"embed_dim\": 8, \"proj_dim\": 8, \"max_epochs\": 3, "
           "\"patience\": 3, \"batch_size\": 64, \"learning_rate\": 0.01" << extra_hyper
        << "}}\n";
}

}  // namespace

TEST_CASE("synth writes the dataset files and honors the seed") {
    TempDir dir("grcn_cli_synth");
    write_spec(dir.path / "spec.json", 10, 0.0, 3, false);
    REQUIRE(run("synth --spec " + (dir.path / "spec.json").string() + " --out " +
                    (dir.path / "d1").string(),
                dir.path / "log.txt") == 0);
    // minimal single-modality spec -> exactly 4 files
    std::size_t files = 0;
    for (auto& entry : fs::directory_iterator(dir.path / "d1")) {
        (void)entry;
        files += 1;
    }
    CHECK(files == 4);

    // phi = 0 -> labels are all true_positive
    std::string labels = slurp(dir.path / "d1" / "labels.tsv");
    CHECK(labels.find("false_positive") == std::string::npos);
    CHECK(labels.find("true_positive") != std::string::npos);

    // rerun with the same spec/seed -> identical bytes
    REQUIRE(run("synth --spec " + (dir.path / "spec.json").string() + " --out " +
                    (dir.path / "d2").string(),
                dir.path / "log.txt") == 0);
    CHECK(slurp(dir.path / "d1" / "interactions.tsv") ==
          slurp(dir.path / "d2" / "interactions.tsv"));
    CHECK(slurp(dir.path / "d1" / "features_visual.txt") ==
          slurp(dir.path / "d2" / "features_visual.txt"));

    // invalid spec -> config error exit code
    std::ofstream(dir.path / "bad.json") << "{\"num_users\": 0}";
    CHECK(run("synth --spec " + (dir.path / "bad.json").string() + " --out " +
                  (dir.path / "d3").string(),
              dir.path / "log.txt") == 2);
}

TEST_CASE("train, eval, inspect, and export work end to end") {
    TempDir dir("grcn_cli_train");
    write_spec(dir.path / "spec.json", 16, 0.25, 11);
    REQUIRE(run("synth --spec " + (dir.path / "spec.json").string() + " --out " +
                    (dir.path / "data").string(),
                dir.path / "log.txt") == 0);
    write_run_config(dir.path / "run.json", dir.path / "data", 21);

    SUBCASE("train produces a checkpoint and one report record per epoch") {
        REQUIRE(run("train --config " + (dir.path / "run.json").string() + " --out " +
                        (dir.path / "out").string(),
                    dir.path / "log.txt") == 0);
        CHECK(fs::exists(dir.path / "out" / "checkpoint.ckpt"));
        CHECK(fs::exists(dir.path / "out" / "id_map.json"));
        std::istringstream report(slurp(dir.path / "out" / "report.jsonl"));
        std::string line;
        std::size_t epoch_lines = 0;
        while (std::getline(report, line)) {
            if (line.find("\"epoch\"") != std::string::npos) epoch_lines += 1;
        }
        CHECK(epoch_lines == 3);
    }

    SUBCASE("one-epoch run reports exactly one epoch record") {
        write_run_config(dir.path / "run1.json", dir.path / "data", 21,
                         ", \"max_epochs\": 1");
        REQUIRE(run("train --config " + (dir.path / "run1.json").string() + " --out " +
                        (dir.path / "out1").string(),
                    dir.path / "log.txt") == 0);
        std::istringstream report(slurp(dir.path / "out1" / "report.jsonl"));
        std::string line;
        std::size_t epoch_lines = 0;
        while (std::getline(report, line)) {
            if (line.find("\"epoch\"") != std::string::npos) epoch_lines += 1;
        }
        CHECK(epoch_lines == 1);
    }

    SUBCASE("eval defaults to k=10, writes the metrics document, and checks digests") {
        REQUIRE(run("train --config " + (dir.path / "run.json").string() + " --out " +
                        (dir.path / "out").string(),
                    dir.path / "log.txt") == 0);
        REQUIRE(run("eval --checkpoint " + (dir.path / "out" / "checkpoint.ckpt").string() +
                        " --config " + (dir.path / "run.json").string() + " --split test" +
                        " --out " + (dir.path / "out").string(),
                    dir.path / "log.txt") == 0);
        std::string metrics = slurp(dir.path / "out" / "metrics_test.json");
        CHECK(metrics.find("\"k\": 10") != std::string::npos);
        CHECK(metrics.find("users_evaluated") != std::string::npos);

        REQUIRE(run("eval --checkpoint " + (dir.path / "out" / "checkpoint.ckpt").string() +
                        " --config " + (dir.path / "run.json").string() +
                        " --split validation --out " + (dir.path / "out").string(),
                    dir.path / "log.txt") == 0);
        CHECK(fs::exists(dir.path / "out" / "metrics_validation.json"));

        // a checkpoint trained on different data is rejected
        write_spec(dir.path / "spec2.json", 18, 0.25, 12);
        REQUIRE(run("synth --spec " + (dir.path / "spec2.json").string() + " --out " +
                        (dir.path / "data2").string(),
                    dir.path / "log.txt") == 0);
        write_run_config(dir.path / "run2.json", dir.path / "data2", 21);
        CHECK(run("eval --checkpoint " + (dir.path / "out" / "checkpoint.ckpt").string() +
                      " --config " + (dir.path / "run2.json").string() + " --out " +
                      (dir.path / "out2").string(),
                  dir.path / "log.txt") == 2);
    }

    SUBCASE("inspect-edges dumps weights and the AUC only when labels are given") {
        REQUIRE(run("train --config " + (dir.path / "run.json").string() + " --out " +
                        (dir.path / "out").string(),
                    dir.path / "log.txt") == 0);
        REQUIRE(run("inspect-edges --checkpoint " +
                        (dir.path / "out" / "checkpoint.ckpt").string() + " --config " +
                        (dir.path / "run.json").string() + " --labels " +
                        (dir.path / "data" / "labels.tsv").string() + " --out " +
                        (dir.path / "out").string(),
                    dir.path / "log.txt") == 0);
        std::string tsv = slurp(dir.path / "out" / "edge_weights.tsv");
        CHECK(tsv.find("s_user_from_item") != std::string::npos);
        CHECK(tsv.find("sbar_user_acoustic") != std::string::npos);
        CHECK(tsv.find("# edge_weight_auc") != std::string::npos);

        write_run_config(dir.path / "run_nolabels.json", dir.path / "data", 21, "", false);
        REQUIRE(run("inspect-edges --checkpoint " +
                        (dir.path / "out" / "checkpoint.ckpt").string() + " --config " +
                        (dir.path / "run_nolabels.json").string() + " --out " +
                        (dir.path / "no_labels").string(),
                    dir.path / "log.txt") == 0);
        std::string tsv2 = slurp(dir.path / "no_labels" / "edge_weights.tsv");
        CHECK(tsv2.find("edge_weight_auc") == std::string::npos);
    }

    SUBCASE("export-embeddings round-trips bit-exactly and matches the variant width") {
        REQUIRE(run("train --config " + (dir.path / "run.json").string() + " --out " +
                        (dir.path / "out").string(),
                    dir.path / "log.txt") == 0);
        REQUIRE(run("export-embeddings --checkpoint " +
                        (dir.path / "out" / "checkpoint.ckpt").string() + " --config " +
                        (dir.path / "run.json").string() + " --out " +
                        (dir.path / "exp").string(),
                    dir.path / "log.txt") == 0);
        grcn::Tensor users = grcn::load_matrix_file((dir.path / "exp" / "user_repr.txt").string());
        CHECK(users.rows() == 16);
        CHECK(users.cols() == 8 + 2 * 8);  // embed + two projected modalities

        // reload -> rewrite -> identical bytes
        grcn::save_matrix_file((dir.path / "exp" / "user_repr2.txt").string(), users);
        CHECK(slurp(dir.path / "exp" / "user_repr.txt") ==
              slurp(dir.path / "exp" / "user_repr2.txt"));
    }

    SUBCASE("id-only variant keeps refining tensors but predicts at embed width") {
        REQUIRE(run("train --config " + (dir.path / "run.json").string() +
                        " --variant id-only --out " + (dir.path / "id_out").string(),
                    dir.path / "log.txt") == 0);
        grcn::Checkpoint ckpt =
            grcn::load_checkpoint((dir.path / "id_out" / "checkpoint.ckpt").string());
        CHECK(ckpt.params.hyper.id_only);
        CHECK_FALSE(ckpt.params.refine.modal.empty());
        REQUIRE(run("export-embeddings --checkpoint " +
                        (dir.path / "id_out" / "checkpoint.ckpt").string() + " --config " +
                        (dir.path / "run.json").string() + " --out " +
                        (dir.path / "id_exp").string(),
                    dir.path / "log.txt") == 0);
        grcn::Tensor users =
            grcn::load_matrix_file((dir.path / "id_exp" / "user_repr.txt").string());
        CHECK(users.cols() == 8);
    }

    SUBCASE("modality subset selection") {
        REQUIRE(run("train --config " + (dir.path / "run.json").string() +
                        " --modalities visual --out " + (dir.path / "vis_out").string(),
                    dir.path / "log.txt") == 0);
        grcn::Checkpoint ckpt =
            grcn::load_checkpoint((dir.path / "vis_out" / "checkpoint.ckpt").string());
        CHECK(ckpt.params.modalities.size() == 1);
        CHECK(ckpt.params.modalities[0] == grcn::Modality::visual);
    }

    SUBCASE("missing config path is a config error") {
        CHECK(run("train --config " + (dir.path / "absent.json").string(),
                  dir.path / "log.txt") == 4);  // unreadable file -> I/O failure
        CHECK(run("eval --config " + (dir.path / "run.json").string(),
                  dir.path / "log.txt") == 2);  // missing --checkpoint -> validation
    }
}

TEST_CASE("fixed seed reruns reproduce the training report byte for byte") {
    TempDir dir("grcn_cli_det");
    write_spec(dir.path / "spec.json", 12, 0.25, 5);
    REQUIRE(run("synth --spec " + (dir.path / "spec.json").string() + " --out " +
                    (dir.path / "data").string(),
                dir.path / "log.txt") == 0);
    write_run_config(dir.path / "run.json", dir.path / "data", 7);
    REQUIRE(run("train --config " + (dir.path / "run.json").string() + " --out " +
                    (dir.path / "a").string(),
                dir.path / "log.txt") == 0);
    REQUIRE(run("train --config " + (dir.path / "run.json").string() + " --out " +
                    (dir.path / "b").string(),
                dir.path / "log.txt") == 0);
    CHECK(slurp(dir.path / "a" / "checkpoint.ckpt") == slurp(dir.path / "b" / "checkpoint.ckpt"));

    // reports match except for wall-clock fields
    auto strip_wall = [](const std::string& text) {
        std::istringstream in(text);
        std::string line, out;
        while (std::getline(in, line)) {
            auto pos = line.find("\"wall_seconds\"");
            out += pos == std::string::npos ? line : line.substr(0, pos);
            out += '\n';
        }
        return out;
    };
    CHECK(strip_wall(slurp(dir.path / "a" / "report.jsonl")) ==
          strip_wall(slurp(dir.path / "b" / "report.jsonl")));
}
