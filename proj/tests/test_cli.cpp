// End-to-end smoke tests for the command-line tool: exercised through
// std::system against the real binary, checking exit codes, emitted files
// and byte-level determinism.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "test_support.hpp"

namespace fs = std::filesystem;
using cardiorecon::testing::scratch_dir;
using cardiorecon::testing::slurp;

namespace {

int run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + std::string(CLI_PATH) + " " + args +
                            " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

/// Small dataset shared by the training-dependent cases (48 is the smallest
/// grid the phantom renderer accepts with its wall-thickness floor).
const fs::path& shared_dataset() {
    static const fs::path dir = [] {
        const auto root = scratch_dir("cli_shared");
        const auto data = root / "data";
        const int rc = run_cli("generate --out " + data.string() +
                               " --n-train 4 --n-val 2 --n-test 3 --dim 48 --seed 77");
        REQUIRE(rc == 0);
        return data;
    }();
    return dir;
}

const std::string kTinyTrainFlags =
    " --iters 12 --batch-size 2 --val-interval 6 --patience 50 --lr 1e-3 --latent 6 "
    "--view-embed 6 --volume-embed 12 --channels 4,8 --no-augment --seed 5 --quiet";

}  // namespace

TEST_CASE("cli: --help exits 0, bad usage exits 2") {
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("generate --help") == 0);
    CHECK(run_cli("") == 2);                       // missing subcommand
    CHECK(run_cli("generate") == 2);               // missing required --out
    CHECK(run_cli("generate --out x --frobnicate") == 2);
    CHECK(run_cli("no-such-command") == 2);
}

TEST_CASE("cli: generate writes a loadable dataset and respects --seed") {
    const auto root = scratch_dir("cli_generate");
    const auto a = root / "a";
    const auto b = root / "b";
    const auto c = root / "c";
    REQUIRE(run_cli("generate --out " + a.string() + " --n-train 2 --n-val 1 --n-test 1 --dim 48 --seed 9") == 0);
    REQUIRE(run_cli("generate --out " + b.string() + " --n-train 2 --n-val 1 --n-test 1 --dim 48 --seed 9") == 0);
    REQUIRE(run_cli("generate --out " + c.string() + " --n-train 2 --n-val 1 --n-test 1 --dim 48 --seed 10") == 0);

    CHECK(fs::exists(a / "manifest.json"));
    int volume_files = 0;
    for (const auto& e : fs::directory_iterator(a / "volumes")) {
        (void)e;
        ++volume_files;
    }
    CHECK(volume_files == 4);

    // same seed -> identical bytes; different seed -> different bytes
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
    bool all_equal = true;
    for (const auto& e : fs::directory_iterator(a / "volumes")) {
        const auto other = b / "volumes" / e.path().filename();
        if (slurp(e.path()) != slurp(other)) all_equal = false;
    }
    CHECK(all_equal);
    bool any_diff = false;
    for (const auto& e : fs::directory_iterator(a / "volumes")) {
        const auto other = c / "volumes" / e.path().filename();
        if (slurp(e.path()) != slurp(other)) any_diff = true;
    }
    CHECK(any_diff);

    // refuses to clobber without --overwrite
    CHECK(run_cli("generate --out " + a.string() + " --n-train 2 --n-val 1 --n-test 1 --dim 48") != 0);
    CHECK(run_cli("generate --out " + a.string() +
                  " --n-train 2 --n-val 1 --n-test 1 --dim 48 --seed 9 --overwrite") == 0);
}

TEST_CASE("cli: CARDIORECON_SEED is the fallback and --seed wins") {
    const auto root = scratch_dir("cli_envseed");
    const auto a = root / "a";
    const auto b = root / "b";
    const auto c = root / "c";
    const std::string spec = " --n-train 1 --n-val 1 --n-test 1 --dim 48";
    REQUIRE(run_cli("generate --out " + a.string() + spec, "CARDIORECON_SEED=42") == 0);
    REQUIRE(run_cli("generate --out " + b.string() + spec + " --seed 42") == 0);
    REQUIRE(run_cli("generate --out " + c.string() + spec + " --seed 43", "CARDIORECON_SEED=42") == 0);

    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
    CHECK(slurp(a / "manifest.json") != slurp(c / "manifest.json"));
    CHECK(run_cli("generate --out " + (root / "d").string() + spec, "CARDIORECON_SEED=oops") == 3);
}

TEST_CASE("cli: config errors exit 3") {
    const auto& data = shared_dataset();
    const auto root = scratch_dir("cli_config_errors");
    CHECK(run_cli("train --data " + data.string() + " --out " + (root / "r").string() +
                  " --variant vae --views la1 --iters 5") == 3);
    CHECK(run_cli("train --data " + data.string() + " --out " + (root / "r").string() +
                  " --variant cvae --views la1,nope --iters 5") == 3);
    CHECK(run_cli("evaluate --data " + data.string() + " --out " + (root / "r").string() +
                  " --split weekend x.pt") == 3);
}

TEST_CASE("cli: train -> evaluate -> uncertainty -> compare round trip") {
    const auto& data = shared_dataset();
    const auto root = scratch_dir("cli_roundtrip");

    const auto run_a = root / "cvae1";
    const auto run_b = root / "ae";
    REQUIRE(run_cli("train --data " + data.string() + " --out " + run_a.string() +
                    " --variant cvae --views la1" + kTinyTrainFlags) == 0);
    REQUIRE(run_cli("train --data " + data.string() + " --out " + run_b.string() +
                    " --variant ae" + kTinyTrainFlags) == 0);
    CHECK(fs::exists(run_a / "best.pt"));
    CHECK(fs::exists(run_a / "train_log.jsonl"));

    const auto report = root / "report";
    REQUIRE(run_cli("evaluate --data " + data.string() + " --out " + report.string() +
                    " --split test " + (run_a / "best.pt").string() + " " +
                    (run_b / "best.pt").string()) == 0);
    for (const char* name : {"per_subject.csv", "aggregate.csv", "comparisons.csv", "summary.json"}) {
        CHECK(fs::exists(report / name));
    }
    {
        std::ifstream agg(report / "aggregate.csv");
        std::string header, r1, r2, extra;
        REQUIRE(std::getline(agg, header));
        CHECK(header == "Model,DSC,Hausd. [mm],MassDiff [%],MassDiffSigned [%]");
        REQUIRE(std::getline(agg, r1));
        REQUIRE(std::getline(agg, r2));
        CHECK(r1.substr(0, 3) == "AE,");
        CHECK(r2.substr(0, 7) == "CVAE_1,");
        CHECK_FALSE(std::getline(agg, extra));
    }

    const auto unc = root / "unc";
    REQUIRE(run_cli("uncertainty --data " + data.string() + " --checkpoint " +
                    (run_a / "best.pt").string() + " --out " + unc.string() +
                    " --n 9 --seed 4") == 0);
    CHECK(fs::exists(unc / "uncertainty_summary.json"));
    int panel_dirs = 0;
    for (const auto& e : fs::directory_iterator(unc)) {
        if (e.is_directory()) {
            ++panel_dirs;
            for (const char* name : {"overlay_la1.png", "overlay_la2.png", "overlay_sa.png",
                                     "confidence_la1.png", "confidence_la2.png",
                                     "confidence_sa.png"}) {
                CHECK(fs::exists(e.path() / name));
            }
        }
    }
    CHECK(panel_dirs == 1);  // defaults to the first test subject

    // uncertainty on a non-variational checkpoint is a config error
    CHECK(run_cli("uncertainty --data " + data.string() + " --checkpoint " +
                  (run_b / "best.pt").string() + " --out " + (root / "unc_ae").string() +
                  " --n 4") == 3);

    const auto cmp = root / "cmp";
    REQUIRE(run_cli("compare --per-subject " + (report / "per_subject.csv").string() + " --out " +
                    cmp.string() + " --metric dsc") == 0);
    CHECK(slurp(cmp / "comparisons.csv") == slurp(report / "comparisons.csv"));
}

TEST_CASE("cli: training runs are byte-deterministic and resumable") {
    const auto& data = shared_dataset();
    const auto root = scratch_dir("cli_determinism");

    const auto a = root / "a";
    const auto b = root / "b";
    const std::string spec = "train --data " + data.string() + " --variant cvae --views la1,sa";
    REQUIRE(run_cli(spec + " --out " + a.string() + kTinyTrainFlags) == 0);
    REQUIRE(run_cli(spec + " --out " + b.string() + kTinyTrainFlags) == 0);
    CHECK(slurp(a / "train_log.jsonl") == slurp(b / "train_log.jsonl"));
    CHECK(slurp(a / "best.pt") == slurp(b / "best.pt"));

    // interrupted at 6 iterations, resumed to 12: same log as the straight run
    const auto c = root / "c";
    const std::string base_flags =
        " --batch-size 2 --val-interval 6 --patience 50 --lr 1e-3 --latent 6 --view-embed 6 "
        "--volume-embed 12 --channels 4,8 --no-augment --seed 5 --quiet";
    REQUIRE(run_cli(spec + " --out " + c.string() + " --iters 6" + base_flags) == 0);
    REQUIRE(run_cli(spec + " --out " + c.string() + " --iters 12 --resume" + base_flags) == 0);
    CHECK(slurp(c / "train_log.jsonl") == slurp(a / "train_log.jsonl"));
}
