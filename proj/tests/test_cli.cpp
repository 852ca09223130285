#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "resmatch/data.hpp"
#include "resmatch/trainer.hpp"

using namespace resmatch;
namespace fs = std::filesystem;

namespace {

struct ScratchDir {
    fs::path path;
    explicit ScratchDir(const std::string& tag) {
        path = fs::temp_directory_path() /
               ("resmatch-cli-" + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~ScratchDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

struct RunResult {
    int exit_code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Runs the installed binary through the shell, capturing exit status and
// both output streams.
RunResult run_cli(const std::string& args, const fs::path& scratch,
                  const std::string& env_prefix = "") {
    fs::path out_file = scratch / "stdout.txt";
    fs::path err_file = scratch / "stderr.txt";
    std::string cmd = env_prefix + RESMATCH_CLI_PATH " " + args + " >" +
                      out_file.string() + " 2>" + err_file.string();
    int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

}  // namespace

TEST_CASE("usage errors exit 2 with a parsable prefix", "[cli]") {
    ScratchDir dir("usage");
    SECTION("no dataset source") {
        RunResult r = run_cli("train --epochs 1", dir.path);
        REQUIRE(r.exit_code == 2);
        REQUIRE(r.err.rfind("ERROR:2:", 0) == 0);
    }
    SECTION("unknown flag") {
        RunResult r = run_cli("train --bogus-flag 7", dir.path);
        REQUIRE(r.exit_code == 2);
        REQUIRE(r.err.rfind("ERROR:2:", 0) == 0);
    }
    SECTION("unknown mode") {
        RunResult r =
            run_cli("train --synthetic 8 --mode mystery", dir.path);
        REQUIRE(r.exit_code == 2);
        REQUIRE(r.err.rfind("ERROR:2:", 0) == 0);
    }
    SECTION("no subcommand") {
        RunResult r = run_cli("", dir.path);
        REQUIRE(r.exit_code == 2);
    }
    SECTION("both dataset sources") {
        RunResult r = run_cli("train --synthetic 8 --dataset somewhere",
                              dir.path);
        REQUIRE(r.exit_code == 2);
    }
}

TEST_CASE("runtime failures exit 1", "[cli]") {
    ScratchDir dir("runtime");
    RunResult r = run_cli("eval --checkpoint " + dir.str() +
                              "/absent.ckpt --dataset " + dir.str(),
                          dir.path);
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.err.rfind("ERROR:1:", 0) == 0);
}

TEST_CASE("gen-data and make-split round trip through the binary", "[cli]") {
    ScratchDir dir("gen");
    std::string data_dir = (dir.path / "data").string();
    RunResult gen = run_cli(
        "gen-data --count 8 --size 32 --seed 2 --out " + data_dir, dir.path);
    REQUIRE(gen.exit_code == 0);
    DatasetManifest m = load_manifest(data_dir);
    REQUIRE(m.split_records("train").size() == 8);
    REQUIRE(m.records.size() == 8 + 2 + 1 + 1);

    RunResult split = run_cli(
        "make-split --dataset " + data_dir + " --ratio 0.5 --seed 4", dir.path);
    REQUIRE(split.exit_code == 0);
    SemiSplit s = load_split(data_dir + "/split.json");
    REQUIRE(s.labeled_ids.size() == 4);
    REQUIRE(s.unlabeled_ids.size() == 4);
    validate_split(m, s);
}

TEST_CASE("train smoke run completes and writes artifacts", "[cli]") {
    ScratchDir dir("train");
    std::string out = (dir.path / "run").string();
    RunResult r = run_cli(
        "train --synthetic 16 --mode supervised --epochs 1 --image-size 32 "
        "--seed 5 --ratio 0.5 --learning-rate 1e-3 --out " + out,
        dir.path);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.out.find("final oIoU=") != std::string::npos);
    REQUIRE(fs::exists(out + "/results.jsonl"));
    REQUIRE(fs::exists(out + "/last.ckpt"));
    REQUIRE(fs::exists(out + "/data/manifest.jsonl"));

    ResultsFile rf = read_results_file(out + "/results.jsonl");
    REQUIRE(rf.config["mode"] == "supervised");
    REQUIRE(rf.config["epochs"].get<int>() == 1);
    REQUIRE(rf.config["image_size"].get<int>() == 32);
    int steps = 0;
    for (const auto& rec : rf.records)
        if (rec.contains("L_total")) ++steps;
    REQUIRE(steps == 4);  // 8 labeled / batch 2, supervised epoch

    SECTION("the checkpoint scores through the eval command") {
        RunResult ev = run_cli("eval --checkpoint " + out +
                                   "/last.ckpt --dataset " + out +
                                   "/data --split-name val --image-size 32",
                               dir.path);
        REQUIRE(ev.exit_code == 0);
        REQUIRE(ev.out.find("oIoU=") != std::string::npos);
        REQUIRE(ev.out.find("4 samples") != std::string::npos);
    }
}

TEST_CASE("untouched flags echo the published defaults", "[cli]") {
    ScratchDir dir("echo");
    std::string out = (dir.path / "run").string();
    // epochs forced to 0 so only the initialized model is evaluated; every
    // flag left untouched must land in the results header at its default
    RunResult r = run_cli("train --synthetic 8 --epochs 0 --image-size 32 "
                          "--out " + out,
                          dir.path);
    REQUIRE(r.exit_code == 0);
    ResultsFile rf = read_results_file(out + "/results.jsonl");
    REQUIRE(rf.config["mode"] == "resmatch");
    REQUIRE(rf.config["lambda_x"].get<double>() == 5.0);
    REQUIRE(rf.config["lambda_u"].get<double>() == 2.0);
    REQUIRE(rf.config["lambda_t"].get<double>() == 0.8);
    REQUIRE(rf.config["tau"].get<double>() == 0.7);
    REQUIRE(rf.config["learning_rate"].get<double>() == 1e-5);
    REQUIRE(rf.config["batch_size_labeled"].get<int>() == 2);
    REQUIRE(rf.config["batch_size_unlabeled"].get<int>() == 2);
    REQUIRE(rf.config["text_candidate_count"].get<int>() == 10);
}

TEST_CASE("config file feeds the run and flags override it", "[cli]") {
    ScratchDir dir("cfgfile");
    std::string cfg_path = (dir.path / "config.json").string();
    {
        std::ofstream cfg(cfg_path);
        cfg << R"({"mode":"fixmatch","epochs":5,"image_size":32,"seed":11})";
    }
    std::string out = (dir.path / "run").string();
    RunResult r = run_cli("train --config " + cfg_path +
                              " --synthetic 8 --epochs 0 --out " + out,
                          dir.path);
    REQUIRE(r.exit_code == 0);
    ResultsFile rf = read_results_file(out + "/results.jsonl");
    REQUIRE(rf.config["mode"] == "fixmatch");            // from the file
    REQUIRE(rf.config["image_size"].get<int>() == 32);   // from the file
    REQUIRE(rf.config["epochs"].get<int>() == 0);        // flag wins
    REQUIRE(rf.config["seed"].get<std::uint64_t>() == 11);
}

TEST_CASE("preview-aug writes deterministic triplets", "[cli]") {
    ScratchDir dir("preview");
    std::string data_dir = (dir.path / "data").string();
    REQUIRE(run_cli("gen-data --count 6 --size 32 --seed 7 --out " + data_dir,
                    dir.path)
                .exit_code == 0);

    std::string prev_a = (dir.path / "prev-a").string();
    std::string prev_b = (dir.path / "prev-b").string();
    std::string args = "preview-aug --dataset " + data_dir +
                       " --n 3 --seed 9 --image-size 32 --out ";
    REQUIRE(run_cli(args + prev_a, dir.path).exit_code == 0);
    REQUIRE(run_cli(args + prev_b, dir.path).exit_code == 0);

    for (int i = 0; i < 3; ++i) {
        for (const char* kind : {"original", "weak", "strong"}) {
            char name[64];
            std::snprintf(name, sizeof name, "sample-%03d-%s.ppm", i, kind);
            REQUIRE(fs::exists(fs::path(prev_a) / name));
            REQUIRE(slurp(fs::path(prev_a) / name) ==
                    slurp(fs::path(prev_b) / name));
        }
    }
    std::string text = slurp(fs::path(prev_a) / "preview.txt");
    REQUIRE(text == slurp(fs::path(prev_b) / "preview.txt"));
    REQUIRE(text.find("sample syn-train-000000") != std::string::npos);
    REQUIRE(text.find("weak:") != std::string::npos);

    // every retained similarity listed in the preview clears the threshold
    std::size_t pos = 0;
    int thetas = 0;
    while ((pos = text.find("theta=", pos)) != std::string::npos) {
        double theta = std::stod(text.substr(pos + 6));
        REQUIRE(theta >= 0.8);
        ++thetas;
        pos += 6;
    }
    REQUIRE(thetas > 0);
}

TEST_CASE("sweep produces a summary over the ratio-seed grid", "[cli]") {
    ScratchDir dir("sweep");
    std::string out = (dir.path / "swp").string();
    RunResult r = run_cli(
        "sweep --synthetic 12 --image-size 32 --epochs 0 --mode supervised "
        "--ratios 0.5 --seeds 1,2,3 --out " + out,
        dir.path);
    REQUIRE(r.exit_code == 0);
    std::string table = slurp(fs::path(out) / "summary.tsv");
    REQUIRE(table.rfind("ratio\tseed\tmode\toIoU\n", 0) == 0);
    int rows = 0;
    for (char c : table)
        if (c == '\n') ++rows;
    REQUIRE(rows == 4);  // header + three cells
    REQUIRE(table.find("supervised") != std::string::npos);

    SECTION("missing grid flags are usage errors") {
        RunResult bad = run_cli("sweep --synthetic 12 --seeds 1", dir.path);
        REQUIRE(bad.exit_code == 2);
    }
}

TEST_CASE("the output directory honors RESMATCH_OUT", "[cli]") {
    ScratchDir dir("envout");
    std::string target = (dir.path / "from-env").string();
    RunResult r = run_cli("gen-data --count 4 --size 32 --seed 1", dir.path,
                          "RESMATCH_OUT=" + target + " ");
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(fs::path(target) / "manifest.jsonl"));
}

TEST_CASE("identical invocations produce identical results", "[cli]") {
    ScratchDir dir("determinism");
    std::string out_a = (dir.path / "a").string();
    std::string out_b = (dir.path / "b").string();
    std::string args =
        "train --synthetic 8 --mode resmatch --epochs 1 --image-size 32 "
        "--seed 3 --ratio 0.5 --learning-rate 1e-3 --out ";
    REQUIRE(run_cli(args + out_a, dir.path).exit_code == 0);
    REQUIRE(run_cli(args + out_b, dir.path).exit_code == 0);
    REQUIRE(slurp(out_a + "/results.jsonl") == slurp(out_b + "/results.jsonl"));
    REQUIRE(slurp(out_a + "/last.ckpt") == slurp(out_b + "/last.ckpt"));
}
