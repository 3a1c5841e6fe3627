#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "skin/cli.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using skin::cli::run;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result call(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

std::size_t line_count(const fs::path& p) {
    const std::string s = testing::read_file(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(testing::read_file(p)); }

// A small corpus shared by the training cases.
fs::path small_corpus() {
    static const fs::path dir = [] {
        const fs::path d = testing::scratch_dir("cli_corpus") / "data";
        const auto r = call({"synth", "--docs", "90", "--n", "4", "--l", "16", "--seed", "5", "--out", d.string()});
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

std::vector<std::string> quick_train(const fs::path& out) {
    return {"train",      "--data",    small_corpus().string(), "--n",   "4",    "--l",      "16", "--epochs1", "2",
            "--epochs3",  "2",         "--batch",               "8",     "--seed", "3", "--out", out.string()};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth writes a split corpus reproducibly") {
    const auto root = testing::scratch_dir("cli_synth");
    const auto a = call({"synth", "--docs", "2000", "--n", "8", "--l", "128", "--classes", "3", "--seed", "7", "--out",
                         (root / "a").string()});
    REQUIRE(a.code == 0);
    CHECK(line_count(root / "a" / "train.jsonl") == 1400);
    CHECK(line_count(root / "a" / "test.jsonl") == 600);
    CHECK(fs::exists(root / "a" / "vocab.txt"));
    CHECK(a.out.find("1400") != std::string::npos);
    const auto b = call({"synth", "--docs", "2000", "--n", "8", "--l", "128", "--classes", "3", "--seed", "7", "--out",
                         (root / "b").string()});
    REQUIRE(b.code == 0);
    for (const char* f : {"train.jsonl", "test.jsonl", "vocab.txt"}) {
        CHECK(testing::read_file(root / "a" / f) == testing::read_file(root / "b" / f));
    }
    const auto again = call({"synth", "--docs", "20", "--seed", "7", "--out", (root / "a").string()});
    CHECK(again.code == skin::cli::kExitError);
    CHECK(again.err.find("error:") != std::string::npos);
    CHECK(call({"synth", "--docs", "20", "--seed", "7", "--force", "--out", (root / "a").string()}).code == 0);
    CHECK(line_count(root / "a" / "train.jsonl") == 14);
}

TEST_CASE("configuration and usage errors") {
    const auto root = testing::scratch_dir("cli_errors");
    const auto bad = call({"synth", "--l", "30", "--out", (root / "x").string()});
    CHECK(bad.code == skin::cli::kExitError);
    CHECK(!bad.err.empty());
    CHECK(call({"synth", "--bogus", "--out", (root / "y").string()}).code == skin::cli::kExitUsage);
    CHECK(call({}).code == skin::cli::kExitUsage);
    CHECK(call({"synth", "--docs", "10"}).code == skin::cli::kExitError);
    CHECK(call({"train", "--data", (root / "nothing").string(), "--out", (root / "t").string()}).code ==
          skin::cli::kExitError);
}

TEST_CASE("skin training stages, resume and evaluation") {
    const auto root = testing::scratch_dir("cli_train");
    const auto full = call(quick_train(root / "full"));
    REQUIRE(full.code == 0);
    for (const char* f : {"stage1.ckpt", "stage2.ckpt", "stage3.ckpt", "selection.jsonl", "train_log.csv",
                          "run_config.ini"}) {
        CHECK(fs::exists(root / "full" / f));
    }
    CHECK(!fs::exists(root / "full" / "stage1.progress.ckpt"));

    // staged: 1 then 2 only
    auto staged = quick_train(root / "staged");
    staged.insert(staged.end(), {"--stage", "1"});
    REQUIRE(call(staged).code == 0);
    CHECK(fs::exists(root / "staged" / "stage1.ckpt"));
    CHECK(!fs::exists(root / "staged" / "stage2.ckpt"));
    staged[staged.size() - 1] = "2";
    REQUIRE(call(staged).code == 0);
    CHECK(fs::exists(root / "staged" / "stage2.ckpt"));
    CHECK(fs::exists(root / "staged" / "selection.jsonl"));
    CHECK(!fs::exists(root / "staged" / "stage3.ckpt"));
    CHECK(testing::read_file(root / "staged" / "stage1.ckpt") == testing::read_file(root / "full" / "stage1.ckpt"));

    // interrupted stage 3 resumes to the same weights
    staged[staged.size() - 1] = "3";
    auto cut = staged;
    cut.insert(cut.end(), {"--max-epochs-this-run", "1"});
    CHECK(call(cut).code == skin::cli::kExitInterrupted);
    CHECK(fs::exists(root / "staged" / "stage3.progress.ckpt"));
    CHECK(!fs::exists(root / "staged" / "stage3.ckpt"));
    REQUIRE(call(staged).code == 0);
    CHECK(testing::read_file(root / "staged" / "stage3.ckpt") == testing::read_file(root / "full" / "stage3.ckpt"));

    // a different configuration may not reuse the directory
    auto other = quick_train(root / "full");
    other[other.size() - 5] = "4";
    CHECK(call(other).code == skin::cli::kExitError);

    const auto ev = call({"eval", "--run", (root / "full").string(), "--out", (root / "ev").string()});
    REQUIRE(ev.code == 0);
    const auto report = read_json(root / "ev" / "eval_report.json");
    CHECK(report["model"] == "skin");
    CHECK(report["split"] == "test");
    CHECK(report["total"] == 27);
    CHECK(report.contains("selection_accuracy"));
    CHECK(report["per_class"].size() == 3);
    CHECK(report["accuracy"].get<double>() >= 0.0);

    const auto prc = call(
        {"eval", "--run", (root / "full").string(), "--model", "prc", "--split", "train", "--out", (root / "ep").string()});
    REQUIRE(prc.code == 0);
    CHECK(read_json(root / "ep" / "eval_report.json")["total"] == 63);

    const auto wrong = call({"eval", "--run", (root / "full").string(), "--model", "truncate", "--checkpoint",
                             (root / "full" / "stage3.ckpt").string(), "--out", (root / "ew").string()});
    CHECK(wrong.code == skin::cli::kExitError);
    CHECK(wrong.err.find("skin") != std::string::npos);
}

TEST_CASE("eval without planted keys omits selection accuracy") {
    const auto root = testing::scratch_dir("cli_nokeys");
    fs::create_directories(root / "data");
    {
        std::ofstream f(root / "data" / "data.jsonl");
        for (int i = 0; i < 30; ++i) {
            f << "{\"text\": \"" << (i % 2 ? "good fine nice" : "bad awful poor") << " word" << i
              << "\", \"label\": " << i % 2 << "}\n";
        }
    }
    REQUIRE(call({"train", "--data", (root / "data").string(), "--classes", "2", "--n", "2", "--l", "4", "--epochs1",
                  "2", "--epochs3", "1", "--out", (root / "run").string()})
                .code == 0);
    REQUIRE(call({"eval", "--run", (root / "run").string(), "--out", (root / "ev").string()}).code == 0);
    const auto report = read_json(root / "ev" / "eval_report.json");
    CHECK(!report.contains("selection_accuracy"));
    CHECK(report["total"] == 9);
}

TEST_CASE("a small model memorizes its training split") {
    const auto root = testing::scratch_dir("cli_overfit");
    REQUIRE(call({"synth", "--docs", "30", "--n", "2", "--l", "8", "--noise-rate", "0", "--seed", "2", "--out",
                  (root / "data").string()})
                .code == 0);
    REQUIRE(call({"train", "--data", (root / "data").string(), "--n", "2", "--l", "8", "--lr1", "3e-3", "--lr2",
                  "3e-3", "--epochs1", "60", "--epochs3", "60", "--batch", "4", "--dropout", "0", "--gamma", "0",
                  "--out", (root / "run").string()})
                .code == 0);
    REQUIRE(call({"eval", "--run", (root / "run").string(), "--split", "train", "--out", (root / "ev").string()})
                .code == 0);
    CHECK(read_json(root / "ev" / "eval_report.json")["accuracy"].get<double>() == 1.0);
}

TEST_CASE("baselines train and evaluate") {
    const auto root = testing::scratch_dir("cli_baseline");
    auto args = quick_train(root / "run");
    args.insert(args.end(), {"--model", "headtail"});
    REQUIRE(call(args).code == 0);
    CHECK(fs::exists(root / "run" / "baseline.ckpt"));
    auto staged = args;
    staged.insert(staged.end(), {"--stage", "1", "--force"});
    CHECK(call(staged).code == skin::cli::kExitError);
    REQUIRE(call({"eval", "--run", (root / "run").string(), "--model", "headtail", "--out", (root / "ev").string()})
                .code == 0);
    CHECK(read_json(root / "ev" / "eval_report.json")["model"] == "headtail");
}

TEST_CASE("bench writes one row per sample") {
    const auto root = testing::scratch_dir("cli_bench");
    const auto r = call({"bench", "--methods", "bert,skin-variable", "--lengths", "64,128", "--trials", "2", "--warmup",
                         "0", "--segment-len", "16", "--segments", "4", "--out", (root / "b").string()});
    REQUIRE(r.code == 0);
    CHECK(line_count(root / "b" / "bench.csv") == 1 + 2 * 2 * 2);
    CHECK(fs::exists(root / "b" / "bench_summary.json"));
    CHECK(fs::exists(root / "b" / "bench.dat"));
    CHECK(call({"bench", "--paper-dims", "--out", (root / "c").string()}).code == skin::cli::kExitError);
}

TEST_CASE("a saved run configuration reproduces the run") {
    const auto root = testing::scratch_dir("cli_rerun");
    REQUIRE(call(quick_train(root / "a")).code == 0);
    REQUIRE(call({"train", "--config", (root / "a" / "run_config.ini").string(), "--out", (root / "b").string()}).code ==
            0);
    for (const char* f : {"stage1.ckpt", "stage2.ckpt", "stage3.ckpt", "selection.jsonl", "train_log.csv"}) {
        CHECK(testing::read_file(root / "a" / f) == testing::read_file(root / "b" / f));
    }
}

}
