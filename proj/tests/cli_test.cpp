#include "cli.hpp"
#include "test_support.hpp"

#include "semlink/codec.hpp"
#include "semlink/embedding_io.hpp"

#include <nlohmann/json.hpp>

#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <sstream>

using namespace semlink;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class CliPipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new test_support::TempDir("cli");
        const auto p = [](const char* name) { return (*dir_ / name).string(); };
        ASSERT_EQ(run_cli({"gen-synthetic", "--classes", "10", "--per-class", "40", "--seed", "3", "--output", p("all.semb")}).code, 0);
        ASSERT_EQ(run_cli({"split", "--input", p("all.semb"), "--mode", "train-val", "--train-fraction", "0.5",
                           "--seed", "4", "--output-prefix", p("dev")}).code, 0);
        ASSERT_EQ(run_cli({"split", "--input", p("dev.train.semb"), "--mode", "transmit-kb", "--seed", "5",
                           "--output-prefix", p("test")}).code, 0);
        ASSERT_EQ(run_cli({"split", "--input", p("dev.val.semb"), "--mode", "train-val", "--seed", "6",
                           "--output-prefix", p("fit")}).code, 0);
        ASSERT_EQ(run_cli({"split", "--input", p("fit.val.semb"), "--mode", "transmit-kb", "--seed", "7",
                           "--output-prefix", p("val")}).code, 0);
        for (const char* name : {"test", "val"})
            ASSERT_EQ(run_cli({"build-kb", "--input", p(std::string(name).append(".kb.semb").c_str()),
                               "--output", p(std::string(name).append(".kbf").c_str())}).code, 0);
        const auto r = run_cli({"train", "--train", p("fit.train.semb"), "--val-transmit", p("val.transmit.semb"),
                                "--val-kb", p("val.kbf"), "--k", "32", "--epochs", "2", "--batch-size", "32",
                                "--seed", "8", "--output", p("m32.scdc"), "--report", p("report.json")});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }
    static std::string p(const std::string& name) { return (*dir_ / name).string(); }

    static test_support::TempDir* dir_;
};

test_support::TempDir* CliPipeline::dir_ = nullptr;

}  // namespace

TEST(Cli, HelpAndVersionExitZero) {
    auto r = run_cli({"sweep", "--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("--snr-list"), std::string::npos);
    r = run_cli({"--version"});
    EXPECT_EQ(r.code, 0);
    EXPECT_TRUE(std::regex_search(r.out, std::regex(R"(semlink \d+\.\d+\.\d+ \(build \S+\))")));
}

TEST(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(run_cli({"sweep", "--no-such-flag"}).code, 1);
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({"gen-synthetic"}).code, 1);  // --output is required
    EXPECT_EQ(run_cli({"split", "--input", "/nonexistent.semb", "--mode", "train-val", "--output-prefix", "x"}).code, 1);
}

TEST(Cli, MalformedDataExitsTwo) {
    test_support::TempDir dir("cli-bad");
    std::ofstream(dir / "bad.semb") << "NOPE and some bytes";
    const auto r = run_cli({"build-kb", "--input", (dir / "bad.semb").string(), "--output", (dir / "kb").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("bad magic"), std::string::npos);
}

TEST_F(CliPipeline, ArtifactsAndManifests) {
    EXPECT_EQ(load_dataset(std::filesystem::path(p("all.semb"))).size(), 400u);
    EXPECT_EQ(load_dataset(std::filesystem::path(p("test.transmit.semb"))).size(), 100u);
    EXPECT_EQ(load_params(std::filesystem::path(p("m32.scdc"))).k(), 32u);

    const auto report = json::parse(slurp(p("report.json")));
    EXPECT_EQ(report["val_accuracy"].size(), 2u);
    EXPECT_GE(report["selected_epoch"].get<int>(), 1);

    const auto manifest = json::parse(slurp(p("m32.scdc") + ".manifest.json"));
    EXPECT_EQ(manifest["subcommand"], "train");
    EXPECT_EQ(manifest["seed"], 8);
    EXPECT_EQ(manifest["inputs"].size(), 3u);
    for (const auto& in : manifest["inputs"]) EXPECT_EQ(in["sha256"].get<std::string>().size(), 64u);
    const std::string config = manifest["config"];
    // defaults are materialized
    EXPECT_NE(config.find("lr = 0.001"), std::string::npos);
    EXPECT_NE(config.find("snr-grid = -7,-4,0,4,7"), std::string::npos);
}

TEST_F(CliPipeline, EvalPrintsAccuracy) {
    for (const std::string snr : {"10", "inf", "-40"}) {
        const auto r = run_cli({"eval", "--model", p("m32.scdc"), "--transmit", p("test.transmit.semb"), "--kb",
                                p("test.kbf"), "--snr-db", snr, "--trials", "2", "--output", p("eval.csv")});
        ASSERT_EQ(r.code, 0) << r.err;
        std::smatch m;
        ASSERT_TRUE(std::regex_search(r.out, m, std::regex(R"(accuracy ([0-9.]+))"))) << r.out;
        const double acc = std::stod(m[1]);
        EXPECT_GE(acc, 0.0);
        EXPECT_LE(acc, 1.0);
    }
    EXPECT_EQ(run_cli({"eval", "--transmit", p("test.transmit.semb"), "--kb", p("test.kbf")}).code, 1);
    EXPECT_EQ(run_cli({"eval", "--baseline", "--model", p("m32.scdc"), "--transmit", p("test.transmit.semb"), "--kb",
                       p("test.kbf")}).code, 1);
    EXPECT_EQ(run_cli({"eval", "--baseline", "--transmit", p("test.transmit.semb"), "--kb", p("test.kbf"),
                       "--snr-db", "loud"}).code, 1);
}

TEST_F(CliPipeline, SweepIsReproducibleFromItsManifest) {
    const std::vector<std::string> base{"sweep", "--model", p("m32.scdc"), "--transmit", p("test.transmit.semb"),
                                        "--kb", p("test.kbf"), "--snr-list", "-4,0,inf", "--trials", "2",
                                        "--seed", "9"};
    auto args = base;
    args.insert(args.end(), {"--threads", "1", "--output", p("s1.csv")});
    ASSERT_EQ(run_cli(args).code, 0);
    args = base;
    args.insert(args.end(), {"--threads", "8", "--output", p("s8.csv")});
    ASSERT_EQ(run_cli(args).code, 0);
    EXPECT_EQ(slurp(p("s1.csv")), slurp(p("s8.csv")));
    const auto csv = slurp(p("s1.csv"));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 3 * 2);  // header, model and baseline rows

    const auto manifest = json::parse(slurp(p("s1.csv") + ".manifest.json"));
    std::ofstream(p("replay.cfg")) << manifest["config"].get<std::string>();
    ASSERT_EQ(run_cli({"sweep", "--config", p("replay.cfg"), "--output", p("replay.csv")}).code, 0);
    EXPECT_EQ(slurp(p("replay.csv")), slurp(p("s1.csv")));
}

TEST_F(CliPipeline, FlagsOverrideConfig) {
    std::ofstream(p("eval.cfg")) << "# defaults\nbaseline = true\ntransmit = " << p("test.transmit.semb")
                                 << "\nkb = " << p("test.kbf") << "\nsnr-db = -40\ntrials = 1\n";
    const auto from_file = run_cli({"eval", "--config", p("eval.cfg"), "--output", p("c1.csv")});
    ASSERT_EQ(from_file.code, 0) << from_file.err;
    EXPECT_NE(slurp(p("c1.csv")).find(",-40,"), std::string::npos);
    const auto overridden = run_cli({"eval", "--config", p("eval.cfg"), "--snr-db", "inf", "--output", p("c2.csv")});
    ASSERT_EQ(overridden.code, 0) << overridden.err;
    EXPECT_NE(slurp(p("c2.csv")).find(",inf,"), std::string::npos);

    std::ofstream(p("bad.cfg")) << "no-such-key = 1\n";
    EXPECT_EQ(run_cli({"eval", "--config", p("bad.cfg"), "--baseline", "--transmit", p("test.transmit.semb"), "--kb",
                       p("test.kbf")}).code, 1);
}

TEST_F(CliPipeline, BenchWritesReport) {
    const auto r = run_cli({"bench", "--model", p("m32.scdc"), "--kb", p("test.kbf"), "--queries", "100",
                            "--output", p("bench.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = json::parse(slurp(p("bench.json")));
    EXPECT_EQ(report["n_queries"], 100);
    EXPECT_EQ(report["clip"], "absent");
    EXPECT_GE(report["total"]["median_ms"].get<double>(), report["kb"]["median_ms"].get<double>());
}

TEST_F(CliPipeline, DivergentTrainingExitsThree) {
    const auto r = run_cli({"train", "--train", p("fit.train.semb"), "--val-transmit", p("val.transmit.semb"),
                            "--val-kb", p("val.kbf"), "--k", "32", "--epochs", "3", "--batch-size", "32",
                            "--lr", "1e30", "--output", p("nan.scdc"), "--report", p("nan.json")});
    EXPECT_EQ(r.code, 3) << r.err;
    EXPECT_NE(r.err.find("step"), std::string::npos);
}
