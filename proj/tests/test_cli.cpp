#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "svitq/search.hpp"

#include "helpers.hpp"
#include "svitq/checkpoint.hpp"
#include "svitq/config.hpp"
#include "svitq/digest.hpp"
#include "svitq/error.hpp"
#include "svitq/orchestrator.hpp"
#include "svitq/quant.hpp"

#ifndef SVITQ_BIN
#error "SVITQ_BIN must point at the CLI binary"
#endif

using namespace svitq;
namespace fs = std::filesystem;

namespace {

// keeps runtime low: no transformer blocks, two bits, tiny data
const char* kTinyConfig = R"(
seed = 42
output_dir = {OUT}
mode = faithful
delta = 5.0
bits = 32,8
workers = 1
model.C = 2
model.H = 16
model.W = 16
model.N3 = 0
model.N4 = 0
model.classes = 2
model.T = 2
data.kind = synthetic
data.classes = 2
data.H = 16
data.W = 16
data.train_n = 32
data.val_n = 16
data.noise = 0.05
subset.size = 8
subset.seed = 7
train.epochs = 1
train.batch = 16
train.lr = 0.002
)";

std::string write_config(const test::TempDir& dir, const std::string& out_dir,
                         const std::string& name = "run.cfg") {
    std::string text = kTinyConfig;
    const std::string key = "{OUT}";
    text.replace(text.find(key), key.size(), out_dir);
    const std::string path = dir.file(name);
    std::ofstream f(path, std::ios::binary);
    f << text;
    return path;
}

int run_cli(const std::string& args, const std::string& capture_stderr = "") {
    std::string cmd = std::string(SVITQ_BIN) + " " + args;
    if (!capture_stderr.empty()) cmd += " 2>" + capture_stderr;
    else cmd += " 2>/dev/null";
    cmd += " >/dev/null";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::map<std::string, std::string> dir_digests(const std::string& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file())
            out[entry.path().filename().string()] = digest_file(entry.path().string());
    return out;
}

} // namespace

TEST_CASE("base without a sweep artifact exits with the missing-artifact code") {
    test::TempDir dir("cli_missing");
    const std::string cfg = write_config(dir, dir.file("run"));
    CHECK(run_cli("train-toy --config " + cfg) == 0);
    CHECK(run_cli("base --config " + cfg) == static_cast<int>(ErrorCode::MissingArtifact));
}

TEST_CASE("config parsing rejects unknown keys and bad values") {
    test::TempDir dir("cli_cfg");
    {
        std::ofstream f(dir.file("bad.cfg"), std::ios::binary);
        f << "no_such_key = 1\n";
    }
    CHECK(run_cli("sweep --config " + dir.file("bad.cfg")) ==
          static_cast<int>(ErrorCode::Config));
    CHECK_THROWS_AS(parse_config_text("bits = 32,7\n"), Error);
    CHECK_THROWS_AS(parse_config_text("delta = -2\n"), Error);
    CHECK_THROWS_AS(parse_config_text("data.kind = nope\n"), Error);
    CHECK_THROWS_AS(parse_config_text("seed\n"), Error);
}

TEST_CASE("config digest ignores output_dir and workers but tracks the rest") {
    RunConfig a = parse_config_text("seed = 1\noutput_dir = x\nworkers = 1\n");
    RunConfig b = parse_config_text("seed = 1\noutput_dir = y\nworkers = 4\n");
    RunConfig c = parse_config_text("seed = 2\noutput_dir = x\n");
    CHECK(a.digest() == b.digest());
    CHECK(a.digest() != c.digest());
}

TEST_CASE("quantize with the all-32 spec reproduces the weights bit for bit") {
    test::TempDir dir("cli_id");
    const std::string out = dir.file("run");
    const std::string cfg = write_config(dir, out);
    REQUIRE(run_cli("train-toy --config " + cfg) == 0);

    // hand-written spec: default everything to 32
    {
        std::ofstream f(dir.file("all32.spec.json"), std::ios::binary);
        f << R"({"schema": "svitq.quant_spec/1", "default": 32, "assignments": []})";
    }
    REQUIRE(run_cli("quantize --config " + cfg + " --spec " + dir.file("all32.spec.json")) == 0);

    NetworkModel original = load_checkpoint((fs::path(out) / artifact::kModel).string());
    NetworkModel quantized = load_checkpoint((fs::path(out) / artifact::kQuantized).string());
    CHECK(models_bit_identical(original, quantized));
}

TEST_CASE("pipeline equals running the stages by hand and re-runs are no-ops") {
    test::TempDir dir("cli_pipe");
    const std::string out_a = dir.file("run_a");
    const std::string out_b = dir.file("run_b");
    const std::string cfg_a = write_config(dir, out_a, "a.cfg");
    const std::string cfg_b = write_config(dir, out_b, "b.cfg");

    REQUIRE(run_cli("pipeline --config " + cfg_a) == 0);
    for (const char* stage : {"train-toy", "sweep", "base", "guided", "composite", "quantize",
                              "report"})
        REQUIRE(run_cli(std::string(stage) + " --config " + cfg_b) == 0);

    const auto da = dir_digests(out_a);
    const auto db = dir_digests(out_b);
    CHECK(da == db);
    CHECK(da.count(artifact::kReport) == 1);
    CHECK(da.count(artifact::kSweep) == 1);
    CHECK(da.count(artifact::kQuantized) == 1);
    CHECK(da.count(artifact::kPlotSensitivity) == 1);
    CHECK(da.count(artifact::kPlotComposite) == 1);
    CHECK(da.count("manifest.json") == 1);

    // re-running skips every stage and changes nothing
    const std::string log = dir.file("rerun.log");
    REQUIRE(run_cli("pipeline --config " + cfg_a, log) == 0);
    CHECK(dir_digests(out_a) == da);
    const std::string log_text = slurp(log);
    CHECK(log_text.find("stage_skipped") != std::string::npos);
    CHECK(log_text.find("stage_start") == std::string::npos);

    // --force redoes the work but lands on identical bytes
    REQUIRE(run_cli("pipeline --config " + cfg_a + " --force") == 0);
    CHECK(dir_digests(out_a) == da);
}

TEST_CASE("changing the config makes existing artifacts stale") {
    test::TempDir dir("cli_stale");
    const std::string out = dir.file("run");
    const std::string cfg = write_config(dir, out);
    REQUIRE(run_cli("train-toy --config " + cfg) == 0);

    // same output dir, different seed
    std::string text = slurp(cfg);
    text.replace(text.find("seed = 42"), 9, "seed = 43");
    const std::string cfg2 = dir.file("run2.cfg");
    {
        std::ofstream f(cfg2, std::ios::binary);
        f << text;
    }
    CHECK(run_cli("train-toy --config " + cfg2) ==
          static_cast<int>(ErrorCode::StaleArtifact));
    CHECK(run_cli("train-toy --config " + cfg2 + " --force") == 0);
}

TEST_CASE("environment variables override output dir and workers") {
    test::TempDir dir("cli_env");
    const std::string cfg = write_config(dir, dir.file("ignored"));
    const std::string out = dir.file("env_out");
    const std::string cmd = std::string("SVITQ_OUTPUT_DIR=") + out + " SVITQ_WORKERS=2 " +
                            SVITQ_BIN + " train-toy --config " + cfg + " >/dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    CHECK(fs::exists(fs::path(out) / artifact::kModel));
    CHECK_FALSE(fs::exists(fs::path(dir.file("ignored")) / artifact::kModel));
}

TEST_CASE("startup echoes the effective configuration") {
    test::TempDir dir("cli_echo");
    const std::string cfg = write_config(dir, dir.file("run"));
    const std::string out_file = dir.file("stdout.txt");
    const std::string cmd = std::string(SVITQ_BIN) + " train-toy --config " + cfg + " >" +
                            out_file + " 2>/dev/null";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    const std::string text = slurp(out_file);
    CHECK(text.find("effective configuration") != std::string::npos);
    CHECK(text.find("seed = 42") != std::string::npos);
    CHECK(text.find("subset.size = 8") != std::string::npos);
}

TEST_CASE("a config with model.checkpoint skips training and uses the external model") {
    test::TempDir dir("cli_ext");
    const std::string out_a = dir.file("run_a");
    const std::string cfg_a = write_config(dir, out_a, "a.cfg");
    REQUIRE(run_cli("train-toy --config " + cfg_a) == 0);
    const std::string ckpt = (fs::path(out_a) / artifact::kModel).string();

    std::string text = slurp(cfg_a);
    text.replace(text.find(out_a), out_a.size(), dir.file("run_b"));
    text += "model.checkpoint = " + ckpt + "\n";
    const std::string cfg_b = dir.file("b.cfg");
    {
        std::ofstream f(cfg_b, std::ios::binary);
        f << text;
    }
    REQUIRE(run_cli("pipeline --config " + cfg_b) == 0);
    CHECK(fs::exists(fs::path(dir.file("run_b")) / artifact::kQuantized));
    CHECK(fs::exists(fs::path(dir.file("run_b")) / artifact::kReport));
    // no model artifact of its own, and train-toy refuses to run
    CHECK_FALSE(fs::exists(fs::path(dir.file("run_b")) / artifact::kModel));
    CHECK(run_cli("train-toy --config " + cfg_b) == static_cast<int>(ErrorCode::Config));
}

TEST_CASE("interrupted sweeps resume from the partial table") {
    test::TempDir dir("cli_resume");
    const std::string out = dir.file("run");
    const std::string cfg = write_config(dir, out);
    REQUIRE(run_cli("train-toy --config " + cfg) == 0);

    // run the full sweep once to obtain a valid partial prefix
    REQUIRE(run_cli("sweep --config " + cfg) == 0);
    const std::string sweep_path = (fs::path(out) / artifact::kSweep).string();
    const std::string full_table = slurp(sweep_path);

    // fabricate an interruption: drop the final table, plant a partial file
    // with the first cells, and re-run
    StageContext ctx{parse_config_text(slurp(cfg)), false, true};
    const std::string model_digest =
        digest_file((fs::path(out) / artifact::kModel).string());
    nlohmann::ordered_json partial = {{"schema", "svitq.sweep_partial/1"},
                                      {"config_digest", ctx.config.digest()},
                                      {"model_digest", model_digest},
                                      {"cells", nlohmann::ordered_json::array()}};
    const auto table = sensitivity_table_from_json(full_table);
    for (int bit : table.bits)
        partial["cells"].push_back({{"id", table.rows[0].layer_id},
                                    {"bit", bit},
                                    {"accuracy", table.rows[0].accuracy.at(bit)}});
    fs::remove(sweep_path);
    {
        std::ofstream f((fs::path(out) / artifact::kSweepPartial).string(), std::ios::binary);
        f << partial.dump() << "\n";
    }
    const std::string log = dir.file("resume.log");
    REQUIRE(run_cli("sweep --config " + cfg, log) == 0);
    CHECK(slurp(sweep_path) == full_table);
    CHECK(slurp(log).find("sweep_resume") != std::string::npos);
    CHECK_FALSE(fs::exists(fs::path(out) / artifact::kSweepPartial));
}
