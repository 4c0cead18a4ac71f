// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "edgetune/manifest.hpp"
#include "test_paths.hpp"

using nlohmann::json;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    REQUIRE(!g_cli_path.empty());
    const std::string cmd = "\"" + g_cli_path + "\" " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CliResult res;
    char buf[4096];
    while (std::fgets(buf, sizeof(buf), pipe)) res.output += buf;
    const int rc = pclose(pipe);
    res.exit_code = WEXITSTATUS(rc);
    return res;
}

std::string out_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "edgetune_cli_tests";
    std::filesystem::create_directories(dir);
    return dir.string();
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    json j;
    in >> j;
    return j;
}

}  // namespace

TEST_CASE("cli: unknown arguments exit with the invalid-input code") {
    const auto r = run_cli("plan --bogus");
    CHECK(r.exit_code == 2);
}

TEST_CASE("cli: all-OOM budgets exit 3 with the no-feasible-plan message") {
    const auto r = run_cli("plan --model " + data_path("toy_spec.json") +
                           " --synth n=2,het=0,seed=1,budget_gib=0.000001,seq=8 -B 4 -M 2 "
                           "--seq 8 --out " +
                           out_dir() + "/oom_plan.json");
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("no feasible plan") != std::string::npos);
}

TEST_CASE("cli: cached simulation without a cache directory exits 2 naming the cache") {
    const std::string plan = out_dir() + "/toy_plan.json";
    auto r = run_cli("plan --model " + data_path("toy_spec.json") +
                     " --synth n=2,het=0,seed=1,seq=8 -B 4 -M 2 --seq 8 --out " + plan);
    REQUIRE(r.exit_code == 0);
    r = run_cli("simulate --model " + data_path("toy_spec.json") +
                " --synth n=2,het=0,seed=1,seq=8 --plan " + plan + " --cached --trace " +
                out_dir() + "/toy_trace.json");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("cache") != std::string::npos);
}

TEST_CASE("cli: oracle cross-check agrees on a small instance") {
    const auto r = run_cli("plan --model " + data_path("toy_spec.json") +
                           " --synth n=2,het=0.3,seed=5,seq=8 -B 4 -M 3 --seq 8 --oracle --out " +
                           out_dir() + "/oracle_plan.json");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("oracle agrees") != std::string::npos);
}

TEST_CASE("cli: full pipeline on the bundled fixture reports the 2x4 grouping") {
    const std::string dir = out_dir();
    const std::string plan = dir + "/fixture_plan.json";
    auto r = run_cli("plan --model " + data_path("bart_large_2x.json") + " --profiles " +
                     data_path("profiles_jetson8.json") + " -B 8 -M 8 --seq 128 --out " + plan);
    REQUIRE(r.exit_code == 0);
    r = run_cli("simulate --model " + data_path("bart_large_2x.json") + " --profiles " +
                data_path("profiles_jetson8.json") + " --plan " + plan + " --trace " + dir +
                "/fixture_trace.json --svg " + dir + "/fixture_trace.svg");
    REQUIRE(r.exit_code == 0);
    r = run_cli("report --model " + data_path("bart_large_2x.json") + " --profiles " +
                data_path("profiles_jetson8.json") + " --plan " + plan + " --trace " + dir +
                "/fixture_trace.json -B 8 --seq 128 --out " + dir + "/fixture_report.json" +
                " --flops-svg " + dir + "/flops.svg --memory-svg " + dir + "/memory.svg");
    REQUIRE(r.exit_code == 0);

    const auto report = read_json(dir + "/fixture_report.json");
    CHECK(report["plan"]["num_stages"].get<int>() == 2);
    const auto groups = report["plan"]["group_sizes"].get<std::vector<int>>();
    REQUIRE(groups.size() == 2);
    CHECK(groups[0] == 4);
    CHECK(groups[1] == 4);
    CHECK(std::filesystem::exists(dir + "/flops.svg"));
    CHECK(std::filesystem::exists(dir + "/memory.svg"));
}

TEST_CASE("cli: tune-toy reports exact cached/uncached agreement") {
    const std::string report = out_dir() + "/toy_tune.json";
    const auto r = run_cli("tune-toy --spec " + data_path("toy_spec.json") +
                           " --samples 4 --epochs 2 --cache --seed 9 --seq 6 --report " + report);
    REQUIRE(r.exit_code == 0);
    const auto j = read_json(report);
    CHECK(j["equivalence"]["max_step_loss_diff"].get<double>() <= 1e-12);
    CHECK(j["equivalence"]["final_params_bitwise_equal"].get<bool>());
    // the run directory is cleared once fine-tuning finishes
    CHECK(!std::filesystem::exists(report + ".cache/entries.bin"));

    // the aggregate report folds the training censuses in
    const std::string agg = out_dir() + "/toy_aggregate.json";
    const auto r2 = run_cli("report --model " + data_path("toy_spec.json") + " --tune " + report +
                            " -B 4 --seq 6 --out " + agg);
    REQUIRE(r2.exit_code == 0);
    const auto a = read_json(agg);
    CHECK(a["census"]["per_epoch"].size() == 4);  // 2 plain + 2 cached epochs
    CHECK(a["census"]["per_epoch"][3]["backbone_fwd_flops"].get<std::int64_t>() == 0);
}

TEST_CASE("cli: rerun from a manifest reproduces artifacts byte for byte") {
    const std::string dir = out_dir();
    const std::string plan = dir + "/rerun_plan.json";
    auto r = run_cli("plan --model " + data_path("toy_spec.json") +
                     " --synth n=3,het=0.4,seed=11,seq=8 -B 6 -M 2 --seq 8 --out " + plan);
    REQUIRE(r.exit_code == 0);
    const std::string first = edgetune::sha256_file(plan);
    const std::string first_manifest = edgetune::sha256_file(plan + ".manifest.json");
    r = run_cli("rerun --manifest " + plan + ".manifest.json");
    REQUIRE(r.exit_code == 0);
    CHECK(edgetune::sha256_file(plan) == first);
    CHECK(edgetune::sha256_file(plan + ".manifest.json") == first_manifest);
}
