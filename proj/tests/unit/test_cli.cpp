#include <chrono>
#include <filesystem>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "config.hpp"
#include "doctest.h"
#include "gpenkf/io.hpp"

using namespace gpenkf::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("gpenkf_cli_test_" + name);
    fs::remove_all(dir);
    return dir;
}

struct Captured {
    std::ostringstream out, err;
    int code = -1;
};

Captured run(const std::string& command, const RunConfig& cfg, bool dry_run = false) {
    Captured c;
    CommandContext ctx;
    ctx.config = cfg;
    ctx.dry_run = dry_run;
    ctx.out = &c.out;
    ctx.err = &c.err;
    c.code = run_command(command, ctx);
    return c;
}

RunConfig toy_config(const fs::path& dir) {
    RunConfig cfg = parse_config(R"({
  "mode": "toy",
  "seed": 5,
  "toy": {"training_points": 50, "test_points": 200},
  "mcmc": {"chains": 4, "samples": 6000, "burn_in": 2000, "thin": 4}
})");
    cfg.output_dir = dir.string();
    return cfg;
}

}  // namespace

TEST_CASE("config diagnostics carry line numbers") {
    try {
        parse_config("{\n  \"seed\": 1,\n  \"mcmc\": {\n    \"chains\": -2\n  }\n}", "run.json");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("run.json:4:") == 0);
    }
    try {
        parse_config("{\n  \"seed\": 1,\n  \"colour\": 3\n}", "run.json");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("run.json:3:") == 0);
        CHECK(std::string(e.what()).find("colour") != std::string::npos);
    }
    try {
        parse_config("{\n  \"seed\": 1,\n  \"mode\": \n}", "broken.json");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("broken.json:") == 0);
    }
    CHECK_THROWS_AS(parse_config(R"({"mcmc": {"samples": 10, "burn_in": 10}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"calibration": {"measurement_set": "S2"}})"), ConfigError);
}

TEST_CASE("defaults and hashing") {
    const RunConfig d = parse_config("{}");
    CHECK(d.design.initial_size == 350);
    CHECK(d.mcmc.chains == 10);
    CHECK(d.mcmc.samples == 40000);
    CHECK(d.emulation.r2_floor == 0.95);
    CHECK(d.calibration.ensemble_size == 500);
    CHECK(d.calibration.iterations == 50);
    CHECK(d.study.cases == 50);

    RunConfig a = parse_config(R"({"seed": 3})");
    RunConfig b = parse_config("{\n \"seed\" : 3 }");
    CHECK(config_hash(a) == config_hash(b));
    b.output_dir = "elsewhere";
    b.threads = 4;
    CHECK(config_hash(a) == config_hash(b));
    b.seed = 4;
    CHECK(config_hash(a) != config_hash(b));
    CHECK(parse_config(canonical_config(a)).seed == 3);
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("dry run writes nothing") {
    const fs::path dir = scratch_dir("dry");
    const Captured c = run("design", toy_config(dir), true);
    CHECK(c.code == kExitOk);
    CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("emulate without an ensemble is a usage error") {
    const fs::path dir = scratch_dir("missing");
    const Captured c = run("emulate", toy_config(dir));
    CHECK(c.code == kExitUsage);
    CHECK_FALSE(c.err.str().empty());
}

TEST_CASE("toy pipeline is fast, reproducible and verifiable") {
    const fs::path dir = scratch_dir("toy");
    const RunConfig cfg = toy_config(dir);
    REQUIRE(run("design", cfg).code == kExitOk);
    const Captured emulate = run("emulate", cfg);
    REQUIRE(emulate.code == kExitOk);
    CHECK(gpenkf::io::bank_from_json(gpenkf::io::read_text(dir / "bank.json")).output_dim() == 3);

    const auto start = std::chrono::steady_clock::now();
    REQUIRE(run("calibrate", cfg).code == kExitOk);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(seconds < 60.0);

    const std::string first = gpenkf::io::read_text(dir / "enkf.json");
    const std::string first_members = gpenkf::io::read_text(dir / "final_ensemble.csv");
    REQUIRE(run("calibrate", cfg).code == kExitOk);
    CHECK(gpenkf::io::read_text(dir / "enkf.json") == first);
    CHECK(gpenkf::io::read_text(dir / "final_ensemble.csv") == first_members);

    const auto meta = gpenkf::io::read_metadata(dir / "enkf.json");
    bool stamped = false;
    for (const auto& [k, v] : meta) stamped |= k == "config_hash" && v == config_hash(cfg);
    CHECK(stamped);

    REQUIRE(run("mcmc", cfg).code == kExitOk);
    CHECK(fs::exists(dir / "mcmc_samples.csv"));

    CHECK(run("verify", cfg).code == kExitOk);
    gpenkf::io::write_text(dir / "posterior.json", "{}\n");
    CHECK(run("verify", cfg).code == kExitUsage);

    RunConfig other = cfg;
    other.seed = 6;
    CHECK(run("verify", other).code == kExitUsage);
}

TEST_CASE("emulation quality floor maps to its exit code") {
    const fs::path dir = scratch_dir("floor");
    RunConfig cfg = toy_config(dir);
    cfg.toy.training_points = 4;
    cfg.emulation.r2_floor = 0.999999;
    REQUIRE(run("design", cfg).code == kExitOk);
    const Captured c = run("emulate", cfg);
    CHECK(c.code == kExitEmulation);
    CHECK(fs::exists(dir / "emulation.json"));
}
