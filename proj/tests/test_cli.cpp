#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "spdiode/io.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::current_path() / "cli_work";

int run(const std::string& args, const std::string& log = "last.log") {
  fs::create_directories(kWork);
  const std::string cmd = "cd '" + kWork.string() + "' && '" SPDIODE_CLI "' " + args + " > " + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& name) { return spdiode::io::read_file(kWork / name); }

}  // namespace

TEST_CASE("usage and config errors exit 2") {
  CHECK(run("") == 2);
  CHECK(run("no-such-command") == 2);
  CHECK(run("sweep-cavity --config missing_device.json") == 2);
  CHECK(slurp("last.log").find("missing_device.json") != std::string::npos);
  // Stochastic commands need a seed; deterministic ones reject it.
  CHECK(run("hbt --duration 0.01") == 2);
  CHECK(run("find-resonance --vcav 2.2 --seed 1") == 2);
  CHECK(run("sweep-cavity --seed 1") == 2);

  spdiode::io::atomic_write(kWork / "broken.json", "{\"mechanics\": {}}");
  CHECK(run("sweep-cavity --config broken.json") == 2);
  CHECK(slurp("last.log").find("mechanics.") != std::string::npos);
}

TEST_CASE("find-resonance prints the QD bias") {
  CHECK(run("find-resonance --vcav 2.2") == 0);
  const auto out = slurp("last.log");
  CHECK(out.find("V_QD = 1.6299") != std::string::npos);
  CHECK(run("find-resonance --vcav 2.2 --mode AS") == 1);
}

TEST_CASE("sweep-cavity output and pull-in warning") {
  CHECK(run("sweep-cavity --vmin -1.0 --vmax 2.3 --steps 34 --out sweep.csv") == 0);
  const auto csv = slurp("sweep.csv");
  CHECK(csv.rfind("V,lambda_S_nm,lambda_AS_nm,lambda_X_nm,detuning_nm\n", 0) == 0);
  CHECK(csv.find("\n-1,1257.7,1186.5,") != std::string::npos);
  CHECK(csv.find("\n2.3,1242.3,1205.1,") != std::string::npos);
  CHECK(fs::exists(kWork / "sweep.csv.manifest.json"));

  CHECK(run("sweep-cavity --steps 1 --out one.csv") == 0);
  const auto one = slurp("one.csv");
  CHECK(std::count(one.begin(), one.end(), '\n') == 2);

  CHECK(run("sweep-cavity --vmin -1.5 --vmax 0 --steps 4 --out pulled.csv") == 0);
  CHECK(slurp("last.log").find("pull-in") != std::string::npos);
  CHECK(slurp("pulled.csv").find("nan") != std::string::npos);

  CHECK(run("sweep-cavity --steps 3 --format json --out sweep.json") == 0);
  const auto j = nlohmann::json::parse(slurp("sweep.json"));
  CHECK(j["rows"].size() == 3);
}

TEST_CASE("hbt then fit-g2 composes through files and is reproducible") {
  CHECK(run("hbt --duration 0.2 --seed 7 --out g2a.csv --tags-out tags.bin --tags-format bin") == 0);
  CHECK(run("hbt --duration 0.2 --seed 7 --out g2b.csv") == 0);
  CHECK(slurp("g2a.csv") == slurp("g2b.csv"));
  CHECK(run("hbt --duration 0.2 --seed 8 --out g2c.csv") == 0);
  CHECK(slurp("g2a.csv") != slurp("g2c.csv"));
  CHECK(slurp("tags.bin").size() % 9 == 0);

  const auto m = nlohmann::json::parse(slurp("g2a.csv.manifest.json"));
  CHECK(m["command"] == "hbt");
  CHECK(m["seed"] == 7);
  CHECK(m["config"] == "builtin:paper_device");
  CHECK(m["outputs"].size() == 2);
  CHECK(m.contains("wall_time_s"));
  CHECK(m.contains("version"));

  CHECK(run("fit-g2 --in g2a.csv --out fit.json") == 0);
  const auto fit = nlohmann::json::parse(slurp("fit.json"));
  CHECK(fit["converged"] == true);
  CHECK(fit["params"][0]["name"] == "A");
  CHECK(fit["params"][1]["name"] == "tau_t_ps");

  spdiode::io::atomic_write(kWork / "flat.csv", "tau_ps,g2,sigma,counts\n0,1,0.1,1\n16,1,0.1,1\n");
  CHECK(run("fit-g2 --in flat.csv --out badfit.json") == 1);
  CHECK(slurp("last.log").find("\"converged\":false") != std::string::npos);
}

TEST_CASE("manifests replay bit-exactly") {
  REQUIRE(run("hbt --duration 0.1 --seed 3 --out rep_g2.csv --tags-out rep_tags.csv") == 0);
  CHECK(run("replay rep_g2.csv.manifest.json") == 0);
  CHECK(slurp("last.log").find("2/2 outputs identical") != std::string::npos);

  REQUIRE(run("decay-trace --vqd 1.5 --pulses 20000 --seed 4 --out rep_trace.csv") == 0);
  CHECK(run("replay rep_trace.csv.manifest.json") == 0);

  REQUIRE(run("spectrum --vcav 2.2 --vqd 1.63 --seed 9 --out rep_spec.csv") == 0);
  CHECK(run("replay rep_spec.csv.manifest.json") == 0);

  REQUIRE(run("map --vcav-steps 3 --vqd-steps 5 --out rep_map.csv") == 0);
  CHECK(slurp("rep_map.csv").rfind("V_CAV,V_QD,detuning_nm,tau_ns,g2_zero,enhancement\n", 0) == 0);
  CHECK(run("replay rep_map.csv.manifest.json") == 0);

  REQUIRE(run("sweep-cavity --out rep_sweep.csv") == 0);
  CHECK(run("replay rep_sweep.csv.manifest.json") == 0);

  REQUIRE(run("find-resonance --vcav 2.1 --out rep_find.csv") == 0);
  CHECK(run("replay rep_find.csv.manifest.json") == 0);

  REQUIRE(run("fit-g2 --in rep_g2.csv --out rep_fit.json") == 0);
  CHECK(run("replay rep_fit.json.manifest.json") == 0);

  // A tampered output is detected.
  spdiode::io::atomic_write(kWork / "rep_map.csv", "tampered\n");
  CHECK(run("replay rep_map.csv.manifest.json") == 1);
}

TEST_CASE("config from the environment") {
  const std::string cfg = SPDIODE_SOURCE_DIR "/configs/paper_device.json";
  CHECK(run("find-resonance --vcav 2.2 --config '" + cfg + "'") == 0);
  CHECK(slurp("last.log").find("V_QD = 1.6299") != std::string::npos);
  fs::create_directories(kWork);
  const std::string cmd = "cd '" + kWork.string() + "' && SPDIODE_CONFIG=nowhere.json '" SPDIODE_CLI
                          "' find-resonance --vcav 2.2 > env.log 2>&1";
  const int rc = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(rc) == 2);
  CHECK(slurp("env.log").find("nowhere.json") != std::string::npos);
}
