// spdiode: command-line front end for the diode simulator.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spdiode/actuator.hpp"
#include "spdiode/devicecfg.hpp"
#include "spdiode/errors.hpp"
#include "spdiode/estimator.hpp"
#include "spdiode/io.hpp"
#include "spdiode/opfinder.hpp"
#include "spdiode/photostats.hpp"
#include "spdiode/spectra.hpp"

#ifndef SPDIODE_VERSION
#define SPDIODE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace spdiode;

namespace {

constexpr int kOk = 0;
constexpr int kNumeric = 1;
constexpr int kUsage = 2;
constexpr const char* kBuiltinConfig = "builtin:paper_device";

struct Common {
  std::string config;
  std::string format = "csv";
  std::string out;
};

struct Run {
  std::string command;
  std::string config_label;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> outputs;
  std::vector<std::string> args;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

DeviceParams load(const Common& c, Run& run) {
  std::string path = c.config;
  if (path.empty()) {
    if (const char* env = std::getenv("SPDIODE_CONFIG"); env && *env) path = env;
  }
  if (path.empty() || path == kBuiltinConfig) {
    run.config_label = kBuiltinConfig;
    return cfg::paper_device();
  }
  if (!fs::exists(path)) throw ConfigError("", "config file not found: " + path);
  run.config_label = fs::absolute(path).string();
  return cfg::load_config(path);
}

Mode parse_mode(const std::string& m) { return m == "AS" ? Mode::AS : Mode::S; }

std::vector<double> linspace(double lo, double hi, int steps) {
  if (steps < 1) throw NumericError("--steps must be >= 1");
  std::vector<double> v(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i)
    v[static_cast<std::size_t>(i)] = steps == 1 ? lo : lo + (hi - lo) * i / (steps - 1);
  return v;
}

void write_output(Run& run, const Common& c, const std::string& csv, const ordered_json& json) {
  const std::string data = c.format == "json" ? io::dump_json(json) : csv;
  if (c.out.empty() || c.out == "-") {
    std::cout << data;
    return;
  }
  io::atomic_write(c.out, data);
  run.outputs.push_back(c.out);
}

void write_manifest(const Run& run) {
  if (run.outputs.empty()) return;
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - run.start).count();
  ordered_json m;
  m["command"] = run.command;
  m["config"] = run.config_label;
  m["seed"] = run.seed ? ordered_json(*run.seed) : ordered_json(nullptr);
  m["outputs"] = run.outputs;
  m["version"] = SPDIODE_VERSION;
  m["wall_time_s"] = wall;
  m["args"] = run.args;
  io::atomic_write(run.outputs.front() + ".manifest.json", m.dump(2) + "\n");
}

std::string fit_failure_json(const std::string& what) {
  return ordered_json{{"converged", false}, {"diagnostic", what}}.dump() + "\n";
}

int dispatch(const std::vector<std::string>& args);

int replay(const std::string& manifest_path) {
  const auto m = nlohmann::json::parse(io::read_file(manifest_path));
  std::map<std::string, std::string> before;
  for (const auto& o : m.at("outputs")) {
    const auto path = o.get<std::string>();
    before[path] = fs::exists(path) ? io::read_file(path) : std::string{};
  }
  std::vector<std::string> args = m.at("args").get<std::vector<std::string>>();
  const auto cfg = m.at("config").get<std::string>();
  // Pin the configuration that produced the outputs.
  bool has_config = false;
  for (const auto& a : args)
    if (a == "--config" || a.rfind("--config=", 0) == 0) has_config = true;
  if (!has_config) {
    args.push_back("--config");
    args.push_back(cfg);
  }
  const int rc = dispatch(args);
  if (rc != kOk) return rc;
  int mismatches = 0;
  for (const auto& [path, bytes] : before) {
    if (io::read_file(path) != bytes) {
      std::cerr << "replay: output differs: " << path << "\n";
      ++mismatches;
    }
  }
  std::cout << "replay: " << before.size() - static_cast<std::size_t>(mismatches) << "/" << before.size()
            << " outputs identical\n";
  return mismatches ? kNumeric : kOk;
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Electrically driven single-photon diode simulator"};
  app.set_version_flag("--version", SPDIODE_VERSION);
  app.require_subcommand(1);

  Common c;
  auto add_common = [&](CLI::App* sub, bool with_format = true) {
    sub->add_option("--config", c.config, "Device config JSON (default: $SPDIODE_CONFIG or the built-in preset)");
    sub->add_option("--out,-o", c.out, "Output file (default: stdout)");
    if (with_format)
      sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  };

  Run run;
  run.args = args;
  std::uint64_t seed = 0;
  std::string mode = "S";

  // sweep-cavity
  double vmin = -1.0, vmax = 2.3, vqd = 3.5, vcav = 2.2;
  int steps = 34;
  std::string spectra_dir;
  auto* sweep = app.add_subcommand("sweep-cavity", "Mode and exciton positions against the actuation voltage");
  add_common(sweep);
  sweep->add_option("--vmin", vmin, "First V_CAV (V)")->capture_default_str();
  sweep->add_option("--vmax", vmax, "Last V_CAV (V)")->capture_default_str();
  sweep->add_option("--steps", steps, "Number of voltages")->capture_default_str();
  sweep->add_option("--vqd", vqd, "QD bias (V)")->capture_default_str();
  sweep->add_option("--mode", mode, "Coupled mode")->check(CLI::IsMember({"S", "AS"}));
  sweep->add_option("--spectra-dir", spectra_dir, "Also write one spectrum per voltage here");

  // spectrum
  double wmin = 1170, wmax = 1270, wstep = 0.01;
  std::optional<std::uint64_t> noise_seed;
  auto* spec = app.add_subcommand("spectrum", "Synthetic EL spectrum at one bias pair");
  add_common(spec);
  spec->add_option("--vcav", vcav, "Actuation voltage (V)")->required();
  spec->add_option("--vqd", vqd, "QD bias (V)")->required();
  spec->add_option("--min", wmin, "Grid start (nm)")->capture_default_str();
  spec->add_option("--max", wmax, "Grid end (nm)")->capture_default_str();
  spec->add_option("--step", wstep, "Grid step (nm)")->capture_default_str();
  spec->add_option("--mode", mode, "Coupled mode")->check(CLI::IsMember({"S", "AS"}));
  spec->add_option("--seed", noise_seed, "Add Poisson counting noise with this seed");

  // hbt
  double duration_s = 1.0;
  std::optional<double> hbt_vqd;
  std::string tags_out, tags_format = "csv";
  unsigned threads = 0;
  auto* hbt = app.add_subcommand("hbt", "Simulated HBT measurement; writes the normalized g2 curve");
  add_common(hbt);
  hbt->add_option("--duration", duration_s, "Integration time (s)")->capture_default_str();
  hbt->add_option("--seed", seed, "RNG seed")->required();
  hbt->add_option("--vcav", vcav, "Actuation voltage (V)")->capture_default_str();
  hbt->add_option("--vqd", hbt_vqd, "QD bias (V); default: resonant bias at --vcav");
  hbt->add_option("--mode", mode, "Coupled mode")->check(CLI::IsMember({"S", "AS"}));
  hbt->add_option("--tags-out", tags_out, "Also write detected time tags");
  hbt->add_option("--tags-format", tags_format, "Time tag format")->check(CLI::IsMember({"csv", "bin"}));
  hbt->add_option("--threads", threads, "Worker threads (0: all cores)");

  // fit-g2
  std::string in;
  bool unweighted = false;
  double timing_sigma = -1.0;
  auto* fitg2 = app.add_subcommand("fit-g2", "Fit the antibunching dip of a g2 curve (CSV or JSON)");
  add_common(fitg2, false);
  fitg2->add_option("--in", in, "g2 curve file")->required()->check(CLI::ExistingFile);
  fitg2->add_flag("--unweighted", unweighted, "Ignore the sigma column");
  fitg2->add_option("--timing-sigma", timing_sigma,
                    "Per-pair timing sigma in ps (default: from the detector jitter, 0 disables)")
      ->check(CLI::NonNegativeNumber);

  // find-resonance
  auto* find = app.add_subcommand("find-resonance", "QD bias that puts the exciton on the cavity mode");
  add_common(find);
  find->add_option("--vcav", vcav, "Actuation voltage (V)")->required();
  find->add_option("--mode", mode, "Coupled mode")->check(CLI::IsMember({"S", "AS"}));

  // decay-trace
  std::int64_t pulses = 1000000;
  double irf = 90.0;
  photostats::TraceOptions topt;
  auto* trace = app.add_subcommand("decay-trace", "Time-resolved decay of a dot in bulk material");
  add_common(trace);
  trace->add_option("--vqd", vqd, "QD bias (V)")->required();
  trace->add_option("--pulses", pulses, "Excitation pulses")->capture_default_str();
  trace->add_option("--seed", seed, "RNG seed")->required();
  trace->add_option("--irf", irf, "IRF FWHM (ps)")->capture_default_str();
  trace->add_option("--bin", topt.bin_width_ps, "Bin width (ps)")->capture_default_str();
  trace->add_option("--tmax", topt.t_max_ps, "Histogram end (ps)")->capture_default_str();

  // map
  double cmin = 1.8, cmax = 2.3, qmin = 1.2, qmax = 2.0;
  int csteps = 11, qsteps = 41;
  auto* map = app.add_subcommand("map", "Predicted observables over the (V_CAV, V_QD) plane");
  add_common(map);
  map->add_option("--vcav-min", cmin, "First V_CAV (V)")->capture_default_str();
  map->add_option("--vcav-max", cmax, "Last V_CAV (V)")->capture_default_str();
  map->add_option("--vcav-steps", csteps, "V_CAV grid points")->capture_default_str();
  map->add_option("--vqd-min", qmin, "First V_QD (V)")->capture_default_str();
  map->add_option("--vqd-max", qmax, "Last V_QD (V)")->capture_default_str();
  map->add_option("--vqd-steps", qsteps, "V_QD grid points")->capture_default_str();
  map->add_option("--mode", mode, "Coupled mode")->check(CLI::IsMember({"S", "AS"}));

  // replay
  std::string manifest;
  auto* rep = app.add_subcommand("replay", "Re-run a manifest and check the outputs are byte-identical");
  rep->add_option("manifest", manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);

  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  auto* sub = app.get_subcommands().front();
  run.command = sub->get_name();

  try {
    if (sub == rep) return replay(manifest);

    const DeviceParams p = load(c, run);

    if (sub == sweep) {
      spectra::SweepOptions opts{parse_mode(mode), true};
      const auto volts = linspace(vmin, vmax, steps);
      const auto table = spectra::sweep_cavity(p, volts, vqd, opts);
      for (const auto& r : table.rows)
        if (r.pulled_in) std::cerr << "warning: V_CAV = " << io::fmt(r.v) << " V is past pull-in\n";
      write_output(run, c, io::sweep_csv(table), io::sweep_json(table));
      if (!spectra_dir.empty()) {
        const double i_nom = actuator::injection_current(p, vqd);
        for (const auto& r : table.rows) {
          if (r.pulled_in) continue;
          const DriveState d{r.v, vqd, actuator::crosstalk_current(p, r.v, i_nom)};
          const auto s = spectra::synthesize(p, d, {wmin, wmax, wstep}, std::nullopt, parse_mode(mode));
          const auto path = (fs::path(spectra_dir) / ("spectrum_vcav_" + io::fmt(r.v) + ".csv")).string();
          io::atomic_write(path, io::spectrum_csv(s));
          run.outputs.push_back(path);
        }
      }
    } else if (sub == spec) {
      run.seed = noise_seed;
      const auto s = spectra::synthesize(p, actuator::drive_state(p, vcav, vqd), {wmin, wmax, wstep},
                                         noise_seed, parse_mode(mode));
      write_output(run, c, io::spectrum_csv(s), io::spectrum_json(s));
    } else if (sub == hbt) {
      run.seed = seed;
      if (!(duration_s > 0)) throw NumericError("--duration must be > 0");
      const auto point = hbt_vqd ? opfinder::evaluate(p, vcav, *hbt_vqd, parse_mode(mode))
                                 : opfinder::find_resonant_bias(p, vcav, parse_mode(mode));
      photostats::HbtSetup setup;
      setup.rates = opfinder::rates_for(p, point);
      setup.detector = p.detector;
      setup.duration_ps = static_cast<photostats::Timestamp>(duration_s * 1e12);
      setup.seed = seed;
      setup.bin_width_ps = p.correlator.bin_width_ps;
      setup.window_ps = p.correlator.window_ns * 1000.0;
      setup.threads = threads;
      std::string tags;
      photostats::TagSink sink;
      if (!tags_out.empty()) {
        if (tags_format == "csv") tags = "channel,timestamp_ps\n";
        sink = [&](const photostats::TimeTagStream& a, const photostats::TimeTagStream& b) {
          auto put = tags_format == "csv" ? io::append_tags_csv : io::append_tags_bin;
          put(tags, a);
          put(tags, b);
        };
      }
      const auto res = photostats::run_hbt(setup, sink);
      if (res.curve.tau_ps.empty()) throw NumericError("hbt: no coincidences recorded");
      std::cerr << "hbt: V_QD = " << io::fmt(point.v_qd) << " V, tau_total = " << io::fmt(point.tau_total_ns)
                << " ns, counts " << res.counts_a << " / " << res.counts_b << "\n";
      write_output(run, c, io::g2_csv(res.curve), io::g2_json(res.curve));
      if (!tags_out.empty()) {
        io::atomic_write(tags_out, tags);
        run.outputs.push_back(tags_out);
      }
    } else if (sub == fitg2) {
      const auto text = io::read_file(in);
      const auto curve = fs::path(in).extension() == ".json" ? io::parse_g2_json(nlohmann::json::parse(text))
                                                             : io::parse_g2_csv(text);
      estimator::FitResult r;
      try {
        estimator::G2FitOptions opts;
        opts.weighted = !unweighted;
        opts.timing_sigma_ps = timing_sigma >= 0 ? timing_sigma : estimator::hbt_timing_sigma_ps(p.detector);
        r = estimator::fit_g2(curve, opts);
      } catch (const NumericError& e) {
        std::cout << fit_failure_json(e.what());
        return kNumeric;
      }
      const auto report = io::dump_json(io::fit_report(r));
      c.format = "json";
      write_output(run, c, report, io::fit_report(r));
      if (!r.converged) {
        if (!c.out.empty()) std::cout << report;
        write_manifest(run);
        return kNumeric;
      }
    } else if (sub == find) {
      const auto op = opfinder::find_resonant_bias(p, vcav, parse_mode(mode));
      std::cout << "V_QD = " << io::fmt(op.v_qd) << " V\n";
      if (!c.out.empty()) write_output(run, c, io::map_csv({op}), io::map_json({op}));
    } else if (sub == trace) {
      run.seed = seed;
      const auto t = photostats::decay_trace(p, vqd, pulses, irf, seed, topt);
      write_output(run, c, io::trace_csv(t), io::trace_json(t));
    } else if (sub == map) {
      const auto rows = opfinder::operating_map(p, linspace(cmin, cmax, csteps), linspace(qmin, qmax, qsteps),
                                                parse_mode(mode));
      std::size_t flagged = 0;
      for (const auto& r : rows) flagged += r.pulled_in;
      if (flagged) std::cerr << "warning: " << flagged << " cells past pull-in\n";
      write_output(run, c, io::map_csv(rows), io::map_json(rows));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << fit_failure_json(e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  write_manifest(run);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  if (!args.empty()) args[0] = "spdiode";
  return dispatch(args);
}
