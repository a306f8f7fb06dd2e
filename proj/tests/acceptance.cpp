// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "spdiode/actuator.hpp"
#include "spdiode/devicecfg.hpp"
#include "spdiode/emitter.hpp"
#include "spdiode/errors.hpp"
#include "spdiode/estimator.hpp"
#include "spdiode/opfinder.hpp"
#include "spdiode/optics.hpp"
#include "spdiode/photostats.hpp"
#include "spdiode/spectra.hpp"

using namespace spdiode;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [x]");
  }
};

std::string f(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& body) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  if (!o.pass) ++failures;
  std::printf("%s  criterion %2d  %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(),
              seconds_since(t0));
  std::fflush(stdout);
}

// Emitter -> HBT chain with detected-event target, no dead time.
photostats::G2Curve simulate_events(const photostats::EmitterRates& rates, const Detector& det,
                                    double target_events, std::uint64_t seed, std::uint64_t* events) {
  const double detected_per_ns =
      (rates.emission_rate() + rates.background_rate()) * det.efficiency;
  const auto duration = static_cast<photostats::Timestamp>(target_events / detected_per_ns * 1000.0);
  auto s = photostats::emit_stream(rates, duration, photostats::derive_seed(seed, 1, 0));
  s = photostats::mix_background(s, rates, photostats::derive_seed(seed, 2, 0));
  auto [a, b] = photostats::detect_hbt(s, det, photostats::derive_seed(seed, 3, 0));
  *events = a.size() + b.size();
  const auto h = photostats::correlate(a, b, 16.0, 5000.0);
  const double dur_s = static_cast<double>(duration) * 1e-12;
  return photostats::normalize_g2(h, static_cast<double>(a.size()) / dur_s,
                                  static_cast<double>(b.size()) / dur_s, duration);
}

}  // namespace

int main() {
  const DeviceParams& paper = cfg::paper_device();

  report(1, "cavity tuning closure", [&] {
    Outcome o;
    const auto t0 = Clock::now();
    std::vector<double> volts;
    for (int i = 0; i <= 33; ++i) volts.push_back(-1.0 + 0.1 * i);
    const auto t = spectra::sweep_cavity(paper, volts, paper.diode.drive_ref_V);
    const auto d = optics::decompose_tuning(spectra::tuning_rows(t));
    const double elapsed = seconds_since(t0);
    const auto& lo = t.rows.front();
    const auto& hi = t.rows.back();
    const double err = std::max({std::abs(lo.lambda_AS - 1186.5), std::abs(hi.lambda_AS - 1205.1),
                                 std::abs(hi.lambda_S - 1242.3), std::abs(lo.lambda_S - 1257.7)});
    o.require(err <= 0.05, "endpoint max error " + f("%.4f nm", err));
    o.require(std::abs(d.mechanical_nm - 17.0) <= 0.05, "mechanical " + f("%.4f nm", d.mechanical_nm));
    o.require(std::abs(d.thermal_nm - 1.6) <= 0.05, "thermal " + f("%.4f nm", d.thermal_nm));
    o.require(elapsed < 1.0, "runtime " + f("%.4f s", elapsed));
    return o;
  });

  report(2, "calibration arithmetic", [&] {
    Outcome o;
    const auto law = cfg::calibrate_splitting({200.0, 37.2}, {145.0, 71.2});
    const double ref = oracle::coupling_length(145.0, 71.2, 200.0, 37.2);
    o.require(std::abs(law.coupling_length_nm - 84.7) <= 0.1, "L_c " + f("%.4f nm", law.coupling_length_nm));
    o.require(std::abs(law.coupling_length_nm - ref) <= 1e-6, "oracle L_c " + f("%.6f nm", ref));
    const double k = cfg::calibrate_thermal(0.6, 1.6);
    // Brute force: scan the coefficient for the best linear fit of 1.6 nm over 0.6 mA.
    double best = 0.0, best_err = INFINITY;
    for (int i = 0; i <= 1000000; ++i) {
      const double c = 2.0 + i * 1e-6;
      const double e = std::abs(c * 0.6 - 1.6);
      if (e < best_err) {
        best_err = e;
        best = c;
      }
    }
    o.require(std::abs(k - 2.667) <= 0.001, "kappa " + f("%.5f nm/mA", k));
    o.require(std::abs(k - best) <= 2e-6, "brute force " + f("%.5f", best));
    return o;
  });

  report(3, "actuator energy oracle", [&] {
    Outcome o;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> gap(80.0, 400.0), logk(std::log(1e-7), std::log(1e-4)), frac(-0.97, 0.97),
        vbi(-1.0, 3.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      DeviceParams p = paper;
      p.mech.rest_gap_nm = gap(rng);
      p.mech.stiffness_V2_per_nm3 = std::exp(logk(rng));
      p.mech.builtin_voltage_V = vbi(rng);
      const double v_eff = frac(rng) * actuator::pull_in(p).v_eff;
      const auto eq = actuator::equilibrium_gap(p, p.mech.builtin_voltage_V - v_eff);
      const double ref =
          oracle::energy_min_gap(p.mech.rest_gap_nm, p.mech.stiffness_V2_per_nm3, v_eff, 100000);
      worst = std::max(worst, std::abs(eq.gap_nm - ref));
    }
    o.require(worst <= 0.01, "100 sets, worst deviation " + f("%.5f nm", worst));
    // Pull-in gap approached from the stable side.
    const auto pi = actuator::pull_in(paper);
    const double d = actuator::equilibrium_gap(paper, paper.mech.builtin_voltage_V - pi.v_eff * (1 - 1e-12)).gap_nm;
    const double rel = std::abs(d / (2.0 * 200.0 / 3.0) - 1.0);
    o.require(rel <= 0.01, "pull-in gap " + f("%.3f nm", d) + " vs 2d0/3");
    return o;
  });

  report(4, "decay budget", [&] {
    Outcome o;
    const double v = 1.8;
    const double lx = emitter::exciton_wavelength(paper, v);
    const auto on = emitter::decay_budget(paper, v, lx);
    const auto off = emitter::decay_budget(paper, v, lx + 40.0);
    o.require(std::abs(emitter::purcell_max_rate(paper) - 2.1587) <= 1e-4,
              "Gamma_max " + f("%.4f /ns", emitter::purcell_max_rate(paper)));
    o.require(std::abs(on.tau_total * 1000.0 - 420.0) <= 1.0, "on resonance " + f("%.2f ps", on.tau_total * 1000.0));
    o.require(std::abs(off.tau_total / 4.5 - 1.0) <= 0.01, "far detuned " + f("%.4f ns", off.tau_total));
    return o;
  });

  report(5, "Monte Carlo vs analytic g2", [&] {
    Outcome o;
    // Part A: ideal purity at high rate so 10^6 detected events resolve the dip.
    photostats::EmitterRates hi{0.8, 1.0 / 0.42 - 0.8, 0.0};
    Detector det = paper.detector;
    det.dead_time_ns = 0.0;
    det.dark_rate_Hz = 0.0;
    std::uint64_t events = 0;
    const auto curve = simulate_events(hi, det, 1e6, 5, &events);
    const auto fit = estimator::fit_g2(curve, {.timing_sigma_ps = estimator::hbt_timing_sigma_ps(det)});
    const double tau_ref = 1000.0 / (hi.pump_rate + hi.decay_rate);
    o.require(fit.converged, std::to_string(events) + " events");
    o.require(std::abs(fit.value("tau_t_ps") / tau_ref - 1.0) <= 0.03,
              "tau_t " + f("%.1f", fit.value("tau_t_ps")) + " vs " + f("%.1f ps", tau_ref));
    o.require(std::abs(fit.value("A") - hi.purity_sq()) <= 0.03, "A " + f("%.4f", fit.value("A")));

    // Part B: the full detection chain at the resonant operating point.
    const auto t0 = Clock::now();
    const auto op = opfinder::find_resonant_bias(paper, 2.2);
    photostats::HbtSetup setup;
    setup.rates = opfinder::rates_for(paper, op);
    setup.detector = paper.detector;
    setup.duration_ps = 100 * photostats::kPsPerSecond;
    setup.seed = 55;
    setup.bin_width_ps = paper.correlator.bin_width_ps;
    setup.window_ps = paper.correlator.window_ns * 1000.0;
    const auto res = photostats::run_hbt(setup);
    const auto pf = estimator::fit_g2(res.curve, {.timing_sigma_ps = estimator::hbt_timing_sigma_ps(setup.detector)});
    const double elapsed = seconds_since(t0);
    o.require(std::abs(setup.rates.purity_sq() - 0.87) < 1e-3, "p^2 " + f("%.4f", setup.rates.purity_sq()));
    o.require(pf.converged && std::abs(pf.value("g2_zero") - 0.13) <= 0.03,
              "chain g2(0) " + f("%.4f", pf.value("g2_zero")));
    o.require(std::abs(pf.value("tau_t_ps") - 420.0) <= 15.0,
              "chain tau_t " + f("%.1f", pf.value("tau_t_ps")) + " +- " + f("%.1f ps", pf.error("tau_t_ps")));
    o.require(elapsed < 60.0, "100 s chain in " + f("%.1f s", elapsed));
    return o;
  });

  report(6, "mixture identity", [&] {
    Outcome o;
    photostats::EmitterRates r{0.8, 1.0 / 0.42 - 0.8, 0.16};
    Detector det = paper.detector;
    det.dead_time_ns = 0.0;
    det.dark_rate_Hz = 0.0;
    std::uint64_t events = 0;
    const auto curve = simulate_events(r, det, 4e6, 6, &events);
    const auto fit = estimator::fit_g2(curve, {.timing_sigma_ps = estimator::hbt_timing_sigma_ps(det)});
    o.require(std::abs(opfinder::predict_g2_zero(0.16) - 0.2944) < 1e-4,
              "predicted " + f("%.4f", opfinder::predict_g2_zero(0.16)));
    o.require(fit.converged && std::abs(fit.value("g2_zero") - 0.294) <= 0.02,
              "measured g2(0) " + f("%.4f", fit.value("g2_zero")) + " from " + std::to_string(events) + " events");
    return o;
  });

  report(7, "fit round trips", [&] {
    Outcome o;
    {
      DeviceParams p = paper;
      p.optics.band_edge_modes.clear();
      p.spectra.exciton_amplitude = 0.0;
      p.spectra.background = 0.0;
      const auto drive = actuator::drive_state(p, 2.2, 1.63);
      const double c = optics::modes_at(p, drive).lambda_S;
      auto s = spectra::synthesize(p, drive, {c - 3.0, c + 3.0, 0.005});
      std::mt19937_64 rng(7);
      std::normal_distribution<double> n(0.0, 0.05 * p.spectra.counts_scale);
      for (auto& v : s.intensities) v += n(rng);
      const auto fit = estimator::fit_lorentzian(s);
      o.require(fit.converged && std::abs(fit.value("Q") / 2270.0 - 1.0) <= 0.02,
                "Q " + f("%.1f", fit.value("Q")) + " at 5% noise");
    }
    {
      const auto tr = photostats::decay_trace(paper, 1.5, 2000000, 90.0, 71);
      const auto fit = estimator::fit_biexp_irf(tr, 90.0);
      const double tf = fit.value("tau_fast_ps");
      o.require(fit.converged && std::abs(tf / 1450.0 - 1.0) <= 0.03, "bulk tau_fast " + f("%.1f ps", tf));
    }
    {
      DeviceParams p = paper;
      p.emitter.tau_bulk_ns = 0.2;
      const auto tr = photostats::decay_trace(p, 1.5, 2000000, 90.0, 72);
      const auto fit = estimator::fit_biexp_irf(tr, 90.0);
      const double tf = fit.value("tau_fast_ps");
      o.require(fit.converged && std::abs(tf / 200.0 - 1.0) <= 0.05, "fast dot tau_fast " + f("%.1f ps", tf));
    }
    {
      double lo = INFINITY, hi = 0.0;
      for (double v = 1.2; v <= 2.0 + 1e-9; v += 0.01) {
        const double t = emitter::bulk_decay_budget(paper, v).tau_total;
        lo = std::min(lo, t);
        hi = std::max(hi, t);
      }
      const double spread = hi / lo - 1.0;
      o.require(spread < 0.01, "plateau spread above V_th " + f("%.4f", spread));
      bool monotone = true;
      double prev = emitter::bulk_decay_budget(paper, 1.2).tau_total;
      for (double v = 1.19; v >= 0.8; v -= 0.01) {
        const double t = emitter::bulk_decay_budget(paper, v).tau_total;
        monotone = monotone && t < prev;
        prev = t;
      }
      o.require(monotone, "strict decrease below V_th");
      // The same trend through simulated traces and fits.
      double prev_fit = INFINITY;
      bool fit_monotone = true;
      std::string fits;
      for (double v : {1.2, 1.1, 1.0, 0.9}) {
        const auto tr = photostats::decay_trace(paper, v, 500000, 90.0, 80);
        const double tf = estimator::fit_biexp_irf(tr, 90.0).value("tau_fast_ps");
        fit_monotone = fit_monotone && tf < prev_fit;
        prev_fit = tf;
        fits += (fits.empty() ? "" : "/") + f("%.0f", tf);
      }
      o.require(fit_monotone, "fitted tau_fast at 1.2/1.1/1.0/0.9 V " + fits + " ps");
    }
    return o;
  });

  report(8, "resonance finder", [&] {
    Outcome o;
    const auto op = opfinder::find_resonant_bias(paper, 2.2);
    const auto fwd = opfinder::evaluate(paper, 2.2, op.v_qd);
    o.require(std::abs(op.v_qd - 1.630) <= 0.001, "V_QD " + f("%.5f V", op.v_qd));
    o.require(std::abs(fwd.detuning_nm) < 1e-4, "closure " + f("%.2e nm", std::abs(fwd.detuning_nm)));
    return o;
  });

  report(9, "RC cutoff", [&] {
    Outcome o;
    const double a = emitter::rc_cutoff(1500.0, 15e-12);
    const double b = emitter::rc_cutoff(200.0, 1e-12);
    const double ra = 1.0 / (2.0 * std::numbers::pi * 1500.0 * 15e-12);
    const double rb = 1.0 / (2.0 * std::numbers::pi * 200.0 * 1e-12);
    o.require(a == ra && std::abs(a / 1e6 - 7.074) < 5e-4, f("%.4f MHz", a / 1e6));
    o.require(b == rb && std::abs(b / 1e6 - 795.8) < 5e-2, f("%.2f MHz", b / 1e6));
    return o;
  });

  report(10, "determinism and merge", [&] {
    Outcome o;
    const photostats::EmitterRates r{0.05, 1.0 / 0.42, 0.06726};
    const auto s1 = photostats::mix_background(photostats::emit_stream(r, 200'000'000'000, 1), r, 2);
    const auto s2 = photostats::mix_background(photostats::emit_stream(r, 200'000'000'000, 1), r, 2);
    o.require(s1.timestamps == s2.timestamps, "streams identical");
    const auto [a, b] = photostats::detect_hbt(s1, paper.detector, 3);
    const auto whole = photostats::correlate(a, b, 16.0, 5000.0);

    bool chunk_equal = true;
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 10; ++trial) {
      std::uniform_int_distribution<photostats::Timestamp> cut(0, s1.end_ps);
      std::vector<photostats::Timestamp> cuts{0, s1.end_ps + 1};
      for (int i = 0; i < 50; ++i) cuts.push_back(cut(rng));
      std::sort(cuts.begin(), cuts.end());
      photostats::StreamingCorrelator sc(16.0, 5000.0);
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        auto slice = [&](const std::vector<photostats::Timestamp>& v) {
          const auto lo = std::lower_bound(v.begin(), v.end(), cuts[i]) - v.begin();
          const auto hi = std::lower_bound(v.begin(), v.end(), cuts[i + 1]) - v.begin();
          return std::span<const photostats::Timestamp>(v.data() + lo, static_cast<std::size_t>(hi - lo));
        };
        sc.feed(slice(a.timestamps), slice(b.timestamps), cuts[i + 1]);
      }
      chunk_equal = chunk_equal && sc.finish() == whole;
    }
    o.require(chunk_equal, "10 random chunkings equal whole-stream histogram");

    photostats::HbtSetup setup;
    setup.rates = r;
    setup.detector = paper.detector;
    setup.duration_ps = photostats::kPsPerSecond / 2;
    setup.segment_ps = photostats::kPsPerSecond / 10;
    setup.seed = 99;
    setup.threads = 1;
    photostats::TimeTagStream ta, tb;
    const auto r1 = photostats::run_hbt(setup, [&](const auto& x, const auto& y) {
      ta.timestamps.insert(ta.timestamps.end(), x.timestamps.begin(), x.timestamps.end());
      tb.timestamps.insert(tb.timestamps.end(), y.timestamps.begin(), y.timestamps.end());
    });
    setup.threads = 4;
    const auto r2 = photostats::run_hbt(setup);
    o.require(r1.histogram == r2.histogram, "1 vs 4 threads identical");
    o.require(r1.histogram == photostats::correlate(ta, tb, 16.0, 5000.0), "segment merge equals whole stream");
    return o;
  });

  report(11, "estimator error bars", [&] {
    Outcome o;
    const double a_true = 0.87, tau_true = 420.0, mean_counts = 400.0;
    std::mt19937_64 rng(11);
    std::vector<double> as, taus, ea, et;
    for (int rep = 0; rep < 1000; ++rep) {
      photostats::G2Curve c;
      for (int i = -312; i <= 312; ++i) {
        const double t = 16.0 * i;
        const double mu = mean_counts * (1.0 - a_true * std::exp(-std::abs(t) / tau_true));
        const auto k = std::poisson_distribution<long>(mu)(rng);
        c.tau_ps.push_back(t);
        c.g2.push_back(static_cast<double>(k) / mean_counts);
        c.sigma.push_back(std::sqrt(std::max<double>(static_cast<double>(k), 1.0)) / mean_counts);
        c.counts.push_back(static_cast<std::uint64_t>(k));
      }
      const auto fit = estimator::fit_g2(c);
      if (!fit.converged) continue;
      as.push_back(fit.value("A"));
      taus.push_back(fit.value("tau_t_ps"));
      ea.push_back(fit.error("A"));
      et.push_back(fit.error("tau_t_ps"));
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    auto sd = [&](const std::vector<double>& v) {
      const double m = mean(v);
      double s = 0;
      for (double x : v) s += (x - m) * (x - m);
      return std::sqrt(s / static_cast<double>(v.size() - 1));
    };
    const double ra = sd(as) / mean(ea) - 1.0;
    const double rt = sd(taus) / mean(et) - 1.0;
    o.require(as.size() >= 990, std::to_string(as.size()) + " converged replicates");
    o.require(std::abs(ra) <= 0.15, "A spread/error " + f("%+.3f", ra));
    o.require(std::abs(rt) <= 0.15, "tau spread/error " + f("%+.3f", rt));
    return o;
  });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures;
}
