#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "spdiode/devicecfg.hpp"
#include "spdiode/errors.hpp"
#include "spdiode/photostats.hpp"

using namespace spdiode;
using namespace spdiode::photostats;

namespace {

bool strictly_inside(const TimeTagStream& s) {
  for (std::size_t i = 0; i < s.timestamps.size(); ++i) {
    if (s.timestamps[i] < s.begin_ps || s.timestamps[i] > s.end_ps) return false;
    if (i && s.timestamps[i] <= s.timestamps[i - 1]) return false;
  }
  return true;
}

Detector ideal_detector() {
  Detector d;
  d.efficiency = 1.0;
  d.dark_rate_Hz = 0.0;
  d.jitter_ps = 0.0;
  d.jitter_is_fwhm = true;
  d.dead_time_ns = 0.0;
  return d;
}

}  // namespace

TEST_CASE("emitter stream rate and ordering") {
  const EmitterRates r{0.5, 2.0, 0.0};
  CHECK(r.emission_rate() == doctest::Approx(0.4));
  const auto s = emit_stream(r, 20'000'000'000, 1, 5000);  // 20 ms
  CHECK(strictly_inside(s));
  CHECK(s.begin_ps == 5000);
  const double expected = 0.4 * 20e6;
  CHECK(static_cast<double>(s.size()) == doctest::Approx(expected).epsilon(5.0 / std::sqrt(expected)));
}

TEST_CASE("emitter autocorrelation follows the renewal g2") {
  const EmitterRates r{1.0, 1.5, 0.0};
  const Timestamp dur = 40'000'000'000;  // 40 ms, about 24 M photons
  const auto s = emit_stream(r, dur, 99);
  const auto h = correlate(s, s, 100.0, 4000.0);
  const double rate = static_cast<double>(s.size()) / (static_cast<double>(dur) * 1e-12);
  const auto c = normalize_g2(h, rate, rate, dur);
  // Zero bin holds every self-pair plus the rare pair closer than half a bin.
  const auto zero = h.counts[static_cast<std::size_t>(h.half_bins)];
  CHECK(zero >= s.size());
  CHECK(static_cast<double>(zero - s.size()) < 0.01 * static_cast<double>(s.size()));
  for (std::size_t i = 0; i < c.tau_ps.size(); ++i) {
    const double tau = c.tau_ps[i];
    if (std::abs(tau) < 150) continue;
    // Bin average of the analytic curve over [tau - 50, tau + 50].
    double ref = 0.0;
    for (int k = 0; k < 100; ++k) ref += oracle::g2_mixture((tau - 50 + k + 0.5) * 1e-3, 0.0, 2.5);
    ref /= 100.0;
    CHECK(std::abs(c.g2[i] - ref) < 5.0 * c.sigma[i]);
  }
}

TEST_CASE("Poisson stream and background mixture") {
  const auto p = poisson_stream(1e6, 0, 100'000'000'000, 5, 3);  // 0.1 s at 1 MHz
  CHECK(p.channel == 3);
  CHECK(strictly_inside(p));
  CHECK(static_cast<double>(p.size()) == doctest::Approx(1e5).epsilon(0.02));

  const EmitterRates r{0.2, 2.0, 0.16};
  const auto clean = emit_stream(r, 10'000'000'000, 8);
  const auto mixed = mix_background(clean, r, 9);
  CHECK(strictly_inside(mixed));
  const double frac = 1.0 - static_cast<double>(clean.size()) / static_cast<double>(mixed.size());
  CHECK(frac == doctest::Approx(0.16).epsilon(0.03));
  const EmitterRates none{0.2, 2.0, 0.0};
  CHECK(mix_background(clean, none, 9).timestamps == clean.timestamps);
  CHECK_THROWS(mix_background(clean, EmitterRates{0.2, 2.0, 1.0}, 9));
}

TEST_CASE("correlator matches the all-pairs oracle") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::int64_t> t(0, 200000);
    TimeTagStream a, b;
    for (int i = 0; i < 300; ++i) a.timestamps.push_back(t(rng));
    for (int i = 0; i < 300; ++i) b.timestamps.push_back(t(rng));
    // Exact half-bin delays exercise the rounding rule.
    a.timestamps.push_back(500000);
    b.timestamps.push_back(500008);
    b.timestamps.push_back(499992);
    std::sort(a.timestamps.begin(), a.timestamps.end());
    std::sort(b.timestamps.begin(), b.timestamps.end());
    const double bin = trial % 2 ? 16.0 : 25.0;
    const double window = 3000.0 + 7 * trial;
    const auto h = correlate(a, b, bin, window);
    CHECK(h.half_bins == static_cast<std::int64_t>(std::floor(window / bin)));
    CHECK(h.counts == oracle::brute_histogram(a.timestamps, b.timestamps, bin, h.half_bins));
  }
  CHECK_THROWS(make_histogram(0.0, 100.0));
  CHECK_THROWS(make_histogram(16.0, 8.0));
}

TEST_CASE("streaming correlation equals whole-stream correlation") {
  const EmitterRates r{0.3, 2.0, 0.1};
  auto s = mix_background(emit_stream(r, 2'000'000'000, 4), r, 5);
  auto [a, b] = detect_hbt(s, cfg::paper_device().detector, 6);
  const auto whole = correlate(a, b, 16.0, 5000.0);

  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Timestamp> cuts{0};
    std::uniform_int_distribution<Timestamp> cut(0, s.end_ps);
    for (int i = 0; i < 30; ++i) cuts.push_back(cut(rng));
    cuts.push_back(s.end_ps + 1);
    std::sort(cuts.begin(), cuts.end());
    StreamingCorrelator sc(16.0, 5000.0);
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      auto slice = [&](const std::vector<Timestamp>& v) {
        auto lo = std::lower_bound(v.begin(), v.end(), cuts[i]);
        auto hi = std::lower_bound(v.begin(), v.end(), cuts[i + 1]);
        return std::span<const Timestamp>(&*v.begin() + (lo - v.begin()), static_cast<std::size_t>(hi - lo));
      };
      sc.feed(slice(a.timestamps), slice(b.timestamps), cuts[i + 1]);
    }
    CHECK(sc.finish() == whole);
  }
}

TEST_CASE("histogram merge") {
  auto h1 = make_histogram(16.0, 100.0);
  auto h2 = make_histogram(16.0, 100.0);
  h1.counts[0] = 2;
  h2.counts[0] = 3;
  h1 += h2;
  CHECK(h1.counts[0] == 5);
  CHECK_THROWS(h1 += make_histogram(8.0, 100.0));
}

TEST_CASE("detection chain") {
  const EmitterRates r{0.5, 2.0, 0.0};
  const auto s = emit_stream(r, 10'000'000'000, 31);
  auto det = ideal_detector();
  {
    auto [a, b] = detect_hbt(s, det, 1);
    CHECK(a.size() + b.size() == s.size());
    CHECK(static_cast<double>(a.size()) / static_cast<double>(s.size()) == doctest::Approx(0.5).epsilon(0.01));
  }
  det.efficiency = 0.45;
  {
    auto [a, b] = detect_hbt(s, det, 1);
    CHECK(static_cast<double>(a.size() + b.size()) / static_cast<double>(s.size()) ==
          doctest::Approx(0.45).epsilon(0.01));
  }
  det.dead_time_ns = 30.0;
  {
    auto [a, b] = detect_hbt(s, det, 1);
    for (const auto* ch : {&a, &b}) {
      CHECK(strictly_inside(*ch));
      for (std::size_t i = 1; i < ch->size(); ++i) CHECK(ch->timestamps[i] - ch->timestamps[i - 1] >= 30000);
    }
  }
  det = ideal_detector();
  det.jitter_ps = 50.0;
  CHECK(jitter_sigma_ps(det) == doctest::Approx(50.0 / 2.3548200450309493));
  det.jitter_is_fwhm = false;
  CHECK(jitter_sigma_ps(det) == 50.0);

  det = ideal_detector();
  det.dark_rate_Hz = 1e7;
  const EmitterRates dark_only{0.0, 2.0, 0.0};
  const auto empty = emit_stream(dark_only, 10'000'000'000, 3);
  CHECK(empty.size() == 0);
  auto [da, db] = detect_hbt(empty, det, 2);
  CHECK(static_cast<double>(da.size()) == doctest::Approx(1e5).epsilon(0.02));
  CHECK(da.timestamps != db.timestamps);
}

TEST_CASE("same seed gives identical streams, different seeds differ") {
  const EmitterRates r{0.3, 2.0, 0.1};
  const auto s1 = mix_background(emit_stream(r, 1'000'000'000, 12), r, 13);
  const auto s2 = mix_background(emit_stream(r, 1'000'000'000, 12), r, 13);
  const auto s3 = mix_background(emit_stream(r, 1'000'000'000, 14), r, 13);
  CHECK(s1.timestamps == s2.timestamps);
  CHECK(s1.timestamps != s3.timestamps);
  auto d1 = detect_hbt(s1, cfg::paper_device().detector, 1);
  auto d2 = detect_hbt(s2, cfg::paper_device().detector, 1);
  CHECK(d1.first.timestamps == d2.first.timestamps);
  CHECK(d1.second.timestamps == d2.second.timestamps);

  std::set<std::uint64_t> seeds;
  for (std::uint64_t label = 0; label < 8; ++label)
    for (std::uint64_t i = 0; i < 100; ++i) seeds.insert(derive_seed(1, label, i));
  CHECK(seeds.size() == 800);
}

TEST_CASE("segmented HBT pipeline") {
  HbtSetup setup;
  setup.rates = {0.05, 1.0 / 0.42, 0.06726};
  setup.detector = cfg::paper_device().detector;
  setup.duration_ps = 250'000'000'000;  // 0.25 s in 0.05 s segments
  setup.segment_ps = 50'000'000'000;
  setup.seed = 2024;
  setup.threads = 1;

  TimeTagStream all_a, all_b;
  Timestamp prev_end = 0;
  const auto res = run_hbt(setup, [&](const TimeTagStream& a, const TimeTagStream& b) {
    CHECK(a.begin_ps == prev_end);
    prev_end = a.end_ps;
    CHECK(a.channel == 0);
    CHECK(b.channel == 1);
    all_a.timestamps.insert(all_a.timestamps.end(), a.timestamps.begin(), a.timestamps.end());
    all_b.timestamps.insert(all_b.timestamps.end(), b.timestamps.begin(), b.timestamps.end());
  });
  CHECK(prev_end == setup.duration_ps);
  all_a.end_ps = all_b.end_ps = setup.duration_ps;
  CHECK(strictly_inside(all_a));
  CHECK(strictly_inside(all_b));
  for (std::size_t i = 1; i < all_a.size(); ++i) {
    // Dead time holds across segment boundaries; dark counts are the only exception.
    if (all_a.timestamps[i] - all_a.timestamps[i - 1] < 30000) {
      CHECK(setup.detector.dark_rate_Hz > 0);
    }
  }
  CHECK(res.counts_a == all_a.size());
  CHECK(res.counts_b == all_b.size());
  CHECK(res.histogram == correlate(all_a, all_b, 16.0, 5000.0));

  auto multi = setup;
  multi.threads = 3;
  const auto res3 = run_hbt(multi);
  CHECK(res3.histogram == res.histogram);
  CHECK(res3.counts_a == res.counts_a);

  auto other = setup;
  other.seed = 2025;
  CHECK_FALSE(run_hbt(other).histogram == res.histogram);
}

TEST_CASE("normalized g2 and analytic curve") {
  auto h = make_histogram(10.0, 30.0);
  h.counts = {100, 100, 0, 100, 100, 100, 100};
  // 1e4 Hz each over 1e5 s in 10 ps bins: expected 100 per bin.
  const auto c = normalize_g2(h, 1e4, 1e4, 100'000 * kPsPerSecond);
  CHECK(c.g2[0] == doctest::Approx(1.0));
  CHECK(c.g2[2] == 0.0);
  CHECK(c.sigma[2] == doctest::Approx(0.01));
  CHECK(c.tau_ps[0] == -30.0);
  CHECK(analytic_g2(0.0, 0.87, 2.38) == doctest::Approx(0.13));
  CHECK(analytic_g2(420.0, 1.0, 1.0 / 0.42) == doctest::Approx(1.0 - std::exp(-1.0)));
  CHECK_THROWS(normalize_g2(h, 0.0, 1.0, 1));
}

TEST_CASE("filter passband") {
  Filter f{1236.0, 0.5};
  CHECK(filter_transmission(f, 1236.0) == 1.0);
  CHECK(filter_transmission(f, 1236.25) == doctest::Approx(0.5));
}

TEST_CASE("decay trace") {
  const auto& p = cfg::paper_device();
  const auto t1 = decay_trace(p, 1.5, 20000, 90.0, 5);
  const auto t2 = decay_trace(p, 1.5, 20000, 90.0, 5);
  CHECK(t1.counts == t2.counts);
  CHECK(t1.pulses == 20000);
  const auto total = std::accumulate(t1.counts.begin(), t1.counts.end(), std::uint64_t{0});
  CHECK(total > 15000u);
  CHECK(total <= 20000u);
  // Nothing arrives well before the excitation pulse.
  std::uint64_t early = 0;
  for (std::size_t i = 0; i < t1.counts.size(); ++i)
    if (t1.center(i) < -500) early += t1.counts[i];
  CHECK(early == 0);
  CHECK_THROWS(decay_trace(p, 1.5, 0, 90.0, 5));
}
