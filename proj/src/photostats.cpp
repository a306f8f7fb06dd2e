#include "spdiode/photostats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <iterator>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

#include "spdiode/emitter.hpp"
#include "spdiode/errors.hpp"

namespace spdiode::photostats {

namespace {

constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)
constexpr Timestamp kNoTag = std::numeric_limits<Timestamp>::min() / 2;

using Rng = std::mt19937_64;

// Round half away from zero.
Timestamp to_tick(double t_ps) {
  return static_cast<Timestamp>(t_ps < 0 ? t_ps - 0.5 : t_ps + 0.5);
}

// Open-interval uniforms: 53-bit, or two 32-bit halves of one draw.
inline double open53(std::uint64_t r) { return (static_cast<double>(r >> 11) + 0.5) * 0x1.0p-53; }
inline double open32(std::uint64_t r) { return (static_cast<double>(r & 0xFFFFFFFFu) + 0.5) * 0x1.0p-32; }

inline double exp_draw(Rng& rng, double mean) { return -mean * std::log(open53(rng())); }

// Tags are only locally out of order after jitter.
void insertion_sort(std::vector<Timestamp>& t) {
  for (std::size_t i = 1; i < t.size(); ++i) {
    const Timestamp x = t[i];
    std::size_t j = i;
    for (; j > 0 && t[j - 1] > x; --j) t[j] = t[j - 1];
    t[j] = x;
  }
}

// Sorted input; afterwards strictly increasing, every tag > floor and <= end.
// Coincident ticks are pushed one ps apart.
void make_strict(std::vector<Timestamp>& t, Timestamp floor_exclusive, Timestamp end) {
  Timestamp prev = floor_exclusive;
  for (auto& x : t) {
    if (x <= prev) x = prev + 1;
    prev = x;
  }
  if (!t.empty() && t.back() > end) {
    t.back() = end;
    for (std::size_t i = t.size() - 1; i-- > 0;)
      if (t[i] >= t[i + 1]) t[i] = t[i + 1] - 1;
  }
}

void clamp_sort(std::vector<Timestamp>& t, Timestamp begin, Timestamp end) {
  for (auto& x : t) x = std::clamp(x, begin, end);
  insertion_sort(t);
}

std::vector<Timestamp> merge_sorted(const std::vector<Timestamp>& a, const std::vector<Timestamp>& b) {
  std::vector<Timestamp> out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Splitter, loss and jitter for one batch of photons.
std::array<std::vector<Timestamp>, 2> route(std::span<const Timestamp> photons, const Detector& det,
                                            Timestamp begin, Timestamp end, std::uint64_t seed) {
  Rng rng(seed);
  const double sigma = jitter_sigma_ps(det);
  std::normal_distribution<double> jitter(0.0, sigma > 0 ? sigma : 1.0);

  std::array<std::vector<Timestamp>, 2> out;
  for (auto& ch : out) ch.reserve(photons.size() / 2 + 16);
  for (Timestamp t : photons) {
    const std::uint64_t r = rng();
    const int ch = static_cast<int>(r & 1);
    if (static_cast<double>(r >> 11) * 0x1.0p-53 >= det.efficiency) continue;
    Timestamp tj = t;
    if (sigma > 0) tj = to_tick(static_cast<double>(t) + jitter(rng));
    out[ch].push_back(tj);
  }
  for (auto& ch : out) clamp_sort(ch, begin, end);
  return out;
}

// Non-paralyzable dead time; `last` carries the previous accepted tag.
void apply_dead_time(std::vector<Timestamp>& t, Timestamp dead_ps, Timestamp& last) {
  if (dead_ps <= 0) {
    if (!t.empty()) last = t.back();
    return;
  }
  std::size_t w = 0;
  for (Timestamp x : t) {
    if (last == kNoTag || x - last >= dead_ps) {
      t[w++] = x;
      last = x;
    }
  }
  t.resize(w);
}

// Delay -> bin index relative to the zero bin, rounding half away from zero.
inline std::int64_t bin_index(Timestamp delay, double width) {
  const double mag = std::floor(std::abs(static_cast<double>(delay)) / width + 0.5);
  const auto idx = static_cast<std::int64_t>(mag);
  return delay < 0 ? -idx : idx;
}

struct SegmentTags {
  std::array<std::vector<Timestamp>, 2> ch;
  std::uint64_t emitted = 0;
  Timestamp begin = 0;
  Timestamp end = 0;
};

enum SeedLabel : std::uint64_t {
  kSeedEmit = 1,
  kSeedBackground = 2,
  kSeedRoute = 3,
  kSeedDark0 = 4,
  kSeedDark1 = 5,
};

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(mix(seed + 0x9E3779B97F4A7C15ULL * (label + 1)) + 0x9E3779B97F4A7C15ULL * (index + 1));
}

double EmitterRates::emission_rate() const {
  if (pump_rate <= 0 || decay_rate <= 0) return 0.0;
  return pump_rate * decay_rate / (pump_rate + decay_rate);
}

double EmitterRates::background_rate() const {
  return background_fraction / (1.0 - background_fraction) * emission_rate();
}

Histogram& Histogram::operator+=(const Histogram& other) {
  if (other.bin_width_ps != bin_width_ps || other.half_bins != half_bins)
    throw NumericError("histogram merge: layouts differ");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

double jitter_sigma_ps(const Detector& det) {
  return det.jitter_is_fwhm ? det.jitter_ps / kFwhmPerSigma : det.jitter_ps;
}

TimeTagStream emit_stream(const EmitterRates& rates, Timestamp duration_ps, std::uint64_t seed,
                          Timestamp begin_ps) {
  if (duration_ps <= 0) throw NumericError("emit_stream: duration must be > 0");
  if (rates.decay_rate < 0 || rates.pump_rate < 0) throw NumericError("emit_stream: negative rate");
  TimeTagStream s;
  s.begin_ps = begin_ps;
  s.end_ps = begin_ps + duration_ps;
  if (rates.pump_rate == 0.0 || rates.decay_rate == 0.0) return s;

  Rng rng(seed);
  const double excite_ps = 1000.0 / rates.pump_rate;
  const double decay_ps = 1000.0 / rates.decay_rate;
  const double end = static_cast<double>(s.end_ps);
  s.timestamps.reserve(static_cast<std::size_t>(rates.emission_rate() * 1e-3 * duration_ps * 1.05) + 16);
  double t = static_cast<double>(begin_ps);
  for (;;) {
    const std::uint64_t r = rng();
    t -= excite_ps * std::log(open32(r >> 32)) + decay_ps * std::log(open32(r));
    if (t > end) break;
    s.timestamps.push_back(to_tick(t));
  }
  make_strict(s.timestamps, begin_ps - 1, s.end_ps);
  return s;
}

TimeTagStream poisson_stream(double rate_hz, Timestamp begin_ps, Timestamp end_ps,
                             std::uint64_t seed, std::uint8_t channel) {
  TimeTagStream s;
  s.begin_ps = begin_ps;
  s.end_ps = end_ps;
  s.channel = channel;
  if (rate_hz <= 0 || end_ps <= begin_ps) return s;
  Rng rng(seed);
  const double gap_ps = static_cast<double>(kPsPerSecond) / rate_hz;
  const double end = static_cast<double>(end_ps);
  double t = static_cast<double>(begin_ps);
  for (;;) {
    t += exp_draw(rng, gap_ps);
    if (t > end) break;
    s.timestamps.push_back(to_tick(t));
  }
  make_strict(s.timestamps, begin_ps - 1, end_ps);
  return s;
}

TimeTagStream mix_background(const TimeTagStream& stream, const EmitterRates& rates,
                             std::uint64_t seed) {
  if (!(rates.background_fraction >= 0 && rates.background_fraction < 1))
    throw NumericError("mix_background: background fraction must be in [0, 1)");
  if (rates.background_fraction == 0.0) return stream;
  const double rate_hz = rates.background_rate() * 1e9;
  auto bg = poisson_stream(rate_hz, stream.begin_ps, stream.end_ps, seed, stream.channel);
  TimeTagStream out;
  out.begin_ps = stream.begin_ps;
  out.end_ps = stream.end_ps;
  out.channel = stream.channel;
  out.timestamps = merge_sorted(stream.timestamps, bg.timestamps);
  make_strict(out.timestamps, out.begin_ps - 1, out.end_ps);
  return out;
}

std::pair<TimeTagStream, TimeTagStream> detect_hbt(const TimeTagStream& stream,
                                                   const Detector& det, std::uint64_t seed) {
  if (!(det.efficiency > 0 && det.efficiency <= 1))
    throw NumericError("detect_hbt: efficiency must be in (0, 1]");
  auto routed = route(stream.timestamps, det, stream.begin_ps, stream.end_ps,
                      derive_seed(seed, kSeedRoute, 0));
  const auto dead_ps = to_tick(det.dead_time_ns * 1000.0);
  std::array<TimeTagStream, 2> out;
  for (int c = 0; c < 2; ++c) {
    Timestamp last = kNoTag;
    apply_dead_time(routed[c], dead_ps, last);
    auto dark = poisson_stream(det.dark_rate_Hz, stream.begin_ps, stream.end_ps,
                               derive_seed(seed, c == 0 ? kSeedDark0 : kSeedDark1, 0));
    out[c].timestamps = merge_sorted(routed[c], dark.timestamps);
    make_strict(out[c].timestamps, stream.begin_ps - 1, stream.end_ps);
    out[c].begin_ps = stream.begin_ps;
    out[c].end_ps = stream.end_ps;
    out[c].channel = static_cast<std::uint8_t>(c);
  }
  return {std::move(out[0]), std::move(out[1])};
}

Histogram make_histogram(double bin_width_ps, double window_ps) {
  if (!(bin_width_ps > 0)) throw NumericError("correlate: bin width must be > 0");
  if (!(window_ps >= bin_width_ps)) throw NumericError("correlate: window must be >= bin width");
  Histogram h;
  h.bin_width_ps = bin_width_ps;
  h.half_bins = static_cast<std::int64_t>(std::floor(window_ps / bin_width_ps));
  h.counts.assign(static_cast<std::size_t>(2 * h.half_bins + 1), 0);
  return h;
}

Histogram correlate(const TimeTagStream& a, const TimeTagStream& b, double bin_width_ps,
                    double window_ps) {
  Histogram h = make_histogram(bin_width_ps, window_ps);
  const double reach = (static_cast<double>(h.half_bins) + 0.5) * bin_width_ps;
  const auto& tb = b.timestamps;
  std::size_t lo = 0;
  for (Timestamp ta : a.timestamps) {
    while (lo < tb.size() && static_cast<double>(tb[lo] - ta) < -reach) ++lo;
    for (std::size_t j = lo; j < tb.size(); ++j) {
      const Timestamp d = tb[j] - ta;
      if (static_cast<double>(d) > reach) break;
      const auto idx = bin_index(d, bin_width_ps);
      if (idx < -h.half_bins || idx > h.half_bins) continue;
      ++h.counts[static_cast<std::size_t>(idx + h.half_bins)];
    }
  }
  return h;
}

StreamingCorrelator::StreamingCorrelator(double bin_width_ps, double window_ps)
    : hist_(make_histogram(bin_width_ps, window_ps)),
      reach_ps_((static_cast<double>(hist_.half_bins) + 0.5) * bin_width_ps) {}

void StreamingCorrelator::feed(std::span<const Timestamp> a, std::span<const Timestamp> b,
                               Timestamp horizon) {
  pending_a_.insert(pending_a_.end(), a.begin(), a.end());
  b_buf_.insert(b_buf_.end(), b.begin(), b.end());
  // An a-tag is final once every b within reach has arrived.
  const double limit = static_cast<double>(horizon) - reach_ps_;
  process_until(limit >= static_cast<double>(std::numeric_limits<Timestamp>::max())
                    ? std::numeric_limits<Timestamp>::max()
                    : static_cast<Timestamp>(std::ceil(limit)));
}

const Histogram& StreamingCorrelator::finish() {
  process_until(std::numeric_limits<Timestamp>::max());
  return hist_;
}

// Process pending a-tags strictly below `limit`.
void StreamingCorrelator::process_until(Timestamp limit) {
  const double w = hist_.bin_width_ps;
  const auto k = hist_.half_bins;
  while (a_head_ < pending_a_.size() && pending_a_[a_head_] < limit) {
    const Timestamp ta = pending_a_[a_head_++];
    while (b_head_ < b_buf_.size() && static_cast<double>(b_buf_[b_head_] - ta) < -reach_ps_)
      ++b_head_;
    for (std::size_t j = b_head_; j < b_buf_.size(); ++j) {
      const Timestamp d = b_buf_[j] - ta;
      if (static_cast<double>(d) > reach_ps_) break;
      const auto idx = bin_index(d, w);
      if (idx < -k || idx > k) continue;
      ++hist_.counts[static_cast<std::size_t>(idx + k)];
    }
  }
  if (a_head_ > 4096 && a_head_ * 2 > pending_a_.size()) {
    pending_a_.erase(pending_a_.begin(), pending_a_.begin() + static_cast<std::ptrdiff_t>(a_head_));
    a_head_ = 0;
  }
  if (b_head_ > 4096 && b_head_ * 2 > b_buf_.size()) {
    b_buf_.erase(b_buf_.begin(), b_buf_.begin() + static_cast<std::ptrdiff_t>(b_head_));
    b_head_ = 0;
  }
}

G2Curve normalize_g2(const Histogram& hist, double rate_a_hz, double rate_b_hz,
                     Timestamp duration_ps) {
  if (!(rate_a_hz > 0) || !(rate_b_hz > 0) || duration_ps <= 0)
    throw NumericError("normalize_g2: rates and duration must be > 0");
  const double bin_s = hist.bin_width_ps * 1e-12;
  const double dur_s = static_cast<double>(duration_ps) * 1e-12;
  const double expected = rate_a_hz * rate_b_hz * bin_s * dur_s;
  G2Curve c;
  const auto n = hist.counts.size();
  c.tau_ps.resize(n);
  c.g2.resize(n);
  c.sigma.resize(n);
  c.counts = hist.counts;
  for (std::size_t i = 0; i < n; ++i) {
    const double k = static_cast<double>(hist.counts[i]);
    c.tau_ps[i] = hist.center(i);
    c.g2[i] = k / expected;
    c.sigma[i] = std::sqrt(std::max(k, 1.0)) / expected;
  }
  return c;
}

double analytic_g2(double tau_ps, double purity_sq, double lambda_per_ns) {
  if (!(purity_sq >= 0 && purity_sq <= 1)) throw NumericError("analytic_g2: purity_sq must be in [0, 1]");
  return 1.0 - purity_sq * std::exp(-lambda_per_ns * std::abs(tau_ps) * 1e-3);
}

double filter_transmission(const Filter& f, double lambda_nm) {
  const double x = (lambda_nm - f.center_nm) / f.fwhm_nm;
  return std::exp(-4.0 * std::numbers::ln2 * x * x);
}

DecayTrace decay_trace(const DeviceParams& p, double v_qd, std::int64_t n_pulses,
                       double irf_fwhm_ps, std::uint64_t seed, const TraceOptions& opts) {
  if (n_pulses <= 0) throw NumericError("decay_trace: n_pulses must be > 0");
  if (irf_fwhm_ps < 0) throw NumericError("decay_trace: IRF width must be >= 0");
  if (!(opts.bin_width_ps > 0) || !(opts.t_max_ps > opts.t_min_ps))
    throw NumericError("decay_trace: bad histogram range");

  const auto& e = p.emitter;
  const double rad = 1.0 / e.tau_bulk_ns;
  const double tun = emitter::tunneling_rate(p, v_qd);
  const double to_dark = e.flip_bright_to_dark_per_ns;
  const double to_bright = e.flip_dark_to_bright_per_ns;
  const double bright_out = rad + tun + to_dark;
  const double dark_out = to_bright + tun;

  DecayTrace tr;
  tr.bin_width_ps = opts.bin_width_ps;
  tr.t_min_ps = opts.t_min_ps;
  tr.pulses = n_pulses;
  const auto nbins =
      static_cast<std::size_t>(std::ceil((opts.t_max_ps - opts.t_min_ps) / opts.bin_width_ps));
  tr.counts.assign(nbins, 0);

  Rng rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::exponential_distribution<double> bright_wait(bright_out);
  std::exponential_distribution<double> dark_wait(dark_out > 0 ? dark_out : 1.0);
  const double irf_sigma = irf_fwhm_ps / kFwhmPerSigma;
  std::normal_distribution<double> irf(0.0, irf_sigma > 0 ? irf_sigma : 1.0);

  for (std::int64_t pulse = 0; pulse < n_pulses; ++pulse) {
    bool bright = u01(rng) >= e.dark_fraction;
    double t_ns = 0.0;
    bool emitted = false;
    for (int hop = 0; hop < 1000; ++hop) {
      if (bright) {
        t_ns += bright_wait(rng);
        const double r = u01(rng) * bright_out;
        if (r < rad) {
          emitted = true;
          break;
        }
        if (r < rad + tun) break;
        bright = false;
      } else {
        if (dark_out <= 0) break;
        t_ns += dark_wait(rng);
        if (u01(rng) * dark_out < to_bright)
          bright = true;
        else
          break;
      }
    }
    if (!emitted) continue;
    double t_ps = t_ns * 1000.0;
    if (irf_sigma > 0) t_ps += irf(rng);
    const double pos = (t_ps - opts.t_min_ps) / opts.bin_width_ps;
    if (pos < 0 || pos >= static_cast<double>(nbins)) continue;
    ++tr.counts[static_cast<std::size_t>(pos)];
  }
  return tr;
}

HbtResult run_hbt(const HbtSetup& setup, const TagSink& sink) {
  if (setup.duration_ps <= 0) throw NumericError("run_hbt: duration must be > 0");
  if (setup.segment_ps <= 0) throw NumericError("run_hbt: segment length must be > 0");
  const Timestamp total = setup.duration_ps;
  const auto n_segments = static_cast<std::uint64_t>((total + setup.segment_ps - 1) / setup.segment_ps);
  unsigned threads = setup.threads ? setup.threads : std::max(1u, std::thread::hardware_concurrency());

  auto generate = [&](std::uint64_t k) {
    SegmentTags seg;
    seg.begin = static_cast<Timestamp>(k) * setup.segment_ps;
    seg.end = std::min(total, seg.begin + setup.segment_ps);
    auto photons = emit_stream(setup.rates, seg.end - seg.begin,
                               derive_seed(setup.seed, kSeedEmit, k), seg.begin);
    photons = mix_background(photons, setup.rates, derive_seed(setup.seed, kSeedBackground, k));
    seg.emitted = photons.size();
    seg.ch = route(photons.timestamps, setup.detector, seg.begin, seg.end,
                   derive_seed(setup.seed, kSeedRoute, k));
    return seg;
  };

  HbtResult res;
  res.duration_ps = total;
  StreamingCorrelator corr(setup.bin_width_ps, setup.window_ps);
  const auto dead_ps = to_tick(setup.detector.dead_time_ns * 1000.0);
  Timestamp last_kept[2] = {kNoTag, kNoTag};
  Timestamp last_tag[2] = {-1, -1};

  for (std::uint64_t first = 0; first < n_segments; first += threads) {
    const std::uint64_t last = std::min<std::uint64_t>(n_segments, first + threads);
    std::vector<SegmentTags> batch;
    if (threads == 1) {
      batch.push_back(generate(first));
    } else {
      std::vector<std::future<SegmentTags>> jobs;
      for (std::uint64_t k = first; k < last; ++k)
        jobs.push_back(std::async(std::launch::async, generate, k));
      for (auto& j : jobs) batch.push_back(j.get());
    }

    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto& seg = batch[i];
      const std::uint64_t k = first + i;
      res.emitted += seg.emitted;
      std::array<TimeTagStream, 2> out;
      for (int c = 0; c < 2; ++c) {
        apply_dead_time(seg.ch[c], dead_ps, last_kept[c]);
        auto dark = poisson_stream(setup.detector.dark_rate_Hz, seg.begin, seg.end,
                                   derive_seed(setup.seed, c == 0 ? kSeedDark0 : kSeedDark1, k));
        out[c].timestamps = merge_sorted(seg.ch[c], dark.timestamps);
        make_strict(out[c].timestamps, std::max(last_tag[c], seg.begin - 1),
                    std::max(seg.end, last_tag[c] + static_cast<Timestamp>(out[c].timestamps.size())));
        if (!out[c].timestamps.empty()) last_tag[c] = out[c].timestamps.back();
        out[c].begin_ps = seg.begin;
        out[c].end_ps = seg.end;
        out[c].channel = static_cast<std::uint8_t>(c);
      }
      res.counts_a += out[0].size();
      res.counts_b += out[1].size();
      corr.feed(out[0].timestamps, out[1].timestamps, seg.end);
      if (sink) sink(out[0], out[1]);
    }
  }
  res.histogram = corr.finish();
  if (res.counts_a > 0 && res.counts_b > 0) {
    const double dur_s = static_cast<double>(total) * 1e-12;
    res.curve = normalize_g2(res.histogram, static_cast<double>(res.counts_a) / dur_s,
                             static_cast<double>(res.counts_b) / dur_s, total);
  }
  return res;
}

}  // namespace spdiode::photostats
