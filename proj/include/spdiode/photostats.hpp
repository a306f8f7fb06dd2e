#pragma once
// Stochastic photon engine: CW emitter streams, background mixing, the HBT
// detection chain, coincidence correlation and time-resolved decay traces.
//
// All times are integer picoseconds; rates are per ns. Every operation is a
// pure function of its inputs and seed.

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "spdiode/params.hpp"

namespace spdiode::photostats {

using Timestamp = std::int64_t;  // ps

inline constexpr Timestamp kPsPerSecond = 1'000'000'000'000;

/// Detection or emission times on one channel, strictly increasing and
/// contained in [begin_ps, end_ps].
struct TimeTagStream {
  std::vector<Timestamp> timestamps;
  Timestamp begin_ps = 0;
  Timestamp end_ps = 0;
  std::uint8_t channel = 0;

  Timestamp duration_ps() const { return end_ps - begin_ps; }
  std::size_t size() const { return timestamps.size(); }
};

struct EmitterRates {
  double pump_rate = 0.0;            // r_p, 1/ns
  double decay_rate = 0.0;           // Gamma, 1/ns
  double background_fraction = 0.0;  // rho_b, fraction of all counts

  /// Mean emission rate of the two-level renewal process, 1/ns.
  double emission_rate() const;
  /// Background rate giving rho_b of the mixture in expectation, 1/ns.
  double background_rate() const;
  /// (1 - rho_b)^2, the dip depth of the mixture.
  double purity_sq() const { return (1.0 - background_fraction) * (1.0 - background_fraction); }
};

/// Coincidence histogram. Bin i covers delays rounded half away from zero to
/// (i - half_bins) * bin_width_ps.
struct Histogram {
  double bin_width_ps = 0.0;
  std::int64_t half_bins = 0;
  std::vector<std::uint64_t> counts;

  double center(std::size_t i) const {
    return (static_cast<double>(i) - static_cast<double>(half_bins)) * bin_width_ps;
  }
  Histogram& operator+=(const Histogram& other);
  bool operator==(const Histogram&) const = default;
};

struct G2Curve {
  std::vector<double> tau_ps;
  std::vector<double> g2;
  std::vector<double> sigma;
  std::vector<std::uint64_t> counts;
};

/// Renewal process alternating Exp(r_p) excitation and Exp(Gamma) emission
/// waits; emission instants are recorded. Starts in the ground state at
/// `begin_ps`.
TimeTagStream emit_stream(const EmitterRates& rates, Timestamp duration_ps, std::uint64_t seed,
                          Timestamp begin_ps = 0);

/// Merge an independent Poisson background so that it makes up rho_b of all
/// counts in expectation.
TimeTagStream mix_background(const TimeTagStream& stream, const EmitterRates& rates,
                             std::uint64_t seed);

/// Uncorrelated Poisson stream, rate in Hz.
TimeTagStream poisson_stream(double rate_hz, Timestamp begin_ps, Timestamp end_ps,
                             std::uint64_t seed, std::uint8_t channel = 0);

/// 50/50 splitter, Bernoulli loss, Gaussian jitter, per-channel dead time and
/// dark counts, in that order. Channels are labelled 0 and 1.
std::pair<TimeTagStream, TimeTagStream> detect_hbt(const TimeTagStream& stream,
                                                   const Detector& det, std::uint64_t seed);

/// Gaussian standard deviation of the detector jitter in ps.
double jitter_sigma_ps(const Detector& det);

/// Cross-correlation histogram of delays t_b - t_a with |delay| <= window.
/// The bin count is 2 floor(window / bin) + 1.
Histogram correlate(const TimeTagStream& a, const TimeTagStream& b, double bin_width_ps,
                    double window_ps);

/// Empty histogram with the layout `correlate` would produce.
Histogram make_histogram(double bin_width_ps, double window_ps);

/// Incremental version of `correlate` for streams delivered in time-ordered
/// chunks. Feeding chunks whose tags all lie at or after the previous
/// horizon gives exactly the whole-stream histogram.
class StreamingCorrelator {
 public:
  StreamingCorrelator(double bin_width_ps, double window_ps);

  /// Append sorted chunks. `horizon` must not exceed any tag delivered later.
  void feed(std::span<const Timestamp> a, std::span<const Timestamp> b, Timestamp horizon);
  /// Flush all pending tags; call once after the last chunk.
  const Histogram& finish();
  const Histogram& histogram() const { return hist_; }

 private:
  void process_until(Timestamp limit);

  Histogram hist_;
  double reach_ps_;
  std::vector<Timestamp> pending_a_;
  std::size_t a_head_ = 0;
  std::vector<Timestamp> b_buf_;
  std::size_t b_head_ = 0;
};

/// g2[i] = counts[i] / (rate_a rate_b bin duration); sigma from sqrt(counts)
/// with a floor of one count.
G2Curve normalize_g2(const Histogram& hist, double rate_a_hz, double rate_b_hz,
                     Timestamp duration_ps);

/// 1 - purity_sq exp(-lambda |tau|), lambda in 1/ns.
double analytic_g2(double tau_ps, double purity_sq, double lambda_per_ns);

/// Gaussian passband transmission of the spectral filter at `lambda_nm`.
double filter_transmission(const Filter& f, double lambda_nm);

struct TraceOptions {
  double bin_width_ps = 16.0;
  double t_min_ps = -1000.0;
  double t_max_ps = 60000.0;
};

struct DecayTrace {
  double bin_width_ps = 0.0;
  double t_min_ps = 0.0;
  std::vector<std::uint64_t> counts;
  std::int64_t pulses = 0;

  double center(std::size_t i) const {
    return t_min_ps + (static_cast<double>(i) + 0.5) * bin_width_ps;
  }
};

/// Pulsed excitation of a dot in bulk material at bias `v_qd`. Each pulse
/// starts in the bright or dark exciton; the bright state emits at
/// 1/tau_bulk, tunnels out at gamma_tun or flips to dark; the dark state
/// flips back or tunnels out. Emission times are blurred by a Gaussian IRF.
DecayTrace decay_trace(const DeviceParams& p, double v_qd, std::int64_t n_pulses,
                       double irf_fwhm_ps, std::uint64_t seed, const TraceOptions& opts = {});

struct HbtSetup {
  EmitterRates rates;
  Detector detector;
  Timestamp duration_ps = 0;
  std::uint64_t seed = 0;
  double bin_width_ps = 16.0;
  double window_ps = 5000.0;
  Timestamp segment_ps = kPsPerSecond;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct HbtResult {
  Histogram histogram;
  G2Curve curve;
  std::uint64_t emitted = 0;  // photons reaching the splitter
  std::uint64_t counts_a = 0;
  std::uint64_t counts_b = 0;
  Timestamp duration_ps = 0;
};

/// Sink for detected tags, called per segment in time order.
using TagSink = std::function<void(const TimeTagStream& a, const TimeTagStream& b)>;

/// Full emitter -> background -> HBT -> correlator chain, generated in
/// independent segments with derived seeds and merged in order. Dead time
/// carries across segment boundaries. Memory is bounded by one batch of
/// segments.
HbtResult run_hbt(const HbtSetup& setup, const TagSink& sink = {});

/// SplitMix64 mix of a base seed with a stream label and index.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label, std::uint64_t index);

}  // namespace spdiode::photostats
