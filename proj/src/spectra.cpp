#include "spdiode/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "spdiode/actuator.hpp"
#include "spdiode/emitter.hpp"
#include "spdiode/errors.hpp"
#include "spdiode/kernels.hpp"

namespace spdiode::spectra {

std::vector<double> Grid::points() const {
  if (!(step_nm > 0) || !(max_nm >= min_nm) || !std::isfinite(min_nm) || !std::isfinite(max_nm))
    throw NumericError("spectrum grid: need step > 0 and max >= min");
  const auto n = static_cast<std::size_t>(std::floor((max_nm - min_nm) / step_nm + 1e-9)) + 1;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = min_nm + static_cast<double>(i) * step_nm;
  return x;
}

namespace {

struct Line {
  double center;
  double fwhm;
  double amplitude;
};

std::vector<Line> lines_at(const DeviceParams& p, const DriveState& drive, Mode coupled) {
  const auto modes = optics::modes_at(p, drive);
  const auto& sp = p.spectra;
  std::vector<Line> lines;
  lines.push_back({modes.lambda_S, modes.fwhm_S, sp.mode_amplitude_S});
  lines.push_back({modes.lambda_AS, modes.fwhm_AS, sp.mode_amplitude_AS});
  for (const auto& b : p.optics.band_edge_modes) {
    const double c = modes.lambda_AS + b.offset_nm;
    lines.push_back({c, c / p.optics.quality_factor, sp.mode_amplitude_AS * b.amplitude});
  }
  const double lx = emitter::exciton_wavelength(p, drive.v_qd);
  const double lm = modes.wavelength(coupled);
  lines.push_back({lx, p.emitter.linewidth_nm,
                   sp.exciton_amplitude * emitter::el_enhancement(p, lx - lm, lm)});
  const double dv = drive.v_qd - p.emitter.v_res_mV / 1000.0;
  for (const auto& e : p.emitter.extra_lines) {
    lines.push_back({p.emitter.lambda_x_at_res_nm + e.offset_nm + e.stark_slope_nm_per_V * dv,
                     p.emitter.linewidth_nm, sp.exciton_amplitude * e.amplitude});
  }
  return lines;
}

SweepRow row_at(const DeviceParams& p, const DriveState& drive, double v, const SweepOptions& opts) {
  SweepRow r;
  r.v = v;
  optics::ModePair modes;
  try {
    modes = optics::modes_at(p, drive);
  } catch (const PullInError&) {
    if (!opts.flag_pull_in) throw;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.lambda_S = r.lambda_AS = r.lambda_X = r.detuning = nan;
    r.peak_S = r.peak_AS = r.peak_X = nan;
    r.pulled_in = true;
    return r;
  }
  const double scale = p.spectra.counts_scale;
  const double lm = modes.wavelength(opts.coupled_mode);
  r.lambda_S = modes.lambda_S;
  r.lambda_AS = modes.lambda_AS;
  r.lambda_X = emitter::exciton_wavelength(p, drive.v_qd);
  r.detuning = r.lambda_X - lm;
  r.peak_S = scale * p.spectra.mode_amplitude_S;
  r.peak_AS = scale * p.spectra.mode_amplitude_AS;
  r.peak_X = scale * p.spectra.exciton_amplitude * emitter::el_enhancement(p, r.detuning, lm);
  return r;
}

std::vector<double> sorted_copy(std::span<const double> v) {
  if (v.empty()) throw NumericError("sweep: empty voltage list");
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Spectrum synthesize(const DeviceParams& p, const DriveState& drive, const Grid& grid,
                    std::optional<std::uint64_t> seed, Mode coupled_mode) {
  Spectrum s;
  s.meta = drive;
  s.wavelengths = grid.points();
  s.intensities.assign(s.wavelengths.size(), p.spectra.background);
  for (const auto& line : lines_at(p, drive, coupled_mode)) {
    kernels::lorentzian_accumulate(s.wavelengths, line.center, 0.5 * line.fwhm, line.amplitude,
                                   s.intensities);
  }
  for (double& v : s.intensities) v *= p.spectra.counts_scale;

  if (seed) {
    std::mt19937_64 rng(*seed);
    for (double& v : s.intensities) {
      std::poisson_distribution<std::int64_t> pois(v);
      v = v > 0 ? static_cast<double>(pois(rng)) : 0.0;
    }
  }
  return s;
}

SweepTable sweep_cavity(const DeviceParams& p, std::span<const double> v_cav_list, double v_qd,
                        const SweepOptions& opts) {
  SweepTable t;
  const double i_nominal = actuator::injection_current(p, v_qd);
  for (double v : sorted_copy(v_cav_list)) {
    const DriveState drive{v, v_qd, actuator::crosstalk_current(p, v, i_nominal)};
    t.rows.push_back(row_at(p, drive, v, opts));
  }
  return t;
}

SweepTable sweep_qd(const DeviceParams& p, std::span<const double> v_qd_list, double v_cav,
                    const SweepOptions& opts) {
  SweepTable t;
  for (double v : sorted_copy(v_qd_list)) {
    t.rows.push_back(row_at(p, actuator::drive_state(p, v_cav, v), v, opts));
  }
  return t;
}

std::vector<optics::TuningRow> tuning_rows(const SweepTable& table) {
  std::vector<optics::TuningRow> out;
  for (const auto& r : table.rows)
    if (!r.pulled_in) out.push_back({r.v, r.lambda_S, r.lambda_AS});
  return out;
}

}  // namespace spdiode::spectra
