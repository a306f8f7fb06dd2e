#pragma once
// Forward synthesis of EL spectra and voltage sweeps.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spdiode/optics.hpp"
#include "spdiode/params.hpp"

namespace spdiode::spectra {

struct Grid {
  double min_nm;
  double max_nm;
  double step_nm;

  std::vector<double> points() const;
};

struct Spectrum {
  std::vector<double> wavelengths;
  std::vector<double> intensities;  // counts/s
  DriveState meta;
};

struct SweepRow {
  double v = 0.0;
  double lambda_S = 0.0;
  double lambda_AS = 0.0;
  double lambda_X = 0.0;
  double detuning = 0.0;  // lambda_X minus the coupled mode
  double peak_S = 0.0;
  double peak_AS = 0.0;
  double peak_X = 0.0;
  bool pulled_in = false;  // only set when SweepOptions::flag_pull_in
};

struct SweepTable {
  std::vector<SweepRow> rows;  // ascending in v
};

struct SweepOptions {
  Mode coupled_mode = Mode::S;
  bool flag_pull_in = false;  // mark rows past pull-in instead of throwing
};

/// Sum of Lorentzian lines plus a flat background at the given drive.
/// With a seed, each bin is replaced by a Poisson draw of its mean count.
Spectrum synthesize(const DeviceParams& p, const DriveState& drive, const Grid& grid,
                    std::optional<std::uint64_t> seed = std::nullopt,
                    Mode coupled_mode = Mode::S);

/// Mode positions at each actuation voltage with the crosstalk-reduced current.
SweepTable sweep_cavity(const DeviceParams& p, std::span<const double> v_cav_list, double v_qd,
                        const SweepOptions& opts = {});

/// Exciton line against the coupled mode as the QD bias is varied.
SweepTable sweep_qd(const DeviceParams& p, std::span<const double> v_qd_list, double v_cav,
                    const SweepOptions& opts = {});

std::vector<optics::TuningRow> tuning_rows(const SweepTable& table);

}  // namespace spdiode::spectra
