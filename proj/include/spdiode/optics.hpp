#pragma once
// Symmetric / antisymmetric supermodes of the coupled slabs.

#include <span>

#include "spdiode/params.hpp"

namespace spdiode::optics {

struct ModePair {
  double lambda_S = 0.0;
  double lambda_AS = 0.0;
  double fwhm_S = 0.0;
  double fwhm_AS = 0.0;
  double splitting = 0.0;
  double thermal_shift = 0.0;

  double wavelength(Mode m) const { return m == Mode::S ? lambda_S : lambda_AS; }
  double fwhm(Mode m) const { return m == Mode::S ? fwhm_S : fwhm_AS; }
};

/// s0 exp(-(gap - d0) / L_c)
double splitting(const DeviceParams& p, double gap_nm);

/// kappa_th (I - I_ref); same sign for both modes.
double thermal_shift(const DeviceParams& p, double current_mA);

ModePair mode_pair(const DeviceParams& p, double gap_nm, double current_mA);

/// Full forward chain: actuation -> gap -> supermodes at the drive current.
/// Propagates PullInError.
ModePair modes_at(const DeviceParams& p, const DriveState& drive);

struct TuningRow {
  double v_cav;
  double lambda_S;
  double lambda_AS;
};

struct TuningDecomposition {
  double mechanical_nm;
  double thermal_nm;
};

/// Semi-sum / semi-difference of the S and AS tuning ranges between the first
/// and last rows: the mechanical part moves the modes apart symmetrically, the
/// thermal part shifts both the same way.
TuningDecomposition decompose_tuning(std::span<const TuningRow> sweep);

}  // namespace spdiode::optics
