#include "spdiode/optics.hpp"

#include <cmath>

#include "spdiode/actuator.hpp"
#include "spdiode/errors.hpp"

namespace spdiode::optics {

double splitting(const DeviceParams& p, double gap_nm) {
  if (!(gap_nm > 0)) throw NumericError("splitting: gap must be > 0");
  return p.optics.splitting_at_rest_nm *
         std::exp(-(gap_nm - p.mech.rest_gap_nm) / p.optics.coupling_length_nm);
}

double thermal_shift(const DeviceParams& p, double current_mA) {
  if (current_mA < 0) throw NumericError("thermal_shift: negative current");
  return p.optics.thermal_coeff_nm_per_mA * (current_mA - p.optics.reference_current_mA);
}

ModePair mode_pair(const DeviceParams& p, double gap_nm, double current_mA) {
  ModePair m;
  m.splitting = splitting(p, gap_nm);
  m.thermal_shift = thermal_shift(p, current_mA);
  const double center = p.optics.lambda0_nm + m.thermal_shift;
  const double half = 0.5 * m.splitting;
  m.lambda_S = center + half;
  m.lambda_AS = center - half;
  m.fwhm_S = m.lambda_S / p.optics.quality_factor;
  m.fwhm_AS = m.lambda_AS / p.optics.quality_factor;
  return m;
}

ModePair modes_at(const DeviceParams& p, const DriveState& drive) {
  const auto eq = actuator::equilibrium_gap(p, drive.v_cav);
  return mode_pair(p, eq.gap_nm, drive.i_qd_mA);
}

TuningDecomposition decompose_tuning(std::span<const TuningRow> sweep) {
  if (sweep.size() < 2) throw NumericError("decompose_tuning: need at least 2 rows");
  const auto& a = sweep.front();
  const auto& b = sweep.back();
  const double ds = std::abs(b.lambda_S - a.lambda_S);
  const double das = std::abs(b.lambda_AS - a.lambda_AS);
  return {0.5 * (ds + das), 0.5 * (das - ds)};
}

}  // namespace spdiode::optics
