#include "spdiode/actuator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "spdiode/errors.hpp"

namespace spdiode {

namespace {
std::string pull_in_message(double v_cav, double v_pi) {
  std::ostringstream os;
  os << "pull-in: V_CAV = " << v_cav << " V exceeds the stable range (|V_bi - V_CAV| < " << v_pi
     << " V)";
  return os.str();
}
}  // namespace

PullInError::PullInError(double v_cav, double v_pull_in_eff)
    : NumericError(pull_in_message(v_cav, v_pull_in_eff)), v_cav_(v_cav), v_pull_in_(v_pull_in_eff) {}

namespace actuator {

PullIn pull_in(const DeviceParams& p) {
  const double d0 = p.mech.rest_gap_nm;
  const double k = p.mech.stiffness_V2_per_nm3;
  // At d = 2 d0/3 the force balance and its derivative vanish together.
  return {std::sqrt(8.0 * k * d0 * d0 * d0 / 27.0), 2.0 * d0 / 3.0};
}

double force_residual(const DeviceParams& p, double gap_nm, double v_eff) {
  return p.mech.stiffness_V2_per_nm3 * (p.mech.rest_gap_nm - gap_nm) -
         v_eff * v_eff / (2.0 * gap_nm * gap_nm);
}

Equilibrium equilibrium_gap(const DeviceParams& p, double v_cav) {
  const double d0 = p.mech.rest_gap_nm;
  const double v_eff = p.mech.builtin_voltage_V - v_cav;
  if (v_eff == 0.0) return {d0, v_eff, true};

  const PullIn pi = pull_in(p);
  if (std::abs(v_eff) >= pi.v_eff) throw PullInError(v_cav, pi.v_eff);

  // residual > 0 at lo, <= 0 at hi. Halve to machine precision (well within
  // the 200-step cap); the 1e-6 nm tolerance is the loosest accepted exit.
  double lo = pi.gap_nm;
  double hi = d0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (force_residual(p, mid, v_eff) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double gap =
      std::abs(force_residual(p, lo, v_eff)) < std::abs(force_residual(p, hi, v_eff)) ? lo : hi;
  if (hi - lo > 1e-6) throw NumericError("equilibrium_gap: bisection did not converge");
  return {gap, v_eff, true};
}

double crosstalk_current(const DeviceParams& p, double v_cav, double i_nominal_mA) {
  if (i_nominal_mA < 0) throw NumericError("crosstalk_current: negative nominal current");
  const auto& c = p.crosstalk;
  if (i_nominal_mA == 0.0 || c.current_at_vref_mA == 0.0) return 0.0;
  const double frac = (v_cav - c.vlow_V) / (c.vref_V - c.vlow_V);
  const double measured = c.current_at_vlow_mA + (c.current_at_vref_mA - c.current_at_vlow_mA) * frac;
  return std::max(0.0, measured * (i_nominal_mA / c.current_at_vref_mA));
}

double injection_current(const DeviceParams& p, double v_qd) {
  const double vth = p.emitter.v_th_V;
  if (v_qd < vth) return 0.0;
  const double x = (v_qd - vth) / (p.diode.drive_ref_V - vth);
  return p.crosstalk.current_at_vref_mA * std::pow(x, p.diode.drive_exponent);
}

DriveState drive_state(const DeviceParams& p, double v_cav, double v_qd) {
  return {v_cav, v_qd, crosstalk_current(p, v_cav, injection_current(p, v_qd))};
}

}  // namespace actuator
}  // namespace spdiode
