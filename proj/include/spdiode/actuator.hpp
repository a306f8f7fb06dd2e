#pragma once
// Lumped parallel-plate electromechanics of the double membrane and the
// crosstalk between the actuation and injection diodes.
//
// Force balance on the top membrane, with eps*A folded into the stiffness:
//   k (d0 - d) = V_eff^2 / (2 d^2),   V_eff = V_bi - V_CAV.
// The stable branch is d in (2 d0/3, d0]; beyond V_pi there is no equilibrium.

#include "spdiode/params.hpp"

namespace spdiode::actuator {

struct Equilibrium {
  double gap_nm = 0.0;
  double v_eff = 0.0;
  bool stable = false;
};

struct PullIn {
  double v_eff;   // |V_eff| at which stable and unstable equilibria merge
  double gap_nm;  // 2 d0 / 3
};

PullIn pull_in(const DeviceParams& p);

/// Stable equilibrium gap at actuation voltage `v_cav`. Throws PullInError
/// when |V_bi - V_CAV| >= V_pi.
Equilibrium equilibrium_gap(const DeviceParams& p, double v_cav);

/// Net force k (d0 - d) - V^2/(2 d^2); zero at equilibrium.
double force_residual(const DeviceParams& p, double gap_nm, double v_eff);

/// Injection current after crosstalk: linear interpolation of the measured
/// current between the two reference actuation voltages, scaled by
/// i_nominal / I(V_ref), clamped at zero.
double crosstalk_current(const DeviceParams& p, double v_cav, double i_nominal_mA);

/// Nominal QD-diode current for bias `v_qd`, before crosstalk. Zero below
/// threshold, power law above it.
double injection_current(const DeviceParams& p, double v_qd);

/// Drive state with the derived injection current.
DriveState drive_state(const DeviceParams& p, double v_cav, double v_qd);

}  // namespace spdiode::actuator
