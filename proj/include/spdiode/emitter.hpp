#pragma once
// Exciton physics: Stark shift, tunneling escape, cavity-enhanced decay and
// EL enhancement, plus the QD-diode RC cutoff.

#include "spdiode/params.hpp"

namespace spdiode::emitter {

/// Decay channels of the bright exciton, rates in 1/ns.
/// gamma_total is accumulated as (gamma_phc + gamma_leaky) + gamma_tun.
struct DecayBudget {
  double gamma_phc = 0.0;
  double gamma_leaky = 0.0;
  double gamma_tun = 0.0;
  double gamma_total = 0.0;
  double tau_total = 0.0;  // ns
  double beta = 0.0;       // gamma_phc / gamma_total
};

/// lambda_X(V) = lambda_X(V_res) + slope (V - V_res), linearized QCSE.
double exciton_wavelength(const DeviceParams& p, double v_qd);

/// Gamma_0 exp(-(V - V_th)/V_s): grows as the bias drops below threshold,
/// negligible above it.
double tunneling_rate(const DeviceParams& p, double v_qd);

/// Lorentzian cavity-channel rate; maximum derived from the on-resonance
/// lifetime target.
double purcell_rate(const DeviceParams& p, double detuning_nm, double lambda_mode_nm);
double purcell_max_rate(const DeviceParams& p);

/// Bright-exciton decay budget in the cavity at bias `v_qd`.
DecayBudget decay_budget(const DeviceParams& p, double v_qd, double lambda_mode_nm);

/// Decay budget of a dot in unpatterned material: radiative at 1/tau_bulk
/// plus tunneling; gamma_phc and gamma_leaky are reported as 0 and 1/tau_bulk.
DecayBudget bulk_decay_budget(const DeviceParams& p, double v_qd);

/// 1 + (E_max - 1) L(delta)^p with L the unit-height cavity Lorentzian.
double el_enhancement(const DeviceParams& p, double detuning_nm, double lambda_mode_nm);

/// Unit-height Lorentzian 1 / (1 + (2 delta / fwhm)^2).
double cavity_lorentzian(double detuning_nm, double fwhm_nm);

/// 1 / (2 pi R C) in Hz.
double rc_cutoff(double resistance_ohm, double capacitance_F);

}  // namespace spdiode::emitter
