#include "spdiode/emitter.hpp"

#include <cmath>
#include <numbers>

#include "spdiode/devicecfg.hpp"
#include "spdiode/errors.hpp"

namespace spdiode::emitter {

double exciton_wavelength(const DeviceParams& p, double v_qd) {
  const auto& e = p.emitter;
  return e.lambda_x_at_res_nm + e.stark_slope_nm_per_V * (v_qd - e.v_res_mV / 1000.0);
}

double tunneling_rate(const DeviceParams& p, double v_qd) {
  const auto& e = p.emitter;
  if (e.tunnel_prefactor_per_ns == 0.0) return 0.0;
  return e.tunnel_prefactor_per_ns * std::exp(-(v_qd - e.v_th_V) / e.tunnel_scale_V);
}

double cavity_lorentzian(double detuning_nm, double fwhm_nm) {
  const double u = 2.0 * detuning_nm / fwhm_nm;
  return 1.0 / (1.0 + u * u);
}

double purcell_max_rate(const DeviceParams& p) {
  return cfg::calibrate_purcell_max(p.emitter.tau_resonant_ns, p.emitter.tau_leaky_ns);
}

double purcell_rate(const DeviceParams& p, double detuning_nm, double lambda_mode_nm) {
  if (!(lambda_mode_nm > 0)) throw NumericError("purcell_rate: mode wavelength must be > 0");
  const double fwhm = lambda_mode_nm / p.optics.quality_factor;
  return purcell_max_rate(p) * cavity_lorentzian(detuning_nm, fwhm);
}

namespace {
DecayBudget combine(double phc, double leaky, double tun) {
  DecayBudget b;
  b.gamma_phc = phc;
  b.gamma_leaky = leaky;
  b.gamma_tun = tun;
  b.gamma_total = (phc + leaky) + tun;
  b.tau_total = 1.0 / b.gamma_total;
  b.beta = phc / b.gamma_total;
  return b;
}
}  // namespace

DecayBudget decay_budget(const DeviceParams& p, double v_qd, double lambda_mode_nm) {
  const double detuning = exciton_wavelength(p, v_qd) - lambda_mode_nm;
  return combine(purcell_rate(p, detuning, lambda_mode_nm), 1.0 / p.emitter.tau_leaky_ns,
                 tunneling_rate(p, v_qd));
}

DecayBudget bulk_decay_budget(const DeviceParams& p, double v_qd) {
  return combine(0.0, 1.0 / p.emitter.tau_bulk_ns, tunneling_rate(p, v_qd));
}

double el_enhancement(const DeviceParams& p, double detuning_nm, double lambda_mode_nm) {
  if (!(lambda_mode_nm > 0)) throw NumericError("el_enhancement: mode wavelength must be > 0");
  const double fwhm = lambda_mode_nm / p.optics.quality_factor;
  const double l = cavity_lorentzian(detuning_nm, fwhm);
  return 1.0 + (p.emitter.enhancement_max - 1.0) * std::pow(l, p.emitter.enhancement_exponent);
}

double rc_cutoff(double resistance_ohm, double capacitance_F) {
  if (!(resistance_ohm > 0) || !(capacitance_F > 0))
    throw NumericError("rc_cutoff: R and C must be > 0");
  return 1.0 / (2.0 * std::numbers::pi * resistance_ohm * capacitance_F);
}

}  // namespace spdiode::emitter
