#pragma once
// Inverse problems on the device model: the QD bias that puts the exciton on
// a cavity mode, and maps of predicted observables over both biases.

#include <span>
#include <vector>

#include "spdiode/params.hpp"
#include "spdiode/photostats.hpp"

namespace spdiode::opfinder {

struct OperatingPoint {
  double v_cav = 0.0;
  double v_qd = 0.0;
  double detuning_nm = 0.0;  // lambda_X - lambda_mode
  double tau_total_ns = 0.0;
  double predicted_g2_zero = 0.0;
  double enhancement = 0.0;
  bool pulled_in = false;  // map rows only; remaining fields are NaN
  int iterations = 0;      // bisection steps, find_resonant_bias only
};

inline constexpr double kDetuningTolerance = 1e-4;  // nm
inline constexpr int kMaxBisections = 60;

/// Observables at one bias pair.
OperatingPoint evaluate(const DeviceParams& p, double v_cav, double v_qd, Mode mode = Mode::S);

/// Bisection of detuning(V_QD) on [V_th, V_max]. Throws NumericError
/// "no crossing" without a sign change; PullInError propagates.
OperatingPoint find_resonant_bias(const DeviceParams& p, double v_cav, Mode mode = Mode::S);

/// One row per (V_CAV, V_QD) pair, V_CAV-major. Pull-in cells are flagged.
std::vector<OperatingPoint> operating_map(const DeviceParams& p, std::span<const double> v_cav,
                                          std::span<const double> v_qd, Mode mode = Mode::S,
                                          unsigned threads = 0);

/// 1 - (1 - rho_b)^2.
double predict_g2_zero(double rho_b);

/// Emitter rates for an HBT run at the operating point: pump and rho_b from
/// the config, decay rate 1/tau_total.
photostats::EmitterRates rates_for(const DeviceParams& p, const OperatingPoint& point);

}  // namespace spdiode::opfinder
