#include "spdiode/opfinder.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "spdiode/actuator.hpp"
#include "spdiode/emitter.hpp"
#include "spdiode/errors.hpp"
#include "spdiode/optics.hpp"

namespace spdiode::opfinder {

namespace {

double detuning_at(const DeviceParams& p, double v_cav, double v_qd, Mode mode) {
  const auto modes = optics::modes_at(p, actuator::drive_state(p, v_cav, v_qd));
  return emitter::exciton_wavelength(p, v_qd) - modes.wavelength(mode);
}

}  // namespace

double predict_g2_zero(double rho_b) {
  if (!(rho_b >= 0.0 && rho_b < 1.0)) throw NumericError("predict_g2_zero: rho_b must be in [0, 1)");
  const double q = 1.0 - rho_b;
  return 1.0 - q * q;
}

OperatingPoint evaluate(const DeviceParams& p, double v_cav, double v_qd, Mode mode) {
  const auto modes = optics::modes_at(p, actuator::drive_state(p, v_cav, v_qd));
  const double lm = modes.wavelength(mode);
  const auto budget = emitter::decay_budget(p, v_qd, lm);
  OperatingPoint op;
  op.v_cav = v_cav;
  op.v_qd = v_qd;
  op.detuning_nm = emitter::exciton_wavelength(p, v_qd) - lm;
  op.tau_total_ns = budget.tau_total;
  op.predicted_g2_zero = predict_g2_zero(p.source.background_fraction);
  op.enhancement = emitter::el_enhancement(p, op.detuning_nm, lm);
  return op;
}

OperatingPoint find_resonant_bias(const DeviceParams& p, double v_cav, Mode mode) {
  if (p.emitter.stark_slope_nm_per_V == 0.0)
    throw NumericError("find_resonant_bias: no crossing (Stark slope is zero)");
  double lo = p.emitter.v_th_V;
  double hi = p.search.v_max_V;
  if (!(hi > lo)) throw NumericError("find_resonant_bias: search.v_max_V must exceed emitter.v_th_V");
  double f_lo = detuning_at(p, v_cav, lo, mode);
  const double f_hi = detuning_at(p, v_cav, hi, mode);
  if (std::signbit(f_lo) == std::signbit(f_hi) && f_lo != 0.0 && f_hi != 0.0)
    throw NumericError("find_resonant_bias: no crossing in [V_th, V_max]");

  double best_v = std::abs(f_lo) <= std::abs(f_hi) ? lo : hi;
  double best_f = std::min(std::abs(f_lo), std::abs(f_hi));
  int it = 0;
  while (best_f >= kDetuningTolerance && it < kMaxBisections) {
    ++it;
    const double mid = 0.5 * (lo + hi);
    const double f = detuning_at(p, v_cav, mid, mode);
    if (std::abs(f) < best_f) {
      best_f = std::abs(f);
      best_v = mid;
    }
    if (std::signbit(f) == std::signbit(f_lo)) {
      lo = mid;
      f_lo = f;
    } else {
      hi = mid;
    }
  }
  if (best_f >= kDetuningTolerance)
    throw NumericError("find_resonant_bias: bisection did not reach the detuning tolerance");
  auto op = evaluate(p, v_cav, best_v, mode);
  op.iterations = it;
  return op;
}

std::vector<OperatingPoint> operating_map(const DeviceParams& p, std::span<const double> v_cav,
                                          std::span<const double> v_qd, Mode mode, unsigned threads) {
  if (v_cav.empty() || v_qd.empty()) throw NumericError("operating_map: grids must be nonempty");
  const std::size_t n = v_cav.size() * v_qd.size();
  std::vector<OperatingPoint> out(n);
  auto cell = [&](std::size_t k) {
    const double vc = v_cav[k / v_qd.size()];
    const double vq = v_qd[k % v_qd.size()];
    try {
      out[k] = evaluate(p, vc, vq, mode);
    } catch (const PullInError&) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      out[k] = {vc, vq, nan, nan, nan, nan, true, 0};
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t k = 0; k < n; ++k) cell(k);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t k = t; k < n; k += threads) cell(k);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

photostats::EmitterRates rates_for(const DeviceParams& p, const OperatingPoint& point) {
  if (!(point.tau_total_ns > 0)) throw NumericError("rates_for: operating point has no lifetime");
  return {p.source.pump_rate_per_ns, 1.0 / point.tau_total_ns, p.source.background_fraction};
}

}  // namespace spdiode::opfinder
