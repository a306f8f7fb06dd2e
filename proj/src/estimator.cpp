#include "spdiode/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>

#include "spdiode/errors.hpp"
#include "spdiode/kernels.hpp"

namespace spdiode::estimator {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kFwhmPerSigma = 2.3548200450309493;
constexpr int kReweightPasses = 10;

double scale_of(std::span<const double> scales, std::span<const double> p, std::size_t j) {
  if (j < scales.size() && scales[j] > 0) return scales[j];
  return std::max(std::abs(p[j]), 1e-3);
}

void check_finite(std::span<const double> v, const char* where) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string(where) + ": model produced a non-finite value");
}

struct Evaluation {
  std::vector<double> model;
  std::vector<double> residual;  // (y - model) / sigma
  double chi2 = 0.0;
};

Evaluation evaluate(const Model& model, const Data& d, std::span<const double> inv_sigma,
                    std::span<const double> p) {
  Evaluation e;
  e.model.resize(d.x.size());
  e.residual.resize(d.x.size());
  model(d.x, p, e.model);
  check_finite(e.model, "least_squares");
  kernels::weighted_residuals(d.y, e.model, inv_sigma, e.residual);
  e.chi2 = kernels::sum_squares(e.residual);
  return e;
}

}  // namespace

const Estimate& FitResult::get(const std::string& name) const {
  for (const auto& e : params)
    if (e.name == name) return e;
  for (const auto& e : derived)
    if (e.name == name) return e;
  throw NumericError("FitResult: no value named '" + name + "'");
}

std::vector<double> finite_difference_jacobian(const Model& model, std::span<const double> x,
                                               std::span<const double> params,
                                               std::span<const double> scales) {
  const std::size_t n = x.size();
  const std::size_t m = params.size();
  std::vector<double> jac(n * m);
  std::vector<double> p(params.begin(), params.end());
  std::vector<double> plus(n), minus(n);
  for (std::size_t j = 0; j < m; ++j) {
    const double h = 6e-6 * scale_of(scales, params, j);
    const double orig = p[j];
    p[j] = orig + h;
    const double hp = p[j] - orig;
    model(x, p, plus);
    p[j] = orig - h;
    const double hm = orig - p[j];
    model(x, p, minus);
    p[j] = orig;
    check_finite(plus, "jacobian");
    check_finite(minus, "jacobian");
    for (std::size_t i = 0; i < n; ++i) jac[i * m + j] = (plus[i] - minus[i]) / (hp + hm);
  }
  return jac;
}

FitResult least_squares(const Model& model, const Data& data, std::vector<double> init,
                        std::vector<std::string> names, const LmOptions& opts) {
  const std::size_t n = data.x.size();
  const std::size_t m = init.size();
  if (names.size() != m) throw NumericError("least_squares: one name per parameter required");
  if (data.y.size() != n || data.sigma.size() != n)
    throw NumericError("least_squares: x, y and sigma sizes differ");
  if (n < m + 1) throw NumericError("least_squares: need at least params + 1 data points");

  std::vector<double> inv_sigma(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(data.sigma[i] > 0)) throw NumericError("least_squares: sigma must be > 0");
    inv_sigma[i] = 1.0 / data.sigma[i];
  }

  FitResult res;
  res.dof = static_cast<int>(n - m);
  std::vector<double> p = std::move(init);
  Evaluation cur = evaluate(model, data, inv_sigma, p);
  double lambda = opts.initial_lambda;

  auto normal_equations = [&](const std::vector<double>& params, MatrixXd& jtj, VectorXd& jtr) {
    const auto jac = finite_difference_jacobian(model, data.x, params, opts.scales);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> J(
        jac.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    const Eigen::Map<const VectorXd> w(inv_sigma.data(), static_cast<Eigen::Index>(n));
    const MatrixXd Jw = w.asDiagonal() * J;
    jtj = Jw.transpose() * Jw;
    jtr = Jw.transpose() * Eigen::Map<const VectorXd>(cur.residual.data(), static_cast<Eigen::Index>(n));
  };

  MatrixXd jtj;
  VectorXd jtr;
  normal_equations(p, jtj, jtr);

  bool singular = false;
  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    if (cur.chi2 == 0.0) {
      res.converged = true;
      break;
    }
    const VectorXd diag = jtj.diagonal();
    if ((diag.array() <= 0.0).any()) {
      singular = true;
      res.diagnostic = "singular normal matrix: a parameter does not affect the model";
      break;
    }
    MatrixXd damped = jtj;
    damped.diagonal() += lambda * diag;
    const Eigen::LDLT<MatrixXd> ldlt(damped);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      lambda *= opts.lambda_up;
      continue;
    }
    const VectorXd step = ldlt.solve(jtr);

    bool small_step = true;
    std::vector<double> trial(p);
    for (std::size_t j = 0; j < m; ++j) {
      trial[j] += step[static_cast<Eigen::Index>(j)];
      const double tol = opts.step_tolerance * std::max(std::abs(p[j]), scale_of(opts.scales, p, j));
      if (std::abs(step[static_cast<Eigen::Index>(j)]) > tol) small_step = false;
    }

    Evaluation next;
    bool ok = true;
    try {
      next = evaluate(model, data, inv_sigma, trial);
    } catch (const NumericError&) {
      ok = false;  // step left the model's domain; treat as a rejection
    }

    if (ok && next.chi2 <= cur.chi2) {
      const double rel_change = (cur.chi2 - next.chi2) / cur.chi2;
      p = std::move(trial);
      cur = std::move(next);
      lambda = std::max(lambda / opts.lambda_down, 1e-15);
      if (small_step || rel_change < opts.chi2_tolerance) {
        res.converged = true;
        ++res.iterations;
        break;
      }
      normal_equations(p, jtj, jtr);
    } else {
      if (small_step) {
        res.converged = true;
        break;
      }
      lambda *= opts.lambda_up;
      if (lambda > 1e20) {
        res.diagnostic = "damping diverged without reducing chi^2";
        break;
      }
    }
  }
  if (!res.converged && res.diagnostic.empty())
    res.diagnostic = "iteration limit reached";

  // Covariance at the final point.
  normal_equations(p, jtj, jtr);
  res.chi2 = cur.chi2;
  res.residual_norm = std::sqrt(cur.chi2);
  res.covariance.assign(m * m, 0.0);
  std::vector<double> err(m, 0.0);
  const Eigen::FullPivLU<MatrixXd> lu(jtj);
  if (singular || !lu.isInvertible()) {
    res.converged = false;
    if (res.diagnostic.empty()) res.diagnostic = "singular normal matrix at the solution";
  } else {
    const double s2 = cur.chi2 / static_cast<double>(res.dof);
    const MatrixXd cov = lu.inverse() * s2;
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        res.covariance[a * m + b] = cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    for (std::size_t j = 0; j < m; ++j) err[j] = std::sqrt(std::max(0.0, res.covariance[j * m + j]));
  }
  for (std::size_t j = 0; j < m; ++j) res.params.push_back({names[j], p[j], err[j]});
  return res;
}

// --- models ------------------------------------------------------------------

Model lorentzian_model() {
  return [](std::span<const double> x, std::span<const double> p, std::span<double> out) {
    std::fill(out.begin(), out.end(), p[3]);
    kernels::lorentzian_accumulate(x, p[0], 0.5 * p[1], p[2], out);
  };
}


namespace {
// exp(-t/tau) for t >= 0 convolved with a unit-area Gaussian of width sigma.
double exp_gauss(double t, double tau, double sigma) {
  if (sigma <= 0) return t >= 0 ? std::exp(-t / tau) : 0.0;
  const double z = (sigma / tau - t / sigma) / std::numbers::sqrt2;
  if (z > 25.0) {
    // erfc underflows; use the asymptotic erfcx(z) ~ 1/(z sqrt(pi)).
    return 0.5 * std::exp(-t * t / (2 * sigma * sigma)) / (z * std::sqrt(std::numbers::pi));
  }
  return 0.5 * std::exp(sigma * sigma / (2 * tau * tau) - t / tau) * std::erfc(z);
}
}  // namespace

Model antibunching_model(double timing_sigma_ps) {
  if (timing_sigma_ps > 0) {
    return [timing_sigma_ps](std::span<const double> x, std::span<const double> p, std::span<double> out) {
      for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = 1.0 - p[0] * (exp_gauss(x[i], p[1], timing_sigma_ps) + exp_gauss(-x[i], p[1], timing_sigma_ps));
    };
  }
  return [](std::span<const double> x, std::span<const double> p, std::span<double> out) {
    const double a = p[0];
    const double inv_tau = 1.0 / p[1];
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 1.0 - a * std::exp(-std::abs(x[i]) * inv_tau);
  };
}

Model biexp_irf_model(double irf_sigma_ps) {
  return [irf_sigma_ps](std::span<const double> x, std::span<const double> p, std::span<double> out) {
    const double tf = std::exp(p[0]);
    const double ts = std::exp(p[1]);
    for (std::size_t i = 0; i < x.size(); ++i)
      out[i] = p[2] * exp_gauss(x[i], tf, irf_sigma_ps) + p[3] * exp_gauss(x[i], ts, irf_sigma_ps);
  };
}

// --- fits --------------------------------------------------------------------

namespace {

constexpr int kBinSubsamples = 8;

// Mean of the model over [x - w/2, x + w/2] by the midpoint rule.
Model bin_averaged(Model inner, double width) {
  if (!(width > 0)) return inner;
  return [inner = std::move(inner), width](std::span<const double> x, std::span<const double> p,
                                           std::span<double> out) {
    std::vector<double> sub(x.size()), val(x.size());
    std::fill(out.begin(), out.end(), 0.0);
    for (int k = 0; k < kBinSubsamples; ++k) {
      const double off = width * ((k + 0.5) / kBinSubsamples - 0.5);
      for (std::size_t i = 0; i < x.size(); ++i) sub[i] = x[i] + off;
      inner(sub, p, val);
      for (std::size_t i = 0; i < x.size(); ++i) out[i] += val[i];
    }
    for (auto& v : out) v /= kBinSubsamples;
  };
}

}  // namespace

double hbt_timing_sigma_ps(const Detector& det) {
  return std::numbers::sqrt2 * photostats::jitter_sigma_ps(det);
}

FitResult fit_g2(const photostats::G2Curve& curve, const G2FitOptions& opts) {
  const std::size_t n = curve.tau_ps.size();
  if (n < 3) throw NumericError("fit_g2: curve too short");
  Data d{curve.tau_ps, curve.g2, opts.weighted ? curve.sigma : std::vector<double>(n, 1.0)};

  // Seeds: depth from the minimum, decay constant from the first bin outward
  // from zero delay that climbs back to 1 - A/e.
  const auto min_it = std::min_element(curve.g2.begin(), curve.g2.end());
  const double a0 = std::clamp(1.0 - *min_it, 1e-3, 1.0);
  const double target = 1.0 - a0 / std::numbers::e;
  std::size_t zero = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (std::abs(curve.tau_ps[i]) < std::abs(curve.tau_ps[zero])) zero = i;
  double tau0 = 0.0;
  for (std::size_t i = zero; i < n; ++i) {
    if (curve.g2[i] >= target) {
      tau0 = std::abs(curve.tau_ps[i]);
      break;
    }
  }
  const double span = std::min(std::abs(curve.tau_ps.front()), std::abs(curve.tau_ps.back()));
  if (!(tau0 > 0)) tau0 = std::max(span / 10.0, std::abs(curve.tau_ps[1] - curve.tau_ps[0]));

  double width = opts.bin_width_ps;
  if (width < 0) width = std::abs(curve.tau_ps[1] - curve.tau_ps[0]);
  const Model model_fn = bin_averaged(antibunching_model(opts.timing_sigma_ps), width);

  LmOptions lm;
  lm.scales = {1.0, tau0};
  auto res = least_squares(model_fn, d, {a0, tau0}, {"A", "tau_t_ps"}, lm);

  // Counting data: replace sqrt(observed) errors, which favour bins that
  // fluctuated low, by sqrt(expected) from the current model and refit.
  double sum_counts = 0.0, sum_g2 = 0.0;
  if (curve.counts.size() == n) {
    for (std::size_t i = 0; i < n; ++i) {
      sum_counts += static_cast<double>(curve.counts[i]);
      sum_g2 += curve.g2[i];
    }
  }
  if (opts.weighted && res.converged && sum_counts > 0 && sum_g2 > 0) {
    const double scale = sum_counts / sum_g2;  // expected coincidences at g2 = 1
    std::vector<double> model(n);
    for (int pass = 0; pass < kReweightPasses; ++pass) {
      const std::vector<double> prev{res.params[0].value, res.params[1].value};
      model_fn(d.x, prev, model);
      for (std::size_t i = 0; i < n; ++i) d.sigma[i] = std::sqrt(std::max(scale * model[i], 1.0)) / scale;
      auto next = least_squares(model_fn, d, prev, {"A", "tau_t_ps"}, lm);
      if (!next.converged) break;
      const bool settled = std::abs(next.params[1].value - prev[1]) < 1e-6 * std::abs(prev[1]) &&
                           std::abs(next.params[0].value - prev[0]) < 1e-6;
      res = std::move(next);
      if (settled) break;
    }
  }
  const auto& a = res.params[0];
  res.derived.push_back({"g2_zero", 1.0 - a.value, a.std_error});
  if (span < 3.0 * std::abs(res.params[1].value))
    res.warnings.push_back("curve spans less than 3 tau_t on at least one side");
  return res;
}

FitResult fit_lorentzian(const spectra::Spectrum& spec) {
  const auto& x = spec.wavelengths;
  const auto& y = spec.intensities;
  const std::size_t n = x.size();
  if (n < 5) throw NumericError("fit_lorentzian: need at least 5 points");

  const auto peak = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  const double base = *std::min_element(y.begin(), y.end());
  const double amp0 = y[peak] - base;
  const double half = base + 0.5 * amp0;
  std::size_t lo = peak, hi = peak;
  while (lo > 0 && y[lo] > half) --lo;
  while (hi + 1 < n && y[hi] > half) ++hi;
  const double step = (x.back() - x.front()) / static_cast<double>(n - 1);
  const double fwhm0 = std::max(x[hi] - x[lo], 2.0 * step);

  Data d{x, y, std::vector<double>(n, 1.0)};
  LmOptions lm;
  const double amp_scale = std::max(std::abs(amp0), 1e-12);
  lm.scales = {fwhm0, fwhm0, amp_scale, amp_scale};
  auto res = least_squares(lorentzian_model(), d, {x[peak], fwhm0, amp0, base},
                           {"center_nm", "fwhm_nm", "amplitude", "offset"}, lm);

  const double c = res.params[0].value;
  const double f = res.params[1].value;
  const auto& cov = res.covariance;
  // Delta method for Q = c / f.
  const double q = c / f;
  const double dq_dc = 1.0 / f;
  const double dq_df = -c / (f * f);
  const double var_q = dq_dc * dq_dc * cov[0] + 2 * dq_dc * dq_df * cov[1] + dq_df * dq_df * cov[5];
  res.derived.push_back({"Q", q, std::sqrt(std::max(0.0, var_q))});

  if (peak == 0 || peak + 1 == n || c - x.front() < f || x.back() - c < f)
    res.warnings.push_back("peak at grid edge");
  if (f / step < 5.0) res.warnings.push_back("fewer than 5 points across the FWHM");
  const auto& a = res.params[2];
  if (!(std::abs(a.value) > 3.0 * a.std_error) || !(std::abs(a.value) > 1e-9 * std::abs(res.params[3].value)))
    res.warnings.push_back("amplitude consistent with zero");
  return res;
}

FitResult fit_biexp_irf(const photostats::DecayTrace& trace, double irf_fwhm_ps) {
  if (irf_fwhm_ps < 0) throw NumericError("fit_biexp_irf: IRF width must be >= 0");
  const std::size_t n = trace.counts.size();
  if (n < 8) throw NumericError("fit_biexp_irf: trace too short");
  Data d;
  d.x.resize(n);
  d.y.resize(n);
  d.sigma.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double k = static_cast<double>(trace.counts[i]);
    d.x[i] = trace.center(i);
    d.y[i] = k;
    d.sigma[i] = std::sqrt(std::max(k, 1.0));
  }
  const double sigma_irf = irf_fwhm_ps / kFwhmPerSigma;

  // Seeds: slow constant from a log-linear fit of the late tail, fast
  // constant from the 1/e point of the tail-subtracted peak.
  const auto peak = static_cast<std::size_t>(std::max_element(d.y.begin(), d.y.end()) - d.y.begin());
  const double t_end = d.x.back();
  const double t_peak = d.x[peak];
  double sx = 0, sy = 0, sxx = 0, sxy = 0, sw = 0;
  for (std::size_t i = peak; i < n; ++i) {
    if (d.x[i] < t_peak + 0.4 * (t_end - t_peak) || d.y[i] <= 0) continue;
    const double w = d.y[i];
    const double ly = std::log(d.y[i]);
    sw += w;
    sx += w * d.x[i];
    sy += w * ly;
    sxx += w * d.x[i] * d.x[i];
    sxy += w * d.x[i] * ly;
  }
  double tau_s0 = 0, a_s0 = 0;
  const double den = sw * sxx - sx * sx;
  if (sw > 0 && den > 0) {
    const double slope = (sw * sxy - sx * sy) / den;
    const double icpt = (sy - slope * sx) / sw;
    if (slope < 0) {
      tau_s0 = -1.0 / slope;
      a_s0 = std::exp(icpt);
    }
  }
  const double peak_val = d.y[peak];
  if (!(a_s0 > 0) || a_s0 > 0.5 * peak_val) a_s0 = 0.01 * peak_val;
  double tau_f0 = 0;
  for (std::size_t i = peak; i < n; ++i) {
    const double slow = tau_s0 > 0 ? a_s0 * std::exp(-d.x[i] / tau_s0) : 0.0;
    if (d.y[i] - slow <= (peak_val - a_s0) / std::numbers::e) {
      tau_f0 = std::max(d.x[i] - std::max(t_peak, 0.0), trace.bin_width_ps);
      break;
    }
  }
  if (!(tau_f0 > 0)) tau_f0 = 0.1 * (t_end - t_peak);
  if (!(tau_s0 > 1.5 * tau_f0)) tau_s0 = 10.0 * tau_f0;
  const double a_f0 = std::max(peak_val - a_s0, 1.0);

  LmOptions lm;
  lm.scales = {0.1, 0.1, a_f0, std::max(a_s0, 1.0)};
  auto res = least_squares(biexp_irf_model(sigma_irf), d,
                           {std::log(tau_f0), std::log(tau_s0), a_f0, a_s0},
                           {"tau_fast_ps", "tau_slow_ps", "a_fast", "a_slow"}, lm);

  // Back to times; order so that tau_fast < tau_slow.
  auto& ps = res.params;
  for (int j = 0; j < 2; ++j) {
    const double tau = std::exp(ps[j].value);
    ps[j].value = tau;
    ps[j].std_error = tau * ps[j].std_error;
  }
  if (ps[0].value > ps[1].value) {
    std::swap(ps[0].value, ps[1].value);
    std::swap(ps[0].std_error, ps[1].std_error);
    std::swap(ps[2].value, ps[3].value);
    std::swap(ps[2].std_error, ps[3].std_error);
  }
  // Covariance stays in fit coordinates (ln tau, amplitudes).
  if (std::abs(ps[1].value - ps[0].value) < 0.1 * ps[0].value)
    res.warnings.push_back("degenerate: tau_fast and tau_slow within 10%");
  const auto& as = ps[3];
  if (!(as.value > 0) || as.std_error > std::abs(as.value) || as.value < 1e-3 * ps[2].value)
    res.warnings.push_back("slow component unidentifiable");
  return res;
}

FitResult fit_stark(const spectra::SweepTable& table, double v_ref) {
  std::vector<const spectra::SweepRow*> rows;
  for (const auto& r : table.rows)
    if (!r.pulled_in) rows.push_back(&r);
  if (rows.size() < 2) throw NumericError("fit_stark: need at least 2 rows");

  // Ordinary least squares about the reference bias.
  const double n = static_cast<double>(rows.size());
  auto regress = [&](auto value_of) {
    double mx = 0, my = 0;
    for (const auto* r : rows) {
      mx += r->v - v_ref;
      my += value_of(*r);
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (const auto* r : rows) {
      const double dx = r->v - v_ref - mx;
      sxx += dx * dx;
      sxy += dx * (value_of(*r) - my);
    }
    if (sxx == 0) throw NumericError("fit_stark: all rows share one bias");
    const double slope = sxy / sxx;
    const double icpt = my - slope * mx;
    double ssr = 0;
    for (const auto* r : rows) {
      const double e = value_of(*r) - (icpt + slope * (r->v - v_ref));
      ssr += e * e;
    }
    const double s2 = n > 2 ? ssr / (n - 2) : 0.0;
    struct Line {
      double slope, icpt, var_slope, var_icpt, cov;
    };
    return Line{slope, icpt, s2 / sxx, s2 * (1.0 / n + mx * mx / sxx), -mx * s2 / sxx};
  };

  const auto lam = regress([](const spectra::SweepRow& r) { return r.lambda_X; });
  const auto det = regress([](const spectra::SweepRow& r) { return r.detuning; });

  FitResult res;
  res.params.push_back({"slope_nm_per_V", lam.slope, std::sqrt(lam.var_slope)});
  res.params.push_back({"lambda_at_vref_nm", lam.icpt, std::sqrt(lam.var_icpt)});
  res.covariance = {lam.var_slope, lam.cov, lam.cov, lam.var_icpt};
  res.dof = static_cast<int>(rows.size()) - 2;
  double ssr = 0;
  for (const auto* r : rows) {
    const double e = r->lambda_X - (lam.icpt + lam.slope * (r->v - v_ref));
    ssr += e * e;
  }
  res.chi2 = ssr;
  res.residual_norm = std::sqrt(ssr);
  res.converged = true;
  if (det.slope != 0.0) {
    const double dv = -det.icpt / det.slope;
    // Delta method on -b/a.
    const double g_a = det.icpt / (det.slope * det.slope);
    const double g_b = -1.0 / det.slope;
    const double var = g_a * g_a * det.var_slope + g_b * g_b * det.var_icpt + 2 * g_a * g_b * det.cov;
    res.derived.push_back({"v_zero_detuning_V", v_ref + dv, std::sqrt(std::max(0.0, var))});
  } else {
    res.warnings.push_back("detuning does not vary with bias; no crossing");
  }
  return res;
}

}  // namespace spdiode::estimator
