#pragma once
// Levenberg-Marquardt least squares and the device fit models.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spdiode/photostats.hpp"
#include "spdiode/spectra.hpp"

namespace spdiode::estimator {

struct Estimate {
  std::string name;
  double value = 0.0;
  double std_error = 0.0;
};

struct FitResult {
  std::vector<Estimate> params;
  std::vector<Estimate> derived;
  std::vector<double> covariance;  // row-major, params.size()^2
  double residual_norm = 0.0;      // sqrt(chi^2)
  double chi2 = 0.0;
  int dof = 0;
  int iterations = 0;
  bool converged = false;
  std::string diagnostic;
  std::vector<std::string> warnings;

  /// Looks up a parameter or derived value by name; throws if absent.
  const Estimate& get(const std::string& name) const;
  double value(const std::string& name) const { return get(name).value; }
  double error(const std::string& name) const { return get(name).std_error; }
};

/// Evaluates the model at every x for one parameter vector.
using Model = std::function<void(std::span<const double> x, std::span<const double> params,
                                 std::span<double> out)>;

struct Data {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> sigma;
};

struct LmOptions {
  int max_iterations = 500;
  double initial_lambda = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  double step_tolerance = 1e-8;   // relative, per parameter
  double chi2_tolerance = 1e-10;  // relative change on an accepted step
  /// Typical magnitude per parameter; sets finite-difference steps and the
  /// scale for relative step tests. Empty: max(|p|, 1e-3).
  std::vector<double> scales;
};

/// Weighted Levenberg-Marquardt with a central-difference Jacobian.
/// std_errors = sqrt(diag((J^T W J)^-1) chi^2 / dof). A singular normal
/// matrix yields converged = false with a diagnostic; NaN from the model
/// throws NumericError.
FitResult least_squares(const Model& model, const Data& data, std::vector<double> init,
                        std::vector<std::string> names, const LmOptions& opts = {});

/// Central-difference Jacobian d model / d params, row-major (n_x by n_p).
std::vector<double> finite_difference_jacobian(const Model& model, std::span<const double> x,
                                               std::span<const double> params,
                                               std::span<const double> scales = {});

// --- device fit models -----------------------------------------------------

/// offset + amplitude / (1 + (2 (x - center) / fwhm)^2); params
/// (center, fwhm, amplitude, offset).
Model lorentzian_model();

/// 1 - A exp(-|tau| / tau_t); params (A, tau_t_ps). With timing_sigma_ps > 0
/// the exponential is convolved with a Gaussian of that width.
Model antibunching_model(double timing_sigma_ps = 0.0);

/// Sum of two exponentials from t = 0 convolved with a Gaussian IRF;
/// params (ln tau_fast, ln tau_slow, a_fast, a_slow), times in ps.
Model biexp_irf_model(double irf_sigma_ps);

struct G2FitOptions {
  bool weighted = true;
  /// Gaussian width of the start-stop timing response (both detectors'
  /// jitter combined); 0 fits the bare exponential dip.
  double timing_sigma_ps = 0.0;
  /// Average the model across each histogram bin of this width. Negative:
  /// take the spacing of the curve; 0: point evaluation at bin centres.
  double bin_width_ps = -1.0;
};

/// Combined timing spread of two identical detectors: sqrt(2) sigma_jitter.
double hbt_timing_sigma_ps(const Detector& det);

/// Fit the antibunching dip. Parameters "A", "tau_t_ps"; derived "g2_zero".
FitResult fit_g2(const photostats::G2Curve& curve, const G2FitOptions& opts = {});

/// Fit one Lorentzian peak. Parameters "center_nm", "fwhm_nm", "amplitude",
/// "offset"; derived "Q".
FitResult fit_lorentzian(const spectra::Spectrum& spec);

/// Bi-exponential decay with IRF. Parameters "tau_fast_ps", "tau_slow_ps",
/// "a_fast", "a_slow" with tau_fast < tau_slow.
FitResult fit_biexp_irf(const photostats::DecayTrace& trace, double irf_fwhm_ps);

/// Linear regression of the exciton wavelength on the bias. Parameters
/// "slope_nm_per_V", "lambda_at_vref_nm"; derived "v_zero_detuning_V" from
/// the detuning column.
FitResult fit_stark(const spectra::SweepTable& rows, double v_ref);

}  // namespace spdiode::estimator
