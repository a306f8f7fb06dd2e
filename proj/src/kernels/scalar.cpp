#include "spdiode/kernels.hpp"

namespace spdiode::kernels::scalar {

void lorentzian_accumulate(const double* x, std::size_t n, double center, double inv_half_width,
                           double amplitude, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (x[i] - center) * inv_half_width;
    const double den = 1.0 + u * u;
    out[i] = out[i] + amplitude / den;
  }
}

void weighted_residuals(const double* y, const double* model, const double* inv_sigma,
                        std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = (y[i] - model[i]) * inv_sigma[i];
}

// Mirrors the AVX2 lane layout: four striped partial sums, pairwise combine,
// then the tail in order.
double sum_squares(const double* v, std::size_t n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (int lane = 0; lane < 4; ++lane) {
      const double sq = v[i + lane] * v[i + lane];
      acc[lane] = acc[lane] + sq;
    }
  }
  double total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (; i < n; ++i) total = total + v[i] * v[i];
  return total;
}

}  // namespace spdiode::kernels::scalar
