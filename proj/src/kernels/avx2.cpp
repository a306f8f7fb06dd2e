// Compiled with -mavx2 (no -mfma); only reached after a runtime CPU check.
#include "spdiode/kernels.hpp"

#if defined(__AVX2__)
#include <immintrin.h>

namespace spdiode::kernels::avx2 {

void lorentzian_accumulate(const double* x, std::size_t n, double center, double inv_half_width,
                           double amplitude, double* out) {
  const __m256d vc = _mm256_set1_pd(center);
  const __m256d vinv = _mm256_set1_pd(inv_half_width);
  const __m256d vamp = _mm256_set1_pd(amplitude);
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d u = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), vc), vinv);
    const __m256d den = _mm256_add_pd(one, _mm256_mul_pd(u, u));
    const __m256d acc = _mm256_add_pd(_mm256_loadu_pd(out + i), _mm256_div_pd(vamp, den));
    _mm256_storeu_pd(out + i, acc);
  }
  for (; i < n; ++i) {
    const double u = (x[i] - center) * inv_half_width;
    const double den = 1.0 + u * u;
    out[i] = out[i] + amplitude / den;
  }
}

void weighted_residuals(const double* y, const double* model, const double* inv_sigma,
                        std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(model + i));
    _mm256_storeu_pd(out + i, _mm256_mul_pd(d, _mm256_loadu_pd(inv_sigma + i)));
  }
  for (; i < n; ++i) out[i] = (y[i] - model[i]) * inv_sigma[i];
}

double sum_squares(const double* v, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(v + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(x, x));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double total = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) total = total + v[i] * v[i];
  return total;
}

}  // namespace spdiode::kernels::avx2

#else

#include "spdiode/errors.hpp"

namespace spdiode::kernels::avx2 {

// Non-x86 builds: never selected by dispatch.
void lorentzian_accumulate(const double*, std::size_t, double, double, double, double*) {
  throw NumericError("AVX2 kernels not compiled in");
}
void weighted_residuals(const double*, const double*, const double*, std::size_t, double*) {
  throw NumericError("AVX2 kernels not compiled in");
}
double sum_squares(const double*, std::size_t) { throw NumericError("AVX2 kernels not compiled in"); }

}  // namespace spdiode::kernels::avx2

#endif
