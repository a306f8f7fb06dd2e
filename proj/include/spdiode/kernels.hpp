#pragma once
// Data-parallel inner loops used by spectrum synthesis and the fitting engine.
//
// Every kernel has a scalar reference and an AVX2 variant. The variants use
// the same operation order (no FMA contraction, 4-lane striped reductions), so
// dispatch never changes results: elementwise kernels and reductions are
// bit-identical across ISAs.

#include <cstddef>
#include <span>

namespace spdiode::kernels {

enum class Isa { Scalar, Avx2 };

const char* isa_name(Isa isa) noexcept;
bool isa_available(Isa isa) noexcept;

/// ISA selected for the dispatched entry points. Chosen once from CPU
/// support; the SPDIODE_ISA environment variable ("scalar" or "avx2") can
/// force a choice.
Isa active_isa() noexcept;

/// Override the dispatch target (tests). Throws if the ISA is unavailable.
void set_isa(Isa isa);

// out[i] += amplitude / (1 + ((x[i] - center) / half_width)^2)
void lorentzian_accumulate(std::span<const double> x, double center, double half_width,
                           double amplitude, std::span<double> out);

// out[i] = (y[i] - model[i]) * inv_sigma[i]
void weighted_residuals(std::span<const double> y, std::span<const double> model,
                        std::span<const double> inv_sigma, std::span<double> out);

// sum of v[i]^2
double sum_squares(std::span<const double> v);

namespace scalar {
void lorentzian_accumulate(const double* x, std::size_t n, double center, double inv_half_width,
                           double amplitude, double* out);
void weighted_residuals(const double* y, const double* model, const double* inv_sigma,
                        std::size_t n, double* out);
double sum_squares(const double* v, std::size_t n);
}  // namespace scalar

namespace avx2 {
void lorentzian_accumulate(const double* x, std::size_t n, double center, double inv_half_width,
                           double amplitude, double* out);
void weighted_residuals(const double* y, const double* model, const double* inv_sigma,
                        std::size_t n, double* out);
double sum_squares(const double* v, std::size_t n);
}  // namespace avx2

}  // namespace spdiode::kernels
