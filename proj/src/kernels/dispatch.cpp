#include <atomic>
#include <cstdlib>
#include <string>
#include <string_view>

#include "spdiode/errors.hpp"
#include "spdiode/kernels.hpp"

namespace spdiode::kernels {

namespace {

bool cpu_has_avx2() noexcept {
#if defined(SPDIODE_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Isa detect() noexcept {
  if (const char* env = std::getenv("SPDIODE_ISA")) {
    std::string_view want(env);
    if (want == "scalar") return Isa::Scalar;
    if (want == "avx2" && cpu_has_avx2()) return Isa::Avx2;
  }
  return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& selected() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw NumericError("kernel span sizes differ");
}

}  // namespace

const char* isa_name(Isa isa) noexcept { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) noexcept { return isa == Isa::Scalar || cpu_has_avx2(); }

Isa active_isa() noexcept { return selected().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_available(isa)) throw NumericError(std::string("ISA not available: ") + isa_name(isa));
  selected().store(isa, std::memory_order_relaxed);
}

void lorentzian_accumulate(std::span<const double> x, double center, double half_width,
                           double amplitude, std::span<double> out) {
  check_sizes(x.size(), out.size());
  const double inv = 1.0 / half_width;
  if (active_isa() == Isa::Avx2)
    avx2::lorentzian_accumulate(x.data(), x.size(), center, inv, amplitude, out.data());
  else
    scalar::lorentzian_accumulate(x.data(), x.size(), center, inv, amplitude, out.data());
}

void weighted_residuals(std::span<const double> y, std::span<const double> model,
                        std::span<const double> inv_sigma, std::span<double> out) {
  check_sizes(y.size(), model.size());
  check_sizes(y.size(), inv_sigma.size());
  check_sizes(y.size(), out.size());
  if (active_isa() == Isa::Avx2)
    avx2::weighted_residuals(y.data(), model.data(), inv_sigma.data(), y.size(), out.data());
  else
    scalar::weighted_residuals(y.data(), model.data(), inv_sigma.data(), y.size(), out.data());
}

double sum_squares(std::span<const double> v) {
  return active_isa() == Isa::Avx2 ? avx2::sum_squares(v.data(), v.size())
                                   : scalar::sum_squares(v.data(), v.size());
}

}  // namespace spdiode::kernels
