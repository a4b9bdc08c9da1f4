#pragma once

// Data-parallel inner loops over sample rows. Every kernel has a portable
// scalar reference and an AVX2/FMA variant; the active table is chosen once
// at startup from CPUID and may be forced with MMRKIT_SIMD=scalar|avx2.
//
// The variants sum in different orders, so results agree to rounding, not
// bitwise. Callers that need bit-reproducibility across machines should pin
// the scalar table.

#include <cstddef>
#include <span>
#include <string_view>

namespace mmr::kernels {

struct KernelTable {
  std::string_view name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum_i a[i] * b[i] * w[i]
  double (*wdot)(const double* a, const double* b, const double* w, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*sqdist)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table() noexcept;
// nullptr when the CPU lacks AVX2/FMA or the build has no x86 support.
const KernelTable* avx2_table() noexcept;
const KernelTable& active() noexcept;

// Overrides the active table; intended for tests and benchmarks.
void set_active(const KernelTable& table) noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double wdot(std::span<const double> a, std::span<const double> b,
                   std::span<const double> w) {
  return active().wdot(a.data(), b.data(), w.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline double sqdist(std::span<const double> a, std::span<const double> b) {
  return active().sqdist(a.data(), b.data(), a.size());
}

}  // namespace mmr::kernels
