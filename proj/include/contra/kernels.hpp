#pragma once

// Inner-loop kernels with a scalar reference and an AVX2/FMA variant.
//
// The active table is picked once at first use from CPUID. Setting
// CONTRA_SIMD=scalar in the environment (or calling select_kernels) forces the
// reference path, which is the one to use when bit-identical results are needed
// across machines with different vector units.

#include <cstddef>
#include <string_view>

namespace contra::kernels {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// y *= alpha
  void (*scale)(double alpha, double* y, std::size_t n);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* y, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define CONTRA_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* y, std::size_t n);
}  // namespace avx2
#else
#define CONTRA_HAVE_AVX2_KERNELS 0
#endif

bool cpu_has_avx2() noexcept;

const KernelTable& scalar_table() noexcept;
/// Null when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table() noexcept;

/// Currently active table.
const KernelTable& active() noexcept;
/// Forces a table; returns false (and changes nothing) if it is unavailable.
bool select_kernels(Isa isa) noexcept;
std::string_view isa_name(Isa isa) noexcept;

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void scale(double alpha, double* y, std::size_t n) { active().scale(alpha, y, n); }

}  // namespace contra::kernels
