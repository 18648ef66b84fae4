#include <atomic>
#include <cstdlib>
#include <string_view>

#include "contra/kernels.hpp"

namespace contra::kernels {
namespace {

constexpr KernelTable kScalarTable{Isa::kScalar, &scalar::dot, &scalar::axpy, &scalar::scale};
#if CONTRA_HAVE_AVX2_KERNELS
constexpr KernelTable kAvx2Table{Isa::kAvx2, &avx2::dot, &avx2::axpy, &avx2::scale};
#endif

const KernelTable* initial_table() noexcept {
  if (const char* env = std::getenv("CONTRA_SIMD"); env != nullptr) {
    if (std::string_view(env) == "scalar") return &kScalarTable;
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &kScalarTable;
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

bool cpu_has_avx2() noexcept {
#if CONTRA_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& scalar_table() noexcept { return kScalarTable; }

const KernelTable* avx2_table() noexcept {
#if CONTRA_HAVE_AVX2_KERNELS
  if (cpu_has_avx2()) return &kAvx2Table;
#endif
  return nullptr;
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

bool select_kernels(Isa isa) noexcept {
  const KernelTable* t = isa == Isa::kScalar ? &kScalarTable : avx2_table();
  if (t == nullptr) return false;
  current().store(t, std::memory_order_relaxed);
  return true;
}

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
  }
  return "unknown";
}

}  // namespace contra::kernels
