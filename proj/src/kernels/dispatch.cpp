#include <cstdlib>
#include <string>

#include "kernel_tables.hpp"

namespace mirrorcap::kernels {

std::string_view to_string(SimdLevel level) {
  switch (level) {
    case SimdLevel::Scalar: return "scalar";
    case SimdLevel::Avx2: return "avx2";
    case SimdLevel::Neon: return "neon";
  }
  return "unknown";
}

const KernelTable* table_for(SimdLevel level) {
  switch (level) {
    case SimdLevel::Scalar:
      return &detail::scalar_table();
    case SimdLevel::Avx2:
#if defined(MIRRORCAP_HAVE_AVX2)
      __builtin_cpu_init();
      if (__builtin_cpu_supports("avx2")) return &detail::avx2_table();
#endif
      return nullptr;
    case SimdLevel::Neon:
#if defined(MIRRORCAP_HAVE_NEON)
      return &detail::neon_table();
#else
      return nullptr;
#endif
  }
  return nullptr;
}

std::vector<const KernelTable*> available() {
  std::vector<const KernelTable*> out;
  for (SimdLevel level : {SimdLevel::Scalar, SimdLevel::Avx2, SimdLevel::Neon}) {
    if (const KernelTable* t = table_for(level)) out.push_back(t);
  }
  return out;
}

namespace {

const KernelTable& select() {
  if (const char* env = std::getenv("MIRRORCAP_SIMD")) {
    const std::string want(env);
    for (SimdLevel level : {SimdLevel::Scalar, SimdLevel::Avx2, SimdLevel::Neon}) {
      if (want == to_string(level)) {
        if (const KernelTable* t = table_for(level)) return *t;
      }
    }
  }
  if (const KernelTable* t = table_for(SimdLevel::Avx2)) return *t;
  if (const KernelTable* t = table_for(SimdLevel::Neon)) return *t;
  return detail::scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace mirrorcap::kernels
