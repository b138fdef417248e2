#pragma once

// Data-parallel inner loops used by the renderer and the pose lifter.
//
// Each kernel has a scalar reference implementation and, where the target
// supports it, AVX2 (x86-64) and NEON (aarch64) variants. The active table is
// chosen once at first use from the CPU's capabilities; MIRRORCAP_SIMD
// (scalar|avx2|neon) overrides the choice. All variants agree with the scalar
// reference bit for bit except exp_neg, which differs by a few ulp.

#include <cstddef>
#include <string_view>
#include <vector>

namespace mirrorcap::kernels {

enum class SimdLevel { Scalar, Avx2, Neon };

std::string_view to_string(SimdLevel level);

// One capsule-shaped density lobe around the segment [0, end] expressed in
// the parent joint's local frame. Density is
//   sigma_max * (1 - d^2 / R^2)^4   for d < R, else 0,
// with d the distance to the segment.
struct CapsuleLobe {
  double end[3];
  double inv_len2;    // 1 / |end|^2, or 0 for a point lobe
  double inv_radius2; // 1 / R^2
  double sigma_max;
  double color[3];
};

struct KernelTable {
  SimdLevel level;

  // out[i] = exp(-x[i]) for x[i] >= 0; results below ~1e-308 flush to 0.
  void (*exp_neg)(std::size_t n, const double* x, double* out);

  // u = f x / z + o1, v = f y / z + o2. Caller guarantees z > 0.
  void (*project)(std::size_t n, const double* x, const double* y, const double* z, double f,
                  double o1, double o2, double* u, double* v);

  // Accumulates one lobe into sigma and sigma-weighted color sums.
  void (*capsule_accumulate)(std::size_t n, const double* x, const double* y, const double* z,
                             const CapsuleLobe& lobe, double* sigma, double* sr, double* sg,
                             double* sb);

  // Back-to-front layer composite on one channel plane:
  //   out = l a + (1 - a) (lb ab + (1 - ab) bg)
  void (*composite)(std::size_t n, const double* l, const double* a, const double* lb,
                    const double* ab, const double* bg, double* out);
};

// Table selected for this process.
const KernelTable& active();

// Specific table, or nullptr if this build or CPU cannot run it.
const KernelTable* table_for(SimdLevel level);

// Every table runnable on this machine, scalar first.
std::vector<const KernelTable*> available();

}  // namespace mirrorcap::kernels
