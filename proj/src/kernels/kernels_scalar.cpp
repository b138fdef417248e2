#include <algorithm>
#include <cmath>

#include "kernel_tables.hpp"

namespace mirrorcap::kernels::detail {
namespace {

// exp(-x) underflows to a subnormal past this point; flushed to zero so the
// vector variants need no subnormal path.
constexpr double kExpCutoff = 708.0;

void exp_neg(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = x[i] > kExpCutoff ? 0.0 : std::exp(-x[i]);
  }
}

void project(std::size_t n, const double* x, const double* y, const double* z, double f,
             double o1, double o2, double* u, double* v) {
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = f * x[i] / z[i] + o1;
    v[i] = f * y[i] / z[i] + o2;
  }
}

void capsule_accumulate(std::size_t n, const double* x, const double* y, const double* z,
                        const CapsuleLobe& lobe, double* sigma, double* sr, double* sg,
                        double* sb) {
  const double ex = lobe.end[0], ey = lobe.end[1], ez = lobe.end[2];
  for (std::size_t i = 0; i < n; ++i) {
    double t = (x[i] * ex + y[i] * ey + z[i] * ez) * lobe.inv_len2;
    t = std::min(std::max(t, 0.0), 1.0);
    const double dx = x[i] - t * ex;
    const double dy = y[i] - t * ey;
    const double dz = z[i] - t * ez;
    const double d2 = dx * dx + dy * dy + dz * dz;
    const double w = std::max(1.0 - d2 * lobe.inv_radius2, 0.0);
    const double w2 = w * w;
    const double s = lobe.sigma_max * (w2 * w2);
    sigma[i] += s;
    sr[i] += s * lobe.color[0];
    sg[i] += s * lobe.color[1];
    sb[i] += s * lobe.color[2];
  }
}

void composite(std::size_t n, const double* l, const double* a, const double* lb,
               const double* ab, const double* bg, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = l[i] * a[i] + (1.0 - a[i]) * (lb[i] * ab[i] + (1.0 - ab[i]) * bg[i]);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{SimdLevel::Scalar, exp_neg, project, capsule_accumulate,
                                 composite};
  return table;
}

}  // namespace mirrorcap::kernels::detail
