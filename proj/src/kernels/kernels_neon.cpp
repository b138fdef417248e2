// aarch64 Advanced SIMD variant; NEON is part of the base ISA there.

#include <arm_neon.h>

#include <algorithm>
#include <cstdint>
#include <cstring>

#include "exp_coefficients.hpp"
#include "kernel_tables.hpp"

namespace mirrorcap::kernels::detail {
namespace {

constexpr std::size_t kLanes = 2;

inline float64x2_t exp_neg_f64(float64x2_t x) {
  const uint64x2_t flush = vcgtq_f64(x, vdupq_n_f64(expc::kCutoff));
  float64x2_t y = vsubq_f64(vdupq_n_f64(0.0), x);
  y = vmaxq_f64(y, vdupq_n_f64(-expc::kCutoff));

  const float64x2_t n = vrndnq_f64(vmulq_f64(y, vdupq_n_f64(expc::kLog2e)));
  float64x2_t r = vsubq_f64(y, vmulq_f64(n, vdupq_n_f64(expc::kLn2Hi)));
  r = vsubq_f64(r, vmulq_f64(n, vdupq_n_f64(expc::kLn2Lo)));

  float64x2_t p = vdupq_n_f64(expc::kTaylor[0]);
  for (int k = 1; k < 14; ++k) {
    p = vaddq_f64(vmulq_f64(p, r), vdupq_n_f64(expc::kTaylor[k]));
  }

  const int64x2_t ni = vcvtq_s64_f64(n);
  const int64x2_t bits = vshlq_n_s64(vaddq_s64(ni, vdupq_n_s64(1023)), 52);
  const float64x2_t res = vmulq_f64(p, vreinterpretq_f64_s64(bits));
  return vreinterpretq_f64_u64(vbicq_u64(vreinterpretq_u64_f64(res), flush));
}

void exp_neg(std::size_t n, const double* x, double* out) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    vst1q_f64(out + i, exp_neg_f64(vld1q_f64(x + i)));
  }
  if (i < n) {
    double buf[kLanes] = {x[i], 0.0};
    vst1q_f64(buf, exp_neg_f64(vld1q_f64(buf)));
    out[i] = buf[0];
  }
}

void project(std::size_t n, const double* x, const double* y, const double* z, double f,
             double o1, double o2, double* u, double* v) {
  const float64x2_t vf = vdupq_n_f64(f);
  const float64x2_t vo1 = vdupq_n_f64(o1);
  const float64x2_t vo2 = vdupq_n_f64(o2);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const float64x2_t vz = vld1q_f64(z + i);
    vst1q_f64(u + i, vaddq_f64(vdivq_f64(vmulq_f64(vf, vld1q_f64(x + i)), vz), vo1));
    vst1q_f64(v + i, vaddq_f64(vdivq_f64(vmulq_f64(vf, vld1q_f64(y + i)), vz), vo2));
  }
  for (; i < n; ++i) {
    u[i] = f * x[i] / z[i] + o1;
    v[i] = f * y[i] / z[i] + o2;
  }
}

void capsule_accumulate(std::size_t n, const double* x, const double* y, const double* z,
                        const CapsuleLobe& lobe, double* sigma, double* sr, double* sg,
                        double* sb) {
  const float64x2_t ex = vdupq_n_f64(lobe.end[0]);
  const float64x2_t ey = vdupq_n_f64(lobe.end[1]);
  const float64x2_t ez = vdupq_n_f64(lobe.end[2]);
  const float64x2_t inv_len2 = vdupq_n_f64(lobe.inv_len2);
  const float64x2_t inv_r2 = vdupq_n_f64(lobe.inv_radius2);
  const float64x2_t smax = vdupq_n_f64(lobe.sigma_max);
  const float64x2_t zero = vdupq_n_f64(0.0);
  const float64x2_t one = vdupq_n_f64(1.0);

  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const float64x2_t px = vld1q_f64(x + i);
    const float64x2_t py = vld1q_f64(y + i);
    const float64x2_t pz = vld1q_f64(z + i);
    float64x2_t dot = vaddq_f64(vmulq_f64(px, ex), vmulq_f64(py, ey));
    dot = vaddq_f64(dot, vmulq_f64(pz, ez));
    float64x2_t t = vmulq_f64(dot, inv_len2);
    t = vminq_f64(vmaxq_f64(t, zero), one);
    const float64x2_t dx = vsubq_f64(px, vmulq_f64(t, ex));
    const float64x2_t dy = vsubq_f64(py, vmulq_f64(t, ey));
    const float64x2_t dz = vsubq_f64(pz, vmulq_f64(t, ez));
    float64x2_t d2 = vaddq_f64(vmulq_f64(dx, dx), vmulq_f64(dy, dy));
    d2 = vaddq_f64(d2, vmulq_f64(dz, dz));
    const float64x2_t w = vmaxq_f64(vsubq_f64(one, vmulq_f64(d2, inv_r2)), zero);
    const float64x2_t w2 = vmulq_f64(w, w);
    const float64x2_t s = vmulq_f64(smax, vmulq_f64(w2, w2));
    vst1q_f64(sigma + i, vaddq_f64(vld1q_f64(sigma + i), s));
    vst1q_f64(sr + i, vaddq_f64(vld1q_f64(sr + i), vmulq_n_f64(s, lobe.color[0])));
    vst1q_f64(sg + i, vaddq_f64(vld1q_f64(sg + i), vmulq_n_f64(s, lobe.color[1])));
    vst1q_f64(sb + i, vaddq_f64(vld1q_f64(sb + i), vmulq_n_f64(s, lobe.color[2])));
  }
  for (; i < n; ++i) {
    double t = (x[i] * lobe.end[0] + y[i] * lobe.end[1] + z[i] * lobe.end[2]) * lobe.inv_len2;
    t = std::min(std::max(t, 0.0), 1.0);
    const double dx = x[i] - t * lobe.end[0];
    const double dy = y[i] - t * lobe.end[1];
    const double dz = z[i] - t * lobe.end[2];
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
  const float64x2_t one = vdupq_n_f64(1.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const float64x2_t va = vld1q_f64(a + i);
    const float64x2_t vab = vld1q_f64(ab + i);
    const float64x2_t back = vaddq_f64(vmulq_f64(vld1q_f64(lb + i), vab),
                                       vmulq_f64(vsubq_f64(one, vab), vld1q_f64(bg + i)));
    const float64x2_t front = vmulq_f64(vld1q_f64(l + i), va);
    vst1q_f64(out + i, vaddq_f64(front, vmulq_f64(vsubq_f64(one, va), back)));
  }
  for (; i < n; ++i) {
    out[i] = l[i] * a[i] + (1.0 - a[i]) * (lb[i] * ab[i] + (1.0 - ab[i]) * bg[i]);
  }
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable table{SimdLevel::Neon, exp_neg, project, capsule_accumulate,
                                 composite};
  return table;
}

}  // namespace mirrorcap::kernels::detail
