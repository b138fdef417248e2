// Compiled with -mavx2. Only reached after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <cstring>

#include "exp_coefficients.hpp"
#include "kernel_tables.hpp"

namespace mirrorcap::kernels::detail {
namespace {

constexpr std::size_t kLanes = 4;

inline __m256d exp_neg_pd(__m256d x) {
  const __m256d flush = _mm256_cmp_pd(x, _mm256_set1_pd(expc::kCutoff), _CMP_GT_OQ);
  __m256d y = _mm256_sub_pd(_mm256_setzero_pd(), x);
  y = _mm256_max_pd(y, _mm256_set1_pd(-expc::kCutoff));

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(y, _mm256_set1_pd(expc::kLog2e)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_sub_pd(y, _mm256_mul_pd(n, _mm256_set1_pd(expc::kLn2Hi)));
  r = _mm256_sub_pd(r, _mm256_mul_pd(n, _mm256_set1_pd(expc::kLn2Lo)));

  __m256d p = _mm256_set1_pd(expc::kTaylor[0]);
  for (int k = 1; k < 14; ++k) {
    p = _mm256_add_pd(_mm256_mul_pd(p, r), _mm256_set1_pd(expc::kTaylor[k]));
  }

  const __m256i ni = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(n));
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(ni, _mm256_set1_epi64x(1023)), 52);
  const __m256d res = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
  return _mm256_andnot_pd(flush, res);
}

void exp_neg(std::size_t n, const double* x, double* out) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(out + i, exp_neg_pd(_mm256_loadu_pd(x + i)));
  }
  if (i < n) {
    alignas(32) double buf[kLanes] = {0, 0, 0, 0};
    std::memcpy(buf, x + i, (n - i) * sizeof(double));
    _mm256_store_pd(buf, exp_neg_pd(_mm256_load_pd(buf)));
    std::memcpy(out + i, buf, (n - i) * sizeof(double));
  }
}

void project(std::size_t n, const double* x, const double* y, const double* z, double f,
             double o1, double o2, double* u, double* v) {
  const __m256d vf = _mm256_set1_pd(f);
  const __m256d vo1 = _mm256_set1_pd(o1);
  const __m256d vo2 = _mm256_set1_pd(o2);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d vz = _mm256_loadu_pd(z + i);
    const __m256d vx = _mm256_mul_pd(vf, _mm256_loadu_pd(x + i));
    const __m256d vy = _mm256_mul_pd(vf, _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(u + i, _mm256_add_pd(_mm256_div_pd(vx, vz), vo1));
    _mm256_storeu_pd(v + i, _mm256_add_pd(_mm256_div_pd(vy, vz), vo2));
  }
  for (; i < n; ++i) {
    u[i] = f * x[i] / z[i] + o1;
    v[i] = f * y[i] / z[i] + o2;
  }
}

void capsule_accumulate(std::size_t n, const double* x, const double* y, const double* z,
                        const CapsuleLobe& lobe, double* sigma, double* sr, double* sg,
                        double* sb) {
  const __m256d ex = _mm256_set1_pd(lobe.end[0]);
  const __m256d ey = _mm256_set1_pd(lobe.end[1]);
  const __m256d ez = _mm256_set1_pd(lobe.end[2]);
  const __m256d inv_len2 = _mm256_set1_pd(lobe.inv_len2);
  const __m256d inv_r2 = _mm256_set1_pd(lobe.inv_radius2);
  const __m256d smax = _mm256_set1_pd(lobe.sigma_max);
  const __m256d cr = _mm256_set1_pd(lobe.color[0]);
  const __m256d cg = _mm256_set1_pd(lobe.color[1]);
  const __m256d cb = _mm256_set1_pd(lobe.color[2]);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);

  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d px = _mm256_loadu_pd(x + i);
    const __m256d py = _mm256_loadu_pd(y + i);
    const __m256d pz = _mm256_loadu_pd(z + i);
    __m256d dot = _mm256_add_pd(_mm256_mul_pd(px, ex), _mm256_mul_pd(py, ey));
    dot = _mm256_add_pd(dot, _mm256_mul_pd(pz, ez));
    __m256d t = _mm256_mul_pd(dot, inv_len2);
    t = _mm256_min_pd(_mm256_max_pd(t, zero), one);
    const __m256d dx = _mm256_sub_pd(px, _mm256_mul_pd(t, ex));
    const __m256d dy = _mm256_sub_pd(py, _mm256_mul_pd(t, ey));
    const __m256d dz = _mm256_sub_pd(pz, _mm256_mul_pd(t, ez));
    __m256d d2 = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
    d2 = _mm256_add_pd(d2, _mm256_mul_pd(dz, dz));
    const __m256d w = _mm256_max_pd(_mm256_sub_pd(one, _mm256_mul_pd(d2, inv_r2)), zero);
    const __m256d w2 = _mm256_mul_pd(w, w);
    const __m256d s = _mm256_mul_pd(smax, _mm256_mul_pd(w2, w2));
    _mm256_storeu_pd(sigma + i, _mm256_add_pd(_mm256_loadu_pd(sigma + i), s));
    _mm256_storeu_pd(sr + i, _mm256_add_pd(_mm256_loadu_pd(sr + i), _mm256_mul_pd(s, cr)));
    _mm256_storeu_pd(sg + i, _mm256_add_pd(_mm256_loadu_pd(sg + i), _mm256_mul_pd(s, cg)));
    _mm256_storeu_pd(sb + i, _mm256_add_pd(_mm256_loadu_pd(sb + i), _mm256_mul_pd(s, cb)));
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
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d va = _mm256_loadu_pd(a + i);
    const __m256d vab = _mm256_loadu_pd(ab + i);
    const __m256d back = _mm256_add_pd(_mm256_mul_pd(_mm256_loadu_pd(lb + i), vab),
                                       _mm256_mul_pd(_mm256_sub_pd(one, vab),
                                                     _mm256_loadu_pd(bg + i)));
    const __m256d front = _mm256_mul_pd(_mm256_loadu_pd(l + i), va);
    _mm256_storeu_pd(out + i, _mm256_add_pd(front, _mm256_mul_pd(_mm256_sub_pd(one, va), back)));
  }
  for (; i < n; ++i) {
    out[i] = l[i] * a[i] + (1.0 - a[i]) * (lb[i] * ab[i] + (1.0 - ab[i]) * bg[i]);
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{SimdLevel::Avx2, exp_neg, project, capsule_accumulate,
                                 composite};
  return table;
}

}  // namespace mirrorcap::kernels::detail
