#include "canseg/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

namespace canseg::kern {
namespace avx2 {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

inline float hsum(__m256 v) {
  __m128 lo = _mm_add_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}

void axpy(float a, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void affine(const float* x, float* y, float s, float b, std::size_t n) {
  const __m256 vs = _mm256_set1_ps(s), vb = _mm256_set1_ps(b);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(vs, _mm256_loadu_ps(x + i), vb));
  for (; i < n; ++i) y[i] = s * x[i] + b;
}

void add(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(float a, float* x, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

// Reductions widen each lane to double before accumulating so the result
// tracks the scalar reference to ~1e-12 relative.
void widen_acc(__m256 v, __m256d& lo, __m256d& hi) {
  lo = _mm256_add_pd(lo, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
  hi = _mm256_add_pd(hi, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
}

double sum(const float* x, std::size_t n) {
  __m256d lo = _mm256_setzero_pd(), hi = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) widen_acc(_mm256_loadu_ps(x + i), lo, hi);
  double s = hsum(_mm256_add_pd(lo, hi));
  for (; i < n; ++i) s += x[i];
  return s;
}

double sumsq(const float* x, std::size_t n) {
  __m256d lo = _mm256_setzero_pd(), hi = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m128 a = _mm_loadu_ps(x + i), b = _mm_loadu_ps(x + i + 4);
    __m256d da = _mm256_cvtps_pd(a), db = _mm256_cvtps_pd(b);
    lo = _mm256_fmadd_pd(da, da, lo);
    hi = _mm256_fmadd_pd(db, db, hi);
  }
  double s = hsum(_mm256_add_pd(lo, hi));
  for (; i < n; ++i) s += double(x[i]) * x[i];
  return s;
}

double dot(const float* a, const float* b, std::size_t n) {
  __m256d lo = _mm256_setzero_pd(), hi = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    lo = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm_loadu_ps(a + i)),
                         _mm256_cvtps_pd(_mm_loadu_ps(b + i)), lo);
    hi = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm_loadu_ps(a + i + 4)),
                         _mm256_cvtps_pd(_mm_loadu_ps(b + i + 4)), hi);
  }
  double s = hsum(_mm256_add_pd(lo, hi));
  for (; i < n; ++i) s += double(a[i]) * b[i];
  return s;
}

void leaky_relu_fwd(const float* x, float* y, float slope, std::size_t n) {
  const __m256 vs = _mm256_set1_ps(slope), zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    __m256 neg = _mm256_mul_ps(vs, v);
    __m256 pos_mask = _mm256_cmp_ps(v, zero, _CMP_GT_OQ);
    _mm256_storeu_ps(y + i, _mm256_blendv_ps(neg, v, pos_mask));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.f ? x[i] : slope * x[i];
}

void leaky_relu_bwd(const float* x, const float* gy, float* gx, float slope, std::size_t n) {
  const __m256 vs = _mm256_set1_ps(slope), one = _mm256_set1_ps(1.f),
               zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    __m256 d = _mm256_blendv_ps(vs, one, _mm256_cmp_ps(v, zero, _CMP_GT_OQ));
    _mm256_storeu_ps(gx + i,
                     _mm256_fmadd_ps(_mm256_loadu_ps(gy + i), d, _mm256_loadu_ps(gx + i)));
  }
  for (; i < n; ++i) gx[i] += gy[i] * (x[i] > 0.f ? 1.f : slope);
}

// One output row tile held in registers across all 27 taps.
template <int NV>
inline void conv3_row_tile(const float* base, std::size_t sx, std::size_t sxy, const float* w,
                           float* out) {
  __m256 acc[NV];
  for (int j = 0; j < NV; ++j) acc[j] = _mm256_loadu_ps(out + 8 * j);
  for (int kz = 0; kz < 3; ++kz)
    for (int ky = 0; ky < 3; ++ky) {
      const float* r = base + kz * sxy + ky * sx;
      const float* wp = w + (kz * 3 + ky) * 3;
      const __m256 w0 = _mm256_set1_ps(wp[0]);
      const __m256 w1 = _mm256_set1_ps(wp[1]);
      const __m256 w2 = _mm256_set1_ps(wp[2]);
      for (int j = 0; j < NV; ++j) {
        __m256 a = acc[j];
        a = _mm256_fmadd_ps(w0, _mm256_loadu_ps(r + 8 * j), a);
        a = _mm256_fmadd_ps(w1, _mm256_loadu_ps(r + 8 * j + 1), a);
        a = _mm256_fmadd_ps(w2, _mm256_loadu_ps(r + 8 * j + 2), a);
        acc[j] = a;
      }
    }
  for (int j = 0; j < NV; ++j) _mm256_storeu_ps(out + 8 * j, acc[j]);
}

void conv3_acc(const float* src, float* dst, const float* w, int nx, int ny, int nz) {
  const std::size_t sx = std::size_t(nx) + 2;
  const std::size_t sxy = sx * (std::size_t(ny) + 2);
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y) {
      float* out = dst + (std::size_t(z) * ny + y) * nx;
      const float* base = src + std::size_t(z) * sxy + std::size_t(y) * sx;
      int x = 0;
      for (; x + 64 <= nx; x += 64) conv3_row_tile<8>(base + x, sx, sxy, w, out + x);
      for (; x + 32 <= nx; x += 32) conv3_row_tile<4>(base + x, sx, sxy, w, out + x);
      for (; x + 16 <= nx; x += 16) conv3_row_tile<2>(base + x, sx, sxy, w, out + x);
      for (; x + 8 <= nx; x += 8) conv3_row_tile<1>(base + x, sx, sxy, w, out + x);
      for (; x < nx; ++x) {
        float acc = out[x];
        for (int kz = 0; kz < 3; ++kz)
          for (int ky = 0; ky < 3; ++ky) {
            const float* r = base + kz * sxy + ky * sx + x;
            const float* wp = w + (kz * 3 + ky) * 3;
            acc += wp[0] * r[0] + wp[1] * r[1] + wp[2] * r[2];
          }
        out[x] = acc;
      }
    }
}

void conv3_wgrad(const float* src, const float* go, float* gw, int nx, int ny, int nz) {
  const std::size_t sx = std::size_t(nx) + 2;
  const std::size_t sxy = sx * (std::size_t(ny) + 2);
  // One z-offset per pass keeps nine (ky,kx) accumulators in registers;
  // rows are reduced into doubles to bound drift on large grids.
  for (int kz = 0; kz < 3; ++kz) {
    double acc[9] = {0};
    for (int z = 0; z < nz; ++z)
      for (int y = 0; y < ny; ++y) {
        const float* g = go + (std::size_t(z) * ny + y) * nx;
        const float* rows[3];
        for (int ky = 0; ky < 3; ++ky)
          rows[ky] = src + (std::size_t(z) + kz) * sxy + (std::size_t(y) + ky) * sx;
        __m256 racc[9];
        for (auto& r : racc) r = _mm256_setzero_ps();
        int x = 0;
        for (; x + 8 <= nx; x += 8) {
          const __m256 gv = _mm256_loadu_ps(g + x);
          for (int ky = 0; ky < 3; ++ky) {
            racc[ky * 3 + 0] = _mm256_fmadd_ps(gv, _mm256_loadu_ps(rows[ky] + x), racc[ky * 3 + 0]);
            racc[ky * 3 + 1] =
                _mm256_fmadd_ps(gv, _mm256_loadu_ps(rows[ky] + x + 1), racc[ky * 3 + 1]);
            racc[ky * 3 + 2] =
                _mm256_fmadd_ps(gv, _mm256_loadu_ps(rows[ky] + x + 2), racc[ky * 3 + 2]);
          }
        }
        for (int t = 0; t < 9; ++t) acc[t] += hsum(racc[t]);
        for (; x < nx; ++x)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
              acc[ky * 3 + kx] += double(g[x]) * rows[ky][x + kx];
      }
    for (int t = 0; t < 9; ++t) gw[kz * 9 + t] += float(acc[t]);
  }
}

inline __m256 sign_mask_mul(__m256 p, __m256 l1) {
  // l1 * sign(p), with sign(0) = 0
  const __m256 zero = _mm256_setzero_ps();
  __m256 pos = _mm256_and_ps(_mm256_cmp_ps(p, zero, _CMP_GT_OQ), l1);
  __m256 neg = _mm256_and_ps(_mm256_cmp_ps(p, zero, _CMP_LT_OQ), l1);
  return _mm256_sub_ps(pos, neg);
}

void adam_step(float* p, const float* g, float* m, float* v, std::size_t n, float lr,
               float beta1, float beta2, float eps, float bc1, float bc2, float l1, float l2) {
  const __m256 vb1 = _mm256_set1_ps(beta1), vb1c = _mm256_set1_ps(1.f - beta1);
  const __m256 vb2 = _mm256_set1_ps(beta2), vb2c = _mm256_set1_ps(1.f - beta2);
  const __m256 veps = _mm256_set1_ps(eps), vlr = _mm256_set1_ps(lr);
  const __m256 vl1 = _mm256_set1_ps(l1), vl2 = _mm256_set1_ps(l2);
  const __m256 ibc1 = _mm256_set1_ps(1.f / bc1), ibc2 = _mm256_set1_ps(1.f / bc2);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 pv = _mm256_loadu_ps(p + i);
    __m256 gv = _mm256_loadu_ps(g + i);
    gv = _mm256_add_ps(gv, _mm256_fmadd_ps(vl2, pv, sign_mask_mul(pv, vl1)));
    __m256 mv = _mm256_fmadd_ps(vb1, _mm256_loadu_ps(m + i), _mm256_mul_ps(vb1c, gv));
    __m256 vv = _mm256_fmadd_ps(vb2, _mm256_loadu_ps(v + i),
                                _mm256_mul_ps(vb2c, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    __m256 mhat = _mm256_mul_ps(mv, ibc1);
    __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(_mm256_mul_ps(vv, ibc2)), veps);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(pv, _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom)));
  }
  for (; i < n; ++i) {
    float gi = g[i] + l1 * (p[i] > 0.f ? 1.f : (p[i] < 0.f ? -1.f : 0.f)) + l2 * p[i];
    m[i] = beta1 * m[i] + (1.f - beta1) * gi;
    v[i] = beta2 * v[i] + (1.f - beta2) * gi * gi;
    p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

void rmsprop_step(float* p, const float* g, float* cache, std::size_t n, float lr, float rho,
                  float eps, float l1, float l2) {
  const __m256 vrho = _mm256_set1_ps(rho), vrhoc = _mm256_set1_ps(1.f - rho);
  const __m256 veps = _mm256_set1_ps(eps), vlr = _mm256_set1_ps(lr);
  const __m256 vl1 = _mm256_set1_ps(l1), vl2 = _mm256_set1_ps(l2);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 pv = _mm256_loadu_ps(p + i);
    __m256 gv = _mm256_loadu_ps(g + i);
    gv = _mm256_add_ps(gv, _mm256_fmadd_ps(vl2, pv, sign_mask_mul(pv, vl1)));
    __m256 cv = _mm256_fmadd_ps(vrho, _mm256_loadu_ps(cache + i),
                                _mm256_mul_ps(vrhoc, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(cache + i, cv);
    __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(cv), veps);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(pv, _mm256_div_ps(_mm256_mul_ps(vlr, gv), denom)));
  }
  for (; i < n; ++i) {
    float gi = g[i] + l1 * (p[i] > 0.f ? 1.f : (p[i] < 0.f ? -1.f : 0.f)) + l2 * p[i];
    cache[i] = rho * cache[i] + (1.f - rho) * gi * gi;
    p[i] -= lr * gi / (std::sqrt(cache[i]) + eps);
  }
}

}  // namespace avx2

const KernelTable& avx2_table() {
  static const KernelTable t{
      "avx2",          avx2::axpy,          avx2::affine,     avx2::add,
      avx2::mul,       avx2::scale,         avx2::sum,        avx2::sumsq,
      avx2::dot,       avx2::leaky_relu_fwd, avx2::leaky_relu_bwd,
      avx2::conv3_acc, avx2::conv3_wgrad,   avx2::adam_step,  avx2::rmsprop_step,
  };
  return t;
}

}  // namespace canseg::kern

#endif  // x86-64
