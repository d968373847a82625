#include <cmath>
#include <cstddef>

#include "canseg/kernels.hpp"

// Reference implementations. Kept straightforward; the AVX2 variants are
// checked against these.

namespace canseg::kern {
namespace scalar {

void axpy(float a, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void affine(const float* x, float* y, float s, float b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = s * x[i] + b;
}

void add(const float* a, const float* b, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(const float* a, const float* b, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(float a, float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

double sum(const float* x, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double sumsq(const float* x, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += double(x[i]) * x[i];
  return s;
}

double dot(const float* a, const float* b, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += double(a[i]) * b[i];
  return s;
}

void leaky_relu_fwd(const float* x, float* y, float slope, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.f ? x[i] : slope * x[i];
}

void leaky_relu_bwd(const float* x, const float* gy, float* gx, float slope, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * (x[i] > 0.f ? 1.f : slope);
}

void conv3_acc(const float* src, float* dst, const float* w, int nx, int ny, int nz) {
  const std::size_t sx = std::size_t(nx) + 2;
  const std::size_t sxy = sx * (std::size_t(ny) + 2);
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y) {
      float* out = dst + (std::size_t(z) * ny + y) * nx;
      const float* base = src + std::size_t(z) * sxy + std::size_t(y) * sx;
      for (int x = 0; x < nx; ++x) {
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
  for (int kz = 0; kz < 3; ++kz)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        double acc = 0;
        for (int z = 0; z < nz; ++z)
          for (int y = 0; y < ny; ++y) {
            const float* g = go + (std::size_t(z) * ny + y) * nx;
            const float* r = src + (std::size_t(z) + kz) * sxy + (std::size_t(y) + ky) * sx + kx;
            for (int x = 0; x < nx; ++x) acc += double(g[x]) * r[x];
          }
        gw[(kz * 3 + ky) * 3 + kx] += float(acc);
      }
}

void adam_step(float* p, const float* g, float* m, float* v, std::size_t n, float lr,
               float beta1, float beta2, float eps, float bc1, float bc2, float l1, float l2) {
  for (std::size_t i = 0; i < n; ++i) {
    float gi = g[i] + l1 * (p[i] > 0.f ? 1.f : (p[i] < 0.f ? -1.f : 0.f)) + l2 * p[i];
    m[i] = beta1 * m[i] + (1.f - beta1) * gi;
    v[i] = beta2 * v[i] + (1.f - beta2) * gi * gi;
    float mhat = m[i] / bc1;
    float vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void rmsprop_step(float* p, const float* g, float* cache, std::size_t n, float lr, float rho,
                  float eps, float l1, float l2) {
  for (std::size_t i = 0; i < n; ++i) {
    float gi = g[i] + l1 * (p[i] > 0.f ? 1.f : (p[i] < 0.f ? -1.f : 0.f)) + l2 * p[i];
    cache[i] = rho * cache[i] + (1.f - rho) * gi * gi;
    p[i] -= lr * gi / (std::sqrt(cache[i]) + eps);
  }
}

}  // namespace scalar

const KernelTable& scalar_table() {
  static const KernelTable t{
      "scalar",          scalar::axpy,          scalar::affine,     scalar::add,
      scalar::mul,       scalar::scale,         scalar::sum,        scalar::sumsq,
      scalar::dot,       scalar::leaky_relu_fwd, scalar::leaky_relu_bwd,
      scalar::conv3_acc, scalar::conv3_wgrad,   scalar::adam_step,  scalar::rmsprop_step,
  };
  return t;
}

}  // namespace canseg::kern
