#pragma once

#include <cstddef>
#include <string_view>

namespace canseg::kern {

// Data-parallel inner loops used by the network and preprocessing code.
// Every entry has a scalar reference implementation and, on x86-64 with
// AVX2+FMA, a vectorized variant; the two are equivalence-tested against
// each other. Selection happens once at startup (see active()) and can be
// forced with select() or the CANSEG_KERNELS environment variable.
//
// Conventions:
//   - all buffers are contiguous float32, caller-owned, may be unaligned
//   - "acc" kernels accumulate into their destination
//   - reductions accumulate in double
//   - conv3_* operate on x-fastest volumes; src extent is dst extent + 2
//     per axis (one halo layer), so the same kernel serves zero-padded
//     "same" convolution, valid convolution, and the transposed form.
struct KernelTable {
  const char* name;

  void (*axpy)(float a, const float* x, float* y, std::size_t n);            // y += a*x
  void (*affine)(const float* x, float* y, float s, float b, std::size_t n);  // y = s*x + b
  void (*add)(const float* a, const float* b, float* out, std::size_t n);
  void (*mul)(const float* a, const float* b, float* out, std::size_t n);
  void (*scale)(float a, float* x, std::size_t n);
  double (*sum)(const float* x, std::size_t n);
  double (*sumsq)(const float* x, std::size_t n);
  double (*dot)(const float* a, const float* b, std::size_t n);
  void (*leaky_relu_fwd)(const float* x, float* y, float slope, std::size_t n);
  // gx += gy * (x > 0 ? 1 : slope)
  void (*leaky_relu_bwd)(const float* x, const float* gy, float* gx, float slope,
                         std::size_t n);

  // dst(nx,ny,nz) += correlate(src(nx+2,ny+2,nz+2), w(3,3,3))
  void (*conv3_acc)(const float* src, float* dst, const float* w27, int nx, int ny, int nz);
  // gw(3,3,3) += sum over dst grid of go * shifted src; src extent = go extent + 2
  void (*conv3_wgrad)(const float* src, const float* go, float* gw27, int nx, int ny, int nz);

  // Optimizer updates, fused with L1/L2 penalties on the parameter.
  void (*adam_step)(float* p, const float* g, float* m, float* v, std::size_t n, float lr,
                    float beta1, float beta2, float eps, float bias_c1, float bias_c2,
                    float l1, float l2);
  void (*rmsprop_step)(float* p, const float* g, float* cache, std::size_t n, float lr,
                       float rho, float eps, float l1, float l2);
};

const KernelTable& scalar_table();
bool avx2_supported();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif

/// The active table: AVX2 when the CPU supports it, else scalar.
/// CANSEG_KERNELS=scalar|avx2 overrides.
const KernelTable& active();

/// Force a variant by name ("scalar" or "avx2"); used by equivalence tests.
void select(std::string_view name);

}  // namespace canseg::kern
