#include <cstdlib>
#include <stdexcept>
#include <string>

#include "canseg/kernels.hpp"

namespace canseg::kern {

namespace {
const KernelTable* g_active = nullptr;

const KernelTable* pick_default() {
  if (const char* env = std::getenv("CANSEG_KERNELS")) {
    std::string want(env);
    if (want == "scalar") return &scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
    if (want == "avx2" && avx2_supported()) return &avx2_table();
#endif
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2_supported()) return &avx2_table();
#endif
  return &scalar_table();
}
}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& active() {
  if (!g_active) g_active = pick_default();
  return *g_active;
}

void select(std::string_view name) {
  if (name == "scalar") {
    g_active = &scalar_table();
    return;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (name == "avx2") {
    if (!avx2_supported()) throw std::runtime_error("kernels: avx2 not supported on this CPU");
    g_active = &avx2_table();
    return;
  }
#endif
  throw std::invalid_argument("kernels: unknown variant '" + std::string(name) + "'");
}

}  // namespace canseg::kern
