#include "din/simd.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace din::simd {
namespace {

Isa detect() {
  if (const char* env = std::getenv("DIN_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Isa::kScalar;
    if (v == "avx2" && avx2_kernels() && cpu_has_avx2()) return Isa::kAvx2;
  }
  return (avx2_kernels() && cpu_has_avx2()) ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

const Kernels& active() {
  return current().load(std::memory_order_relaxed) == Isa::kAvx2 ? *avx2_kernels()
                                                                  : scalar_kernels();
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (isa == Isa::kAvx2 && !(avx2_kernels() && cpu_has_avx2())) isa = Isa::kScalar;
  current().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

}  // namespace din::simd
