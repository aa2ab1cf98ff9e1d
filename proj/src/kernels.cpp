#define SECLA_KERNEL_NS generic
#define SECLA_KERNEL_ROWS 4
#include "kernels_impl.inc"

#include <cstdlib>
#include <functional>
#include <string_view>

namespace secla::kernels {

#ifdef SECLA_HAVE_AVX2
namespace avx2 {
const Table& kernel_table();
}
#endif

const Table& table() {
#ifdef SECLA_HAVE_AVX2
  // SECLA_KERNELS=generic forces the portable build (results are identical).
  static const Table& chosen = [] {
    const char* force = std::getenv("SECLA_KERNELS");
    const bool generic_only = force && std::string_view(force) == "generic";
    return !generic_only && __builtin_cpu_supports("avx2") ? std::cref(avx2::kernel_table())
                                                           : std::cref(generic::kernel_table());
  }();
  return chosen;
#else
  return generic::kernel_table();
#endif
}

}  // namespace secla::kernels
