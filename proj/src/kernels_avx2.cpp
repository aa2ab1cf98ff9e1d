// Built with -mavx2 (and without FMA, see CMakeLists.txt).
#define SECLA_KERNEL_NS avx2
#define SECLA_KERNEL_ROWS 8
#include "kernels_impl.inc"
