#pragma once

// Dense kernels behind mlp_forward_batch / mlp_backward_batch.  Inputs are
// processed in blocks of kItems, interleaved so that element b of a block sits
// at [i * kItems + b].  Every output element is a left-to-right sum over its
// reduction index, so the result does not depend on blocking or on which
// instruction set the kernels were compiled for.

#include <cstddef>
#include <span>

#include "secla/numerics.hpp"

namespace secla::kernels {

inline constexpr std::size_t kItems = 4;

struct Table {
  // z[r * kItems + b] = bias[r] + sum_c w[r][c] * xt[c * kItems + b]
  void (*forward_block)(const LinearLayer& layer, const double* xt, double* z);
  // dx[c * kItems + b] = sum_r w[r][c] * gt[r * kItems + b]
  void (*input_grad_block)(const LinearLayer& layer, const double* gt, double* dx);
  // grads.weight[r][c] += g[b][r] * x[b][c] for b = 0, 1, ... (zero g[b][r] skipped)
  void (*weight_grad)(LinearLayer& grads, std::span<const double* const> g, std::span<const double* const> x);
};

// Picks the widest implementation the CPU supports.
const Table& table();

}  // namespace secla::kernels
