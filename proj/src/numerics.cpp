#include "secla/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kernels.hpp"
#include "secla/errors.hpp"

namespace secla {

namespace {

std::string dims_str(std::size_t a, std::size_t b) {
  return std::to_string(a) + " vs " + std::to_string(b);
}

}  // namespace

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
    std::copy(row.begin(), row.end(), m.row(i).begin());
    ++i;
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  }
  return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch " + dims_str(a.size(), b.size()));
  // Four interleaved partial sums in a fixed order: vectorizable and still
  // bit-reproducible.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

LinearLayer LinearLayer::zeros(std::size_t in, std::size_t out) {
  return LinearLayer{Matrix(out, in), Vector(out, 0.0)};
}

LinearLayer LinearLayer::fan_in_uniform(std::size_t in, std::size_t out, Rng& rng) {
  LinearLayer layer = zeros(in, out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : layer.weight.values()) w = (2.0 * rng.uniform() - 1.0) * bound;
  for (double& b : layer.bias) b = (2.0 * rng.uniform() - 1.0) * bound;
  return layer;
}

Vector linear_forward(const LinearLayer& layer, std::span<const double> x) {
  if (x.size() != layer.in_dim()) {
    throw ShapeError("linear_forward: input length " + dims_str(x.size(), layer.in_dim()));
  }
  // Same summation order as the batched kernels: products summed left to
  // right, then the bias added.
  Vector y(layer.bias);
  for (std::size_t r = 0; r < layer.out_dim(); ++r) {
    const auto w = layer.weight.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < w.size(); ++c) acc += w[c] * x[c];
    y[r] += acc;
  }
  return y;
}

Vector relu(std::span<const double> x) {
  Vector y(x.begin(), x.end());
  for (double& v : y) v = v > 0.0 ? v : 0.0;
  return y;
}

std::size_t Mlp::in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
std::size_t Mlp::out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

Mlp Mlp::zeros_like(const Mlp& other) {
  Mlp z;
  z.layers.reserve(other.layers.size());
  for (const auto& l : other.layers) z.layers.push_back(LinearLayer::zeros(l.in_dim(), l.out_dim()));
  return z;
}

Mlp Mlp::fan_in_uniform(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw ContractError("Mlp::fan_in_uniform: need at least two widths");
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    mlp.layers.push_back(LinearLayer::fan_in_uniform(dims[i], dims[i + 1], rng));
  }
  return mlp;
}

void check_chain(const Mlp& mlp) {
  if (mlp.layers.empty()) throw ShapeError("mlp: no layers");
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    const auto& l = mlp.layers[i];
    if (l.bias.size() != l.out_dim()) throw ShapeError("mlp: bias length mismatch in layer " + std::to_string(i));
    if (i > 0 && mlp.layers[i - 1].out_dim() != l.in_dim()) {
      throw ShapeError("mlp: layer " + std::to_string(i) + " expects " + std::to_string(l.in_dim()) +
                       " inputs, previous layer produces " + std::to_string(mlp.layers[i - 1].out_dim()));
    }
  }
}

MlpOutput mlp_forward(const Mlp& mlp, std::span<const double> x) {
  const Vector xs[] = {Vector(x.begin(), x.end())};
  return std::move(mlp_forward_batch(mlp, xs).front());
}

Vector mlp_apply(const Mlp& mlp, std::span<const double> x) { return mlp_forward(mlp, x).y; }

namespace {

void check_backward_shapes(const Mlp& mlp, const MlpCache& cache, std::size_t dy_size, const Mlp& grads) {
  const std::size_t n = mlp.layers.size();
  if (cache.inputs.size() != n || cache.pre_activations.size() != n) {
    throw ContractError("mlp_backward: cache was produced by a different network");
  }
  if (grads.layers.size() != n) throw ShapeError("mlp_backward: gradient accumulator has wrong depth");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = mlp.layers[i];
    if (cache.inputs[i].size() != l.in_dim() || cache.pre_activations[i].size() != l.out_dim()) {
      throw ContractError("mlp_backward: cache shapes do not match layer " + std::to_string(i));
    }
    if (grads.layers[i].in_dim() != l.in_dim() || grads.layers[i].out_dim() != l.out_dim()) {
      throw ShapeError("mlp_backward: gradient accumulator shape mismatch in layer " + std::to_string(i));
    }
  }
  if (dy_size != mlp.out_dim()) throw ShapeError("mlp_backward: upstream gradient " + dims_str(dy_size, mlp.out_dim()));
}

}  // namespace

Vector mlp_backward(const Mlp& mlp, const MlpCache& cache, std::span<const double> dy, Mlp& grads) {
  const MlpCache* caches[] = {&cache};
  const Vector dys[] = {Vector(dy.begin(), dy.end())};
  return std::move(mlp_backward_batch(mlp, caches, dys, grads).front());
}

std::vector<MlpOutput> mlp_forward_batch(const Mlp& mlp, std::span<const Vector> xs) {
  using kernels::kItems;
  check_chain(mlp);
  const auto& kt = kernels::table();
  std::vector<MlpOutput> out(xs.size());
  for (std::size_t b = 0; b < xs.size(); ++b) {
    if (xs[b].size() != mlp.in_dim()) {
      throw ShapeError("mlp_forward: input length " + dims_str(xs[b].size(), mlp.in_dim()));
    }
    out[b].cache.inputs.reserve(mlp.layers.size());
    out[b].cache.pre_activations.reserve(mlp.layers.size());
    out[b].y = xs[b];
  }
  std::vector<double> xt;
  std::vector<double> z;
  for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
    const auto& layer = mlp.layers[k];
    const std::size_t in = layer.in_dim();
    const std::size_t rows = layer.out_dim();
    const bool last = k + 1 == mlp.layers.size();
    xt.resize(in * kItems);
    z.resize(rows * kItems);
    for (std::size_t b0 = 0; b0 < xs.size(); b0 += kItems) {
      const std::size_t nb = std::min(kItems, xs.size() - b0);
      std::fill(xt.begin(), xt.end(), 0.0);
      for (std::size_t b = 0; b < nb; ++b) {
        const auto& x = out[b0 + b].y;
        for (std::size_t c = 0; c < in; ++c) xt[c * kItems + b] = x[c];
      }
      kt.forward_block(layer, xt.data(), z.data());
      for (std::size_t b = 0; b < nb; ++b) {
        auto& o = out[b0 + b];
        Vector zi(rows);
        for (std::size_t r = 0; r < rows; ++r) zi[r] = z[r * kItems + b];
        o.cache.inputs.push_back(std::move(o.y));
        o.y = last ? zi : relu(zi);
        o.cache.pre_activations.push_back(std::move(zi));
      }
    }
  }
  return out;
}

std::vector<Vector> mlp_backward_batch(const Mlp& mlp, std::span<const MlpCache* const> caches,
                                       std::span<const Vector> dys, Mlp& grads) {
  using kernels::kItems;
  if (caches.size() != dys.size()) throw ShapeError("mlp_backward_batch: caches and gradients differ in count");
  for (std::size_t b = 0; b < caches.size(); ++b) check_backward_shapes(mlp, *caches[b], dys[b].size(), grads);
  const auto& kt = kernels::table();
  const std::size_t count = dys.size();
  std::vector<Vector> g(dys.begin(), dys.end());
  std::vector<const double*> g_rows(count);
  std::vector<const double*> x_rows(count);
  std::vector<double> gt;
  std::vector<double> dx;
  for (std::size_t k = mlp.layers.size(); k-- > 0;) {
    const auto& layer = mlp.layers[k];
    auto& gl = grads.layers[k];
    const std::size_t in = layer.in_dim();
    const std::size_t rows = layer.out_dim();
    if (k + 1 < mlp.layers.size()) {
      for (std::size_t b = 0; b < count; ++b) {
        const auto& z = caches[b]->pre_activations[k];
        for (std::size_t r = 0; r < rows; ++r) {
          if (!(z[r] > 0.0)) g[b][r] = 0.0;
        }
      }
    }
    for (std::size_t b = 0; b < count; ++b) {
      for (std::size_t r = 0; r < rows; ++r) gl.bias[r] += g[b][r];
      g_rows[b] = g[b].data();
      x_rows[b] = caches[b]->inputs[k].data();
    }
    kt.weight_grad(gl, g_rows, x_rows);

    std::vector<Vector> next(count, Vector(in));
    gt.resize(rows * kItems);
    dx.resize(in * kItems);
    for (std::size_t b0 = 0; b0 < count; b0 += kItems) {
      const std::size_t nb = std::min(kItems, count - b0);
      std::fill(gt.begin(), gt.end(), 0.0);
      for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t r = 0; r < rows; ++r) gt[r * kItems + b] = g[b0 + b][r];
      }
      kt.input_grad_block(layer, gt.data(), dx.data());
      for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t c = 0; c < in; ++c) next[b0 + b][c] = dx[c * kItems + b];
      }
    }
    g = std::move(next);
  }
  return g;
}

void append_parameters(Mlp& mlp, std::vector<std::span<double>>& out) {
  for (auto& l : mlp.layers) {
    out.emplace_back(l.weight.values());
    out.emplace_back(l.bias);
  }
}

void append_parameters(const Mlp& mlp, std::vector<std::span<const double>>& out) {
  for (const auto& l : mlp.layers) {
    out.emplace_back(l.weight.values());
    out.emplace_back(l.bias);
  }
}

AdamState::AdamState(std::span<const std::span<double>> params, AdamConfig config) : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m_.size()) {
    throw ShapeError("adam_step: tensor count mismatch");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size() || params[t].size() != state.m_[t].size()) {
      throw ShapeError("adam_step: tensor " + std::to_string(t) + " shape mismatch");
    }
  }
  const auto& cfg = state.config_;
  ++state.step_;
  const double step = static_cast<double>(state.step_);
  const double c1 = 1.0 - std::pow(cfg.beta1, step);
  const double c2 = 1.0 - std::pow(cfg.beta2, step);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t];
    auto g = grads[t];
    auto& m = state.m_[t];
    auto& v = state.v_[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

GradCheckResult grad_check(const Objective& objective, std::span<const double> params,
                           std::span<const double> analytic, GradCheckOptions options,
                           const PieceSignature& signature) {
  if (!(options.h > 0.0)) throw ContractError("grad_check: h must be positive");
  if (params.size() != analytic.size()) throw ShapeError("grad_check: gradient length mismatch");
  Vector x(params.begin(), params.end());
  const auto base_sig = signature ? signature(x) : std::vector<std::uint32_t>{};
  GradCheckResult result;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + options.h;
    const double fp = objective(x);
    const bool same_plus = !signature || signature(x) == base_sig;
    x[i] = orig - options.h;
    const double fm = objective(x);
    const bool same_minus = !signature || signature(x) == base_sig;
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("grad_check: objective is not finite at coordinate " + std::to_string(i));
    }
    if (!same_plus || !same_minus) {
      ++result.skipped;
      continue;
    }
    const double numeric = (fp - fm) / (2.0 * options.h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), options.floor});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(numeric - analytic[i]) / denom);
    ++result.checked;
  }
  return result;
}

}  // namespace secla
