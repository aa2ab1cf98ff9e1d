#include "secla/tape.hpp"

#include <algorithm>
#include <iterator>
#include <string>
#include <thread>

#include "secla/errors.hpp"

namespace secla {

std::size_t ProjectionTape::add_face(std::span<const double> face) {
  if (face.size() != stack_->dims.face_dim) {
    throw ShapeError("ProjectionTape: face has " + std::to_string(face.size()) + " dims, model expects " +
                     std::to_string(stack_->dims.face_dim));
  }
  items_.push_back(Item{false, Vector(face.begin(), face.end()), {}, {}, {}, {}});
  forwarded_ = false;
  return items_.size() - 1;
}

std::size_t ProjectionTape::add_name(std::span<const double> name) {
  if (name.size() != stack_->dims.name_dim) {
    throw ShapeError("ProjectionTape: name has " + std::to_string(name.size()) + " dims, model expects " +
                     std::to_string(stack_->dims.name_dim));
  }
  items_.push_back(Item{true, Vector(name.begin(), name.end()), {}, {}, {}, {}});
  forwarded_ = false;
  return items_.size() - 1;
}

namespace {

// Runs mlp_forward_batch over contiguous slices on `workers` threads.  Each
// input's result does not depend on the slicing.
std::vector<MlpOutput> forward_parallel(const Mlp& mlp, const std::vector<Vector>& xs, std::size_t workers) {
  workers = std::max<std::size_t>(1, std::min(workers, xs.size()));
  if (workers == 1) return mlp_forward_batch(mlp, xs);
  std::vector<std::vector<MlpOutput>> parts(workers);
  std::vector<std::thread> pool;
  const std::size_t chunk = (xs.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = std::min(xs.size(), w * chunk);
    const std::size_t hi = std::min(xs.size(), lo + chunk);
    pool.emplace_back([&, w, lo, hi] {
      parts[w] = mlp_forward_batch(mlp, std::span<const Vector>(xs).subspan(lo, hi - lo));
    });
  }
  for (auto& t : pool) t.join();
  std::vector<MlpOutput> out;
  out.reserve(xs.size());
  for (auto& p : parts) std::move(p.begin(), p.end(), std::back_inserter(out));
  return out;
}

}  // namespace

void ProjectionTape::forward(std::size_t workers) {
  std::vector<std::size_t> names;
  std::vector<Vector> name_inputs;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].is_name) {
      names.push_back(i);
      name_inputs.push_back(items_[i].input);
    }
  }
  auto hops = forward_parallel(stack_->name_projector, name_inputs, workers);

  // Inputs of the common projector(s): raw faces, projected names.
  std::vector<std::size_t> common_ids;
  std::vector<Vector> common_inputs;
  std::vector<std::size_t> name_common_ids;
  std::vector<Vector> name_common_inputs;
  std::size_t next_name = 0;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    auto& item = items_[i];
    if (item.is_name) {
      auto& hop = hops[next_name++];
      item.name_cache = std::move(hop.cache);
      if (stack_->dims.shared_common) {
        common_ids.push_back(i);
        common_inputs.push_back(std::move(hop.y));
      } else {
        name_common_ids.push_back(i);
        name_common_inputs.push_back(std::move(hop.y));
      }
    } else {
      common_ids.push_back(i);
      common_inputs.push_back(item.input);
    }
  }
  const auto finish = [this](const std::vector<std::size_t>& ids, std::vector<MlpOutput> outs) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      auto& item = items_[ids[k]];
      item.common_cache = std::move(outs[k].cache);
      item.projected = std::move(outs[k].y);
      item.grad.assign(item.projected.size(), 0.0);
    }
  };
  finish(common_ids, forward_parallel(stack_->common, common_inputs, workers));
  if (!name_common_ids.empty()) {
    finish(name_common_ids, forward_parallel(stack_->name_common, name_common_inputs, workers));
  }
  forwarded_ = true;
}

std::span<const double> ProjectionTape::projected(std::size_t id) const {
  if (!forwarded_) throw ContractError("ProjectionTape: forward() has not run");
  return items_.at(id).projected;
}

void ProjectionTape::accumulate(std::size_t id, std::span<const double> v, double scale) {
  if (!forwarded_) throw ContractError("ProjectionTape: forward() has not run");
  auto& g = items_.at(id).grad;
  if (v.size() != g.size()) throw ShapeError("ProjectionTape::accumulate: length mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * v[i];
}

void ProjectionTape::backward(ProjectorStack& grads) const {
  if (!forwarded_) throw ContractError("ProjectionTape: forward() has not run");
  const bool shared = stack_->dims.shared_common;
  std::vector<std::size_t> common_ids;
  std::vector<std::size_t> name_common_ids;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& g = items_[i].grad;
    if (std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; })) continue;
    (items_[i].is_name && !shared ? name_common_ids : common_ids).push_back(i);
  }
  // Returns the input gradients, in `ids` order.
  const auto run = [this](const Mlp& mlp, Mlp& acc, const std::vector<std::size_t>& ids) {
    std::vector<const MlpCache*> caches;
    std::vector<Vector> dys;
    for (const auto id : ids) {
      caches.push_back(&items_[id].common_cache);
      dys.push_back(items_[id].grad);
    }
    return mlp_backward_batch(mlp, caches, dys, acc);
  };
  const auto d_common = run(stack_->common, grads.common, common_ids);
  std::vector<Vector> d_name_common;
  if (!name_common_ids.empty()) d_name_common = run(stack_->name_common, grads.name_common, name_common_ids);

  std::vector<const MlpCache*> hop_caches;
  std::vector<Vector> hop_grads;
  for (std::size_t k = 0; k < common_ids.size(); ++k) {
    if (!items_[common_ids[k]].is_name) continue;
    hop_caches.push_back(&items_[common_ids[k]].name_cache);
    hop_grads.push_back(d_common[k]);
  }
  for (std::size_t k = 0; k < name_common_ids.size(); ++k) {
    hop_caches.push_back(&items_[name_common_ids[k]].name_cache);
    hop_grads.push_back(d_name_common[k]);
  }
  if (!hop_caches.empty()) mlp_backward_batch(stack_->name_projector, hop_caches, hop_grads, grads.name_projector);
}

void ProjectionTape::append_relu_pattern(std::vector<std::uint32_t>& out) const {
  const auto append = [&out](const MlpCache& cache) {
    // The last layer has no activation.
    for (std::size_t k = 0; k + 1 < cache.pre_activations.size(); ++k) {
      for (const double z : cache.pre_activations[k]) out.push_back(z > 0.0 ? 1u : 0u);
    }
  };
  for (const auto& item : items_) append(item.common_cache);
}

SetSimilarity set_similarity(const ProjectionTape& tape, const ItemSet& from, const ItemSet& to) {
  if (from.empty() || to.empty()) throw ContractError("set_similarity: empty item set");
  SetSimilarity sim;
  sim.argmax.resize(from.size());
  double total = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    const auto x = tape.projected(from[i]);
    double best = dot(x, tape.projected(to[0]));
    std::size_t best_j = 0;
    for (std::size_t j = 1; j < to.size(); ++j) {
      const double s = dot(x, tape.projected(to[j]));
      if (s > best) {
        best = s;
        best_j = j;
      }
    }
    sim.argmax[i] = best_j;
    total += best;
  }
  sim.value = total / static_cast<double>(from.size());
  return sim;
}

void set_similarity_backward(ProjectionTape& tape, const ItemSet& from, const ItemSet& to,
                             const SetSimilarity& sim, double upstream) {
  if (sim.argmax.size() != from.size()) throw ContractError("set_similarity_backward: stale similarity record");
  if (upstream == 0.0) return;
  const double g = upstream / static_cast<double>(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    const std::size_t j = to.at(sim.argmax[i]);
    tape.accumulate(from[i], tape.projected(j), g);
    tape.accumulate(j, tape.projected(from[i]), g);
  }
}

}  // namespace secla
