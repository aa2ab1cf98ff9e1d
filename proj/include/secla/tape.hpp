#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "secla/model.hpp"

namespace secla {

// Records the projection of every face and name touched by one minibatch so
// that gradients with respect to projected vectors can be pushed back into the
// projector parameters afterwards.
//
// Usage: add_face/add_name, then forward(), then read projected() and call
// accumulate() from the loss code, then backward().
class ProjectionTape {
 public:
  explicit ProjectionTape(const ProjectorStack& stack) : stack_(&stack) {}

  std::size_t add_face(std::span<const double> face);
  std::size_t add_name(std::span<const double> name);

  // Projects every registered item.  Items are independent, so the work is
  // split across `workers` threads without affecting the result.
  void forward(std::size_t workers = 1);

  std::size_t size() const { return items_.size(); }
  bool is_name(std::size_t id) const { return items_.at(id).is_name; }
  std::span<const double> projected(std::size_t id) const;

  // grad[id] += scale * v
  void accumulate(std::size_t id, std::span<const double> v, double scale);

  // Adds d(loss)/d(params) into `grads`, which must be shaped like the stack.
  // Items are visited in registration order.
  void backward(ProjectorStack& grads) const;

  // Appends one bit per hidden unit per item (pre-activation > 0).
  void append_relu_pattern(std::vector<std::uint32_t>& out) const;

 private:
  struct Item {
    bool is_name = false;
    Vector input;
    MlpCache name_cache;
    MlpCache common_cache;
    Vector projected;
    Vector grad;
  };

  const ProjectorStack* stack_;
  std::vector<Item> items_;
  bool forwarded_ = false;
};

using ItemSet = std::vector<std::size_t>;

// Dense similarity between two item sets: mean over `from` of the maximum dot
// product with any member of `to`.  argmax[i] is the position in `to` that won
// for from[i]; ties go to the lowest position.
struct SetSimilarity {
  double value = 0.0;
  std::vector<std::size_t> argmax;
};

SetSimilarity set_similarity(const ProjectionTape& tape, const ItemSet& from, const ItemSet& to);

// Routes `upstream` = d(loss)/d(value) to the recorded argmax cells.
void set_similarity_backward(ProjectionTape& tape, const ItemSet& from, const ItemSet& to,
                             const SetSimilarity& sim, double upstream);

}  // namespace secla
