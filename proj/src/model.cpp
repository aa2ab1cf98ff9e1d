#include "secla/model.hpp"

#include <string>

#include "secla/errors.hpp"

namespace secla {

namespace {

std::vector<std::size_t> common_widths(const ModelDims& dims) {
  std::vector<std::size_t> w{dims.face_dim};
  w.insert(w.end(), dims.hidden.begin(), dims.hidden.end());
  w.push_back(dims.proj_dim);
  return w;
}

void expect_shape(const Mlp& mlp, std::span<const std::size_t> widths, const char* what) {
  check_chain(mlp);
  if (mlp.layers.size() + 1 != widths.size()) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(widths.size() - 1) + " layers");
  }
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    if (mlp.layers[i].in_dim() != widths[i] || mlp.layers[i].out_dim() != widths[i + 1]) {
      throw ShapeError(std::string(what) + ": layer " + std::to_string(i) + " has shape " +
                       std::to_string(mlp.layers[i].out_dim()) + "x" + std::to_string(mlp.layers[i].in_dim()));
    }
  }
}

}  // namespace

ProjectorStack ProjectorStack::init(const ModelDims& dims, std::uint64_t seed) {
  if (dims.face_dim == 0 || dims.name_dim == 0 || dims.proj_dim == 0) {
    throw ContractError("ProjectorStack::init: dimensions must be positive");
  }
  ProjectorStack s;
  s.dims = dims;
  Rng rng(derive_seed(seed, "projector-init"));
  const std::size_t name_widths[] = {dims.name_dim, dims.face_dim};
  s.name_projector = Mlp::fan_in_uniform(name_widths, rng);
  const auto widths = common_widths(dims);
  s.common = Mlp::fan_in_uniform(widths, rng);
  if (!dims.shared_common) s.name_common = Mlp::fan_in_uniform(widths, rng);
  return s;
}

ProjectorStack ProjectorStack::zeros_like(const ProjectorStack& other) {
  ProjectorStack z;
  z.dims = other.dims;
  z.name_projector = Mlp::zeros_like(other.name_projector);
  z.common = Mlp::zeros_like(other.common);
  z.name_common = Mlp::zeros_like(other.name_common);
  return z;
}

std::vector<std::span<double>> ProjectorStack::parameters() {
  std::vector<std::span<double>> out;
  append_parameters(name_projector, out);
  append_parameters(common, out);
  if (!dims.shared_common) append_parameters(name_common, out);
  return out;
}

std::vector<std::span<const double>> ProjectorStack::parameters() const {
  std::vector<std::span<const double>> out;
  append_parameters(name_projector, out);
  append_parameters(common, out);
  if (!dims.shared_common) append_parameters(name_common, out);
  return out;
}

std::size_t ProjectorStack::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

void ProjectorStack::validate() const {
  const std::size_t name_widths[] = {dims.name_dim, dims.face_dim};
  expect_shape(name_projector, name_widths, "name projector");
  const auto widths = common_widths(dims);
  expect_shape(common, widths, "common projector");
  if (!dims.shared_common) expect_shape(name_common, widths, "name common projector");
}

Vector project_face(const ProjectorStack& stack, std::span<const double> face) {
  if (face.size() != stack.dims.face_dim) {
    throw ShapeError("project_face: face has " + std::to_string(face.size()) + " dims, model expects " +
                     std::to_string(stack.dims.face_dim));
  }
  return mlp_apply(stack.common, face);
}

Vector project_name(const ProjectorStack& stack, std::span<const double> name) {
  if (name.size() != stack.dims.name_dim) {
    throw ShapeError("project_name: name has " + std::to_string(name.size()) + " dims, model expects " +
                     std::to_string(stack.dims.name_dim));
  }
  return mlp_apply(stack.name_path_common(), mlp_apply(stack.name_projector, name));
}

std::vector<Vector> project_faces(const ProjectorStack& stack, std::span<const Vector> faces) {
  for (const auto& f : faces) {
    if (f.size() != stack.dims.face_dim) {
      throw ShapeError("project_faces: face has " + std::to_string(f.size()) + " dims, model expects " +
                       std::to_string(stack.dims.face_dim));
    }
  }
  auto outs = mlp_forward_batch(stack.common, faces);
  std::vector<Vector> ys;
  ys.reserve(outs.size());
  for (auto& o : outs) ys.push_back(std::move(o.y));
  return ys;
}

double pair_similarity(std::span<const double> face_proj, std::span<const double> name_proj) {
  return dot(face_proj, name_proj);
}

Matrix similarity_matrix(const ProjectorStack& stack, std::span<const Vector> faces,
                         std::span<const NameRecord> names) {
  if (faces.empty() || names.empty()) throw ContractError("similarity_matrix: empty face or name list");
  const auto fp = project_faces(stack, faces);
  Matrix a(faces.size(), names.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    const Vector np = project_name(stack, names[j].embedding);
    for (std::size_t i = 0; i < faces.size(); ++i) a(i, j) = pair_similarity(fp[i], np);
  }
  return a;
}

}  // namespace secla
