#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "secla/numerics.hpp"

namespace secla {

inline constexpr const char* kNoNameText = "NONAME";

struct NameRecord {
  std::string text;
  Vector embedding;
  bool is_noname = false;
};

struct ModelDims {
  std::size_t face_dim = 512;
  std::size_t name_dim = 768;
  std::size_t proj_dim = 128;
  // Widths of the two hidden layers of the three-layer common projector.
  std::vector<std::size_t> hidden = {512, 256};
  // One common projector for both modalities, or an independent copy for names.
  bool shared_common = true;
};

// Name projector (one linear layer, name_dim -> face_dim) followed by the
// common projector (face_dim -> ... -> proj_dim, ReLU between layers).
struct ProjectorStack {
  ModelDims dims;
  Mlp name_projector;
  Mlp common;
  Mlp name_common;  // used only when !dims.shared_common

  static ProjectorStack init(const ModelDims& dims, std::uint64_t seed);
  static ProjectorStack zeros_like(const ProjectorStack& other);

  const Mlp& name_path_common() const { return dims.shared_common ? common : name_common; }
  Mlp& name_path_common() { return dims.shared_common ? common : name_common; }

  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  std::size_t parameter_count() const;

  // Throws ShapeError unless layer shapes agree with dims.
  void validate() const;
};

Vector project_face(const ProjectorStack& stack, std::span<const double> face);
Vector project_name(const ProjectorStack& stack, std::span<const double> name);
// Same as project_face over a list, in one batched pass.
std::vector<Vector> project_faces(const ProjectorStack& stack, std::span<const Vector> faces);
double pair_similarity(std::span<const double> face_proj, std::span<const double> name_proj);

// n x m matrix of dot products between projected faces and projected names.
Matrix similarity_matrix(const ProjectorStack& stack, std::span<const Vector> faces,
                         std::span<const NameRecord> names);

}  // namespace secla
