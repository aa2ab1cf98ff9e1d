#pragma once

#include <cstdint>

#include "secla/dataset.hpp"

namespace secla {

// Synthetic benchmark with exact ground truth.  Identities are unit vectors in
// face space, each with one fixed name embedding; faces are noisy,
// re-normalized copies of their identity centre.
struct SynthConfig {
  std::size_t num_identities = 20;
  std::size_t num_pairs = 100;
  std::size_t min_faces = 1;
  std::size_t max_faces = 3;
  // Bounds on the caption length after null links are drawn.  Surplus names
  // are removed (NOFACE extras first, then captioned faces become NONAME);
  // missing ones are filled with NOFACE extras.
  std::size_t min_names = 0;
  std::size_t max_names = 8;
  double sigma = 0.05;
  double noname_rate = 0.0;
  double noface_rate = 0.0;
  // Identity popularity ~ 1 / rank^exponent; 0 gives uniform sampling.
  double zipf_exponent = 0.0;
  std::size_t face_dim = 32;
  std::size_t name_dim = 48;
  std::uint64_t seed = 0;

  // Throws ContractError for out-of-range values or infeasible combinations.
  void validate() const;
};

Dataset synth_generate(const SynthConfig& config);

std::string identity_name(std::size_t identity);

}  // namespace secla
