#pragma once

#include <cstdint>

#include "canseg/volume.hpp"

namespace canseg {

/// Synthetic TOF-style test case: bright curved tubes on a dark noisy
/// background, with ellipsoidal bulges (the lesions) attached to tube walls.
struct PhantomSpec {
  Int3 dims{128, 128, 128};
  int n_vessels = 3;
  std::array<double, 2> vessel_radius{1.8, 2.6};   // voxels
  int n_aneurysms = 1;
  std::array<double, 2> aneurysm_radius{3.5, 5.5};  // ellipsoid semi-axes, voxels
  double noise_sigma = 10.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct Phantom {
  Volume3D image;
  LabelVolume label;  // 1 on lesion voxels
};

/// Deterministic per seed; the label has exactly n_aneurysms components.
Phantom generate_phantom(const PhantomSpec& spec);

}  // namespace canseg
