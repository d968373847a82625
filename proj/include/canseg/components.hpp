#pragma once

#include <cstdint>
#include <vector>

#include "canseg/volume.hpp"

namespace canseg {

struct Component {
  std::vector<std::int64_t> voxels;  // linear indices into the source grid
  std::array<double, 3> centroid{0, 0, 0};
  std::int64_t voxel_count = 0;
  Region bbox;
};

/// Disjoint connected components of the nonzero voxels of a mask.
struct ComponentSet {
  std::vector<Component> components;

  [[nodiscard]] std::size_t count() const { return components.size(); }
  [[nodiscard]] std::int64_t total_voxels() const {
    std::int64_t n = 0;
    for (const auto& c : components) n += c.voxel_count;
    return n;
  }
};

/// Label the nonzero voxels of `m` into maximal components under 6- or
/// 26-connectivity. Components are emitted in raster-scan order of their
/// first voxel; centroids are voxel-coordinate means.
ComponentSet connected_components(const LabelVolume& m, int connectivity = 26);

/// Rasterize one component back into a mask of the given dims.
LabelVolume component_mask(const Component& c, const Int3& dims);

}  // namespace canseg
