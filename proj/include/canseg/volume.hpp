#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace canseg {

using Int3 = std::array<int, 3>;
using Float3 = std::array<float, 3>;

/// Axis-aligned voxel box. `start` may be negative; ops that accept such
/// regions declare a padding policy.
struct Region {
  Int3 start{0, 0, 0};
  Int3 size{0, 0, 0};

  [[nodiscard]] std::int64_t voxels() const {
    return std::int64_t(size[0]) * size[1] * size[2];
  }
};

/// Dense scalar 3D image, x-fastest storage order. Carries voxel spacing
/// (mm/voxel) and origin (mm) so masks, images and contours share one
/// geometry model.
template <typename T>
struct Grid3 {
  Int3 dims{0, 0, 0};
  Float3 spacing{1.f, 1.f, 1.f};
  Float3 origin{0.f, 0.f, 0.f};
  std::vector<T> data;

  Grid3() = default;
  Grid3(Int3 d, T fill = T(0)) : dims(d), data(std::size_t(d[0]) * d[1] * d[2], fill) {}

  [[nodiscard]] std::int64_t size() const {
    return std::int64_t(dims[0]) * dims[1] * dims[2];
  }
  [[nodiscard]] std::int64_t index(int x, int y, int z) const {
    return (std::int64_t(z) * dims[1] + y) * dims[0] + x;
  }
  [[nodiscard]] bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
  }
  T& at(int x, int y, int z) { return data[index(x, y, z)]; }
  const T& at(int x, int y, int z) const { return data[index(x, y, z)]; }

  [[nodiscard]] bool same_geometry(const Grid3& o) const {
    return dims == o.dims;
  }

  /// Throws if data length disagrees with dims, spacing is non-positive, or
  /// (for real-valued grids) any value is non-finite.
  void validate() const;
};

namespace detail {
bool all_finite(const std::vector<float>& data);
bool all_finite(const std::vector<std::uint8_t>& data);
}  // namespace detail

template <typename T>
void Grid3<T>::validate() const {
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
    throw std::invalid_argument("Grid3: non-positive dims");
  if (std::int64_t(data.size()) != size())
    throw std::invalid_argument("Grid3: data length does not match dims");
  for (float s : spacing)
    if (!(s > 0.f)) throw std::invalid_argument("Grid3: spacing must be > 0");
  if (!detail::all_finite(data)) throw std::invalid_argument("Grid3: non-finite values");
}

using Volume3D = Grid3<float>;
using LabelVolume = Grid3<std::uint8_t>;

enum class Interp { Nearest, Linear };

/// Extract `r` from `v`; voxels outside the source are filled with
/// `pad_value`, so regions may start negative or run past the far edge.
template <typename T>
Grid3<T> crop(const Grid3<T>& v, const Region& r, T pad_value);

/// Write `src` (dims == r.size) into `dst` at r.start, clipped to dst bounds.
template <typename T>
void paste(Grid3<T>& dst, const Grid3<T>& src, const Region& r);

/// Rescale to dims = round(dims * factor). Nearest keeps the input value
/// set; linear interpolates (float grids only).
Volume3D resample(const Volume3D& v, Float3 factor, Interp mode);
LabelVolume resample_nearest(const LabelVolume& v, Float3 factor);

/// Region of the full volume extent.
inline Region full_region(const Int3& dims) { return Region{{0, 0, 0}, dims}; }

/// 64^3-style cube region centered on `center` (size `extent` per axis).
Region centered_region(const Int3& center, int extent);

extern template Grid3<float> crop(const Grid3<float>&, const Region&, float);
extern template Grid3<std::uint8_t> crop(const Grid3<std::uint8_t>&, const Region&, std::uint8_t);
extern template void paste(Grid3<float>&, const Grid3<float>&, const Region&);
extern template void paste(Grid3<std::uint8_t>&, const Grid3<std::uint8_t>&, const Region&);

}  // namespace canseg
