#include "canseg/volume.hpp"

#include <algorithm>
#include <cmath>

namespace canseg {

namespace detail {
bool all_finite(const std::vector<float>& data) {
  for (float v : data)
    if (!std::isfinite(v)) return false;
  return true;
}
bool all_finite(const std::vector<std::uint8_t>&) { return true; }
}  // namespace detail

template <typename T>
Grid3<T> crop(const Grid3<T>& v, const Region& r, T pad_value) {
  if (r.size[0] <= 0 || r.size[1] <= 0 || r.size[2] <= 0)
    throw std::invalid_argument("crop: region size must be positive");
  Grid3<T> out(r.size, pad_value);
  out.spacing = v.spacing;
  for (int a = 0; a < 3; ++a)
    out.origin[a] = v.origin[a] + float(r.start[a]) * v.spacing[a];

  // Clipped overlap between the region and the source extent.
  Int3 lo, hi;
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max(0, -r.start[a]);
    hi[a] = std::min(r.size[a], v.dims[a] - r.start[a]);
  }
  if (lo[0] >= hi[0] || lo[1] >= hi[1] || lo[2] >= hi[2]) return out;

  for (int z = lo[2]; z < hi[2]; ++z)
    for (int y = lo[1]; y < hi[1]; ++y) {
      const T* s = &v.data[v.index(r.start[0] + lo[0], r.start[1] + y, r.start[2] + z)];
      T* d = &out.data[out.index(lo[0], y, z)];
      std::copy(s, s + (hi[0] - lo[0]), d);
    }
  return out;
}

template <typename T>
void paste(Grid3<T>& dst, const Grid3<T>& src, const Region& r) {
  if (src.dims != r.size)
    throw std::invalid_argument("paste: src dims must equal region size");
  Int3 lo, hi;
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max(0, -r.start[a]);
    hi[a] = std::min(r.size[a], dst.dims[a] - r.start[a]);
  }
  if (lo[0] >= hi[0] || lo[1] >= hi[1] || lo[2] >= hi[2]) return;

  for (int z = lo[2]; z < hi[2]; ++z)
    for (int y = lo[1]; y < hi[1]; ++y) {
      const T* s = &src.data[src.index(lo[0], y, z)];
      T* d = &dst.data[dst.index(r.start[0] + lo[0], r.start[1] + y, r.start[2] + z)];
      std::copy(s, s + (hi[0] - lo[0]), d);
    }
}

namespace {

Int3 scaled_dims(const Int3& dims, const Float3& factor) {
  Int3 out;
  for (int a = 0; a < 3; ++a) {
    if (!(factor[a] > 0.f)) throw std::invalid_argument("resample: factor must be > 0");
    out[a] = int(std::lround(double(dims[a]) * double(factor[a])));
    if (out[a] <= 0) throw std::invalid_argument("resample: resulting dim of zero");
  }
  return out;
}

// Center-aligned source coordinate for output voxel o.
inline double src_coord(int o, double inv_factor) { return (o + 0.5) * inv_factor - 0.5; }

template <typename T>
Grid3<T> resample_nearest_impl(const Grid3<T>& v, Float3 factor) {
  Int3 nd = scaled_dims(v.dims, factor);
  Grid3<T> out(nd);
  for (int a = 0; a < 3; ++a) out.spacing[a] = v.spacing[a] * float(v.dims[a]) / float(nd[a]);
  out.origin = v.origin;
  std::array<double, 3> inv{double(v.dims[0]) / nd[0], double(v.dims[1]) / nd[1],
                            double(v.dims[2]) / nd[2]};
  for (int z = 0; z < nd[2]; ++z) {
    int sz = std::clamp(int(std::lround(src_coord(z, inv[2]))), 0, v.dims[2] - 1);
    for (int y = 0; y < nd[1]; ++y) {
      int sy = std::clamp(int(std::lround(src_coord(y, inv[1]))), 0, v.dims[1] - 1);
      for (int x = 0; x < nd[0]; ++x) {
        int sx = std::clamp(int(std::lround(src_coord(x, inv[0]))), 0, v.dims[0] - 1);
        out.at(x, y, z) = v.at(sx, sy, sz);
      }
    }
  }
  return out;
}

}  // namespace

Volume3D resample(const Volume3D& v, Float3 factor, Interp mode) {
  if (mode == Interp::Nearest) return resample_nearest_impl(v, factor);

  Int3 nd = scaled_dims(v.dims, factor);
  Volume3D out(nd);
  for (int a = 0; a < 3; ++a) out.spacing[a] = v.spacing[a] * float(v.dims[a]) / float(nd[a]);
  out.origin = v.origin;
  std::array<double, 3> inv{double(v.dims[0]) / nd[0], double(v.dims[1]) / nd[1],
                            double(v.dims[2]) / nd[2]};
  auto split = [](double c, int n, int& i0, int& i1, double& w1) {
    double f = std::floor(c);
    i0 = std::clamp(int(f), 0, n - 1);
    i1 = std::clamp(i0 + 1, 0, n - 1);
    w1 = std::clamp(c - f, 0.0, 1.0);
  };
  for (int z = 0; z < nd[2]; ++z) {
    int z0, z1;
    double wz;
    split(src_coord(z, inv[2]), v.dims[2], z0, z1, wz);
    for (int y = 0; y < nd[1]; ++y) {
      int y0, y1;
      double wy;
      split(src_coord(y, inv[1]), v.dims[1], y0, y1, wy);
      for (int x = 0; x < nd[0]; ++x) {
        int x0, x1;
        double wx;
        split(src_coord(x, inv[0]), v.dims[0], x0, x1, wx);
        double c00 = v.at(x0, y0, z0) + wx * (v.at(x1, y0, z0) - v.at(x0, y0, z0));
        double c10 = v.at(x0, y1, z0) + wx * (v.at(x1, y1, z0) - v.at(x0, y1, z0));
        double c01 = v.at(x0, y0, z1) + wx * (v.at(x1, y0, z1) - v.at(x0, y0, z1));
        double c11 = v.at(x0, y1, z1) + wx * (v.at(x1, y1, z1) - v.at(x0, y1, z1));
        double c0 = c00 + wy * (c10 - c00);
        double c1 = c01 + wy * (c11 - c01);
        out.at(x, y, z) = float(c0 + wz * (c1 - c0));
      }
    }
  }
  return out;
}

LabelVolume resample_nearest(const LabelVolume& v, Float3 factor) {
  return resample_nearest_impl(v, factor);
}

Region centered_region(const Int3& center, int extent) {
  if (extent <= 0) throw std::invalid_argument("centered_region: extent must be positive");
  Region r;
  for (int a = 0; a < 3; ++a) {
    r.start[a] = center[a] - extent / 2;
    r.size[a] = extent;
  }
  return r;
}

template Grid3<float> crop(const Grid3<float>&, const Region&, float);
template Grid3<std::uint8_t> crop(const Grid3<std::uint8_t>&, const Region&, std::uint8_t);
template void paste(Grid3<float>&, const Grid3<float>&, const Region&);
template void paste(Grid3<std::uint8_t>&, const Grid3<std::uint8_t>&, const Region&);

}  // namespace canseg
