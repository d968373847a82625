#include "canseg/components.hpp"

#include <algorithm>
#include <stdexcept>

namespace canseg {

ComponentSet connected_components(const LabelVolume& m, int connectivity) {
  if (connectivity != 6 && connectivity != 26)
    throw std::invalid_argument("connected_components: connectivity must be 6 or 26");
  m.validate();

  // Neighbour offsets for the chosen adjacency.
  std::vector<Int3> offs;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (connectivity == 6 && manhattan != 1) continue;
        offs.push_back({dx, dy, dz});
      }

  const int nx = m.dims[0], ny = m.dims[1], nz = m.dims[2];
  std::vector<std::uint8_t> seen(m.data.size(), 0);
  ComponentSet out;
  std::vector<std::int64_t> stack;

  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        std::int64_t idx = m.index(x, y, z);
        if (m.data[idx] == 0 || seen[idx]) continue;

        Component comp;
        Int3 lo{x, y, z}, hi{x, y, z};
        std::array<double, 3> sum{0, 0, 0};
        seen[idx] = 1;
        stack.assign(1, idx);
        while (!stack.empty()) {
          std::int64_t cur = stack.back();
          stack.pop_back();
          comp.voxels.push_back(cur);
          int cx = int(cur % nx);
          int cy = int((cur / nx) % ny);
          int cz = int(cur / (std::int64_t(nx) * ny));
          sum[0] += cx;
          sum[1] += cy;
          sum[2] += cz;
          lo = {std::min(lo[0], cx), std::min(lo[1], cy), std::min(lo[2], cz)};
          hi = {std::max(hi[0], cx), std::max(hi[1], cy), std::max(hi[2], cz)};
          for (const auto& o : offs) {
            int px = cx + o[0], py = cy + o[1], pz = cz + o[2];
            if (!m.in_bounds(px, py, pz)) continue;
            std::int64_t nidx = m.index(px, py, pz);
            if (m.data[nidx] != 0 && !seen[nidx]) {
              seen[nidx] = 1;
              stack.push_back(nidx);
            }
          }
        }
        comp.voxel_count = std::int64_t(comp.voxels.size());
        for (int a = 0; a < 3; ++a) comp.centroid[a] = sum[a] / double(comp.voxel_count);
        comp.bbox.start = lo;
        comp.bbox.size = {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
        std::sort(comp.voxels.begin(), comp.voxels.end());
        out.components.push_back(std::move(comp));
      }
  return out;
}

LabelVolume component_mask(const Component& c, const Int3& dims) {
  LabelVolume m(dims, 0);
  for (auto idx : c.voxels) m.data[std::size_t(idx)] = 1;
  return m;
}

}  // namespace canseg
