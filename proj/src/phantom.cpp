#include "canseg/phantom.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "canseg/components.hpp"

namespace canseg {

void PhantomSpec::validate() const {
  for (int d : dims)
    if (d < 32) throw std::invalid_argument("phantom: dims must be >= 32");
  if (n_vessels < 1) throw std::invalid_argument("phantom: need at least one vessel");
  if (n_aneurysms < 0) throw std::invalid_argument("phantom: negative lesion count");
  if (!(vessel_radius[0] > 0 && vessel_radius[1] >= vessel_radius[0]))
    throw std::invalid_argument("phantom: bad vessel radius range");
  if (!(aneurysm_radius[0] > 0 && aneurysm_radius[1] >= aneurysm_radius[0]))
    throw std::invalid_argument("phantom: bad aneurysm radius range");
  if (noise_sigma < 0) throw std::invalid_argument("phantom: negative noise sigma");
}

namespace {

struct Vec3d {
  double x, y, z;
  Vec3d operator+(const Vec3d& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3d operator-(const Vec3d& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3d operator*(double s) const { return {x * s, y * s, z * s}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  Vec3d unit() const {
    double n = norm();
    return n > 0 ? Vec3d{x / n, y / n, z / n} : Vec3d{1, 0, 0};
  }
  double dot(const Vec3d& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3d cross(const Vec3d& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
};

// Smooth space curve: a line through the volume plus two transverse
// sinusoidal perturbations.
struct Curve {
  Vec3d center, dir, e1, e2;
  double half_span, a1, a2, w1, w2, p1, p2;

  Vec3d at(double t) const {
    return center + dir * (half_span * t) + e1 * (a1 * std::sin(w1 * t + p1)) +
           e2 * (a2 * std::sin(w2 * t + p2));
  }
  Vec3d tangent(double t) const {
    Vec3d d = dir * half_span + e1 * (a1 * w1 * std::cos(w1 * t + p1)) +
              e2 * (a2 * w2 * std::cos(w2 * t + p2));
    return d.unit();
  }
};

void stamp_ball(Volume3D& img, const Vec3d& c, double r, float value) {
  const int x0 = std::max(0, int(std::floor(c.x - r))), x1 = std::min(img.dims[0] - 1, int(std::ceil(c.x + r)));
  const int y0 = std::max(0, int(std::floor(c.y - r))), y1 = std::min(img.dims[1] - 1, int(std::ceil(c.y + r)));
  const int z0 = std::max(0, int(std::floor(c.z - r))), z1 = std::min(img.dims[2] - 1, int(std::ceil(c.z + r)));
  const double r2 = r * r;
  for (int z = z0; z <= z1; ++z)
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - c.x, dy = y - c.y, dz = z - c.z;
        if (dx * dx + dy * dy + dz * dz <= r2) img.at(x, y, z) = value;
      }
}

}  // namespace

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Phantom ph;
  ph.image = Volume3D(spec.dims, 0.f);
  ph.label = LabelVolume(spec.dims, 0);

  // Dark noisy background.
  for (auto& v : ph.image.data)
    v = float(std::max(0.0, 30.0 + spec.noise_sigma * gauss(rng)));

  auto rand_unit = [&]() {
    while (true) {
      Vec3d v{gauss(rng), gauss(rng), gauss(rng)};
      if (v.norm() > 1e-3) return v.unit();
    }
  };

  const Vec3d mid{spec.dims[0] / 2.0, spec.dims[1] / 2.0, spec.dims[2] / 2.0};
  const double span = 0.45 * std::min({spec.dims[0], spec.dims[1], spec.dims[2]});

  std::vector<Curve> curves;
  std::vector<double> radii;
  std::uniform_real_distribution<double> rad(spec.vessel_radius[0], spec.vessel_radius[1]);
  for (int i = 0; i < spec.n_vessels; ++i) {
    Curve c;
    c.center = mid + Vec3d{(u01(rng) - 0.5) * 0.3 * spec.dims[0],
                           (u01(rng) - 0.5) * 0.3 * spec.dims[1],
                           (u01(rng) - 0.5) * 0.3 * spec.dims[2]};
    c.dir = rand_unit();
    c.e1 = c.dir.cross(rand_unit()).unit();
    c.e2 = c.dir.cross(c.e1).unit();
    c.half_span = span;
    c.a1 = 4.0 + 8.0 * u01(rng);
    c.a2 = 4.0 + 8.0 * u01(rng);
    c.w1 = 1.5 + 2.0 * u01(rng);
    c.w2 = 1.5 + 2.0 * u01(rng);
    c.p1 = 6.283 * u01(rng);
    c.p2 = 6.283 * u01(rng);
    curves.push_back(c);
    radii.push_back(rad(rng));
  }

  // Tubes: stamp overlapping balls along each curve.
  const int steps = 600;
  std::vector<float> lumens;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const float lumen = float(950.0 + 100.0 * u01(rng));
    lumens.push_back(lumen);
    for (int s = 0; s <= steps; ++s) {
      const double t = -1.0 + 2.0 * s / steps;
      stamp_ball(ph.image, curves[i].at(t), radii[i], lumen);
    }
  }

  // Lesions: ellipsoidal bulges on tube walls, mutually separated so the
  // label keeps one component per lesion.
  std::uniform_real_distribution<double> arad(spec.aneurysm_radius[0], spec.aneurysm_radius[1]);
  std::uniform_int_distribution<std::size_t> pick(0, curves.size() - 1);
  std::vector<Vec3d> placed;
  std::vector<double> placed_r;
  const double margin = spec.aneurysm_radius[1] + 3.0;

  for (int a = 0; a < spec.n_aneurysms; ++a) {
    bool ok = false;
    for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
      const std::size_t vi = pick(rng);
      const double t = -0.7 + 1.4 * u01(rng);
      const Vec3d p = curves[vi].at(t);
      const Vec3d tan = curves[vi].tangent(t);
      const Vec3d n = tan.cross(rand_unit()).unit();
      const double ax = arad(rng), ay = arad(rng), az = arad(rng);
      const double amax = std::max({ax, ay, az});
      const Vec3d c = p + n * (radii[vi] + 0.5 * amax);

      if (c.x < margin || c.y < margin || c.z < margin || c.x > spec.dims[0] - margin ||
          c.y > spec.dims[1] - margin || c.z > spec.dims[2] - margin)
        continue;
      bool clash = false;
      for (std::size_t j = 0; j < placed.size(); ++j)
        if ((c - placed[j]).norm() < amax + placed_r[j] + 4.0) clash = true;
      if (clash) continue;

      const float lumen = lumens[vi];
      const int x0 = int(std::floor(c.x - amax)), x1 = int(std::ceil(c.x + amax));
      const int y0 = int(std::floor(c.y - amax)), y1 = int(std::ceil(c.y + amax));
      const int z0 = int(std::floor(c.z - amax)), z1 = int(std::ceil(c.z + amax));
      for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
          for (int x = x0; x <= x1; ++x) {
            if (!ph.image.in_bounds(x, y, z)) continue;
            const double q = ((x - c.x) / ax) * ((x - c.x) / ax) +
                             ((y - c.y) / ay) * ((y - c.y) / ay) +
                             ((z - c.z) / az) * ((z - c.z) / az);
            if (q <= 1.0) {
              ph.image.at(x, y, z) = lumen;
              ph.label.at(x, y, z) = 1;
            }
          }
      placed.push_back(c);
      placed_r.push_back(amax);
      ok = true;
    }
    if (!ok) throw std::runtime_error("phantom: lesion placement failed after bounded retries");
  }

  const auto comps = connected_components(ph.label, 26);
  if (int(comps.count()) != spec.n_aneurysms)
    throw std::runtime_error("phantom: lesion components merged; adjust spec radii/counts");
  return ph;
}

}  // namespace canseg
