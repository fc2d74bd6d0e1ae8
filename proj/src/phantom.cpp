#include "lowreg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "lowreg/errors.hpp"
#include "lowreg/parallel.hpp"
#include "lowreg/rng.hpp"

namespace lowreg {

namespace {

constexpr int kBumpCount = 6;
constexpr int kCoarseTextureTerms = 8;
constexpr int kFineTextureTerms = 20;
constexpr double kBaseIntensity = 0.1;
constexpr double kTextureKnee = 0.22;
constexpr double kMarkerPeak = 0.45;
constexpr double kMoatMarginFrac = 0.07;
constexpr double kAnchoredContrast = 0.10;
constexpr double kIsolatedContrast = 0.05;
constexpr double kLipschitzCap = 0.75; // keeps id + field invertible
constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

struct Bump {
  Vec3 center;
  Vec3 amp;
  double sigma = 1.0;
};

struct TextureTerm {
  double amp;
  double kx, ky, kz; // angular frequency per axis
  double px, py, pz; // phase per axis
};

double smoothstep01(double t) {
  if (t <= 0.0)
    return 0.0;
  if (t >= 1.0)
    return 1.0;
  return t * t * (3.0 - 2.0 * t);
}

// Quadric of an ellipsoid: <= 1 inside.
double quadric(const Ellipsoid& e, double x, double y, double z) {
  const double ux = (x - e.center[0]) / e.radii[0];
  const double uy = (y - e.center[1]) / e.radii[1];
  const double uz = (z - e.center[2]) / e.radii[2];
  return ux * ux + uy * uy + uz * uz;
}

// Soft membership with a ~3.5-voxel transition across the surface.
double soft_inside(const Ellipsoid& e, double x, double y, double z) {
  const double m = quadric(e, x, y, z);
  const double rmin = std::min({e.radii[0], e.radii[1], e.radii[2]});
  const double wm = 3.5 / rmin; // quadric gradient magnitude ~2/r at m = 1
  return smoothstep01((1.0 - m) / (2.0 * wm) + 0.5);
}

// The full analytic scene: intensity and hard labels at any continuous point.
struct PhantomModel {
  const PhantomSpec& spec;
  std::vector<TextureTerm> texture;
  std::vector<Bump> bumps;
  Ellipsoid moat; // texture-free halo around the weak-contrast organ
  Vec3 marker_center;
  double marker_inv2s2 = 1.0;

  double intensity(double x, double y, double z) const {
    double tex = 0.0;
    for (const auto& t : texture)
      tex += t.amp * std::cos(t.kx * x + t.px) * std::cos(t.ky * y + t.py) *
             std::cos(t.kz * z + t.pz);
    // Fixed bright smooth feature away from the organs. Texture fades out
    // inside its support, so the volume maximum is exactly base + peak for
    // every seed and both families -- min-max normalization then runs at a
    // stable scale. It doubles as a global alignment landmark.
    const double dxm = x - marker_center.x;
    const double dym = y - marker_center.y;
    const double dzm = z - marker_center.z;
    const double g =
        std::exp(-(dxm * dxm + dym * dym + dzm * dzm) * marker_inv2s2);
    // Texture also fades inside the moat around the faint organ: alignment
    // there must come from the organ boundary itself, not from surrounding
    // texture, which makes the region genuinely sensitive to how each loss
    // copes with noise.
    const double mo = soft_inside(moat, x, y, z);
    // Soft-limit the texture so rare extreme peaks of the cosine sum cannot
    // drive the min-max normalization; the bounded range keeps structure
    // contrast high after normalization.
    double v = kBaseIntensity +
               kTextureKnee * std::tanh(tex / kTextureKnee) * (1.0 - g) *
                   (1.0 - mo) +
               kMarkerPeak * g;
    const double si = soft_inside(spec.inner, x, y, z);
    const double so = soft_inside(spec.outer, x, y, z);
    if (spec.kind == PhantomKind::Cardiac)
      v += kIsolatedContrast * so + kAnchoredContrast * si;
    else
      v += kAnchoredContrast * si + kIsolatedContrast * so;
    return v;
  }

  uint8_t label(double x, double y, double z) const {
    const bool in_inner = quadric(spec.inner, x, y, z) <= 1.0;
    const bool in_outer = quadric(spec.outer, x, y, z) <= 1.0;
    if (spec.kind == PhantomKind::Cardiac) {
      if (in_inner)
        return 2;
      if (in_outer)
        return 1;
      return 0;
    }
    if (in_inner)
      return 1;
    if (in_outer)
      return 2;
    return 0;
  }

  Vec3 field(double x, double y, double z) const {
    Vec3 g;
    for (const auto& b : bumps) {
      const double dx = x - b.center.x;
      const double dy = y - b.center.y;
      const double dz = z - b.center.z;
      const double w =
          std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * b.sigma * b.sigma));
      g.x += b.amp.x * w;
      g.y += b.amp.y * w;
      g.z += b.amp.z * w;
    }
    return g;
  }

  // field value plus Jacobian d(field)/d(position), row-major 3x3.
  Vec3 field_jac(double x, double y, double z, double j[9]) const {
    Vec3 g;
    std::fill(j, j + 9, 0.0);
    for (const auto& b : bumps) {
      const double dx = x - b.center.x;
      const double dy = y - b.center.y;
      const double dz = z - b.center.z;
      const double inv_s2 = 1.0 / (b.sigma * b.sigma);
      const double w =
          std::exp(-0.5 * (dx * dx + dy * dy + dz * dz) * inv_s2);
      g.x += b.amp.x * w;
      g.y += b.amp.y * w;
      g.z += b.amp.z * w;
      const double gx = -dx * inv_s2 * w;
      const double gy = -dy * inv_s2 * w;
      const double gz = -dz * inv_s2 * w;
      j[0] += b.amp.x * gx; j[1] += b.amp.x * gy; j[2] += b.amp.x * gz;
      j[3] += b.amp.y * gx; j[4] += b.amp.y * gy; j[5] += b.amp.y * gz;
      j[6] += b.amp.z * gx; j[7] += b.amp.z * gy; j[8] += b.amp.z * gz;
    }
    return g;
  }

  // Invert p + field(p) = target by warm-started Newton; the field's
  // Lipschitz constant is capped below 1, so the solution is unique.
  Vec3 invert(const Vec3& target, const Vec3& guess) const {
    Vec3 p = guess;
    for (int it = 0; it < 25; ++it) {
      double j[9];
      const Vec3 g = field_jac(p.x, p.y, p.z, j);
      const double fx = p.x + g.x - target.x;
      const double fy = p.y + g.y - target.y;
      const double fz = p.z + g.z - target.z;
      if (std::abs(fx) < 1e-9 && std::abs(fy) < 1e-9 && std::abs(fz) < 1e-9)
        return p;
      const double a11 = 1.0 + j[0], a12 = j[1], a13 = j[2];
      const double a21 = j[3], a22 = 1.0 + j[4], a23 = j[5];
      const double a31 = j[6], a32 = j[7], a33 = 1.0 + j[8];
      const double det = a11 * (a22 * a33 - a23 * a32) -
                         a12 * (a21 * a33 - a23 * a31) +
                         a13 * (a21 * a32 - a22 * a31);
      p.x -= (fx * (a22 * a33 - a23 * a32) - a12 * (fy * a33 - a23 * fz) +
              a13 * (fy * a32 - a22 * fz)) /
             det;
      p.y -= (a11 * (fy * a33 - a23 * fz) - fx * (a21 * a33 - a23 * a31) +
              a13 * (a21 * fz - fy * a31)) /
             det;
      p.z -= (a11 * (a22 * fz - fy * a32) - a12 * (a21 * fz - fy * a31) +
              fx * (a21 * a32 - a22 * a31)) /
             det;
    }
    // Fall back to the plain contraction iteration, which must converge.
    for (int it = 0; it < 400; ++it) {
      const Vec3 g = field(p.x, p.y, p.z);
      const Vec3 next{target.x - g.x, target.y - g.y, target.z - g.z};
      const double step = std::abs(next.x - p.x) + std::abs(next.y - p.y) +
                          std::abs(next.z - p.z);
      p = next;
      if (step < 1e-10)
        return p;
    }
    throw NumericalAbort("generate_phantom: inverse map iteration diverged");
  }
};

void jitter_ellipsoid(Ellipsoid& e, Rng& rng, double center_jitter,
                      double radius_rel_jitter) {
  for (int i = 0; i < 3; ++i)
    e.center[i] += rng.next_uniform(-center_jitter, center_jitter);
  for (int i = 0; i < 3; ++i)
    e.radii[i] *= 1.0 + rng.next_uniform(-radius_rel_jitter, radius_rel_jitter);
}

void check_geometry(const PhantomSpec& spec) {
  const double margin = spec.magnitude;
  for (const Ellipsoid* e : {&spec.inner, &spec.outer})
    for (int i = 0; i < 3; ++i) {
      const double lo = e->center[i] - e->radii[i] - margin;
      const double hi = e->center[i] + e->radii[i] + margin;
      if (lo < 0.5 || hi > spec.dims[i] - 1.5)
        throw std::invalid_argument(
            "generate_phantom: geometry exceeds volume bounds");
    }
  if (spec.magnitude < 0.0)
    throw std::invalid_argument("generate_phantom: negative magnitude");
  for (int i = 0; i < 3; ++i)
    if (spec.dims[i] < 8)
      throw std::invalid_argument("generate_phantom: dims too small");
}

// Shuffled multiset of integer cycles-per-extent bins covering [3, n/8],
// repeated until `count` entries exist. Integer harmonics are orthogonal on
// the grid, so terms in distinct bins contribute independent directions.
std::vector<int> stratified_bins(int extent, int count, Rng& rng) {
  const int lo = 3;
  const int hi = std::max(lo + 1, extent / 8);
  std::vector<int> bins;
  while ((int)bins.size() < count)
    for (int m = lo; m <= hi; ++m)
      bins.push_back(m);
  for (int i = (int)bins.size() - 1; i > 0; --i)
    std::swap(bins[i], bins[(int)rng.next_below(i + 1)]);
  bins.resize(count);
  return bins;
}

// Two pools: a few strong low-frequency terms that guide coarse alignment,
// and a large pool of finer terms that gives every transverse slice a deep,
// well-populated spectrum (each cosine product is separable, hence rank one
// per slice). Fine in-plane frequencies are stratified over distinct integer
// bins -- random draws from a narrow band would collapse the slice rank to
// the handful of resolvable frequencies the band spans. Along z the fine
// pool stays within a single slow lobe (centered phase), so each slice keeps
// most of every term's in-plane energy.
std::vector<TextureTerm> make_texture(const PhantomSpec& spec) {
  Rng rng(mix_seed(spec.seed, 0x7e37u));
  const double nx = spec.dims.nx, ny = spec.dims.ny, nz = spec.dims.nz;
  const std::vector<int> bx =
      stratified_bins(spec.dims.nx, kFineTextureTerms, rng);
  const std::vector<int> by =
      stratified_bins(spec.dims.ny, kFineTextureTerms, rng);
  // Occupants of a shared bin get phases a quarter period apart, so a bin's
  // cosine and sine directions are both populated instead of nearly
  // collinear pairs.
  auto bin_phases = [&rng](const std::vector<int>& bins) {
    std::unordered_map<int, double> base;
    std::unordered_map<int, int> seen;
    std::vector<double> ph(bins.size());
    for (std::size_t i = 0; i < bins.size(); ++i) {
      auto [it, fresh] = base.try_emplace(bins[i], 0.0);
      if (fresh)
        it->second = rng.next_uniform(0.0, kTwoPi);
      ph[i] = it->second + 0.25 * kTwoPi * seen[bins[i]]++;
    }
    return ph;
  };
  const std::vector<double> phx = bin_phases(bx);
  const std::vector<double> phy = bin_phases(by);
  std::vector<TextureTerm> terms(kCoarseTextureTerms + kFineTextureTerms);
  for (int i = 0; i < (int)terms.size(); ++i) {
    TextureTerm& t = terms[i];
    if (i < kCoarseTextureTerms) {
      // Integer bins here too: a non-integer cosine leaks energy across
      // many singular components, and how much depends on where the draw
      // falls -- integer harmonics keep the coarse pool's spectrum compact
      // and seed-independent.
      t.amp = 0.024 * (0.5 + rng.next_unit());
      t.kx = kTwoPi * double(2 + rng.next_below(2)) / nx;
      t.ky = kTwoPi * double(2 + rng.next_below(2)) / ny;
      t.kz = kTwoPi * double(2 + rng.next_below(2)) / nz;
      t.px = rng.next_uniform(0.0, kTwoPi);
      t.py = rng.next_uniform(0.0, kTwoPi);
      t.pz = rng.next_uniform(0.0, kTwoPi);
    } else {
      const int j = i - kCoarseTextureTerms;
      t.amp = 0.012 * (0.75 + 0.5 * rng.next_unit());
      t.kx = kTwoPi * bx[j] / nx;
      t.ky = kTwoPi * by[j] / ny;
      t.kz = kTwoPi * rng.next_uniform(1.0 / 6.0, 1.0 / 3.0) / nz;
      t.px = phx[j];
      t.py = phy[j];
      t.pz = -t.kz * 0.5 * nz + rng.next_uniform(-0.3, 0.3);
    }
  }
  return terms;
}

std::vector<Bump> make_bumps(const PhantomSpec& spec) {
  if (spec.magnitude == 0.0)
    return {};
  Rng rng(mix_seed(spec.seed, 0xb0b5u));
  const double nmin = std::min({spec.dims.nx, spec.dims.ny, spec.dims.nz});
  std::vector<Bump> bumps(kBumpCount);
  for (auto& b : bumps) {
    b.center.x = rng.next_uniform(0.2 * spec.dims.nx, 0.8 * spec.dims.nx);
    b.center.y = rng.next_uniform(0.2 * spec.dims.ny, 0.8 * spec.dims.ny);
    b.center.z = rng.next_uniform(0.2 * spec.dims.nz, 0.8 * spec.dims.nz);
    b.sigma = rng.next_uniform(nmin / 8.0, nmin / 5.0);
    double dx = 0.0, dy = 0.0, dz = 0.0, norm = 0.0;
    do {
      dx = rng.next_gaussian();
      dy = rng.next_gaussian();
      dz = rng.next_gaussian();
      norm = std::sqrt(dx * dx + dy * dy + dz * dz);
    } while (norm < 1e-6);
    const double strength = 0.5 + rng.next_unit();
    b.amp = {strength * dx / norm, strength * dy / norm,
             strength * dz / norm};
  }
  return bumps;
}

} // namespace

PhantomSpec PhantomSpec::cardiac(Dims dims, uint64_t seed) {
  PhantomSpec s;
  s.dims = dims;
  s.kind = PhantomKind::Cardiac;
  s.seed = seed;
  const double nmin = std::min({dims.nx, dims.ny, dims.nz});
  const std::array<double, 3> c{0.5 * dims.nx, 0.5 * dims.ny, 0.5 * dims.nz};
  auto rad = [&](double frac) { return std::max(frac * nmin, 2.0); };
  s.inner = {c, {rad(0.16), rad(0.15), rad(0.17)}};
  // Thin enough that the ring's overlap score reacts to sub-voxel boundary
  // error, floored so the label survives at tiny test volumes.
  const double shell = std::max(0.060 * nmin, 1.2);
  s.outer = {c,
             {s.inner.radii[0] + shell, s.inner.radii[1] + shell,
              s.inner.radii[2] + shell}};
  Rng rng(mix_seed(seed, 0x9e0564u));
  jitter_ellipsoid(s.inner, rng, 2.0, 0.05);
  // Shell shares the (jittered) core center and stays strictly outside it.
  s.outer.center = s.inner.center;
  const double shell_scale = 1.0 + rng.next_uniform(-0.12, 0.12);
  for (int i = 0; i < 3; ++i)
    s.outer.radii[i] = s.inner.radii[i] + shell * shell_scale;
  return s;
}

PhantomSpec PhantomSpec::abdominal(Dims dims, uint64_t seed) {
  PhantomSpec s;
  s.dims = dims;
  s.kind = PhantomKind::Abdominal;
  s.seed = seed;
  const double nmin = std::min({dims.nx, dims.ny, dims.nz});
  // One compact kidney and one flattened one; the thin axis of the second
  // makes its overlap score a sensitive probe of boundary placement. Radius
  // floors keep both labels present at tiny test volumes.
  auto rad = [&](double frac, double lo) {
    return std::max(frac * nmin, lo);
  };
  s.inner = {{0.34 * dims.nx, 0.50 * dims.ny, 0.50 * dims.nz},
             {rad(0.105, 2.0), rad(0.10, 2.0), rad(0.12, 2.0)}};
  s.outer = {{0.66 * dims.nx, 0.52 * dims.ny, 0.48 * dims.nz},
             {rad(0.13, 2.0), rad(0.085, 1.5), rad(0.11, 2.0)}};
  Rng rng(mix_seed(seed, 0xabd04du));
  jitter_ellipsoid(s.inner, rng, 2.0, 0.05);
  jitter_ellipsoid(s.outer, rng, 2.0, 0.05);
  return s;
}

std::vector<std::pair<uint8_t, std::string>> phantom_structures(PhantomKind kind) {
  if (kind == PhantomKind::Cardiac)
    return {{1, "MYO"}, {2, "LV"}};
  return {{1, "RK"}, {2, "LK"}};
}

PhantomPair generate_phantom(const PhantomSpec& spec) {
  check_geometry(spec);
  PhantomModel model{spec, make_texture(spec), make_bumps(spec), {}, 1.0};
  {
    const double nmin =
        std::min({spec.dims.nx, spec.dims.ny, spec.dims.nz});
    model.marker_center = {0.20 * spec.dims.nx, 0.25 * spec.dims.ny,
                           0.72 * spec.dims.nz};
    const double ms = 0.05 * nmin;
    model.marker_inv2s2 = 1.0 / (2.0 * ms * ms);
  }

  // Scale bump amplitudes so the peak grid displacement matches
  // spec.magnitude, then cap the Lipschitz constant to keep id + field
  // invertible (this also bounds |grad field| < 1, hence det(I + grad) > 0).
  PhantomPair out;
  out.gt_ddf = Ddf(spec.dims);
  const Dims& d = spec.dims;
  if (!model.bumps.empty()) {
    double peak2 = 0.0;
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
          const Vec3 g = model.field(x, y, z);
          peak2 = std::max(peak2, g.x * g.x + g.y * g.y + g.z * g.z);
        }
    double lipschitz = 0.0;
    for (const auto& b : model.bumps) {
      const double an = std::sqrt(b.amp.x * b.amp.x + b.amp.y * b.amp.y +
                                  b.amp.z * b.amp.z);
      lipschitz += an * std::exp(-0.5) / b.sigma;
    }
    double scale = peak2 > 0.0 ? spec.magnitude / std::sqrt(peak2) : 0.0;
    if (scale * lipschitz > kLipschitzCap)
      scale = kLipschitzCap / lipschitz;
    for (auto& b : model.bumps) {
      b.amp.x *= scale;
      b.amp.y *= scale;
      b.amp.z *= scale;
    }
  }

  out.fixed = Volume(d);
  out.moving = Volume(d);
  out.fixed_labels = LabelMap(d);
  out.moving_labels = LabelMap(d);

  parallel_chunks(static_cast<std::size_t>(d.nz), 1,
                  [&](std::size_t z0, std::size_t z1) {
                    for (std::size_t z = z0; z < z1; ++z)
                      for (int y = 0; y < d.ny; ++y) {
                        std::size_t i = (z * d.ny + static_cast<std::size_t>(y)) * d.nx;
                        for (int x = 0; x < d.nx; ++x, ++i) {
                          const double zz = static_cast<double>(z);
                          out.fixed.data[i] = static_cast<float>(
                              model.intensity(x, y, zz));
                          out.fixed_labels.data[i] = model.label(x, y, zz);
                          const Vec3 g = model.field(x, y, zz);
                          out.gt_ddf.dx[i] = static_cast<float>(g.x);
                          out.gt_ddf.dy[i] = static_cast<float>(g.y);
                          out.gt_ddf.dz[i] = static_cast<float>(g.z);
                        }
                      }
                  });

  // moving(y) = phantom(inverse(y)), so warping moving by gt_ddf lands back
  // on the fixed image: moving(x + gt(x)) = phantom(x).
  if (model.bumps.empty()) {
    out.moving.data = out.fixed.data;
    out.moving_labels.data = out.fixed_labels.data;
  } else {
    parallel_chunks(
        static_cast<std::size_t>(d.nz), 1, [&](std::size_t z0, std::size_t z1) {
          for (std::size_t z = z0; z < z1; ++z)
            for (int y = 0; y < d.ny; ++y) {
              std::size_t i = (z * d.ny + static_cast<std::size_t>(y)) * d.nx;
              Vec3 guess{-1.0, static_cast<double>(y), static_cast<double>(z)};
              for (int x = 0; x < d.nx; ++x, ++i) {
                const Vec3 target{static_cast<double>(x),
                                  static_cast<double>(y),
                                  static_cast<double>(z)};
                guess.x += 1.0; // previous solution shifted one voxel
                const Vec3 p = model.invert(target, guess);
                guess = p;
                out.moving.data[i] =
                    static_cast<float>(model.intensity(p.x, p.y, p.z));
                out.moving_labels.data[i] = model.label(p.x, p.y, p.z);
              }
            }
        });
  }

  out.fixed = normalize_intensity(out.fixed);
  out.moving = normalize_intensity(out.moving);

  if (jacobian_determinant_min(out.gt_ddf) <= 0.0)
    throw NumericalAbort(
        "generate_phantom: ground-truth field failed the fold-free check");
  return out;
}

} // namespace lowreg
