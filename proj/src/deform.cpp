#include "lowreg/deform.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "lowreg/errors.hpp"
#include "lowreg/parallel.hpp"

namespace lowreg {

namespace {

struct AxisTap {
  int i0 = 0, i1 = 0;
  double frac = 0.0;
  bool inside = false; // clamping inactive -> derivative may be nonzero
};

inline AxisTap axis_tap(double p, int n) {
  AxisTap t;
  if (n == 1)
    return t;
  t.inside = p >= 0.0 && p <= static_cast<double>(n - 1);
  double pc = std::clamp(p, 0.0, static_cast<double>(n - 1));
  int i0 = static_cast<int>(pc);
  if (i0 > n - 2)
    i0 = n - 2;
  t.i0 = i0;
  t.i1 = i0 + 1;
  t.frac = pc - i0;
  return t;
}

inline void check_conforming(const Dims& a, const Dims& b, const char* who) {
  if (!(a == b))
    throw std::invalid_argument(std::string(who) + ": dims mismatch");
}

// Shared driver: parallel sweep over z-slabs with a per-voxel callback that
// receives the flat index and integer coordinates.
template <class Body>
void for_each_voxel_parallel(const Dims& dims, const Body& body) {
  const int nx = dims.nx, ny = dims.ny;
  parallel_chunks(static_cast<std::size_t>(dims.nz), 1,
                  [&](std::size_t z0, std::size_t z1) {
                    for (std::size_t z = z0; z < z1; ++z)
                      for (int y = 0; y < ny; ++y) {
                        std::size_t idx =
                            (z * ny + static_cast<std::size_t>(y)) * nx;
                        for (int x = 0; x < nx; ++x, ++idx)
                          body(idx, x, y, static_cast<int>(z));
                      }
                  });
}

constexpr const char* kNonFiniteMsg = "deformation produced a non-finite sample coordinate";

} // namespace

void Ddf::fill_zero() {
  std::fill(dx.begin(), dx.end(), 0.0f);
  std::fill(dy.begin(), dy.end(), 0.0f);
  std::fill(dz.begin(), dz.end(), 0.0f);
}

double sample_trilinear(const float* f, const Dims& dims, double px, double py,
                        double pz) {
  const AxisTap tx = axis_tap(px, dims.nx);
  const AxisTap ty = axis_tap(py, dims.ny);
  const AxisTap tz = axis_tap(pz, dims.nz);
  const std::size_t sy = static_cast<std::size_t>(dims.nx);
  const std::size_t sz = sy * dims.ny;

  const std::size_t b00 = tz.i0 * sz + ty.i0 * sy;
  const std::size_t b10 = tz.i0 * sz + ty.i1 * sy;
  const std::size_t b01 = tz.i1 * sz + ty.i0 * sy;
  const std::size_t b11 = tz.i1 * sz + ty.i1 * sy;

  const double fx = tx.frac, fy = ty.frac, fz = tz.frac;
  const double c00 = f[b00 + tx.i0] * (1.0 - fx) + f[b00 + tx.i1] * fx;
  const double c10 = f[b10 + tx.i0] * (1.0 - fx) + f[b10 + tx.i1] * fx;
  const double c01 = f[b01 + tx.i0] * (1.0 - fx) + f[b01 + tx.i1] * fx;
  const double c11 = f[b11 + tx.i0] * (1.0 - fx) + f[b11 + tx.i1] * fx;
  return (c00 * (1.0 - fy) + c10 * fy) * (1.0 - fz) +
         (c01 * (1.0 - fy) + c11 * fy) * fz;
}

TrilinearTap sample_trilinear_grad(const float* f, const Dims& dims, double px,
                                   double py, double pz) {
  const AxisTap tx = axis_tap(px, dims.nx);
  const AxisTap ty = axis_tap(py, dims.ny);
  const AxisTap tz = axis_tap(pz, dims.nz);
  const std::size_t sy = static_cast<std::size_t>(dims.nx);
  const std::size_t sz = sy * dims.ny;

  const double c000 = f[tz.i0 * sz + ty.i0 * sy + tx.i0];
  const double c100 = f[tz.i0 * sz + ty.i0 * sy + tx.i1];
  const double c010 = f[tz.i0 * sz + ty.i1 * sy + tx.i0];
  const double c110 = f[tz.i0 * sz + ty.i1 * sy + tx.i1];
  const double c001 = f[tz.i1 * sz + ty.i0 * sy + tx.i0];
  const double c101 = f[tz.i1 * sz + ty.i0 * sy + tx.i1];
  const double c011 = f[tz.i1 * sz + ty.i1 * sy + tx.i0];
  const double c111 = f[tz.i1 * sz + ty.i1 * sy + tx.i1];

  const double fx = tx.frac, fy = ty.frac, fz = tz.frac;
  const double gx = 1.0 - fx, gy = 1.0 - fy, gz = 1.0 - fz;

  TrilinearTap t;
  const double c00 = c000 * gx + c100 * fx;
  const double c10 = c010 * gx + c110 * fx;
  const double c01 = c001 * gx + c101 * fx;
  const double c11 = c011 * gx + c111 * fx;
  t.value = (c00 * gy + c10 * fy) * gz + (c01 * gy + c11 * fy) * fz;
  if (tx.inside)
    t.ddx = ((c100 - c000) * gy + (c110 - c010) * fy) * gz +
            ((c101 - c001) * gy + (c111 - c011) * fy) * fz;
  if (ty.inside)
    t.ddy = (c10 - c00) * gz + (c11 - c01) * fz;
  if (tz.inside)
    t.ddz = (c01 * gy + c11 * fy) - (c00 * gy + c10 * fy);
  return t;
}

std::array<double, 3> sample_ddf(const Ddf& d, double px, double py, double pz) {
  return {sample_trilinear(d.dx.data(), d.dims, px, py, pz),
          sample_trilinear(d.dy.data(), d.dims, px, py, pz),
          sample_trilinear(d.dz.data(), d.dims, px, py, pz)};
}

void warp_trilinear_into(const Volume& moving, const Ddf& d, Volume& out) {
  if (moving.dims.voxel_count() == 0 || d.voxel_count() == 0)
    throw std::invalid_argument("warp_trilinear: empty input");
  out.dims = d.dims;
  out.spacing = moving.spacing;
  out.data.resize(d.voxel_count());

  std::atomic<bool> bad{false};
  const float* __restrict__ m = moving.data.data();
  const Dims md = moving.dims;

  if (md.nx < 2 || md.ny < 2 || md.nz < 2) {
    // Degenerate axes: go through the generic per-point sampler.
    for_each_voxel_parallel(d.dims, [&](std::size_t idx, int x, int y, int z) {
      const double px = x + static_cast<double>(d.dx[idx]);
      const double py = y + static_cast<double>(d.dy[idx]);
      const double pz = z + static_cast<double>(d.dz[idx]);
      if (!(std::isfinite(px) && std::isfinite(py) && std::isfinite(pz))) {
        bad.store(true, std::memory_order_relaxed);
        out.data[idx] = 0.0f;
        return;
      }
      out.data[idx] = static_cast<float>(sample_trilinear(m, md, px, py, pz));
    });
    if (bad.load())
      throw NumericalAbort(std::string("warp_trilinear: ") + kNonFiniteMsg);
    return;
  }

  const float xmax = static_cast<float>(md.nx - 1);
  const float ymax = static_cast<float>(md.ny - 1);
  const float zmax = static_cast<float>(md.nz - 1);
  const std::size_t msy = static_cast<std::size_t>(md.nx);
  const std::size_t msz = msy * md.ny;
  const float* __restrict__ ddx = d.dx.data();
  const float* __restrict__ ddy = d.dy.data();
  const float* __restrict__ ddz = d.dz.data();
  float* __restrict__ o = out.data.data();
  const int nx = d.dims.nx, ny = d.dims.ny;

  parallel_chunks(static_cast<std::size_t>(d.dims.nz), 1, [&](std::size_t z0,
                                                              std::size_t z1) {
    for (std::size_t z = z0; z < z1; ++z)
      for (int y = 0; y < ny; ++y) {
        std::size_t idx = (z * ny + static_cast<std::size_t>(y)) * nx;
        for (int x = 0; x < nx; ++x, ++idx) {
          const float px = static_cast<float>(x) + ddx[idx];
          const float py = static_cast<float>(y) + ddy[idx];
          const float pz = static_cast<float>(z) + ddz[idx];
          if (!(std::isfinite(px) && std::isfinite(py) && std::isfinite(pz))) {
            bad.store(true, std::memory_order_relaxed);
            o[idx] = 0.0f;
            continue;
          }
          const float cx = px < 0.0f ? 0.0f : (px > xmax ? xmax : px);
          const float cy = py < 0.0f ? 0.0f : (py > ymax ? ymax : py);
          const float cz = pz < 0.0f ? 0.0f : (pz > zmax ? zmax : pz);
          int ix = static_cast<int>(cx);
          int iy = static_cast<int>(cy);
          int iz = static_cast<int>(cz);
          if (ix > md.nx - 2) ix = md.nx - 2;
          if (iy > md.ny - 2) iy = md.ny - 2;
          if (iz > md.nz - 2) iz = md.nz - 2;
          const float fx = cx - static_cast<float>(ix);
          const float fy = cy - static_cast<float>(iy);
          const float fz = cz - static_cast<float>(iz);
          const std::size_t base = iz * msz + iy * msy + ix;
          const float c00 = m[base] + fx * (m[base + 1] - m[base]);
          const float c10 =
              m[base + msy] + fx * (m[base + msy + 1] - m[base + msy]);
          const float c01 =
              m[base + msz] + fx * (m[base + msz + 1] - m[base + msz]);
          const float c11 = m[base + msz + msy] +
                            fx * (m[base + msz + msy + 1] - m[base + msz + msy]);
          const float c0 = c00 + fy * (c10 - c00);
          const float c1 = c01 + fy * (c11 - c01);
          o[idx] = c0 + fz * (c1 - c0);
        }
      }
  });
  if (bad.load())
    throw NumericalAbort(std::string("warp_trilinear: ") + kNonFiniteMsg);
}

Volume warp_trilinear(const Volume& moving, const Ddf& d) {
  Volume out;
  warp_trilinear_into(moving, d, out);
  return out;
}

void warp_with_partials(const Volume& moving, const Ddf& d, Volume& warped,
                        Ddf& partials) {
  if (moving.dims.voxel_count() == 0 || d.voxel_count() == 0)
    throw std::invalid_argument("warp_with_partials: empty input");
  warped.dims = d.dims;
  warped.spacing = moving.spacing;
  warped.data.resize(d.voxel_count());
  partials.dims = d.dims;
  partials.dx.resize(d.voxel_count());
  partials.dy.resize(d.voxel_count());
  partials.dz.resize(d.voxel_count());

  std::atomic<bool> bad{false};
  const float* __restrict__ m = moving.data.data();
  const Dims md = moving.dims;

  if (md.nx < 2 || md.ny < 2 || md.nz < 2) {
    for_each_voxel_parallel(d.dims, [&](std::size_t idx, int x, int y, int z) {
      const double px = x + static_cast<double>(d.dx[idx]);
      const double py = y + static_cast<double>(d.dy[idx]);
      const double pz = z + static_cast<double>(d.dz[idx]);
      if (!(std::isfinite(px) && std::isfinite(py) && std::isfinite(pz))) {
        bad.store(true, std::memory_order_relaxed);
        warped.data[idx] = 0.0f;
        partials.dx[idx] = partials.dy[idx] = partials.dz[idx] = 0.0f;
        return;
      }
      const TrilinearTap t = sample_trilinear_grad(m, md, px, py, pz);
      warped.data[idx] = static_cast<float>(t.value);
      partials.dx[idx] = static_cast<float>(t.ddx);
      partials.dy[idx] = static_cast<float>(t.ddy);
      partials.dz[idx] = static_cast<float>(t.ddz);
    });
    if (bad.load())
      throw NumericalAbort(std::string("warp_with_partials: ") + kNonFiniteMsg);
    return;
  }

  const float xmax = static_cast<float>(md.nx - 1);
  const float ymax = static_cast<float>(md.ny - 1);
  const float zmax = static_cast<float>(md.nz - 1);
  const std::size_t msy = static_cast<std::size_t>(md.nx);
  const std::size_t msz = msy * md.ny;
  const float* __restrict__ ddx = d.dx.data();
  const float* __restrict__ ddy = d.dy.data();
  const float* __restrict__ ddz = d.dz.data();
  float* __restrict__ o = warped.data.data();
  float* __restrict__ gx = partials.dx.data();
  float* __restrict__ gy = partials.dy.data();
  float* __restrict__ gz = partials.dz.data();
  const int nx = d.dims.nx, ny = d.dims.ny;

  parallel_chunks(static_cast<std::size_t>(d.dims.nz), 1, [&](std::size_t z0,
                                                              std::size_t z1) {
    for (std::size_t z = z0; z < z1; ++z)
      for (int y = 0; y < ny; ++y) {
        std::size_t idx = (z * ny + static_cast<std::size_t>(y)) * nx;
        for (int x = 0; x < nx; ++x, ++idx) {
          const float px = static_cast<float>(x) + ddx[idx];
          const float py = static_cast<float>(y) + ddy[idx];
          const float pz = static_cast<float>(z) + ddz[idx];
          if (!(std::isfinite(px) && std::isfinite(py) && std::isfinite(pz))) {
            bad.store(true, std::memory_order_relaxed);
            o[idx] = 0.0f;
            gx[idx] = gy[idx] = gz[idx] = 0.0f;
            continue;
          }
          // Clamped-off axes contribute zero derivative.
          const float inx = (px >= 0.0f && px <= xmax) ? 1.0f : 0.0f;
          const float iny = (py >= 0.0f && py <= ymax) ? 1.0f : 0.0f;
          const float inz = (pz >= 0.0f && pz <= zmax) ? 1.0f : 0.0f;
          const float cx = px < 0.0f ? 0.0f : (px > xmax ? xmax : px);
          const float cy = py < 0.0f ? 0.0f : (py > ymax ? ymax : py);
          const float cz = pz < 0.0f ? 0.0f : (pz > zmax ? zmax : pz);
          int ix = static_cast<int>(cx);
          int iy = static_cast<int>(cy);
          int iz = static_cast<int>(cz);
          if (ix > md.nx - 2) ix = md.nx - 2;
          if (iy > md.ny - 2) iy = md.ny - 2;
          if (iz > md.nz - 2) iz = md.nz - 2;
          const float fx = cx - static_cast<float>(ix);
          const float fy = cy - static_cast<float>(iy);
          const float fz = cz - static_cast<float>(iz);
          const float hy = 1.0f - fy, hz = 1.0f - fz;
          const std::size_t base = iz * msz + iy * msy + ix;
          const float c000 = m[base], c100 = m[base + 1];
          const float c010 = m[base + msy], c110 = m[base + msy + 1];
          const float c001 = m[base + msz], c101 = m[base + msz + 1];
          const float c011 = m[base + msz + msy], c111 = m[base + msz + msy + 1];
          const float d00 = c100 - c000, d10 = c110 - c010;
          const float d01 = c101 - c001, d11 = c111 - c011;
          const float c00 = c000 + fx * d00;
          const float c10 = c010 + fx * d10;
          const float c01 = c001 + fx * d01;
          const float c11 = c011 + fx * d11;
          const float c0 = c00 + fy * (c10 - c00);
          const float c1 = c01 + fy * (c11 - c01);
          o[idx] = c0 + fz * (c1 - c0);
          gx[idx] = inx *
                    ((d00 * hy + d10 * fy) * hz + (d01 * hy + d11 * fy) * fz);
          gy[idx] = iny * ((c10 - c00) * hz + (c11 - c01) * fz);
          gz[idx] = inz * (c1 - c0);
        }
      }
  });
  if (bad.load())
    throw NumericalAbort(std::string("warp_with_partials: ") + kNonFiniteMsg);
}

void apply_upstream(const std::vector<float>& upstream, const Ddf& partials,
                    Ddf& out) {
  const std::size_t n = partials.voxel_count();
  if (upstream.size() != n)
    throw std::invalid_argument("apply_upstream: upstream size mismatch");
  out.dims = partials.dims;
  out.dx.resize(n);
  out.dy.resize(n);
  out.dz.resize(n);
  const float* __restrict__ up = upstream.data();
  const float* __restrict__ sx = partials.dx.data();
  const float* __restrict__ sy = partials.dy.data();
  const float* __restrict__ sz = partials.dz.data();
  float* __restrict__ gx = out.dx.data();
  float* __restrict__ gy = out.dy.data();
  float* __restrict__ gz = out.dz.data();
  parallel_chunks(n, std::size_t{1} << 16, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const float u = up[i];
      gx[i] = u * sx[i];
      gy[i] = u * sy[i];
      gz[i] = u * sz[i];
    }
  });
}

void warp_gradient(const Volume& moving, const Ddf& d,
                   const std::vector<float>& upstream, Ddf& out) {
  if (upstream.size() != d.voxel_count())
    throw std::invalid_argument("warp_gradient: upstream size mismatch");
  Volume scratch;
  Ddf partials;
  warp_with_partials(moving, d, scratch, partials);
  apply_upstream(upstream, partials, out);
}

LabelMap warp_labels_nn(const LabelMap& labels, const Ddf& d) {
  if (labels.data.empty() || d.voxel_count() == 0)
    throw std::invalid_argument("warp_labels_nn: empty input");
  LabelMap out(d.dims);
  std::atomic<bool> bad{false};
  const Dims ld = labels.dims;
  for_each_voxel_parallel(d.dims, [&](std::size_t idx, int x, int y, int z) {
    const double px = x + static_cast<double>(d.dx[idx]);
    const double py = y + static_cast<double>(d.dy[idx]);
    const double pz = z + static_cast<double>(d.dz[idx]);
    if (!(std::isfinite(px) && std::isfinite(py) && std::isfinite(pz))) {
      bad.store(true, std::memory_order_relaxed);
      return;
    }
    const int xi = std::clamp(static_cast<int>(std::lround(px)), 0, ld.nx - 1);
    const int yi = std::clamp(static_cast<int>(std::lround(py)), 0, ld.ny - 1);
    const int zi = std::clamp(static_cast<int>(std::lround(pz)), 0, ld.nz - 1);
    out.data[idx] = labels.at(xi, yi, zi);
  });
  if (bad.load())
    throw NumericalAbort(std::string("warp_labels_nn: ") + kNonFiniteMsg);
  return out;
}

namespace {

// Energy-only pass, kept in double for finite-difference use.
double bending_energy_sum(const float* f, const Dims& dims) {
  const int nx = dims.nx, ny = dims.ny, nz = dims.nz;
  const std::ptrdiff_t sy = nx;
  const std::ptrdiff_t sz = static_cast<std::ptrdiff_t>(nx) * ny;

  return parallel_sum(
      static_cast<std::size_t>(nz) - 2, 1, [&](std::size_t z0, std::size_t z1) {
        double acc = 0.0;
        for (std::size_t zi = z0; zi < z1; ++zi) {
          const std::size_t z = zi + 1;
          for (int y = 1; y + 1 < ny; ++y) {
            const std::size_t row = (z * ny + static_cast<std::size_t>(y)) * nx;
            for (int x = 1; x + 1 < nx; ++x) {
              const std::size_t i = row + x;
              const double c = f[i];
              const double vxx = f[i - 1] - 2.0 * c + f[i + 1];
              const double vyy = f[i - sy] - 2.0 * c + f[i + sy];
              const double vzz = f[i - sz] - 2.0 * c + f[i + sz];
              const double vxy = 0.25 * (f[i + 1 + sy] - f[i + 1 - sy] -
                                         f[i - 1 + sy] + f[i - 1 - sy]);
              const double vxz = 0.25 * (f[i + 1 + sz] - f[i + 1 - sz] -
                                         f[i - 1 + sz] + f[i - 1 - sz]);
              const double vyz = 0.25 * (f[i + sy + sz] - f[i + sy - sz] -
                                         f[i - sy + sz] + f[i - sy - sz]);
              acc += vxx * vxx + vyy * vyy + vzz * vzz +
                     2.0 * (vxy * vxy + vxz * vxz + vyz * vyz);
            }
          }
        }
        return acc;
      });
}

// --- fused energy + gradient ---
//
// The gradient of the energy is each stencil applied again (its adjoint) to
// its own masked residual field, where "masked" means the residual is taken
// as zero outside the one-voxel interior. Residuals are materialized one
// z-plane at a time in a small ring so the whole pass is two streams of
// plain shifted-row loops; planes carry two zero padding columns per side
// and zero border rows, which makes the masking implicit.

enum ResType { kXX = 0, kYY, kZZ, kXY, kXZ, kYZ };

struct ResidualRing {
  int nx = 0, ny = 0, nz = 0;
  int stride = 0;        // padded row length
  std::size_t plane = 0; // stride * ny
  std::vector<float> buf;
  std::vector<float> zrow; // stays all-zero

  void reset(const Dims& d) {
    nx = d.nx;
    ny = d.ny;
    nz = d.nz;
    stride = nx + 4;
    plane = static_cast<std::size_t>(stride) * ny;
    buf.assign(plane * 18, 0.0f); // 6 types x 3 ring slots
    zrow.assign(static_cast<std::size_t>(stride), 0.0f);
  }
  // Row y of residual plane z. Non-interior planes and out-of-range rows
  // collapse onto the shared zero row; border rows and padding columns of
  // live planes are never written, so they stay zero across slot reuse.
  const float* row(ResType t, int z, int y) const {
    if (z < 1 || z + 1 >= nz || y < 0 || y >= ny) return zrow.data() + 2;
    return buf.data() + (static_cast<std::size_t>(t) * 3 + z % 3) * plane +
           static_cast<std::size_t>(y) * stride + 2;
  }
  float* wrow(ResType t, int z, int y) {
    return buf.data() + (static_cast<std::size_t>(t) * 3 + z % 3) * plane +
           static_cast<std::size_t>(y) * stride + 2;
  }
};

// One interior row of the six masked residuals plus its energy terms. The
// f rows are unpadded volume rows; outputs are padded ring rows.
void residual_row(const float* __restrict__ c, const float* __restrict__ ym,
                  const float* __restrict__ yp, const float* __restrict__ zm,
                  const float* __restrict__ zp, const float* __restrict__ mm,
                  const float* __restrict__ mp, const float* __restrict__ pm,
                  const float* __restrict__ pp, int nx, float* __restrict__ oxx,
                  float* __restrict__ oyy, float* __restrict__ ozz,
                  float* __restrict__ oxy, float* __restrict__ oxz,
                  float* __restrict__ oyz, float* __restrict__ eb) {
  for (int x = 1; x + 1 < nx; ++x) {
    const float cc = c[x];
    const float vxx = c[x - 1] - 2.0f * cc + c[x + 1];
    const float vyy = ym[x] - 2.0f * cc + yp[x];
    const float vzz = zm[x] - 2.0f * cc + zp[x];
    const float vxy = 0.25f * (yp[x + 1] - yp[x - 1] - ym[x + 1] + ym[x - 1]);
    const float vxz = 0.25f * (zp[x + 1] - zp[x - 1] - zm[x + 1] + zm[x - 1]);
    const float vyz = 0.25f * (pp[x] - pm[x] - mp[x] + mm[x]);
    oxx[x] = vxx;
    oyy[x] = vyy;
    ozz[x] = vzz;
    oxy[x] = vxy;
    oxz[x] = vxz;
    oyz[x] = vyz;
    eb[x] = vxx * vxx + vyy * vyy + vzz * vzz +
            2.0f * (vxy * vxy + vxz * vxz + vyz * vyz);
  }
}

// Builds the residual planes at interior z and returns the plane's energy.
double build_residual_planes(const float* f, const Dims& d, ResidualRing& r,
                             int z, float* __restrict__ eb) {
  const std::size_t sy = d.nx;
  const std::size_t sz = static_cast<std::size_t>(d.nx) * d.ny;
  const float* base = f + static_cast<std::size_t>(z) * sz;
  double acc = 0.0;
  for (int y = 1; y + 1 < d.ny; ++y) {
    const float* c = base + static_cast<std::size_t>(y) * sy;
    residual_row(c, c - sy, c + sy, c - sz, c + sz, c - sy - sz, c - sy + sz,
                 c + sy - sz, c + sy + sz, d.nx, r.wrow(kXX, z, y),
                 r.wrow(kYY, z, y), r.wrow(kZZ, z, y), r.wrow(kXY, z, y),
                 r.wrow(kXZ, z, y), r.wrow(kYZ, z, y), eb);
    for (int x = 1; x + 1 < d.nx; ++x) acc += eb[x];
  }
  return acc;
}

// One output row of the adjoint: every stencil re-applied to its residual
// rows (m/p suffixes are -1/+1 in y then z). Rows outside the live region
// arrive as the zero row, so there are no edge cases left in the loop.
void adjoint_row(const float* __restrict__ xxc, const float* __restrict__ yym,
                 const float* __restrict__ yyc, const float* __restrict__ yyp,
                 const float* __restrict__ zzm, const float* __restrict__ zzc,
                 const float* __restrict__ zzp, const float* __restrict__ xym,
                 const float* __restrict__ xyp, const float* __restrict__ xzm,
                 const float* __restrict__ xzp, const float* __restrict__ yzmm,
                 const float* __restrict__ yzmp, const float* __restrict__ yzpm,
                 const float* __restrict__ yzpp, int nx, float wf,
                 float* __restrict__ out) {
  for (int x = 0; x < nx; ++x) {
    const float g =
        (xxc[x - 1] - 2.0f * xxc[x] + xxc[x + 1]) +
        (yym[x] - 2.0f * yyc[x] + yyp[x]) + (zzm[x] - 2.0f * zzc[x] + zzp[x]) +
        0.5f * (xyp[x + 1] - xyp[x - 1] - xym[x + 1] + xym[x - 1]) +
        0.5f * (xzp[x + 1] - xzp[x - 1] - xzm[x + 1] + xzm[x - 1]) +
        0.5f * (yzpp[x] - yzpm[x] - yzmp[x] + yzmm[x]);
    out[x] += wf * g;
  }
}

// Energy plus w-scaled gradient of one DDF component. Each slab walks its
// z range once, building residual plane z+1 and emitting the adjoint for
// plane z; a plane's energy is counted by the slab that owns it.
double bending_component_grad(const float* f, const Dims& dims, double w,
                              float* out) {
  const int nx = dims.nx, ny = dims.ny, nz = dims.nz;
  const float wf = static_cast<float>(w);
  return parallel_sum(
      static_cast<std::size_t>(nz), 4, [&](std::size_t z0, std::size_t z1) {
        static thread_local ResidualRing ring;
        static thread_local std::vector<float> eb;
        if (ring.nx != nx || ring.ny != ny || ring.nz != nz) ring.reset(dims);
        eb.resize(static_cast<std::size_t>(nx));
        const int zb0 = static_cast<int>(z0), zb1 = static_cast<int>(z1);
        double acc = 0.0;
        auto build = [&](int z) {
          if (z < 1 || z + 1 >= nz) return;
          const double e = build_residual_planes(f, dims, ring, z, eb.data());
          if (z >= zb0 && z < zb1) acc += e;
        };
        build(zb0 - 1);
        build(zb0);
        for (int ze = zb0; ze < zb1; ++ze) {
          build(ze + 1);
          for (int y = 0; y < ny; ++y)
            adjoint_row(ring.row(kXX, ze, y), ring.row(kYY, ze, y - 1),
                        ring.row(kYY, ze, y), ring.row(kYY, ze, y + 1),
                        ring.row(kZZ, ze - 1, y), ring.row(kZZ, ze, y),
                        ring.row(kZZ, ze + 1, y), ring.row(kXY, ze, y - 1),
                        ring.row(kXY, ze, y + 1), ring.row(kXZ, ze - 1, y),
                        ring.row(kXZ, ze + 1, y), ring.row(kYZ, ze - 1, y - 1),
                        ring.row(kYZ, ze + 1, y - 1),
                        ring.row(kYZ, ze - 1, y + 1),
                        ring.row(kYZ, ze + 1, y + 1), nx, wf,
                        out + (static_cast<std::size_t>(ze) * ny + y) * nx);
        }
        return acc;
      });
}

void check_bending_pre(const Ddf& d) {
  if (d.dims.nx < 3 || d.dims.ny < 3 || d.dims.nz < 3)
    throw std::invalid_argument("bending_energy: each axis extent must be >= 3");
  if (d.dx.size() != d.voxel_count() || d.dy.size() != d.voxel_count() ||
      d.dz.size() != d.voxel_count())
    throw std::invalid_argument("bending_energy: component size mismatch");
}

std::size_t interior_count(const Dims& d) {
  return static_cast<std::size_t>(d.nx - 2) * (d.ny - 2) * (d.nz - 2);
}

} // namespace

double bending_energy(const Ddf& d) {
  check_bending_pre(d);
  const double n = static_cast<double>(interior_count(d.dims));
  double e = 0.0;
  for (const float* f : {d.dx.data(), d.dy.data(), d.dz.data()})
    e += bending_energy_sum(f, d.dims);
  return e / n;
}

double bending_energy_accumulate_grad(const Ddf& d, double scale,
                                      Ddf& grad_accum) {
  check_bending_pre(d);
  check_conforming(d.dims, grad_accum.dims, "bending_energy_accumulate_grad");

  const double ninv = 1.0 / static_cast<double>(interior_count(d.dims));
  const double w = scale * 2.0 * ninv;
  double e = bending_component_grad(d.dx.data(), d.dims, w,
                                    grad_accum.dx.data());
  e += bending_component_grad(d.dy.data(), d.dims, w, grad_accum.dy.data());
  e += bending_component_grad(d.dz.data(), d.dims, w, grad_accum.dz.data());
  return e * ninv;
}

void bending_energy_grad(const Ddf& d, Ddf& out) {
  out.dims = d.dims;
  out.dx.assign(d.voxel_count(), 0.0f);
  out.dy.assign(d.voxel_count(), 0.0f);
  out.dz.assign(d.voxel_count(), 0.0f);
  bending_energy_accumulate_grad(d, 1.0, out);
}

double jacobian_determinant_min(const Ddf& d) {
  const int nx = d.dims.nx, ny = d.dims.ny, nz = d.dims.nz;
  if (nx < 2 || ny < 2 || nz < 2)
    throw std::invalid_argument(
        "jacobian_determinant_min: each axis extent must be >= 2");

  // Central differences where possible, one-sided at the faces (both exact
  // for affine fields).
  auto deriv = [](const float* f, std::size_t i, int p, int n,
                  std::ptrdiff_t stride) -> double {
    if (p == 0)
      return static_cast<double>(f[i + stride]) - f[i];
    if (p == n - 1)
      return static_cast<double>(f[i]) - f[i - stride];
    return 0.5 * (static_cast<double>(f[i + stride]) - f[i - stride]);
  };

  const std::ptrdiff_t sy = nx;
  const std::ptrdiff_t sz = static_cast<std::ptrdiff_t>(nx) * ny;
  double dmin = std::numeric_limits<double>::infinity();
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        const double a11 = 1.0 + deriv(d.dx.data(), i, x, nx, 1);
        const double a12 = deriv(d.dx.data(), i, y, ny, sy);
        const double a13 = deriv(d.dx.data(), i, z, nz, sz);
        const double a21 = deriv(d.dy.data(), i, x, nx, 1);
        const double a22 = 1.0 + deriv(d.dy.data(), i, y, ny, sy);
        const double a23 = deriv(d.dy.data(), i, z, nz, sz);
        const double a31 = deriv(d.dz.data(), i, x, nx, 1);
        const double a32 = deriv(d.dz.data(), i, y, ny, sy);
        const double a33 = 1.0 + deriv(d.dz.data(), i, z, nz, sz);
        const double det = a11 * (a22 * a33 - a23 * a32) -
                           a12 * (a21 * a33 - a23 * a31) +
                           a13 * (a21 * a32 - a22 * a31);
        dmin = std::min(dmin, det);
      }
  return dmin;
}

Dims downsample_dims(const Dims& d) {
  return Dims{(d.nx + 1) / 2, (d.ny + 1) / 2, (d.nz + 1) / 2};
}

Volume downsample_mean2(const Volume& v) {
  if (v.dims.voxel_count() == 0)
    throw std::invalid_argument("downsample_mean2: empty input");
  Volume out(downsample_dims(v.dims));
  out.spacing = {v.spacing[0] * 2, v.spacing[1] * 2, v.spacing[2] * 2};
  for (int z = 0; z < out.dims.nz; ++z)
    for (int y = 0; y < out.dims.ny; ++y)
      for (int x = 0; x < out.dims.nx; ++x) {
        const int x1 = std::min(2 * x + 2, v.dims.nx);
        const int y1 = std::min(2 * y + 2, v.dims.ny);
        const int z1 = std::min(2 * z + 2, v.dims.nz);
        double sum = 0.0;
        int count = 0;
        for (int zz = 2 * z; zz < z1; ++zz)
          for (int yy = 2 * y; yy < y1; ++yy)
            for (int xx = 2 * x; xx < x1; ++xx, ++count)
              sum += v.at(xx, yy, zz);
        out.at(x, y, z) = static_cast<float>(sum / count);
      }
  return out;
}

Ddf upsample_ddf2(const Ddf& coarse, const Dims& fine) {
  if (coarse.voxel_count() == 0)
    throw std::invalid_argument("upsample_ddf2: empty input");
  Ddf out(fine);
  const Dims cd = coarse.dims;
  for_each_voxel_parallel(fine, [&](std::size_t idx, int x, int y, int z) {
    const double cx = 0.5 * x, cy = 0.5 * y, cz = 0.5 * z;
    out.dx[idx] =
        static_cast<float>(2.0 * sample_trilinear(coarse.dx.data(), cd, cx, cy, cz));
    out.dy[idx] =
        static_cast<float>(2.0 * sample_trilinear(coarse.dy.data(), cd, cx, cy, cz));
    out.dz[idx] =
        static_cast<float>(2.0 * sample_trilinear(coarse.dz.data(), cd, cx, cy, cz));
  });
  return out;
}

} // namespace lowreg
