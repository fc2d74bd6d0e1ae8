#include "lowreg/lowrank.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "lowreg/parallel.hpp"

namespace lowreg {

namespace {

struct SliceScratch {
  std::vector<double> w;   // h x w slice / gradient image
  std::vector<double> a;   // r x w
  std::vector<double> b;   // r x r
  std::vector<double> t;   // h x r
};

SliceScratch& scratch() {
  static thread_local SliceScratch s;
  return s;
}

void check_dims(const LowRankProjector& p, const Volume& v, const char* who) {
  if (!(v.dims == p.dims))
    throw std::invalid_argument(std::string(who) +
                                ": volume dims differ from projector dims");
  if (v.data.size() != v.dims.voxel_count())
    throw std::invalid_argument(std::string(who) + ": volume size mismatch");
}

// Scatter a row-major h*w double slice back into volume storage.
void scatter_slice(float* data, const Dims& dims, SliceAxis axis, int s,
                   const double* buf) {
  const SliceShape sh = slice_shape(dims, axis);
  switch (axis) {
  case SliceAxis::Z:
    for (int i = 0; i < sh.h; ++i) {
      float* row = data + (static_cast<std::size_t>(s) * dims.ny + i) * dims.nx;
      const double* src = buf + static_cast<std::size_t>(i) * sh.w;
      for (int j = 0; j < sh.w; ++j)
        row[j] = static_cast<float>(src[j]);
    }
    break;
  case SliceAxis::Y:
    for (int i = 0; i < sh.h; ++i) {
      float* row = data + (static_cast<std::size_t>(i) * dims.ny + s) * dims.nx;
      const double* src = buf + static_cast<std::size_t>(i) * sh.w;
      for (int j = 0; j < sh.w; ++j)
        row[j] = static_cast<float>(src[j]);
    }
    break;
  case SliceAxis::X:
    for (int i = 0; i < sh.h; ++i) {
      const double* src = buf + static_cast<std::size_t>(i) * sh.w;
      for (int j = 0; j < sh.w; ++j)
        data[(static_cast<std::size_t>(i) * dims.ny + j) * dims.nx + s] =
            static_cast<float>(src[j]);
    }
    break;
  }
}

// B = U^T * slice * V for one slice, written into scratch; returns pointer to
// the r x r result. Leaves the extracted slice in scr.w.
double* projected_slice(const LowRankProjector& p, const Volume& v,
                        int s, SliceScratch& scr) {
  const SliceShape sh = slice_shape(p.dims, p.axis);
  const int r = p.rank;
  scr.w.resize(static_cast<std::size_t>(sh.h) * sh.w);
  scr.a.resize(static_cast<std::size_t>(r) * sh.w);
  scr.b.resize(static_cast<std::size_t>(r) * r);
  extract_slice(v, p.axis, s, scr.w.data());
  const auto& f = p.slices[s];
  gemm_nn(f.ut.data(), r, sh.h, scr.w.data(), sh.w, scr.a.data()); // U^T W
  gemm_nn(scr.a.data(), r, sh.w, f.v.data(), r, scr.b.data());     // (U^T W) V
  return scr.b.data();
}

} // namespace

int slice_count(const Dims& dims, SliceAxis axis) {
  switch (axis) {
  case SliceAxis::X: return dims.nx;
  case SliceAxis::Y: return dims.ny;
  case SliceAxis::Z: return dims.nz;
  }
  return 0;
}

SliceShape slice_shape(const Dims& dims, SliceAxis axis) {
  switch (axis) {
  case SliceAxis::X: return {dims.nz, dims.ny};
  case SliceAxis::Y: return {dims.nz, dims.nx};
  case SliceAxis::Z: return {dims.ny, dims.nx};
  }
  return {};
}

void extract_slice(const Volume& v, SliceAxis axis, int s, double* buf) {
  const Dims& d = v.dims;
  const SliceShape sh = slice_shape(d, axis);
  const float* data = v.data.data();
  switch (axis) {
  case SliceAxis::Z:
    for (int i = 0; i < sh.h; ++i) {
      const float* row = data + (static_cast<std::size_t>(s) * d.ny + i) * d.nx;
      double* dst = buf + static_cast<std::size_t>(i) * sh.w;
      for (int j = 0; j < sh.w; ++j)
        dst[j] = row[j];
    }
    break;
  case SliceAxis::Y:
    for (int i = 0; i < sh.h; ++i) {
      const float* row = data + (static_cast<std::size_t>(i) * d.ny + s) * d.nx;
      double* dst = buf + static_cast<std::size_t>(i) * sh.w;
      for (int j = 0; j < sh.w; ++j)
        dst[j] = row[j];
    }
    break;
  case SliceAxis::X:
    for (int i = 0; i < sh.h; ++i) {
      double* dst = buf + static_cast<std::size_t>(i) * sh.w;
      for (int j = 0; j < sh.w; ++j)
        dst[j] = data[(static_cast<std::size_t>(i) * d.ny + j) * d.nx + s];
    }
    break;
  }
}

LowRankProjector build_projector(const Volume& fixed, int r, SliceAxis axis) {
  if (fixed.data.size() != fixed.dims.voxel_count() || fixed.data.empty())
    throw std::invalid_argument("build_projector: empty or inconsistent volume");
  const SliceShape sh = slice_shape(fixed.dims, axis);
  const int kmax = std::min(sh.h, sh.w);
  if (r < 1 || r > kmax)
    throw std::invalid_argument(
        "build_projector: rank must be in [1, " + std::to_string(kmax) +
        "] for this slice shape, got " + std::to_string(r));

  LowRankProjector p;
  p.dims = fixed.dims;
  p.axis = axis;
  p.rank = r;
  const int n = slice_count(fixed.dims, axis);
  p.slices.resize(n);

  parallel_chunks(static_cast<std::size_t>(n), 1,
                  [&](std::size_t s0, std::size_t s1) {
                    for (std::size_t s = s0; s < s1; ++s) {
                      Matrix m(sh.h, sh.w);
                      extract_slice(fixed, axis, static_cast<int>(s), m.data.data());
                      SvdFactors f = truncate(thin_svd(m), r);
                      auto& out = p.slices[s];
                      out.ut.resize(static_cast<std::size_t>(r) * sh.h);
                      for (int i = 0; i < sh.h; ++i)
                        for (int j = 0; j < r; ++j)
                          out.ut[static_cast<std::size_t>(j) * sh.h + i] =
                              f.u(i, j);
                      out.vt.resize(static_cast<std::size_t>(r) * sh.w);
                      for (int i = 0; i < sh.w; ++i)
                        for (int j = 0; j < r; ++j)
                          out.vt[static_cast<std::size_t>(j) * sh.w + i] =
                              f.v(i, j);
                      out.u = std::move(f.u.data);
                      out.v = std::move(f.v.data);
                      out.sigma = std::move(f.s);
                    }
                  });
  return p;
}

std::vector<Matrix> project(const LowRankProjector& p, const Volume& v) {
  check_dims(p, v, "project");
  const int n = slice_count(p.dims, p.axis);
  const int r = p.rank;
  std::vector<Matrix> out(n);
  parallel_chunks(static_cast<std::size_t>(n), 1,
                  [&](std::size_t s0, std::size_t s1) {
                    auto& scr = scratch();
                    for (std::size_t s = s0; s < s1; ++s) {
                      const double* b = projected_slice(p, v, static_cast<int>(s), scr);
                      Matrix m(r, r);
                      std::copy(b, b + static_cast<std::size_t>(r) * r,
                                m.data.begin());
                      out[s] = std::move(m);
                    }
                  });
  return out;
}

double lrr_loss(const LowRankProjector& p, const Volume& warped) {
  check_dims(p, warped, "lrr_loss");
  const int n = slice_count(p.dims, p.axis);
  const int r = p.rank;
  double total = parallel_sum(
      static_cast<std::size_t>(n), 1, [&](std::size_t s0, std::size_t s1) {
        auto& scr = scratch();
        double acc = 0.0;
        for (std::size_t s = s0; s < s1; ++s) {
          const double* b = projected_slice(p, warped, static_cast<int>(s), scr);
          const auto& sig = p.slices[s].sigma;
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) {
              double e = b[static_cast<std::size_t>(i) * r + j];
              if (i == j)
                e -= sig[i];
              acc += e * e;
            }
        }
        return acc;
      });
  return total / n;
}

double lrr_loss_with_grad(const LowRankProjector& p, const Volume& warped,
                          std::vector<float>& grad) {
  check_dims(p, warped, "lrr_loss_with_grad");
  const int n = slice_count(p.dims, p.axis);
  const int r = p.rank;
  const SliceShape sh = slice_shape(p.dims, p.axis);
  grad.resize(warped.data.size());
  const double scale = 2.0 / n;

  double total = parallel_sum(
      static_cast<std::size_t>(n), 1, [&](std::size_t s0, std::size_t s1) {
        auto& scr = scratch();
        double acc = 0.0;
        for (std::size_t s = s0; s < s1; ++s) {
          double* b = projected_slice(p, warped, static_cast<int>(s), scr);
          const auto& f = p.slices[s];
          // Residual R = B - diag(sigma), then loss and gradient share it.
          for (int i = 0; i < r; ++i) {
            double* brow = b + static_cast<std::size_t>(i) * r;
            brow[i] -= f.sigma[i];
            for (int j = 0; j < r; ++j)
              acc += brow[j] * brow[j];
          }
          scr.t.resize(static_cast<std::size_t>(sh.h) * r);
          gemm_nn(f.u.data(), sh.h, r, b, r, scr.t.data());          // U R
          scr.w.resize(static_cast<std::size_t>(sh.h) * sh.w);
          gemm_nn(scr.t.data(), sh.h, r, f.vt.data(), sh.w, scr.w.data()); // (UR)V^T
          for (double& x : scr.w)
            x *= scale;
          scatter_slice(grad.data(), p.dims, p.axis, static_cast<int>(s),
                        scr.w.data());
        }
        return acc;
      });
  return total / n;
}

Volume lrr_loss_grad(const LowRankProjector& p, const Volume& warped) {
  Volume g(p.dims);
  g.spacing = warped.spacing;
  std::vector<float> buf;
  lrr_loss_with_grad(p, warped, buf);
  g.data = std::move(buf);
  return g;
}

Volume reconstruct_lowrank_image(const LowRankProjector& p, const Volume& v) {
  check_dims(p, v, "reconstruct_lowrank_image");
  const int n = slice_count(p.dims, p.axis);
  const int r = p.rank;
  const SliceShape sh = slice_shape(p.dims, p.axis);
  Volume out(p.dims);
  out.spacing = v.spacing;

  parallel_chunks(
      static_cast<std::size_t>(n), 1, [&](std::size_t s0, std::size_t s1) {
        auto& scr = scratch();
        for (std::size_t s = s0; s < s1; ++s) {
          const double* b = projected_slice(p, v, static_cast<int>(s), scr);
          const auto& f = p.slices[s];
          scr.t.resize(static_cast<std::size_t>(sh.h) * r);
          gemm_nn(f.u.data(), sh.h, r, b, r, scr.t.data());
          std::vector<double> img(static_cast<std::size_t>(sh.h) * sh.w);
          gemm_nn(scr.t.data(), sh.h, r, f.vt.data(), sh.w, img.data());
          scatter_slice(out.data.data(), p.dims, p.axis, static_cast<int>(s),
                        img.data());
        }
      });
  return out;
}

} // namespace lowreg
