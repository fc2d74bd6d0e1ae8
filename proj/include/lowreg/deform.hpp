#pragma once

#include <array>
#include <vector>

#include "lowreg/volume.hpp"

namespace lowreg {

/// Dense deformation field in voxel units: warped(x) = moving(x + d(x)).
/// Components stored as separate planes for vectorized sweeps.
struct Ddf {
  Dims dims;
  std::vector<float> dx, dy, dz;

  Ddf() = default;
  explicit Ddf(Dims d)
      : dims(d),
        dx(d.voxel_count(), 0.0f),
        dy(d.voxel_count(), 0.0f),
        dz(d.voxel_count(), 0.0f) {}

  std::size_t voxel_count() const { return dims.voxel_count(); }
  std::size_t index(int x, int y, int z) const { return dims.index(x, y, z); }
  void fill_zero();
};

/// Trilinear sample of a scalar field at (px, py, pz), coordinates clamped to
/// the border. Degenerate axes (extent 1) are handled.
double sample_trilinear(const float* f, const Dims& dims, double px, double py,
                        double pz);

/// Value plus analytic spatial derivative of the trilinear interpolant at the
/// (clamped) sample point. Derivative components are zero for coordinates
/// strictly outside the volume, where clamping makes the value constant.
struct TrilinearTap {
  double value = 0.0;
  double ddx = 0.0, ddy = 0.0, ddz = 0.0;
};
TrilinearTap sample_trilinear_grad(const float* f, const Dims& dims, double px,
                                   double py, double pz);

/// Trilinear displacement lookup at an arbitrary (possibly fractional) point.
std::array<double, 3> sample_ddf(const Ddf& d, double px, double py, double pz);

Volume warp_trilinear(const Volume& moving, const Ddf& d);
void warp_trilinear_into(const Volume& moving, const Ddf& d, Volume& out);

/// Warp plus the pointwise partials of the warped intensity with respect to
/// each displacement component (zero where border clamping makes the value
/// constant). One sweep over the corner fetches instead of two.
void warp_with_partials(const Volume& moving, const Ddf& d, Volume& warped,
                        Ddf& partials);

/// out = upstream * partials, component-wise. `out` must not alias
/// `partials`.
void apply_upstream(const std::vector<float>& upstream, const Ddf& partials,
                    Ddf& out);

/// Chain rule through the warp: grad(x) = upstream(x) * grad of moving at
/// x + d(x). `upstream` has one scalar per output voxel. Overwrites `out`.
void warp_gradient(const Volume& moving, const Ddf& d,
                   const std::vector<float>& upstream, Ddf& out);

LabelMap warp_labels_nn(const LabelMap& labels, const Ddf& d);

/// Mean over interior voxels of the per-voxel bending term
///   sum_c f_xx^2 + f_yy^2 + f_zz^2 + 2(f_xy^2 + f_xz^2 + f_yz^2),
/// second derivatives by central differences in voxel units. Stencils are
/// evaluated where they fit (one-voxel interior margin). Requires every axis
/// extent >= 3.
double bending_energy(const Ddf& d);

/// Exact gradient of the discrete bending energy. Overwrites `out`.
void bending_energy_grad(const Ddf& d, Ddf& out);

/// Fused form for the optimizer: returns the energy and adds
/// `scale` * gradient into `grad_accum` (which must already be sized).
double bending_energy_accumulate_grad(const Ddf& d, double scale,
                                      Ddf& grad_accum);

/// Minimum over voxels of det(I + grad d); central differences in the
/// interior, one-sided at borders. Requires every axis extent >= 2.
double jacobian_determinant_min(const Ddf& d);

/// 2x mean-pooling along each axis; odd trailing blocks average the voxels
/// that exist. Output extent ceil(n/2).
Volume downsample_mean2(const Volume& v);
Dims downsample_dims(const Dims& d);

/// Upsample a coarse DDF onto `fine` dims: trilinear lookup at half the fine
/// coordinate, displacement values doubled.
Ddf upsample_ddf2(const Ddf& coarse, const Dims& fine);

} // namespace lowreg
