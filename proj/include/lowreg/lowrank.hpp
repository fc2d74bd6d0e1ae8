#pragma once

#include <vector>

#include "lowreg/linalg.hpp"
#include "lowreg/volume.hpp"

namespace lowreg {

enum class SliceAxis { X, Y, Z };

struct SliceShape {
  int h = 0; // matrix rows
  int w = 0; // matrix cols
};

int slice_count(const Dims& dims, SliceAxis axis);

/// Matrix shape of one slice. Rows run along the slower of the two in-plane
/// axes so extraction walks memory contiguously where possible:
/// Z-slices are (ny x nx), Y-slices (nz x nx), X-slices (nz x ny).
SliceShape slice_shape(const Dims& dims, SliceAxis axis);

/// Copy slice s into a row-major h*w double buffer.
void extract_slice(const Volume& v, SliceAxis axis, int s, double* buf);

/// Fixed-image-anchored truncated-SVD projector: per slice the leading-r
/// factors of that fixed-image slice. Immutable once built; satisfies
/// U_r^T * fixed_slice * V_r = diag(sigma_r) up to SVD accuracy.
struct LowRankProjector {
  Dims dims;                    // fixed-image dims the factors belong to
  SliceAxis axis = SliceAxis::Z;
  int rank = 0;

  struct SliceFactors {
    std::vector<double> u;     // h x r, row-major
    std::vector<double> v;     // w x r, row-major
    std::vector<double> ut;    // r x h, transposed copy for the hot products
    std::vector<double> vt;    // r x w, likewise
    std::vector<double> sigma; // r
  };
  std::vector<SliceFactors> slices;
};

/// n_slices independent thin SVDs of the fixed image, truncated to r.
LowRankProjector build_projector(const Volume& fixed, int r, SliceAxis axis);

/// Per slice the r x r matrix U_r^T * v_slice * V_r.
std::vector<Matrix> project(const LowRankProjector& p, const Volume& v);

/// Mean over slices of |U_r^T W V_r - diag(sigma_r)|_F^2.
double lrr_loss(const LowRankProjector& p, const Volume& warped);

/// Analytic gradient of lrr_loss with respect to the warped image:
/// per slice (2/n_slices) * U_r (U_r^T W V_r - diag(sigma_r)) V_r^T.
Volume lrr_loss_grad(const LowRankProjector& p, const Volume& warped);

/// Fused loss + gradient for the optimizer. `grad` is resized and
/// overwritten with the gradient as a flat per-voxel buffer.
double lrr_loss_with_grad(const LowRankProjector& p, const Volume& warped,
                          std::vector<float>& grad);

/// Per slice U_r (U_r^T v V_r) V_r^T: the rank-<=r visualization image.
Volume reconstruct_lowrank_image(const LowRankProjector& p, const Volume& v);

} // namespace lowreg
