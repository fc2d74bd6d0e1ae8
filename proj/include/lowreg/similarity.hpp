#pragma once

#include <vector>

#include "lowreg/volume.hpp"

namespace lowreg {

/// Mean of (w - f)^2 over the volume.
double mse_loss(const Volume& warped, const Volume& fixed);

/// Gradient (2/N) * (w - f) with respect to the warped image.
Volume mse_grad(const Volume& warped, const Volume& fixed);

/// Fused loss + gradient; `grad` is resized and overwritten.
double mse_loss_with_grad(const Volume& warped, const Volume& fixed,
                          std::vector<float>& grad);

/// 1 - NCC(w, f) with global (whole-volume) normalized cross correlation.
/// Range [0, 2]; invariant under positive affine intensity rescaling.
/// A constant argument has no defined correlation and raises NumericalAbort.
double ncc_loss(const Volume& warped, const Volume& fixed);

/// Analytic gradient of ncc_loss with respect to the warped image.
Volume ncc_grad(const Volume& warped, const Volume& fixed);

double ncc_loss_with_grad(const Volume& warped, const Volume& fixed,
                          std::vector<float>& grad);

} // namespace lowreg
