#pragma once

#include <cstdint>
#include <vector>

#include "lowreg/deform.hpp"
#include "lowreg/lowrank.hpp"
#include "lowreg/volume.hpp"

namespace lowreg {

enum class LossKind { Lrr, Mse, Ncc };

/// Per-pair optimization settings. The learning-rate schedule is cyclic
/// triangular between lr_min and lr_max (both ends visited every cycle);
/// the defaults are on displacement scale (voxels per step) so the field
/// can actually traverse multi-voxel deformations within max_steps.
struct RegConfig {
  LossKind loss = LossKind::Lrr;
  int rank = 48;          // LRR only; halved per pyramid level below max
  double lambda = 0.5;    // bending-energy weight
  SliceAxis axis = SliceAxis::Z;
  int max_steps = 400;    // per pyramid level
  double lr_min = 1e-2;
  double lr_max = 1e-1;
  int cycle_steps = 100;
  int levels = 2;         // 1 = full resolution only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t seed = 0;
  double conv_tol = 1e-6; // relative total-loss change ...
  int conv_window = 20;   // ... over this many steps ends the level early
};

struct TraceRow {
  int step = 0;  // global step index across levels
  int level = 0;
  double lr = 0.0;
  double total = 0.0;
  double sim = 0.0;
  double reg = 0.0;
};

struct RegResult {
  Ddf ddf;
  std::vector<TraceRow> trace;
  std::vector<int> steps_per_level;
  double seconds = 0.0;
  double min_jacobian = 0.0;
};

struct ObjectiveParts {
  double total = 0.0;
  double similarity = 0.0;
  double regularization = 0.0;
};

/// total = similarity(warped, fixed) + lambda * bending_energy(ddf).
/// For LossKind::Lrr a projector built from this fixed image at cfg.rank
/// must be supplied.
ObjectiveParts objective(const Volume& warped, const Volume& fixed,
                         const Ddf& ddf, const RegConfig& cfg,
                         const LowRankProjector* projector = nullptr);

/// Triangular schedule value for a step index within one level.
double cyclic_lr(const RegConfig& cfg, int step_in_level);

/// Adam with bias correction; single-precision moments (standard for dense
/// field optimization), one `t` per optimizer step.
struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long t = 0;
  std::vector<float> m, v;

  void reset(std::size_t n_params, double b1, double b2, double e);
};

/// One optimizer step over `nblocks` equally sized parameter blocks (the
/// state's parameter count must equal nblocks * n).
void adam_step_blocks(AdamState& s, int nblocks, const float* const* grads,
                      float* const* params, std::size_t n, double lr);

inline void adam_step(AdamState& s, const std::vector<float>& grad,
                      std::vector<float>& params, double lr) {
  const float* g = grad.data();
  float* p = params.data();
  adam_step_blocks(s, 1, &g, &p, grad.size(), lr);
}

/// Coarse-to-fine Adam optimization of a dense deformation field aligning
/// `moving` onto `fixed`. Deterministic given equal inputs and config.
RegResult register_pair(const Volume& moving, const Volume& fixed,
                        const RegConfig& cfg);

} // namespace lowreg
