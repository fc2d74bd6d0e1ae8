#include "lowreg/registration.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lowreg/errors.hpp"
#include "lowreg/parallel.hpp"
#include "lowreg/similarity.hpp"

namespace lowreg {

namespace {

void check_config(const RegConfig& cfg) {
  if (cfg.lr_min > cfg.lr_max || cfg.lr_min <= 0.0)
    throw std::invalid_argument("register: need 0 < lr_min <= lr_max");
  if (cfg.rank < 1)
    throw std::invalid_argument("register: rank must be >= 1");
  if (cfg.levels < 1)
    throw std::invalid_argument("register: levels must be >= 1");
  if (cfg.lambda < 0.0)
    throw std::invalid_argument("register: lambda must be >= 0");
  if (cfg.max_steps < 1)
    throw std::invalid_argument("register: max_steps must be >= 1");
  if (cfg.cycle_steps < 2)
    throw std::invalid_argument("register: cycle_steps must be >= 2");
  if (cfg.conv_window < 1)
    throw std::invalid_argument("register: conv_window must be >= 1");
}

int level_rank(const RegConfig& cfg, int level, int levels) {
  int r = cfg.rank;
  for (int i = level; i + 1 < levels; ++i)
    r = std::max(1, r / 2);
  return r;
}

} // namespace

double cyclic_lr(const RegConfig& cfg, int step_in_level) {
  const int c = cfg.cycle_steps;
  const int half = c / 2;
  const int phase = step_in_level % c;
  const double frac =
      phase <= half ? static_cast<double>(phase) / half
                    : static_cast<double>(c - phase) / (c - half);
  return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * frac;
}

ObjectiveParts objective(const Volume& warped, const Volume& fixed,
                         const Ddf& ddf, const RegConfig& cfg,
                         const LowRankProjector* projector) {
  if (!(warped.dims == fixed.dims) || !(ddf.dims == fixed.dims))
    throw std::invalid_argument("objective: dims mismatch");
  ObjectiveParts parts;
  switch (cfg.loss) {
  case LossKind::Lrr:
    if (projector == nullptr)
      throw std::invalid_argument("objective: LRR loss needs a projector");
    if (!(projector->dims == fixed.dims) || projector->rank != cfg.rank)
      throw std::invalid_argument(
          "objective: projector does not match fixed image / rank");
    parts.similarity = lrr_loss(*projector, warped);
    break;
  case LossKind::Mse:
    parts.similarity = mse_loss(warped, fixed);
    break;
  case LossKind::Ncc:
    parts.similarity = ncc_loss(warped, fixed);
    break;
  }
  parts.regularization = bending_energy(ddf);
  parts.total = parts.similarity + cfg.lambda * parts.regularization;
  return parts;
}

void AdamState::reset(std::size_t n_params, double b1, double b2, double e) {
  beta1 = b1;
  beta2 = b2;
  eps = e;
  t = 0;
  m.assign(n_params, 0.0f);
  v.assign(n_params, 0.0f);
}

void adam_step_blocks(AdamState& s, int nblocks, const float* const* grads,
                      float* const* params, std::size_t n, double lr) {
  if (s.m.size() != static_cast<std::size_t>(nblocks) * n ||
      s.v.size() != s.m.size())
    throw std::invalid_argument("adam_step: state size mismatch");
  s.t += 1;
  const float b1 = static_cast<float>(s.beta1);
  const float b2 = static_cast<float>(s.beta2);
  const float u1 = static_cast<float>(1.0 - s.beta1);
  const float u2 = static_cast<float>(1.0 - s.beta2);
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  // p -= lr * (m/bc1) / (sqrt(v/bc2) + eps), with the corrections hoisted.
  const float a = static_cast<float>(lr / bc1);
  const float isq2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(s.eps);
  for (int blk = 0; blk < nblocks; ++blk) {
    const float* __restrict__ g = grads[blk];
    float* __restrict__ p = params[blk];
    float* __restrict__ m = s.m.data() + static_cast<std::size_t>(blk) * n;
    float* __restrict__ v = s.v.data() + static_cast<std::size_t>(blk) * n;
    parallel_chunks(n, 1 << 16, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const float gi = g[i];
        const float mi = b1 * m[i] + u1 * gi;
        const float vi = b2 * v[i] + u2 * gi * gi;
        m[i] = mi;
        v[i] = vi;
        p[i] -= a * mi / (std::sqrt(vi) * isq2 + eps);
      }
    });
  }
}

RegResult register_pair(const Volume& moving, const Volume& fixed,
                        const RegConfig& cfg) {
  check_config(cfg);
  if (!(moving.dims == fixed.dims))
    throw std::invalid_argument("register: moving/fixed dims mismatch");
  if (moving.data.size() != moving.dims.voxel_count() || moving.data.empty())
    throw std::invalid_argument("register: empty or inconsistent volume");

  const auto t_start = std::chrono::steady_clock::now();

  // Build the pyramid, coarsest first.
  std::vector<Volume> fixed_pyr(cfg.levels), moving_pyr(cfg.levels);
  fixed_pyr[cfg.levels - 1] = fixed;
  moving_pyr[cfg.levels - 1] = moving;
  for (int l = cfg.levels - 2; l >= 0; --l) {
    fixed_pyr[l] = downsample_mean2(fixed_pyr[l + 1]);
    moving_pyr[l] = downsample_mean2(moving_pyr[l + 1]);
  }

  RegResult result;
  result.steps_per_level.assign(cfg.levels, 0);
  Ddf ddf(fixed_pyr[0].dims);
  int global_step = 0;

  Volume warped;
  std::vector<float> grad_w;
  Ddf partials, grad_ddf;
  AdamState adam;

  for (int level = 0; level < cfg.levels; ++level) {
    const Volume& flevel = fixed_pyr[level];
    const Volume& mlevel = moving_pyr[level];

    if (level > 0)
      ddf = upsample_ddf2(ddf, flevel.dims);

    LowRankProjector projector;
    if (cfg.loss == LossKind::Lrr)
      projector =
          build_projector(flevel, level_rank(cfg, level, cfg.levels), cfg.axis);

    grad_ddf = Ddf(flevel.dims);
    adam.reset(3 * ddf.voxel_count(), cfg.beta1, cfg.beta2, cfg.eps);

    for (int step = 0; step < cfg.max_steps; ++step) {
      warp_with_partials(mlevel, ddf, warped, partials);

      double sim = 0.0;
      switch (cfg.loss) {
      case LossKind::Lrr:
        sim = lrr_loss_with_grad(projector, warped, grad_w);
        break;
      case LossKind::Mse:
        sim = mse_loss_with_grad(warped, flevel, grad_w);
        break;
      case LossKind::Ncc:
        sim = ncc_loss_with_grad(warped, flevel, grad_w);
        break;
      }

      apply_upstream(grad_w, partials, grad_ddf);
      const double reg =
          bending_energy_accumulate_grad(ddf, cfg.lambda, grad_ddf);
      const double total = sim + cfg.lambda * reg;
      if (!std::isfinite(total))
        throw NumericalAbort(
            "register: non-finite loss at level " + std::to_string(level) +
            ", step " + std::to_string(step) + " (sim=" + std::to_string(sim) +
            ", reg=" + std::to_string(reg) + ")");

      const double lr = cyclic_lr(cfg, step);
      result.trace.push_back({global_step, level, lr, total, sim, reg});
      ++global_step;
      result.steps_per_level[level] = step + 1;

      // Early stop on a flat loss: relative change over conv_window steps.
      if (step >= cfg.conv_window) {
        const TraceRow& past =
            result.trace[result.trace.size() - 1 - cfg.conv_window];
        const double denom = std::max(std::abs(past.total), 1e-30);
        if (std::abs(total - past.total) / denom < cfg.conv_tol)
          break;
      }

      const float* grads[3] = {grad_ddf.dx.data(), grad_ddf.dy.data(),
                               grad_ddf.dz.data()};
      float* params[3] = {ddf.dx.data(), ddf.dy.data(), ddf.dz.data()};
      adam_step_blocks(adam, 3, grads, params, ddf.voxel_count(), lr);
    }
  }

  result.min_jacobian = jacobian_determinant_min(ddf);
  result.ddf = std::move(ddf);
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return result;
}

} // namespace lowreg
