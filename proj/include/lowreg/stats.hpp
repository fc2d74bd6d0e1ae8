#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lowreg/deform.hpp"
#include "lowreg/phantom.hpp"
#include "lowreg/registration.hpp"
#include "lowreg/volume.hpp"

namespace lowreg {

/// 2|A ∩ B| / (|A| + |B|) for the voxels carrying `label` in each map.
/// Two empty sets agree perfectly: returns 1.0.
double dice(const LabelMap& a, const LabelMap& b, uint8_t label);

struct EndpointError {
  double mean = 0.0;
  double max = 0.0;
};

/// Per-voxel Euclidean distance between two displacement fields, in voxels.
EndpointError endpoint_error(const Ddf& est, const Ddf& gt);

struct PairedSamples {
  std::vector<double> a;
  std::vector<double> b;
};

struct WilcoxonResult {
  double w = 0.0;      // min(W+, W-)
  double p = 1.0;      // two-sided
  int n_nonzero = 0;   // pairs remaining after dropping zero differences
  bool exact = false;  // enumeration (n <= 12) vs normal approximation
};

/// Wilcoxon signed-rank test on paired samples. Zero differences are
/// dropped (requires >= 5 remaining); tied |differences| get average ranks.
/// p is exact by enumerating all 2^n sign assignments for n <= 12, else a
/// normal approximation with continuity correction (variance sum r_i^2 / 4,
/// which absorbs rank ties).
WilcoxonResult wilcoxon_signed_rank(const PairedSamples& s);

/// Rank x sigma ablation over seeded phantom pairs, reporting per-structure
/// Dice statistics for LRR registration at each grid cell.
struct AblationConfig {
  std::vector<int> ranks{12, 24, 48, 72, 96};
  std::vector<double> sigmas{0.0, 0.05, 0.1, 0.15, 0.2};
  int n_pairs = 3;
  Dims dims{96, 96, 96};
  PhantomKind kind = PhantomKind::Cardiac;
  double magnitude = 3.0;
  NoiseKind noise = NoiseKind::Awgn;
  uint64_t base_seed = 7;
  RegConfig reg; // loss forced to LRR; rank overridden per cell
};

struct AblationRow {
  std::string structure;
  int rank = 0;
  double sigma = 0.0;
  double mean_dice = 0.0;
  double std_dice = 0.0;
  int n = 0;
};

/// Deterministic per-cell seed derived from the base seed and the cell
/// coordinates, so any cell can be recomputed in isolation.
uint64_t ablation_cell_seed(uint64_t base_seed, int rank, double sigma);

/// One grid cell: n_pairs phantom pairs, noise at sigma on both images,
/// LRR registration at `rank`, Dice per structure. One row per structure.
std::vector<AblationRow> run_ablation_cell(const AblationConfig& cfg, int rank,
                                           double sigma);

/// Full grid, cells fanned out over `jobs` workers; rows sorted by
/// (structure, rank, sigma).
std::vector<AblationRow> ablation_grid(const AblationConfig& cfg, int jobs);

} // namespace lowreg
