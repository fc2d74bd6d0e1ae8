#include "lowreg/stats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>

#include "lowreg/parallel.hpp"
#include "lowreg/rng.hpp"

namespace lowreg {

double dice(const LabelMap& a, const LabelMap& b, uint8_t label) {
  if (!(a.dims == b.dims))
    throw std::invalid_argument("dice: dims mismatch");
  std::size_t na = 0, nb = 0, nab = 0;
  const std::size_t n = a.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    const bool ia = a.data[i] == label;
    const bool ib = b.data[i] == label;
    na += ia;
    nb += ib;
    nab += ia && ib;
  }
  if (na + nb == 0)
    return 1.0;
  return 2.0 * static_cast<double>(nab) / static_cast<double>(na + nb);
}

EndpointError endpoint_error(const Ddf& est, const Ddf& gt) {
  if (!(est.dims == gt.dims))
    throw std::invalid_argument("endpoint_error: dims mismatch");
  const std::size_t n = est.voxel_count();
  if (n == 0)
    throw std::invalid_argument("endpoint_error: empty field");
  double sum = 0.0, mx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ex = static_cast<double>(est.dx[i]) - gt.dx[i];
    const double ey = static_cast<double>(est.dy[i]) - gt.dy[i];
    const double ez = static_cast<double>(est.dz[i]) - gt.dz[i];
    const double e = std::sqrt(ex * ex + ey * ey + ez * ez);
    sum += e;
    mx = std::max(mx, e);
  }
  return {sum / n, mx};
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

} // namespace

WilcoxonResult wilcoxon_signed_rank(const PairedSamples& s) {
  if (s.a.size() != s.b.size() || s.a.empty())
    throw std::invalid_argument("wilcoxon: samples must be paired and non-empty");
  std::vector<double> diff;
  diff.reserve(s.a.size());
  for (std::size_t i = 0; i < s.a.size(); ++i) {
    const double d = s.a[i] - s.b[i];
    if (!std::isfinite(d))
      throw std::invalid_argument("wilcoxon: non-finite difference");
    if (d != 0.0)
      diff.push_back(d);
  }
  if (diff.empty())
    throw std::invalid_argument("wilcoxon: all differences are zero");
  const int n = static_cast<int>(diff.size());
  if (n < 5)
    throw std::invalid_argument(
        "wilcoxon: need at least 5 nonzero differences, got " +
        std::to_string(n));

  // Average ranks of |d|, ties sharing the mean of their rank run.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    return std::abs(diff[x]) < std::abs(diff[y]);
  });
  std::vector<double> rank(n);
  for (int i = 0; i < n;) {
    int j = i;
    while (j + 1 < n &&
           std::abs(diff[order[j + 1]]) == std::abs(diff[order[i]]))
      ++j;
    const double avg = 0.5 * (i + j) + 1.0; // ranks are 1-based
    for (int k = i; k <= j; ++k)
      rank[order[k]] = avg;
    i = j + 1;
  }

  double wplus = 0.0, wminus = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    if (diff[i] > 0.0)
      wplus += rank[i];
    else
      wminus += rank[i];
    sumsq += rank[i] * rank[i];
  }
  const double total = wplus + wminus; // = n(n+1)/2

  WilcoxonResult res;
  res.n_nonzero = n;
  res.w = std::min(wplus, wminus);

  if (n <= 12) {
    // Exact two-sided p: both tails of the W+ null distribution over all
    // sign assignments.
    res.exact = true;
    const double lo = std::min(wplus, wminus);
    const double hi = total - lo;
    const double eps = 1e-9;
    const uint32_t count = 1u << n;
    uint64_t hits = 0;
    for (uint32_t mask = 0; mask < count; ++mask) {
      double w = 0.0;
      for (int i = 0; i < n; ++i)
        if (mask & (1u << i))
          w += rank[i];
      if (w <= lo + eps || w >= hi - eps)
        ++hits;
    }
    res.p = static_cast<double>(hits) / static_cast<double>(count);
  } else {
    const double mean = total / 2.0;
    const double sd = std::sqrt(sumsq / 4.0);
    const double z = (res.w + 0.5 - mean) / sd; // continuity correction
    res.p = std::min(1.0, 2.0 * normal_cdf(z));
  }
  return res;
}

uint64_t ablation_cell_seed(uint64_t base_seed, int rank, double sigma) {
  const uint64_t sig_bits = std::bit_cast<uint64_t>(sigma);
  return mix_seed(mix_seed(base_seed, static_cast<uint64_t>(rank)), sig_bits);
}

std::vector<AblationRow> run_ablation_cell(const AblationConfig& cfg, int rank,
                                           double sigma) {
  if (cfg.n_pairs < 1)
    throw std::invalid_argument("ablation: n_pairs must be >= 1");
  const uint64_t cell_seed = ablation_cell_seed(cfg.base_seed, rank, sigma);
  const auto structures = phantom_structures(cfg.kind);

  std::vector<std::vector<double>> scores(structures.size());
  for (int pair = 0; pair < cfg.n_pairs; ++pair) {
    const uint64_t pair_seed = mix_seed(cell_seed, static_cast<uint64_t>(pair));
    PhantomSpec spec = cfg.kind == PhantomKind::Cardiac
                           ? PhantomSpec::cardiac(cfg.dims, pair_seed)
                           : PhantomSpec::abdominal(cfg.dims, pair_seed);
    spec.magnitude = cfg.magnitude;
    PhantomPair ph = generate_phantom(spec);

    Volume fixed = ph.fixed, moving = ph.moving;
    if (sigma > 0.0) {
      NoiseSpec ns{cfg.noise, sigma, mix_seed(pair_seed, 101)};
      NoiseSpec nsm{cfg.noise, sigma, mix_seed(pair_seed, 102)};
      if (cfg.noise == NoiseKind::Awgn) {
        fixed = add_awgn(fixed, ns);
        moving = add_awgn(moving, nsm);
      } else {
        fixed = add_rician(fixed, ns);
        moving = add_rician(moving, nsm);
      }
    }

    RegConfig reg = cfg.reg;
    reg.loss = LossKind::Lrr;
    reg.rank = rank;
    reg.seed = pair_seed;
    RegResult res = register_pair(moving, fixed, reg);

    LabelMap warped_labels = warp_labels_nn(ph.moving_labels, res.ddf);
    for (std::size_t si = 0; si < structures.size(); ++si)
      scores[si].push_back(
          dice(warped_labels, ph.fixed_labels, structures[si].first));
  }

  std::vector<AblationRow> rows;
  for (std::size_t si = 0; si < structures.size(); ++si) {
    AblationRow row;
    row.structure = structures[si].second;
    row.rank = rank;
    row.sigma = sigma;
    row.n = cfg.n_pairs;
    const auto& v = scores[si];
    const double mean =
        std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v)
      var += (x - mean) * (x - mean);
    row.mean_dice = mean;
    row.std_dice = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<AblationRow> ablation_grid(const AblationConfig& cfg, int jobs) {
  if (cfg.ranks.empty() || cfg.sigmas.empty())
    throw std::invalid_argument("ablation: ranks and sigmas must be non-empty");

  const std::size_t ncells = cfg.ranks.size() * cfg.sigmas.size();
  std::vector<std::vector<AblationRow>> cell_rows(ncells);
  std::vector<std::function<void()>> tasks;
  tasks.reserve(ncells);
  for (std::size_t ri = 0; ri < cfg.ranks.size(); ++ri)
    for (std::size_t si = 0; si < cfg.sigmas.size(); ++si) {
      const std::size_t slot = ri * cfg.sigmas.size() + si;
      tasks.push_back([&cfg, &cell_rows, slot, ri, si]() {
        cell_rows[slot] =
            run_ablation_cell(cfg, cfg.ranks[ri], cfg.sigmas[si]);
      });
    }
  run_tasks(tasks, jobs);

  std::vector<AblationRow> rows;
  for (auto& cr : cell_rows)
    for (auto& r : cr)
      rows.push_back(std::move(r));
  std::sort(rows.begin(), rows.end(), [](const AblationRow& x, const AblationRow& y) {
    if (x.structure != y.structure)
      return x.structure < y.structure;
    if (x.rank != y.rank)
      return x.rank < y.rank;
    return x.sigma < y.sigma;
  });
  return rows;
}

} // namespace lowreg
