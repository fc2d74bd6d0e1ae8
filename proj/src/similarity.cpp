#include "lowreg/similarity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lowreg/errors.hpp"
#include "lowreg/parallel.hpp"

namespace lowreg {

namespace {

constexpr std::size_t kChunk = 1 << 16;

void check_same_dims(const Volume& a, const Volume& b, const char* who) {
  if (!(a.dims == b.dims))
    throw std::invalid_argument(std::string(who) + ": dims mismatch");
  if (a.data.size() != a.dims.voxel_count() || b.data.size() != b.dims.voxel_count())
    throw std::invalid_argument(std::string(who) + ": size mismatch");
}

// K running sums over [0, n), accumulated per fixed-size chunk and reduced in
// chunk order so the result is independent of scheduling.
template <int K, class PerChunk>
std::array<double, K> chunked_sums(std::size_t n, const PerChunk& per_chunk) {
  const std::size_t nchunks = n == 0 ? 0 : (n + kChunk - 1) / kChunk;
  std::vector<std::array<double, K>> partials(nchunks);
  parallel_chunks(n, kChunk, [&](std::size_t b, std::size_t e) {
    std::array<double, K> acc{};
    per_chunk(b, e, acc);
    partials[b / kChunk] = acc;
  });
  std::array<double, K> total{};
  for (const auto& p : partials)
    for (int k = 0; k < K; ++k)
      total[k] += p[k];
  return total;
}

struct NccTerms {
  double wmean, fmean, a, bw, bf, norm; // norm = sqrt(bw*bf)
};

NccTerms ncc_terms(const Volume& w, const Volume& f, const char* who) {
  check_same_dims(w, f, who);
  const std::size_t n = w.data.size();
  if (n == 0)
    throw std::invalid_argument(std::string(who) + ": empty volume");

  auto sums = chunked_sums<2>(n, [&](std::size_t b, std::size_t e,
                                     std::array<double, 2>& acc) {
    double sw = 0.0, sf = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      sw += w.data[i];
      sf += f.data[i];
    }
    acc = {sw, sf};
  });
  NccTerms t{};
  t.wmean = sums[0] / n;
  t.fmean = sums[1] / n;

  // Exact constant detection: a zero-variance argument has no correlation.
  float wmin = w.data[0], wmax = w.data[0], fmin = f.data[0], fmax = f.data[0];
  for (std::size_t i = 1; i < n; ++i) {
    wmin = std::min(wmin, w.data[i]);
    wmax = std::max(wmax, w.data[i]);
    fmin = std::min(fmin, f.data[i]);
    fmax = std::max(fmax, f.data[i]);
  }
  if (wmin == wmax)
    throw NumericalAbort("ncc: warped image is constant, correlation undefined");
  if (fmin == fmax)
    throw NumericalAbort("ncc: fixed image is constant, correlation undefined");

  auto cross = chunked_sums<3>(n, [&](std::size_t b, std::size_t e,
                                      std::array<double, 3>& acc) {
    double a = 0.0, bw = 0.0, bf = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      const double wc = w.data[i] - t.wmean;
      const double fc = f.data[i] - t.fmean;
      a += wc * fc;
      bw += wc * wc;
      bf += fc * fc;
    }
    acc = {a, bw, bf};
  });
  t.a = cross[0];
  t.bw = cross[1];
  t.bf = cross[2];
  t.norm = std::sqrt(t.bw * t.bf);
  return t;
}

} // namespace

double mse_loss(const Volume& warped, const Volume& fixed) {
  check_same_dims(warped, fixed, "mse_loss");
  const std::size_t n = warped.data.size();
  if (n == 0)
    throw std::invalid_argument("mse_loss: empty volume");
  auto s = chunked_sums<1>(n, [&](std::size_t b, std::size_t e,
                                  std::array<double, 1>& acc) {
    double ss = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      const double d = static_cast<double>(warped.data[i]) - fixed.data[i];
      ss += d * d;
    }
    acc = {ss};
  });
  return s[0] / n;
}

double mse_loss_with_grad(const Volume& warped, const Volume& fixed,
                          std::vector<float>& grad) {
  check_same_dims(warped, fixed, "mse_loss_with_grad");
  const std::size_t n = warped.data.size();
  if (n == 0)
    throw std::invalid_argument("mse_loss_with_grad: empty volume");
  grad.resize(n);
  const double scale = 2.0 / n;
  auto s = chunked_sums<1>(n, [&](std::size_t b, std::size_t e,
                                  std::array<double, 1>& acc) {
    double ss = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      const double d = static_cast<double>(warped.data[i]) - fixed.data[i];
      ss += d * d;
      grad[i] = static_cast<float>(scale * d);
    }
    acc = {ss};
  });
  return s[0] / n;
}

Volume mse_grad(const Volume& warped, const Volume& fixed) {
  Volume g(warped.dims);
  g.spacing = warped.spacing;
  std::vector<float> buf;
  mse_loss_with_grad(warped, fixed, buf);
  g.data = std::move(buf);
  return g;
}

double ncc_loss(const Volume& warped, const Volume& fixed) {
  const NccTerms t = ncc_terms(warped, fixed, "ncc_loss");
  return 1.0 - t.a / t.norm;
}

double ncc_loss_with_grad(const Volume& warped, const Volume& fixed,
                          std::vector<float>& grad) {
  const NccTerms t = ncc_terms(warped, fixed, "ncc_loss_with_grad");
  const std::size_t n = warped.data.size();
  grad.resize(n);
  // d(1-NCC)/dw_i = -[fc_i - (A/Bw) wc_i] / sqrt(Bw Bf); the mean-shift
  // terms cancel because both centered fields sum to zero.
  const double ratio = t.a / t.bw;
  const double inv_norm = 1.0 / t.norm;
  parallel_chunks(n, kChunk, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const double wc = warped.data[i] - t.wmean;
      const double fc = fixed.data[i] - t.fmean;
      grad[i] = static_cast<float>(-(fc - ratio * wc) * inv_norm);
    }
  });
  return 1.0 - t.a * inv_norm;
}

Volume ncc_grad(const Volume& warped, const Volume& fixed) {
  Volume g(warped.dims);
  g.spacing = warped.spacing;
  std::vector<float> buf;
  ncc_loss_with_grad(warped, fixed, buf);
  g.data = std::move(buf);
  return g;
}

} // namespace lowreg
