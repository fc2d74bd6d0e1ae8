#include "lowreg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lowreg/rng.hpp"

namespace lowreg {

Volume normalize_intensity(const Volume& v) {
  if (v.data.empty()) {
    throw std::invalid_argument("normalize_intensity: empty volume");
  }
  const auto [min_it, max_it] = std::minmax_element(v.data.begin(), v.data.end());
  const double lo = *min_it;
  const double hi = *max_it;

  Volume out = v;
  if (hi == lo) {
    std::fill(out.data.begin(), out.data.end(), 0.0f);
    return out;
  }
  const double inv = 1.0 / (hi - lo);
  for (auto& value : out.data) {
    value = static_cast<float>((value - lo) * inv);
  }
  return out;
}

Volume add_awgn(const Volume& v, const NoiseSpec& spec) {
  if (spec.kind != NoiseKind::Awgn) {
    throw std::invalid_argument("add_awgn: spec.kind is not AWGN");
  }
  if (spec.sigma < 0.0) {
    throw std::invalid_argument("add_awgn: sigma must be >= 0");
  }
  Volume out = v;
  if (spec.sigma == 0.0) return out; // bit-identical by contract

  Rng rng(spec.seed);
  for (auto& value : out.data) {
    value = static_cast<float>(value + spec.sigma * rng.next_gaussian());
  }
  return out;
}

Volume add_rician(const Volume& v, const NoiseSpec& spec) {
  if (spec.kind != NoiseKind::Rician) {
    throw std::invalid_argument("add_rician: spec.kind is not Rician");
  }
  if (spec.sigma < 0.0) {
    throw std::invalid_argument("add_rician: sigma must be >= 0");
  }
  for (float value : v.data) {
    if (value < 0.0f) {
      throw std::invalid_argument("add_rician: negative input intensity");
    }
  }

  Volume out = v;
  Rng rng(spec.seed);
  for (auto& value : out.data) {
    const double a = spec.sigma * rng.next_gaussian();
    const double b = spec.sigma * rng.next_gaussian();
    const double real = value + a;
    value = static_cast<float>(std::sqrt(real * real + b * b));
  }
  return out;
}

} // namespace lowreg
