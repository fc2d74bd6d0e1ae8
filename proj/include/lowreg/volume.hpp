#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace lowreg {

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
  bool operator==(const Dims&) const = default;
  int operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
};

/// Dense 3D scalar field. Voxel (x, y, z) lives at data[(z*ny + y)*nx + x]:
/// x varies fastest, then y, then z. Spacing is millimeters per voxel and is
/// carried as metadata only; all geometry in this toolkit works in voxel
/// units.
struct Volume {
  Dims dims;
  std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
  std::vector<float> data;

  Volume() = default;
  Volume(Dims d, float fill = 0.0f) : dims(d), data(d.voxel_count(), fill) {}

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims.ny + y) * dims.nx + x;
  }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }
  float& at(int x, int y, int z) { return data[index(x, y, z)]; }
};

/// Integer anatomical labels on the same grid as a Volume; 0 is background.
struct LabelMap {
  Dims dims;
  std::vector<uint8_t> data;

  LabelMap() = default;
  explicit LabelMap(Dims d, uint8_t fill = 0) : dims(d), data(d.voxel_count(), fill) {}

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims.ny + y) * dims.nx + x;
  }
  uint8_t at(int x, int y, int z) const { return data[index(x, y, z)]; }
  uint8_t& at(int x, int y, int z) { return data[index(x, y, z)]; }
};

enum class NoiseKind { Awgn, Rician };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Awgn;
  double sigma = 0.1; // standard deviation in normalized-intensity units
  uint64_t seed = 0;
};

/// Min-max rescale to [0, 1]. A constant volume maps to all zeros.
Volume normalize_intensity(const Volume& v);

/// Additive white Gaussian noise, one iid N(0, sigma^2) draw per voxel.
/// Values are not clipped afterwards. sigma = 0 returns the input unchanged.
Volume add_awgn(const Volume& v, const NoiseSpec& spec);

/// Rician (magnitude) noise: out = sqrt((v + a)^2 + b^2) with a, b iid
/// N(0, sigma^2). Requires non-negative input intensities.
Volume add_rician(const Volume& v, const NoiseSpec& spec);

} // namespace lowreg
