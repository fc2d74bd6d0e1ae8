#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lowreg/deform.hpp"
#include "lowreg/volume.hpp"

namespace lowreg {

enum class PhantomKind { Cardiac, Abdominal };

struct Ellipsoid {
  std::array<double, 3> center{};
  std::array<double, 3> radii{};
};

/// Synthetic study description. Cardiac-like phantoms carry a bright core
/// (label 2) inside a mid-intensity shell (label 1); abdominal-like phantoms
/// carry two separated blobs (labels 1 and 2). Background is a smooth seeded
/// texture so every similarity loss sees structure outside the organs.
struct PhantomSpec {
  Dims dims{96, 96, 96};
  PhantomKind kind = PhantomKind::Cardiac;
  Ellipsoid inner;        // cardiac: core; abdominal: first blob
  Ellipsoid outer;        // cardiac: shell outer surface; abdominal: second blob
  double magnitude = 3.0; // peak ground-truth displacement, voxels
  uint64_t seed = 1;

  /// Default geometry scaled to dims with seeded jitter on centers and radii.
  static PhantomSpec cardiac(Dims dims, uint64_t seed);
  static PhantomSpec abdominal(Dims dims, uint64_t seed);
};

/// Label value -> structure name for reporting (cardiac: MYO, LV;
/// abdominal: RK, LK).
std::vector<std::pair<uint8_t, std::string>> phantom_structures(PhantomKind kind);

struct PhantomPair {
  Volume fixed;
  Volume moving;
  LabelMap fixed_labels;
  LabelMap moving_labels;
  Ddf gt_ddf;
};

/// Render the analytic phantom (fixed), displace it by a smooth seeded
/// ground-truth field (moving = phantom composed with the inverse map, so
/// warping moving by gt_ddf recovers fixed), and return matching labels.
/// The ground-truth field is a sum of Gaussian displacement bumps whose
/// total magnitude is rescaled to spec.magnitude and capped so the map stays
/// fold-free; min Jacobian positivity is verified before returning.
/// Intensities are min-max normalized to [0, 1] per volume.
PhantomPair generate_phantom(const PhantomSpec& spec);

} // namespace lowreg
