#pragma once

#include <string>
#include <vector>

#include "dusa/core.hpp"
#include "dusa/rng.hpp"

namespace dusa::corruption {

enum class Kind { add_noise, mean_shift, cov_scale, rotate, feature_drop };

std::string to_string(Kind kind);
Kind parse_kind(const std::string& name);  // throws on unknown kinds
const std::vector<Kind>& registry();

/// Severity 1..5 mapped to the kind's magnitude: sigma, shift length, scale
/// factor, angle in degrees, or number of dropped coordinates.
double magnitude(Kind kind, int severity);

/// Fixed geometry of a world's corruptions, drawn once from its seed.
struct Params {
  Vec center;                  // class-agnostic data mean
  Vec direction;               // unit shift direction
  Vec plane_u, plane_v;        // orthonormal rotation plane (zero when d < 2)
  std::vector<int> drop_order; // coordinates zeroed first
};

Params make_params(const Vec& center, std::uint64_t seed);

/// Rows of x are samples. `rng` supplies add_noise draws and is untouched by
/// the other kinds.
Mat corrupt(const Mat& x, Kind kind, int severity, const Params& p, Rng& rng);

/// Applies `corrupt` to every pixel of pixel-major images (N x (P * C)).
Mat corrupt_pixels(const Mat& images, Index channels, Kind kind, int severity, const Params& p, Rng& rng);

struct Spec {
  Kind kind = Kind::add_noise;
  int severity = 3;

  std::string label() const;  // "add_noise:3"
};

/// Parses "kind:severity".
Spec parse_spec(const std::string& text);

}  // namespace dusa::corruption
