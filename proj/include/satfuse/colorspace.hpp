#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "satfuse/error.hpp"
#include "satfuse/plane.hpp"

namespace satfuse {

struct HsiPixel {
  double hue;  // angle / 2pi
  double saturation;
  double intensity;
};

struct HsiPlanes {
  Plane hue;
  Plane saturation;
  Plane intensity;
};

/// Arccos-based HSI. Achromatic pixels (including black) get H = 0, and black gets S = 0.
inline HsiPixel rgb_to_hsi(double r, double g, double b) {
  const double sum = r + g + b;
  HsiPixel out{0.0, 0.0, sum / 3.0};
  if (sum <= 0.0) return out;
  out.saturation = std::clamp(1.0 - 3.0 * std::min({r, g, b}) / sum, 0.0, 1.0);

  const double rg = r - g;
  const double rb = r - b;
  const double denom = 2.0 * std::sqrt(std::max(rg * rg + rb * (g - b), 0.0));
  if (denom <= 0.0) return out;
  const double theta = std::acos(std::clamp((rg + rb) / denom, -1.0, 1.0));
  constexpr double two_pi = 2.0 * std::numbers::pi;
  out.hue = (b <= g) ? theta / two_pi : (two_pi - theta) / two_pi;
  return out;
}

inline HsiPlanes rgb_to_hsi(const Plane& r, const Plane& g, const Plane& b) {
  require(r.same_shape(g) && r.same_shape(b), ErrorKind::Argument, "R, G, B planes differ in shape");
  HsiPlanes out{Plane(r.height, r.width), Plane(r.height, r.width), Plane(r.height, r.width)};
  for (std::size_t i = 0; i < r.size(); ++i) {
    const auto px = rgb_to_hsi(r.data[i], g.data[i], b.data[i]);
    out.hue.data[i] = px.hue;
    out.saturation.data[i] = px.saturation;
    out.intensity.data[i] = px.intensity;
  }
  return out;
}

}  // namespace satfuse
