#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

#include "awml/numcore/rng.hpp"

namespace awml::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

double norm(Vec2 v);
double distance(Vec2 a, Vec2 b);
Vec2 polar(double radius, double angle_deg);
// atan2 bearing in degrees, [0, 360).
double bearing_deg(Vec2 p);
// Wraps into [0, 360).
double wrap_deg(double deg);
// Signed difference to - from, in (-180, 180].
double signed_diff_deg(double from, double to);
// Moves `from` toward `to` by at most `step`.
Vec2 move_toward(Vec2 from, Vec2 to, double step);

struct RoomConfig {
  double half_extent = 10.0;
  double fov_deg = 50.0;
  double zone_half_angle_deg = 15.0;
  double r_min = 4.0;
  double r_max = 9.0;

  // Throws ConfigError unless the gaze cone can never overlap two zones.
  void validate() const;
  friend bool operator==(const RoomConfig&, const RoomConfig&) = default;
};

enum class Action : std::uint8_t { Stay, L12, L24, L48, L96, R12, R24, R48, R96 };
inline constexpr std::size_t kNumActions = 9;

// Signed rotation in degrees; left turns are negative.
double rotation_deg(Action a);
Action action_from_index(std::size_t i);
std::string_view action_name(Action a);

struct EgoState {
  double orientation_deg = 0.0;

  friend bool operator==(const EgoState&, const EgoState&) = default;
};

EgoState rotate(EgoState ego, Action a);

// Boundary-inclusive field-of-view test. Throws GeometryError for the origin.
bool visible(const EgoState& ego, Vec2 p, const RoomConfig& cfg);

// Annular sector around a quadrant diagonal, possibly restricted to a
// sub-range of local angles (offsets from the diagonal, degrees).
struct Region {
  double center_deg = 45.0;
  double r_min = 4.0;
  double r_max = 9.0;
  double phi_lo = -15.0;
  double phi_hi = 15.0;

  bool contains(Vec2 p, double tol = 1e-9) const;
  Vec2 clamp(Vec2 p) const;
  // Point at local polar coordinates (radius, offset angle).
  Vec2 at(double radius, double phi_deg) const;
  // Local offset angle of p relative to the diagonal.
  double phi_of(Vec2 p) const;
  Vec2 center() const;
  // Distance from an interior point to the nearest edge.
  double boundary_distance(Vec2 p) const;
  Vec2 sample(num::CounterRng& rng) const;
};

double quadrant_center_deg(int quadrant);
Region zone(int quadrant, const RoomConfig& cfg);

}  // namespace awml::env
