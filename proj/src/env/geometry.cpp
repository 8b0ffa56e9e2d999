#include "awml/env/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "awml/common/error.hpp"

namespace awml::env {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

double norm(Vec2 v) { return std::hypot(v.x, v.y); }
double distance(Vec2 a, Vec2 b) { return norm(a - b); }
Vec2 polar(double radius, double angle_deg) {
  return {radius * std::cos(angle_deg * kDeg), radius * std::sin(angle_deg * kDeg)};
}

double wrap_deg(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w < 0.0) w += 360.0;
  if (w >= 360.0) w -= 360.0;
  return w;
}

double bearing_deg(Vec2 p) { return wrap_deg(std::atan2(p.y, p.x) / kDeg); }

double signed_diff_deg(double from, double to) {
  double d = wrap_deg(to - from);
  if (d > 180.0) d -= 360.0;
  return d;
}

Vec2 move_toward(Vec2 from, Vec2 to, double step) {
  const Vec2 d = to - from;
  const double len = norm(d);
  if (len <= step) return to;
  return from + (step / len) * d;
}

void RoomConfig::validate() const {
  if (!(fov_deg > 0.0) || !(zone_half_angle_deg > 0.0)) throw ConfigError("room: angles must be positive");
  if (!(fov_deg < 90.0 - 2.0 * zone_half_angle_deg)) {
    throw ConfigError("room: fov_deg must be < 90 - 2*zone_half_angle_deg (got fov " + std::to_string(fov_deg) +
                      ", zone half-angle " + std::to_string(zone_half_angle_deg) + ")");
  }
  if (!(r_min > 0.0 && r_min < r_max)) throw ConfigError("room: need 0 < r_min < r_max");
  if (!(r_max <= half_extent)) throw ConfigError("room: r_max must not exceed half_extent");
}

double rotation_deg(Action a) {
  static constexpr double kRot[kNumActions] = {0, -12, -24, -48, -96, 12, 24, 48, 96};
  return kRot[static_cast<std::size_t>(a)];
}

Action action_from_index(std::size_t i) {
  if (i >= kNumActions) throw ContractError("action index out of range: " + std::to_string(i));
  return static_cast<Action>(i);
}

std::string_view action_name(Action a) {
  static constexpr std::string_view kNames[kNumActions] = {"Stay", "L12", "L24", "L48", "L96",
                                                           "R12",  "R24", "R48", "R96"};
  return kNames[static_cast<std::size_t>(a)];
}

EgoState rotate(EgoState ego, Action a) { return {wrap_deg(ego.orientation_deg + rotation_deg(a))}; }

bool visible(const EgoState& ego, Vec2 p, const RoomConfig& cfg) {
  if (p.x == 0.0 && p.y == 0.0) throw GeometryError("visibility undefined at the origin");
  return std::abs(signed_diff_deg(ego.orientation_deg, bearing_deg(p))) <= cfg.fov_deg / 2.0 + 1e-9;
}

double Region::phi_of(Vec2 p) const { return signed_diff_deg(center_deg, bearing_deg(p)); }

bool Region::contains(Vec2 p, double tol) const {
  const double r = norm(p);
  if (r < r_min - tol || r > r_max + tol) return false;
  const double phi = phi_of(p);
  return phi >= phi_lo - tol && phi <= phi_hi + tol;
}

Vec2 Region::at(double radius, double phi_deg) const { return polar(radius, center_deg + phi_deg); }

Vec2 Region::clamp(Vec2 p) const {
  if (contains(p, 0.0)) return p;
  const double r = std::clamp(norm(p), r_min, r_max);
  const double phi = std::clamp(phi_of(p), phi_lo, phi_hi);
  return at(r, phi);
}

Vec2 Region::center() const { return at(0.5 * (r_min + r_max), 0.5 * (phi_lo + phi_hi)); }

double Region::boundary_distance(Vec2 p) const {
  const double r = norm(p);
  const double phi = phi_of(p);
  const double lateral = r * std::sin(std::max(0.0, std::min(phi - phi_lo, phi_hi - phi)) * kDeg);
  return std::min({r - r_min, r_max - r, lateral});
}

Vec2 Region::sample(num::CounterRng& rng) const {
  // Area-uniform in radius.
  const double u = rng.uniform();
  const double r = std::sqrt(r_min * r_min + u * (r_max * r_max - r_min * r_min));
  return at(r, rng.uniform(phi_lo, phi_hi));
}

double quadrant_center_deg(int quadrant) { return 45.0 + 90.0 * (quadrant - 1); }

Region zone(int quadrant, const RoomConfig& cfg) {
  if (quadrant < 1 || quadrant > 4) throw ConfigError("quadrant must be 1..4");
  return {quadrant_center_deg(quadrant), cfg.r_min, cfg.r_max, -cfg.zone_half_angle_deg, cfg.zone_half_angle_deg};
}

}  // namespace awml::env
