#pragma once

#include <cmath>

namespace streamcast {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend Vec2 operator*(double s, Vec2 a) { return a * s; }
  friend bool operator==(const Vec2&, const Vec2&) = default;

  double norm() const { return std::hypot(x, y); }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

// Normalizes an angle to (-pi, pi].
inline double wrap_angle(double a) {
  const double two_pi = 6.28318530717958647692;
  a = std::fmod(a, two_pi);
  if (a <= -3.14159265358979323846) a += two_pi;
  if (a > 3.14159265358979323846) a -= two_pi;
  return a;
}

// A rigid 2-D frame: position plus heading of its +x axis in world terms.
struct Pose {
  Vec2 p;
  double heading = 0.0;

  friend bool operator==(const Pose&, const Pose&) = default;
};

inline Vec2 to_world(const Pose& frame, Vec2 local) {
  const double c = std::cos(frame.heading), s = std::sin(frame.heading);
  return {frame.p.x + c * local.x - s * local.y, frame.p.y + s * local.x + c * local.y};
}

inline Vec2 to_agent(const Pose& frame, Vec2 world) {
  const double c = std::cos(frame.heading), s = std::sin(frame.heading);
  const Vec2 d = world - frame.p;
  return {c * d.x + s * d.y, -s * d.x + c * d.y};
}

}  // namespace streamcast
