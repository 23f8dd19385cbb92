#pragma once

#include <array>
#include <cmath>

#include "esp/environments.hpp"

namespace oracle {

// Cart-pole written from the coupled equations of motion
//   (M + m) x'' + m l cos(t) t''     = F + m l t'^2 sin(t)
//   m l cos(t) x'' + (4/3) m l^2 t'' = m g l sin(t)
// solved by Cramer's rule, then one explicit Euler step.
inline std::array<double, 4> cartpole_euler(const esp::CartPoleParams& p, std::array<double, 4> s, int direction) {
  const double M = p.cart_mass, m = p.pole_mass, l = p.pole_half_length;
  const double F = direction * p.force_magnitude;
  const double c = std::cos(s[2]), sn = std::sin(s[2]);
  const double a11 = M + m, a12 = m * l * c;
  const double a21 = m * l * c, a22 = 4.0 / 3.0 * m * l * l;
  const double b1 = F + m * l * s[3] * s[3] * sn;
  const double b2 = m * p.gravity * l * sn;
  const double det = a11 * a22 - a12 * a21;
  const double x_acc = (b1 * a22 - a12 * b2) / det;
  const double t_acc = (a11 * b2 - a21 * b1) / det;
  const double dt = p.timestep;
  return {s[0] + dt * s[1], s[1] + dt * x_acc, s[2] + dt * s[3], s[3] + dt * t_acc};
}

}  // namespace oracle
