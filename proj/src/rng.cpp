#include "contra/rng.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace contra {

SeedContext SeedContext::derive(std::string_view label) const {
  std::string s = stream_;
  s += '/';
  s += label;
  return {seed_, std::move(s)};
}

SeedContext SeedContext::derive(std::string_view label, std::uint64_t index) const {
  std::string s = stream_;
  s += '/';
  s += label;
  s += '#';
  s += std::to_string(index);
  return {seed_, std::move(s)};
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  // Reject the top partial block of the 64-bit range.
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return x % n;
}

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::log_gamma_variate(double shape) noexcept {
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a)
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return log_gamma_variate(shape + 1.0) + std::log(u) / shape;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = normal();
    const double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    const double v = t * t * t;
    double u = uniform();
    while (u <= 0.0) u = uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return std::log(d) + std::log(v);
  }
}

double Rng::beta(double a, double b) noexcept {
  const double la = log_gamma_variate(a);
  const double lb = log_gamma_variate(b);
  // x / (x + y) = 1 / (1 + exp(ly - lx))
  return 1.0 / (1.0 + std::exp(lb - la));
}

}  // namespace contra
