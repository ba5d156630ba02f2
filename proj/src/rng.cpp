#include "cmt/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace cmt {

std::int64_t Rng::uniform_int(std::int64_t n) {
  if (n < 1) throw std::invalid_argument("uniform_int: n must be >= 1");
  return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
}

double Rng::normal(double mean, double stddev) {
  if (stddev < 0.0) throw std::invalid_argument("normal: stddev must be >= 0");
  // u1 in (0, 1] so the log is finite; cosine branch only, two draws per sample.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  return mean + stddev * z;
}

Tensor Rng::normal_tensor(const Shape& shape, double mean, double stddev) {
  Tensor t(shape);
  double* p = t.data();
  for (std::int64_t i = 0; i < t.size(); ++i) p[i] = normal(mean, stddev);
  return t;
}

}  // namespace cmt
