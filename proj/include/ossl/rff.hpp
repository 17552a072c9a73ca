#pragma once

// Random Fourier features for the Gaussian RBF kernel:
//   features(x) = cos(P x + q),  P_ij ~ N(0, 1/sigma^2),  q_j ~ U[0, 2 pi).
// No sqrt(2/D) amplitude factor is applied; the downstream linear weights
// absorb the scale.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "ossl/errors.hpp"
#include "ossl/nn.hpp"
#include "ossl/rng.hpp"

namespace ossl {

struct RffTransform {
  std::size_t input_dim = 0;  // code dimension k
  std::size_t rows = 0;       // D
  double sigma = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> projection;  // rows x input_dim, row-major
  std::vector<double> phase;       // rows

  bool operator==(const RffTransform&) const = default;
};

inline RffTransform rff_init(std::size_t input_dim, std::size_t rows, double sigma,
                             std::uint64_t seed) {
  if (input_dim < 1 || rows < 1) throw ConfigError("rff: dimensions must be >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("rff: sigma must be positive");
  RffTransform t{input_dim, rows, sigma, seed, std::vector<double>(rows * input_dim),
                 std::vector<double>(rows)};
  Rng base(seed, 0x524646);  // "RFF"
  Rng p_rng = base.split(1), q_rng = base.split(2);
  for (double& w : t.projection) w = p_rng.normal() / sigma;
  for (double& b : t.phase) b = q_rng.uniform(0.0, 2.0 * std::numbers::pi);
  return t;
}

inline void rff_transform(const RffTransform& t, std::span<const double> code,
                          std::span<double> out) {
  require(code.size() == t.input_dim, "rff_transform: code dimension mismatch");
  require(out.size() == t.rows, "rff_transform: output dimension mismatch");
  for (std::size_t j = 0; j < t.rows; ++j)
    out[j] = std::cos(dot(&t.projection[j * t.input_dim], code.data(), t.input_dim) + t.phase[j]);
}

inline std::vector<double> rff_transform(const RffTransform& t, std::span<const double> code) {
  std::vector<double> out(t.rows);
  rff_transform(t, code, out);
  return out;
}

}  // namespace ossl
