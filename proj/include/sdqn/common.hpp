#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sdqn {

// ---------------------------------------------------------------------------
// Error types. Everything user-facing derives from Error so the CLI can map
// failures onto exit codes.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor/layer shape disagreement; message names the offending layer.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf encountered where finite values are required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Bad key=value config file or CLI flag.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated checkpoint file.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// A trainer failed to reach its required held-out metric in budget.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// API misuse: step after terminal, stale tape, sampling too early, ...
class StateError : public Error {
 public:
  using Error::Error;
};

/// A required model checkpoint was not supplied.
class MissingModelError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Seeding. splitmix64 derives independent streams from one base seed, so an
// experiment is reproducible while its episodes stay decorrelated.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives the seed for sub-stream `index` of `base` (episode seeds, noise
/// streams, per-layer init streams).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(base + 0x632BE59BD9B4E019ULL * (index + 1));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// ---------------------------------------------------------------------------
// Angles. Degrees everywhere; two wrap conventions are used in the artifact.
// ---------------------------------------------------------------------------

/// Wraps into [0, 360).
inline double wrap_deg_360(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  return r;
}

/// Wraps into [-180, 180).
inline double wrap_deg_180(double deg) {
  double r = std::fmod(deg + 180.0, 360.0);
  if (r < 0.0) r += 360.0;
  return r - 180.0;
}

inline double deg_to_rad(double deg) { return deg * (M_PI / 180.0); }
inline double rad_to_deg(double rad) { return rad * (180.0 / M_PI); }

}  // namespace sdqn
