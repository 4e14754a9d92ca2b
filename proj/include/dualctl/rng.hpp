#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace dualctl {

/// Deterministic 64-bit key derivation (SplitMix64 finalizer chained over the
/// parts). Used to carve independent sub-streams out of a master seed.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

/// Standard normal draws from a seeded Mersenne Twister. The Box-Muller
/// transform is done here rather than through std::normal_distribution so
/// that streams are identical across standard library implementations.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double next();
  Eigen::VectorXd vector(int n);

 private:
  double uniform_open();

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dualctl
