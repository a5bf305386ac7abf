#pragma once

#include <string>
#include <vector>

#include "dusa/core.hpp"

namespace dusa::verify {

struct Check {
  std::string name;
  bool pass = false;
  double value = 0.0;  // worst observed statistic
  std::string detail;
  double seconds = 0.0;
};

/// Prop. 1 and Tweedie residuals over `mixtures` random mixtures with
/// `points` query points each, cycling d over {1,2,4,8} and K over {2,3,5,10}.
std::vector<Check> identity_suite(std::uint64_t seed, int mixtures = 100, int points = 100);

/// verify_mmse_optimality on random (mixture, abar, x_t) triples.
Check mmse_suite(std::uint64_t seed, int triples = 20, int trials = 50, int samples = 100000);

/// grad_check of every adaptation loss on tiny random models.
std::vector<Check> gradient_suite(std::uint64_t seed, int seeds = 5, double tolerance = 1e-5);

/// Null-conditioned variant: gradient partition and per-sample accounting at b = 6.
Check partition_check(std::uint64_t seed);

}  // namespace dusa::verify
