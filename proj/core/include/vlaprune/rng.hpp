// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace vlaprune {

// Deterministic generator with a fully specified algorithm (splitmix64 for
// the integer stream, Box-Muller for normals) so that a seed reproduces the
// same sequence on every platform and build.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();

  // Uniform in [0, 1) from the top 53 bits.
  double uniform();
  double uniform(double lo, double hi);

  // Inclusive on both ends.
  int uniform_int(int lo, int hi);

  // Standard normal via Box-Muller; one spare value is cached.
  double normal();

  // Derives an independent stream, e.g. per (episode, step) substreams.
  static uint64_t mix(uint64_t a, uint64_t b);

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vlaprune
