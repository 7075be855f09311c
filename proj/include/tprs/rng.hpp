#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace tprs {

// Deterministic, explicitly seeded RNG (xoshiro256** seeded via splitmix64).
// No global RNG anywhere in the library: every stochastic operation takes a
// Rng& so runs are reproducible and streams can be split per worker/patient.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0);

  uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double normal();                        // standard normal, Box-Muller
  double normal(double mu, double sigma);
  int uniform_int(int lo, int hi);        // inclusive bounds
  bool bernoulli(double p);

  // Independent child stream; does not advance this generator.
  Rng split(uint64_t salt) const;
  Rng split(std::string_view tag) const;

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<uint64_t, 4> s_{};
};

uint64_t fnv1a64(std::string_view s);

}  // namespace tprs
