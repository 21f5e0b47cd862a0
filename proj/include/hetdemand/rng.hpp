#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace hetdemand {

// Seeded random stream: xoshiro256** whose state is expanded from the master
// seed with SplitMix64 and then advanced by `stream_id` long jumps (2^192
// steps each), so distinct stream ids never overlap.
//
// The generator and the variate algorithms below are part of the
// reproducibility contract: changing either changes every seeded result.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next(); }
  result_type next();

  // Uniform on the open interval (0, 1); 53 random bits.
  double uniform();
  // Standard normal, Marsaglia polar method with one cached spare.
  double normal();
  // Gamma(shape, 1), Marsaglia-Tsang; shape < 1 handled by the boost trick.
  double gamma(double shape);
  double chi_square(double dof) { return 2.0 * gamma(0.5 * dof); }

  [[nodiscard]] std::uint64_t master_seed() const { return master_seed_; }
  [[nodiscard]] std::uint64_t stream_id() const { return stream_id_; }

 private:
  void long_jump();

  std::array<std::uint64_t, 4> s_{};
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hetdemand
