#pragma once

#include <array>
#include <cstdint>

namespace swmediate {

// Philox4x32-10 counter-based generator. A block is a pure function of
// (counter, key), so independent streams are cheap: we key one stream per
// (replicate, cluster) pair and let the in-stream draw index drive the
// counter. Replicates can then be generated in any order, on any number of
// threads, and still produce identical data.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// One logical stream of uniforms/normals. The stream identity is
// (seed, domain, replicate, cluster); successive draws advance an internal
// 32-bit index. Each Philox block yields two doubles.
class RngStream {
 public:
  RngStream(std::uint32_t seed, std::uint32_t domain, std::uint32_t replicate,
            std::uint32_t cluster)
      : key_{seed, domain}, base_{0u, cluster, replicate, 0x5357u} {}

  // uniform on (0,1), never exactly 0 or 1
  double uniform();

  // standard normal via Box-Muller (second value cached)
  double normal();

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> base_;
  std::uint32_t block_index_ = 0;
  int pair_pos_ = 2;           // 0/1 valid halves, 2 = need fresh block
  std::array<double, 2> pair_{0.0, 0.0};
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace swmediate
