#include "swmediate/rng.hpp"

#include <cmath>

namespace swmediate {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void round_once(std::array<std::uint32_t, 4>& c,
                       const std::array<std::uint32_t, 2>& k) {
  std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
  std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
  std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    round_once(counter, key);
  }
  return counter;
}

double RngStream::uniform() {
  if (pair_pos_ > 1) {
    std::array<std::uint32_t, 4> ctr = base_;
    ctr[0] = block_index_++;
    auto out = philox4x32(ctr, key_);
    auto to_unit = [](std::uint32_t hi, std::uint32_t lo) {
      std::uint64_t v = (static_cast<std::uint64_t>(hi) << 32) | lo;
      // 53 bits, shifted into (0,1): (v >> 11) in [0, 2^53), offset by 1/2
      return (static_cast<double>(v >> 11) + 0.5) * 0x1.0p-53;
    };
    pair_[0] = to_unit(out[0], out[1]);
    pair_[1] = to_unit(out[2], out[3]);
    pair_pos_ = 0;
  }
  return pair_[pair_pos_++];
}

double RngStream::normal() {
  if (have_cached_normal_) {
    have_cached_normal_ = false;
    return cached_normal_;
  }
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(a);
  have_cached_normal_ = true;
  return r * std::cos(a);
}

}  // namespace swmediate
