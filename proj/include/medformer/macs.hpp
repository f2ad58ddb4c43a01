#pragma once

#include <cstdint>

namespace mf {

// Global multiply-accumulate counter, incremented by the matmul/conv kernels.
// Single-threaded by contract (benchmarks run on one thread).
inline std::uint64_t& mac_counter() {
  static std::uint64_t count = 0;
  return count;
}

inline void reset_macs() { mac_counter() = 0; }
inline std::uint64_t macs() { return mac_counter(); }

struct MacScope {
  std::uint64_t start;
  MacScope() : start(mac_counter()) {}
  std::uint64_t elapsed() const { return mac_counter() - start; }
};

}  // namespace mf
