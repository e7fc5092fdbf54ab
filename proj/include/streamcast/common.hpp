#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace streamcast {

// Error taxonomy mapped to CLI exit codes: ConfigError -> 2, DataError -> 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic RNG. std::mt19937_64 is fully specified by the standard; the
// distribution transforms are hand-rolled because the standard library's
// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free modulo bias is irrelevant for n << 2^64 at our scales,
    // but stay exact anyway.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller (no cached second value: call order stays
  // trivially deterministic).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
};

// Derive a stream seed from a base seed and stream tags. splitmix64-style mix
// so nearby inputs decorrelate.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a, used for config hashes and cheap file fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}
inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

// Logging controlled by STREAMCAST_LOG (debug|info|warn|error|off).
enum class LogLevel { kDebug = 0, kInfo, kWarn, kError, kOff };
LogLevel log_level();
void log_message(LogLevel level, const std::string& msg);

#define STREAMCAST_LOG_AT(level, msg)                      \
  do {                                                     \
    if (::streamcast::log_level() <= (level)) {            \
      ::streamcast::log_message((level), (msg));           \
    }                                                      \
  } while (0)

inline void log_debug(const std::string& m) { STREAMCAST_LOG_AT(LogLevel::kDebug, m); }
inline void log_info(const std::string& m) { STREAMCAST_LOG_AT(LogLevel::kInfo, m); }
inline void log_warn(const std::string& m) { STREAMCAST_LOG_AT(LogLevel::kWarn, m); }
inline void log_error(const std::string& m) { STREAMCAST_LOG_AT(LogLevel::kError, m); }

}  // namespace streamcast
