#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace gimo {

// Error taxonomy used across the library. The C API maps these to status codes.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Seedable pseudo-random source. The engine is std::mt19937_64 (bit-exact on
// every conforming implementation); the distributions below are hand-rolled so
// that the emitted doubles do not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  uint64_t index(uint64_t n) {
    // Rejection sampling keeps the draw unbiased for any n.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Approximately standard normal via the Irwin-Hall 12-sum. Uses only exact
  // IEEE additions, so results are portable across platforms and compilers.
  double normal() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += uniform();
    return s - 6.0;
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
};

// Stream derivation: mixes a base seed with a label and an index so that
// independent consumers (episodes, splits, init groups) never share a stream.
uint64_t derive_seed(uint64_t base, const std::string& label, uint64_t index = 0);

// FNV-1a 64-bit, used for dataset/checkpoint content hashes.
uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull);
uint64_t hash_file(const std::string& path);
std::string hash_hex(uint64_t h);

// Shortest exact decimal form of a double (round-trips bit-exactly).
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace gimo
