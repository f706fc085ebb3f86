#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdfr {

// Error taxonomy shared by all modules. Construction sites attach context.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct InvalidBasisError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct InvalidRotationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct InvalidArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DegenerateInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct RenderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// splitmix64; used to derive independent child seeds from a master seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt);

// Deterministic random stream. All randomness in the project flows through
// this class so that runs are reproducible across library versions; the
// standard <random> distributions are implementation-defined and are not used.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                          // [0, 1)
  double uniform(double lo, double hi);      // [lo, hi)
  double normal(double mean, double stddev); // Box-Muller
  int uniform_int(int lo, int hi);           // inclusive bounds
  RandomStream fork(std::uint64_t salt) const; // child stream, does not consume state

  std::string state_string() const;          // for checkpoint snapshots

 private:
  std::uint64_t s_[4]; // xoshiro256++ state
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
};

// FNV-1a over raw bytes; used for weight-freeze contracts.
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull);

std::string format_double(double v); // shortest round-trip decimal form

} // namespace mdfr
