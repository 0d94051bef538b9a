#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace zenfoley {

// ---------------------------------------------------------------------------
// Errors. Every failure surfaces as an Error subclass with a stable category
// slug; the CLI maps the slug onto its single-line machine-readable output.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}
  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

#define ZENFOLEY_DEFINE_ERROR(Name, slug)                       \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& m) : Error(slug, m) {}     \
  }

ZENFOLEY_DEFINE_ERROR(DimensionError, "dimension");
ZENFOLEY_DEFINE_ERROR(ContractError, "contract");
ZENFOLEY_DEFINE_ERROR(ConfigError, "config");
ZENFOLEY_DEFINE_ERROR(FormatError, "format");
ZENFOLEY_DEFINE_ERROR(AlignmentError, "alignment");
ZENFOLEY_DEFINE_ERROR(CoverageError, "coverage");
ZENFOLEY_DEFINE_ERROR(VersioningError, "versioning");
ZENFOLEY_DEFINE_ERROR(TrainingError, "training");
ZENFOLEY_DEFINE_ERROR(IoError, "io");

#undef ZENFOLEY_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Deterministic RNG. SplitMix64 is used everywhere randomness is needed so
// that results are identical across platforms and runs. Constants are the
// published SplitMix64 ones; next_unit() takes the top 53 bits.
// ---------------------------------------------------------------------------

struct SplitMix64 {
  uint64_t state = 0;

  explicit SplitMix64(uint64_t seed = 0) : state(seed) {}

  uint64_t next() {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [-1, 1).
  double next_sym() { return 2.0 * next_unit() - 1.0; }

  // Uniform integer in [0, n). Multiply-high mapping, no modulo bias worth
  // caring about at these ranges, and fully deterministic.
  uint64_t next_below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }
};

// Stable seed derivation for independent streams.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  SplitMix64 s(a ^ (0x9E3779B97F4A7C15ULL + (b << 6) + (b >> 2)));
  s.state += b;
  return s.next();
}

uint64_t fnv1a64(std::string_view text);

// ---------------------------------------------------------------------------
// Foley categories (fixed seven-class task).
// ---------------------------------------------------------------------------

inline constexpr int kNumCategories = 7;
const char* category_name(int id);  // contract error if id out of range

}  // namespace zenfoley
