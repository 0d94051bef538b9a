#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zenfoley/audio.hpp"
#include "zenfoley/common.hpp"

namespace zenfoley::audio {

struct ExternalFeatures {
  int rows = 0;
  int cols = 0;
  std::vector<float> values;  // row-major
  std::string source;
};

// Combined embedding: mel rows stacked over external-feature rows.
struct CEmbed {
  int mel_rows = 0;
  int feat_rows = 0;
  int frames = 0;
  std::vector<float> values;  // row-major (mel_rows + feat_rows, frames)

  int rows() const { return mel_rows + feat_rows; }
  float at(int r, int c) const {
    return values[static_cast<size_t>(r) * static_cast<size_t>(frames) +
                  static_cast<size_t>(c)];
  }
};

// Binary matrix container shared by feature files ("CFE1") and CEmbed caches
// ("CEM1"): magic (4 bytes), then little-endian u32 version=1, rows, cols,
// then rows*cols little-endian f32, row-major.
void write_matrix_file(const std::string& path, const char magic[4],
                       uint32_t rows, uint32_t cols, const float* data);
struct RawMatrix {
  uint32_t rows = 0, cols = 0;
  std::vector<float> values;
};
RawMatrix read_matrix_file(const std::string& path, const char magic[4]);

ExternalFeatures load_external_features(const std::string& path);
void save_external_features(const std::string& path, const ExternalFeatures& f);

// Deterministic stand-in for an external pretrained encoder: SplitMix64
// stream seeded with `seed`, values drawn row-major, uniform in [-1, 1).
ExternalFeatures stub_features(uint64_t seed, int rows, int cols);

CEmbed assemble_cembed(const MelSpec& m, const ExternalFeatures& f);

// CEmbed cache files (magic "CEM1"); mel_rows is not stored and must come
// from the run configuration.
void save_cembed(const std::string& path, const CEmbed& c);
CEmbed load_cembed(const std::string& path, int mel_rows);

struct MaskSpec {
  int time_mask_max_frames = 0;
  int freq_mask_max_rows = 0;
  int num_masks_per_kind = 0;
  uint64_t seed = 0;
};

// Time and frequency masks drawn independently for the mel sub-band and the
// feature sub-band (separate RNG streams derived from the one seed). Masked
// cells are set to the sub-band mean computed before masking.
CEmbed mask_augment(const CEmbed& c, const MaskSpec& spec);

}  // namespace zenfoley::audio
