#include "zenfoley/features.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace zenfoley::audio {

namespace {

uint32_t read_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_u32le(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

void write_matrix_file(const std::string& path, const char magic[4],
                       uint32_t rows, uint32_t cols, const float* data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write matrix file: " + path);
  out.write(magic, 4);
  write_u32le(out, 1);  // version
  write_u32le(out, rows);
  write_u32le(out, cols);
  static_assert(sizeof(float) == 4);
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(sizeof(float) * rows * cols));
  if (!out) throw IoError("short write to matrix file: " + path);
}

RawMatrix read_matrix_file(const std::string& path, const char magic[4]) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open matrix file: " + path);
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, magic, 4) != 0)
    throw FormatError("matrix file magic mismatch (want " +
                      std::string(magic, 4) + ") in " + path);
  uint32_t version = read_u32le(in);
  if (version != 1)
    throw FormatError("matrix file version " + std::to_string(version) +
                      " unsupported in " + path);
  RawMatrix m;
  m.rows = read_u32le(in);
  m.cols = read_u32le(in);
  if (!in) throw FormatError("matrix file header truncated in " + path);
  if (m.rows == 0 || m.cols == 0)
    throw FormatError("matrix file degenerate header rows=" +
                      std::to_string(m.rows) + " cols=" + std::to_string(m.cols) +
                      " in " + path);
  size_t n = static_cast<size_t>(m.rows) * m.cols;
  m.values.resize(n);
  in.read(reinterpret_cast<char*>(m.values.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != n * sizeof(float))
    throw FormatError("matrix file payload truncated (want " +
                      std::to_string(n) + " floats) in " + path);
  for (float v : m.values)
    if (!std::isfinite(v))
      throw FormatError("matrix file contains non-finite value in " + path);
  return m;
}

ExternalFeatures load_external_features(const std::string& path) {
  RawMatrix m = read_matrix_file(path, "CFE1");
  ExternalFeatures f;
  f.rows = static_cast<int>(m.rows);
  f.cols = static_cast<int>(m.cols);
  f.values = std::move(m.values);
  f.source = path;
  return f;
}

void save_external_features(const std::string& path, const ExternalFeatures& f) {
  write_matrix_file(path, "CFE1", static_cast<uint32_t>(f.rows),
                    static_cast<uint32_t>(f.cols), f.values.data());
}

ExternalFeatures stub_features(uint64_t seed, int rows, int cols) {
  if (rows <= 0 || cols <= 0)
    throw ContractError("stub_features: rows and cols must be positive");
  ExternalFeatures f;
  f.rows = rows;
  f.cols = cols;
  f.source = "stub:" + std::to_string(seed);
  f.values.resize(static_cast<size_t>(rows) * static_cast<size_t>(cols));
  SplitMix64 rng(seed);
  for (auto& v : f.values) v = static_cast<float>(rng.next_sym());
  return f;
}

CEmbed assemble_cembed(const MelSpec& m, const ExternalFeatures& f) {
  if (m.frames != f.cols)
    throw AlignmentError("assemble_cembed: mel frames " +
                         std::to_string(m.frames) + " != feature frames " +
                         std::to_string(f.cols));
  CEmbed c;
  c.mel_rows = m.rows;
  c.feat_rows = f.rows;
  c.frames = m.frames;
  c.values.reserve(m.values.size() + f.values.size());
  c.values.insert(c.values.end(), m.values.begin(), m.values.end());
  c.values.insert(c.values.end(), f.values.begin(), f.values.end());
  return c;
}

void save_cembed(const std::string& path, const CEmbed& c) {
  write_matrix_file(path, "CEM1", static_cast<uint32_t>(c.rows()),
                    static_cast<uint32_t>(c.frames), c.values.data());
}

CEmbed load_cembed(const std::string& path, int mel_rows) {
  RawMatrix m = read_matrix_file(path, "CEM1");
  if (static_cast<int>(m.rows) <= mel_rows)
    throw FormatError("cembed cache rows " + std::to_string(m.rows) +
                      " too small for mel_rows " + std::to_string(mel_rows) +
                      " in " + path);
  CEmbed c;
  c.mel_rows = mel_rows;
  c.feat_rows = static_cast<int>(m.rows) - mel_rows;
  c.frames = static_cast<int>(m.cols);
  c.values = std::move(m.values);
  return c;
}

CEmbed mask_augment(const CEmbed& c, const MaskSpec& spec) {
  if (spec.num_masks_per_kind < 0 || spec.time_mask_max_frames < 0 ||
      spec.freq_mask_max_rows < 0)
    throw ContractError("mask_augment: negative mask spec");
  int min_band = std::min(c.mel_rows, c.feat_rows);
  if (spec.freq_mask_max_rows > min_band)
    throw ContractError("mask_augment: freq mask extent " +
                        std::to_string(spec.freq_mask_max_rows) +
                        " exceeds sub-band height " + std::to_string(min_band));
  if (spec.time_mask_max_frames > c.frames)
    throw ContractError("mask_augment: time mask extent " +
                        std::to_string(spec.time_mask_max_frames) +
                        " exceeds frame count " + std::to_string(c.frames));

  CEmbed out = c;
  if (spec.num_masks_per_kind == 0) return out;

  struct Band {
    int r0, r1;
    uint64_t stream;
  };
  Band bands[2] = {{0, c.mel_rows, 0}, {c.mel_rows, c.rows(), 1}};
  for (const Band& band : bands) {
    SplitMix64 rng(mix_seed(spec.seed, band.stream));
    int band_rows = band.r1 - band.r0;

    double acc = 0.0;
    for (int r = band.r0; r < band.r1; ++r)
      for (int t = 0; t < c.frames; ++t) acc += c.at(r, t);
    float fill = static_cast<float>(acc / (static_cast<double>(band_rows) * c.frames));

    for (int k = 0; k < spec.num_masks_per_kind; ++k) {
      int extent = static_cast<int>(rng.next_below(static_cast<uint64_t>(spec.freq_mask_max_rows) + 1));
      int start = band.r0 + static_cast<int>(rng.next_below(static_cast<uint64_t>(band_rows - extent) + 1));
      for (int r = start; r < start + extent; ++r)
        for (int t = 0; t < c.frames; ++t)
          out.values[static_cast<size_t>(r) * static_cast<size_t>(c.frames) + static_cast<size_t>(t)] = fill;
    }
    for (int k = 0; k < spec.num_masks_per_kind; ++k) {
      int extent = static_cast<int>(rng.next_below(static_cast<uint64_t>(spec.time_mask_max_frames) + 1));
      int start = static_cast<int>(rng.next_below(static_cast<uint64_t>(c.frames - extent) + 1));
      for (int r = band.r0; r < band.r1; ++r)
        for (int t = start; t < start + extent; ++t)
          out.values[static_cast<size_t>(r) * static_cast<size_t>(c.frames) + static_cast<size_t>(t)] = fill;
    }
  }
  return out;
}

}  // namespace zenfoley::audio
