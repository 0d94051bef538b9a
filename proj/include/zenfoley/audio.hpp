#pragma once

#include <string>
#include <vector>

#include "zenfoley/common.hpp"

namespace zenfoley::audio {

struct Waveform {
  std::vector<float> samples;  // mono, in [-1, 1]
  int sample_rate = 0;

  double seconds() const {
    return sample_rate > 0
               ? static_cast<double>(samples.size()) / sample_rate
               : 0.0;
  }
};

// Reads a RIFF PCM mono 16-bit file. Samples are scaled by 1/32768. When
// clip_seconds > 0 the length is normalized to round(clip_seconds * rate):
// zero-padded at the end when short, center-cropped when long.
Waveform load_wav(const std::string& path, double clip_seconds = 4.0);

// Writes mono 16-bit PCM.
void write_wav(const std::string& path, const Waveform& w);

// Band-limited (windowed-sinc) resampling. Output length is
// round(n * target_rate / source_rate). Same rate returns the input verbatim.
Waveform resample(const Waveform& w, int target_rate);

struct MelParams {
  int sample_rate = 24000;
  int fft_size = 1024;
  int hop = 320;
  int n_mels = 129;
  double amp_floor = 1e-5;  // amplitude clamp before the natural log
};

struct MelSpec {
  int rows = 0;
  int frames = 0;
  std::vector<float> values;  // row-major (n_mels, frames), natural log domain
  MelParams params;

  float at(int r, int c) const {
    return values[static_cast<size_t>(r) * static_cast<size_t>(frames) +
                  static_cast<size_t>(c)];
  }
};

// STFT magnitude -> triangular HTK-spaced mel filterbank -> clamp -> ln.
// Frame t covers samples [t*hop, t*hop + fft_size) of the right-zero-padded
// signal, so frame count is exactly floor(samples / hop).
MelSpec melspectrogram(const Waveform& w, const MelParams& p);

// Center frequencies (Hz) of the triangular filters, one per mel row.
std::vector<double> mel_center_frequencies(const MelParams& p);

// Iterative phase reconstruction through the mel pseudo-inverse.
// iterations == 0 is the zero-phase baseline. Output length = frames * hop.
Waveform invert_mel(const MelSpec& m, int iterations);

}  // namespace zenfoley::audio
