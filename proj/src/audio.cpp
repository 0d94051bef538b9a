#include "zenfoley/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include <Eigen/Dense>

namespace zenfoley::audio {

namespace {

constexpr double kPi = 3.14159265358979323846;

// --- little-endian scalar IO -------------------------------------------------

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 2);
}

// --- FFT ----------------------------------------------------------------------

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey. inverse=true omits the 1/n scale;
// callers that need a true inverse divide afterwards.
void fft(std::vector<std::complex<double>>& a, bool inverse) {
  size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

void check_mel_params(const MelParams& p) {
  if (p.hop <= 0 || p.fft_size <= 0 || p.n_mels <= 0)
    throw ConfigError("mel params must be positive");
  if (p.hop > p.fft_size)
    throw ConfigError("hop " + std::to_string(p.hop) + " exceeds fft size " +
                      std::to_string(p.fft_size));
  if (!is_pow2(p.fft_size))
    throw ConfigError("fft size must be a power of two, got " +
                      std::to_string(p.fft_size));
  if (p.amp_floor <= 0.0) throw ConfigError("amp floor must be positive");
  if (p.n_mels + 2 > p.fft_size / 2 + 1)
    throw ConfigError("too many mel bands (" + std::to_string(p.n_mels) +
                      ") for fft size " + std::to_string(p.fft_size));
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Triangular filters with edges equally spaced on the HTK mel scale between
// 0 Hz and Nyquist; weights computed in the mel domain, peak 1 at the center.
std::vector<double> mel_filterbank(const MelParams& p, int* n_bins_out) {
  int n_bins = p.fft_size / 2 + 1;
  *n_bins_out = n_bins;
  double mel_max = hz_to_mel(p.sample_rate / 2.0);
  std::vector<double> edges(static_cast<size_t>(p.n_mels) + 2);
  for (int i = 0; i < p.n_mels + 2; ++i)
    edges[static_cast<size_t>(i)] = mel_max * i / (p.n_mels + 1);
  std::vector<double> fb(static_cast<size_t>(p.n_mels) * static_cast<size_t>(n_bins), 0.0);
  double bin_hz = static_cast<double>(p.sample_rate) / p.fft_size;
  for (int b = 0; b < n_bins; ++b) {
    double mel = hz_to_mel(b * bin_hz);
    for (int m = 0; m < p.n_mels; ++m) {
      double lo = edges[static_cast<size_t>(m)];
      double c = edges[static_cast<size_t>(m) + 1];
      double hi = edges[static_cast<size_t>(m) + 2];
      double wgt = 0.0;
      if (mel > lo && mel < c)
        wgt = (mel - lo) / (c - lo);
      else if (mel >= c && mel < hi)
        wgt = (hi - mel) / (hi - c);
      if (wgt > 0.0)
        fb[static_cast<size_t>(m) * static_cast<size_t>(n_bins) +
           static_cast<size_t>(b)] = wgt;
    }
  }
  return fb;
}

// Magnitude STFT, (n_bins, frames) column-major by frame loops below.
std::vector<std::complex<double>> stft_frame(const std::vector<float>& x,
                                             const std::vector<double>& win,
                                             int fft_size, int64_t start) {
  std::vector<std::complex<double>> buf(static_cast<size_t>(fft_size));
  int64_t n = static_cast<int64_t>(x.size());
  for (int i = 0; i < fft_size; ++i) {
    int64_t p = start + i;
    double v = (p >= 0 && p < n) ? static_cast<double>(x[static_cast<size_t>(p)]) : 0.0;
    buf[static_cast<size_t>(i)] = v * win[static_cast<size_t>(i)];
  }
  fft(buf, false);
  return buf;
}

}  // namespace

// --- WAV -----------------------------------------------------------------------

Waveform load_wav(const std::string& path, double clip_seconds) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav file: " + path);
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw FormatError("wav header field RIFF missing in " + path);
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw FormatError("wav header field WAVE missing in " + path);

  int channels = -1, bits = -1, rate = -1, audio_format = -1;
  std::vector<int16_t> pcm;
  bool got_data = false;
  while (in.read(tag, 4)) {
    uint32_t sz = read_u32(in);
    if (!in) break;
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      audio_format = read_u16(in);
      channels = read_u16(in);
      rate = static_cast<int>(read_u32(in));
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (sz > 16) in.seekg(sz - 16 + (sz & 1), std::ios::cur);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (audio_format == -1)
        throw FormatError("wav data chunk before fmt chunk in " + path);
      if (audio_format != 1)
        throw FormatError("wav field audio_format=" + std::to_string(audio_format) +
                          " (want PCM=1) in " + path);
      if (channels != 1)
        throw FormatError("wav field channels=" + std::to_string(channels) +
                          " (want mono) in " + path);
      if (bits != 16)
        throw FormatError("wav field bits_per_sample=" + std::to_string(bits) +
                          " (want 16) in " + path);
      pcm.resize(sz / 2);
      in.read(reinterpret_cast<char*>(pcm.data()), static_cast<std::streamsize>(sz / 2 * 2));
      if (!in)
        throw FormatError("wav data chunk truncated in " + path);
      got_data = true;
      break;
    } else {
      in.seekg(sz + (sz & 1), std::ios::cur);
    }
  }
  if (!got_data) throw FormatError("wav data chunk missing in " + path);

  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i)
    w.samples[i] = static_cast<float>(pcm[i]) / 32768.0f;

  if (clip_seconds > 0.0) {
    size_t target = static_cast<size_t>(std::llround(clip_seconds * rate));
    if (w.samples.size() > target) {
      size_t start = (w.samples.size() - target) / 2;
      w.samples = std::vector<float>(w.samples.begin() + static_cast<std::ptrdiff_t>(start),
                                     w.samples.begin() + static_cast<std::ptrdiff_t>(start + target));
    } else if (w.samples.size() < target) {
      w.samples.resize(target, 0.0f);
    }
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write wav file: " + path);
  uint32_t data_bytes = static_cast<uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(w.sample_rate));
  write_u32(out, static_cast<uint32_t>(w.sample_rate * 2));
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (float v : w.samples) {
    double scaled = std::clamp(static_cast<double>(v), -1.0, 1.0) * 32767.0;
    int16_t s = static_cast<int16_t>(std::lrint(scaled));
    char b[2] = {static_cast<char>(s & 0xff), static_cast<char>((s >> 8) & 0xff)};
    out.write(b, 2);
  }
  if (!out) throw IoError("short write to wav file: " + path);
}

// --- resampling ------------------------------------------------------------------

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw ContractError("resample: target rate must be > 0");
  if (target_rate == w.sample_rate) return w;

  const int taps = 32;  // one-sided kernel half-width, in input samples
  int64_t n_in = static_cast<int64_t>(w.samples.size());
  int64_t n_out = (n_in * target_rate + w.sample_rate / 2) / w.sample_rate;
  double ratio = static_cast<double>(w.sample_rate) / target_rate;
  double fc = std::min(1.0, static_cast<double>(target_rate) / w.sample_rate);

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<size_t>(n_out));
  for (int64_t n = 0; n < n_out; ++n) {
    double t = n * ratio;
    int64_t k0 = static_cast<int64_t>(std::ceil(t)) - taps;
    int64_t k1 = static_cast<int64_t>(std::floor(t)) + taps;
    double acc = 0.0;
    for (int64_t k = std::max<int64_t>(0, k0); k <= std::min(n_in - 1, k1); ++k) {
      double u = t - k;
      double sinc = (u == 0.0) ? 1.0 : std::sin(kPi * fc * u) / (kPi * fc * u);
      double win = 0.5 + 0.5 * std::cos(kPi * u / (taps + 1));
      acc += static_cast<double>(w.samples[static_cast<size_t>(k)]) * fc * sinc * win;
    }
    out.samples[static_cast<size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

// --- mel spectrogram ---------------------------------------------------------------

std::vector<double> mel_center_frequencies(const MelParams& p) {
  check_mel_params(p);
  double mel_max = hz_to_mel(p.sample_rate / 2.0);
  std::vector<double> centers(static_cast<size_t>(p.n_mels));
  for (int m = 0; m < p.n_mels; ++m)
    centers[static_cast<size_t>(m)] = mel_to_hz(mel_max * (m + 1) / (p.n_mels + 1));
  return centers;
}

MelSpec melspectrogram(const Waveform& w, const MelParams& p) {
  check_mel_params(p);
  if (w.sample_rate != p.sample_rate)
    throw ContractError("melspectrogram: waveform rate " +
                        std::to_string(w.sample_rate) + " != param rate " +
                        std::to_string(p.sample_rate));
  int n_bins = 0;
  std::vector<double> fb = mel_filterbank(p, &n_bins);
  std::vector<double> win = hann_window(p.fft_size);
  int frames = static_cast<int>(w.samples.size() / static_cast<size_t>(p.hop));

  MelSpec m;
  m.rows = p.n_mels;
  m.frames = frames;
  m.params = p;
  m.values.assign(static_cast<size_t>(p.n_mels) * static_cast<size_t>(frames), 0.0f);
  std::vector<double> mag(static_cast<size_t>(n_bins));
  for (int t = 0; t < frames; ++t) {
    auto spec = stft_frame(w.samples, win, p.fft_size, static_cast<int64_t>(t) * p.hop);
    for (int b = 0; b < n_bins; ++b) mag[static_cast<size_t>(b)] = std::abs(spec[static_cast<size_t>(b)]);
    for (int r = 0; r < p.n_mels; ++r) {
      const double* frow = fb.data() + static_cast<size_t>(r) * static_cast<size_t>(n_bins);
      double acc = 0.0;
      for (int b = 0; b < n_bins; ++b) acc += frow[b] * mag[static_cast<size_t>(b)];
      m.values[static_cast<size_t>(r) * static_cast<size_t>(frames) + static_cast<size_t>(t)] =
          static_cast<float>(std::log(std::max(acc, p.amp_floor)));
    }
  }
  return m;
}

// --- inversion ----------------------------------------------------------------------

namespace {

std::vector<float> istft(const std::vector<std::vector<std::complex<double>>>& frames_spec,
                         const std::vector<double>& win, int fft_size, int hop,
                         int out_len) {
  int frames = static_cast<int>(frames_spec.size());
  int64_t buf_len = static_cast<int64_t>(frames - 1) * hop + fft_size;
  std::vector<double> acc(static_cast<size_t>(std::max<int64_t>(buf_len, out_len)), 0.0);
  std::vector<double> wsum(acc.size(), 0.0);
  std::vector<std::complex<double>> buf(static_cast<size_t>(fft_size));
  for (int t = 0; t < frames; ++t) {
    // Rebuild the full spectrum from the half-spectrum by conjugate symmetry.
    for (int b = 0; b <= fft_size / 2; ++b) buf[static_cast<size_t>(b)] = frames_spec[static_cast<size_t>(t)][static_cast<size_t>(b)];
    for (int b = fft_size / 2 + 1; b < fft_size; ++b)
      buf[static_cast<size_t>(b)] = std::conj(buf[static_cast<size_t>(fft_size - b)]);
    fft(buf, true);
    int64_t off = static_cast<int64_t>(t) * hop;
    for (int i = 0; i < fft_size; ++i) {
      double v = buf[static_cast<size_t>(i)].real() / fft_size;
      acc[static_cast<size_t>(off + i)] += v * win[static_cast<size_t>(i)];
      wsum[static_cast<size_t>(off + i)] += win[static_cast<size_t>(i)] * win[static_cast<size_t>(i)];
    }
  }
  std::vector<float> out(static_cast<size_t>(out_len));
  for (int i = 0; i < out_len; ++i)
    out[static_cast<size_t>(i)] =
        static_cast<float>(acc[static_cast<size_t>(i)] / std::max(wsum[static_cast<size_t>(i)], 1e-8));
  return out;
}

}  // namespace

Waveform invert_mel(const MelSpec& m, int iterations) {
  if (iterations < 0) throw ContractError("invert_mel: iterations must be >= 0");
  const MelParams& p = m.params;
  check_mel_params(p);
  int n_bins = 0;
  std::vector<double> fb = mel_filterbank(p, &n_bins);

  // Ridge-regularized pseudo-inverse of the filterbank.
  Eigen::MatrixXd FB(p.n_mels, n_bins);
  for (int r = 0; r < p.n_mels; ++r)
    for (int b = 0; b < n_bins; ++b)
      FB(r, b) = fb[static_cast<size_t>(r) * static_cast<size_t>(n_bins) + static_cast<size_t>(b)];
  Eigen::MatrixXd gram = FB * FB.transpose();
  gram.diagonal().array() += 1e-8;
  Eigen::MatrixXd pinv = FB.transpose() * gram.ldlt().solve(
      Eigen::MatrixXd::Identity(p.n_mels, p.n_mels));

  Eigen::MatrixXd melamp(p.n_mels, m.frames);
  for (int r = 0; r < p.n_mels; ++r)
    for (int t = 0; t < m.frames; ++t)
      melamp(r, t) = std::exp(static_cast<double>(m.at(r, t)));
  Eigen::MatrixXd target = (pinv * melamp).cwiseMax(0.0);

  int out_len = m.frames * p.hop;
  std::vector<double> win = hann_window(p.fft_size);

  // Zero phase start; each iteration replaces the phase with the STFT phase of
  // the current time-domain estimate while keeping the target magnitude.
  std::vector<std::vector<std::complex<double>>> spec(
      static_cast<size_t>(m.frames),
      std::vector<std::complex<double>>(static_cast<size_t>(p.fft_size / 2 + 1)));
  for (int t = 0; t < m.frames; ++t)
    for (int b = 0; b <= p.fft_size / 2; ++b)
      spec[static_cast<size_t>(t)][static_cast<size_t>(b)] = {target(b, t), 0.0};

  std::vector<float> x = istft(spec, win, p.fft_size, p.hop, out_len);
  for (int it = 0; it < iterations; ++it) {
    for (int t = 0; t < m.frames; ++t) {
      auto frame = stft_frame(x, win, p.fft_size, static_cast<int64_t>(t) * p.hop);
      for (int b = 0; b <= p.fft_size / 2; ++b) {
        std::complex<double> v = frame[static_cast<size_t>(b)];
        double mag = std::abs(v);
        std::complex<double> phase = mag > 1e-12 ? v / mag : std::complex<double>(1.0, 0.0);
        spec[static_cast<size_t>(t)][static_cast<size_t>(b)] = target(b, t) * phase;
      }
    }
    x = istft(spec, win, p.fft_size, p.hop, out_len);
  }

  Waveform out;
  out.sample_rate = p.sample_rate;
  out.samples = std::move(x);
  return out;
}

}  // namespace zenfoley::audio
