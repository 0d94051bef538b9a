#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "zenfoley/pipeline.hpp"

namespace zenfoley::pipeline {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& v, const std::string& key, int lineno) {
  try {
    size_t used = 0;
    long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return static_cast<int>(x);
  } catch (const std::exception&) {
    throw ConfigError("config line " + std::to_string(lineno) + ": key '" +
                      key + "' wants an integer, got '" + v + "'");
  }
}

int64_t parse_i64(const std::string& v, const std::string& key, int lineno) {
  try {
    size_t used = 0;
    long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config line " + std::to_string(lineno) + ": key '" +
                      key + "' wants an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& v, const std::string& key, int lineno) {
  try {
    size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config line " + std::to_string(lineno) + ": key '" +
                      key + "' wants a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& key, int lineno) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key +
                    "' wants true|false, got '" + v + "'");
}

}  // namespace

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));

    if (key == "manifest") c.manifest = val;
    else if (key == "features_mode") c.features_mode = val;
    else if (key == "features_dir") c.features_dir = val;
    else if (key == "stats") c.stats = val;
    else if (key == "cache_dir") c.cache_dir = val;
    else if (key == "codes_dir") c.codes_dir = val;
    else if (key == "vqvae_checkpoint") c.vqvae_checkpoint = val;
    else if (key == "snail_checkpoint") c.snail_checkpoint = val;
    else if (key == "resume_from") c.resume_from = val;
    else if (key == "generated_manifest") c.generated_manifest = val;
    else if (key == "reference_manifest") c.reference_manifest = val;
    else if (key == "reference_split") c.reference_split = val;
    else if (key == "fad_backend") c.fad_backend = val;
    else if (key == "source_rate") c.source_rate = parse_int(val, key, lineno);
    else if (key == "model_rate") c.model_rate = parse_int(val, key, lineno);
    else if (key == "clip_seconds") c.clip_seconds = parse_double(val, key, lineno);
    else if (key == "fft_size") c.fft_size = parse_int(val, key, lineno);
    else if (key == "hop") c.hop = parse_int(val, key, lineno);
    else if (key == "mel_rows") c.mel_rows = parse_int(val, key, lineno);
    else if (key == "feature_rows") c.feature_rows = parse_int(val, key, lineno);
    else if (key == "amp_floor") c.amp_floor = parse_double(val, key, lineno);
    else if (key == "invert_iterations") c.invert_iterations = parse_int(val, key, lineno);
    else if (key == "mask_time_max") c.mask_time_max = parse_int(val, key, lineno);
    else if (key == "mask_freq_max") c.mask_freq_max = parse_int(val, key, lineno);
    else if (key == "masks_per_kind") c.masks_per_kind = parse_int(val, key, lineno);
    else if (key == "codebook_size") c.codebook_size = parse_int(val, key, lineno);
    else if (key == "channels") c.channels = parse_int(val, key, lineno);
    else if (key == "residual_blocks") c.residual_blocks = parse_int(val, key, lineno);
    else if (key == "parallel_block") c.parallel_block = parse_bool(val, key, lineno);
    else if (key == "beta") c.beta = parse_double(val, key, lineno);
    else if (key == "class_weight") c.class_weight = parse_double(val, key, lineno);
    else if (key == "vqvae_lr") c.vqvae_lr = parse_double(val, key, lineno);
    else if (key == "vqvae_batch") c.vqvae_batch = parse_int(val, key, lineno);
    else if (key == "vqvae_steps") c.vqvae_steps = parse_i64(val, key, lineno);
    else if (key == "vqvae_epochs") c.vqvae_epochs = parse_int(val, key, lineno);
    else if (key == "snail_channels") c.snail_channels = parse_int(val, key, lineno);
    else if (key == "snail_res_blocks") c.snail_res_blocks = parse_int(val, key, lineno);
    else if (key == "snail_groups") c.snail_groups = parse_int(val, key, lineno);
    else if (key == "snail_kernel") c.snail_kernel = parse_int(val, key, lineno);
    else if (key == "snail_zen_kernel") c.snail_zen_kernel = parse_int(val, key, lineno);
    else if (key == "snail_heads") c.snail_heads = parse_int(val, key, lineno);
    else if (key == "zen_stride") c.zen_stride = parse_int(val, key, lineno);
    else if (key == "snail_batch") c.snail_batch = parse_int(val, key, lineno);
    else if (key == "snail_base_lr") c.snail_base_lr = parse_double(val, key, lineno);
    else if (key == "snail_max_lr") c.snail_max_lr = parse_double(val, key, lineno);
    else if (key == "snail_cycle_steps") c.snail_cycle_steps = parse_i64(val, key, lineno);
    else if (key == "snail_steps") c.snail_steps = parse_i64(val, key, lineno);
    else if (key == "snail_epochs") c.snail_epochs = parse_int(val, key, lineno);
    else if (key == "max_grad_norm") c.max_grad_norm = parse_double(val, key, lineno);
    else if (key == "log_interval") c.log_interval = parse_i64(val, key, lineno);
    else if (key == "checkpoint_interval") c.checkpoint_interval = parse_i64(val, key, lineno);
    else if (key == "generate_per_class") c.generate_per_class = parse_int(val, key, lineno);
    else if (key == "temperature") c.temperature = parse_double(val, key, lineno);
    else if (key == "val_per_class") c.val_per_class = parse_int(val, key, lineno);
    else
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
  }
  return c;
}

uint64_t RunConfig::model_hash() const {
  std::ostringstream os;
  char buf[64];
  auto put_d = [&](const char* k, double v) {
    std::snprintf(buf, sizeof(buf), "%s=%.17g\n", k, v);
    os << buf;
  };
  auto put_i = [&](const char* k, int64_t v) { os << k << "=" << v << "\n"; };
  put_i("source_rate", source_rate);
  put_i("model_rate", model_rate);
  put_d("clip_seconds", clip_seconds);
  put_i("fft_size", fft_size);
  put_i("hop", hop);
  put_i("mel_rows", mel_rows);
  put_i("feature_rows", feature_rows);
  put_d("amp_floor", amp_floor);
  put_i("mask_time_max", mask_time_max);
  put_i("mask_freq_max", mask_freq_max);
  put_i("masks_per_kind", masks_per_kind);
  put_i("codebook_size", codebook_size);
  put_i("channels", channels);
  put_i("residual_blocks", residual_blocks);
  put_i("parallel_block", parallel_block ? 1 : 0);
  put_d("beta", beta);
  put_d("class_weight", class_weight);
  put_d("vqvae_lr", vqvae_lr);
  put_i("vqvae_batch", vqvae_batch);
  put_i("snail_channels", snail_channels);
  put_i("snail_res_blocks", snail_res_blocks);
  put_i("snail_groups", snail_groups);
  put_i("snail_kernel", snail_kernel);
  put_i("snail_zen_kernel", snail_zen_kernel);
  put_i("snail_heads", snail_heads);
  put_i("zen_stride", zen_stride);
  put_i("snail_batch", snail_batch);
  put_d("snail_base_lr", snail_base_lr);
  put_d("snail_max_lr", snail_max_lr);
  put_i("snail_cycle_steps", snail_cycle_steps);
  put_d("max_grad_norm", max_grad_norm);
  return fnv1a64(os.str());
}

audio::MelParams RunConfig::mel_params() const {
  audio::MelParams p;
  p.sample_rate = model_rate;
  p.fft_size = fft_size;
  p.hop = hop;
  p.n_mels = mel_rows;
  p.amp_floor = amp_floor;
  return p;
}

vqvae::VqVaeConfig RunConfig::vqvae_config() const {
  vqvae::VqVaeConfig v;
  v.in_rows = cembed_rows();
  v.in_cols = frames();
  v.channels = channels;
  v.residual_blocks = residual_blocks;
  v.parallel_block = parallel_block;
  v.codebook_size = codebook_size;
  v.beta = static_cast<float>(beta);
  v.class_weight = static_cast<float>(class_weight);
  v.downsample = 4;
  return v;
}

snail::SnailConfig RunConfig::snail_config() const {
  snail::SnailConfig s;
  s.grid_rows = cembed_rows() / 4;
  s.grid_cols = frames() / 4;
  s.vocab = codebook_size;
  s.channels = snail_channels;
  s.res_blocks = snail_res_blocks;
  s.groups = snail_groups;
  s.kernel_len = snail_kernel;
  s.zen_kernel = snail_zen_kernel;
  s.heads = snail_heads;
  s.zen_stride = zen_stride;
  return s;
}

void CorpusStats::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write stats file: " + path);
  char buf[64];
  auto put = [&](const char* k, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", k, v);
    out << buf;
  };
  put("mel_mean", mel_mean);
  put("mel_std", mel_std);
  put("feat_mean", feat_mean);
  put("feat_std", feat_std);
}

CorpusStats CorpusStats::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stats file: " + path);
  CorpusStats s;
  std::string line;
  int found = 0;
  while (std::getline(in, line)) {
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = trim(line.substr(0, eq));
    double v = std::stod(trim(line.substr(eq + 1)));
    if (key == "mel_mean") s.mel_mean = v, ++found;
    else if (key == "mel_std") s.mel_std = v, ++found;
    else if (key == "feat_mean") s.feat_mean = v, ++found;
    else if (key == "feat_std") s.feat_std = v, ++found;
    else throw FormatError("stats file: unknown key '" + key + "' in " + path);
  }
  if (found != 4)
    throw FormatError("stats file missing fields in " + path);
  return s;
}

double CyclicLr::at(int64_t step) const {
  if (cycle_steps <= 0) return base_lr;
  int64_t c = step % (2 * cycle_steps);
  double phase = c <= cycle_steps
                     ? static_cast<double>(c) / static_cast<double>(cycle_steps)
                     : 2.0 - static_cast<double>(c) / static_cast<double>(cycle_steps);
  return base_lr + (max_lr - base_lr) * phase;
}

}  // namespace zenfoley::pipeline
