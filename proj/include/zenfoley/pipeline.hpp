#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zenfoley/audio.hpp"
#include "zenfoley/common.hpp"
#include "zenfoley/fad.hpp"
#include "zenfoley/snail.hpp"
#include "zenfoley/tensor.hpp"
#include "zenfoley/vqvae.hpp"

namespace zenfoley::pipeline {

// --- manifest ------------------------------------------------------------------
// Line-delimited, tab-separated records: path, category_id, split.

struct ManifestRecord {
  std::string path;
  int category = 0;
  std::string split;  // "train" or "val"
};

struct Manifest {
  std::vector<ManifestRecord> records;

  static Manifest load(const std::string& path);
  void save(const std::string& path) const;
  void validate() const;
  std::vector<ManifestRecord> subset(const std::string& split) const;
};

// Exactly per_class_val validation clips per category (seeded draw), the rest
// train. Record order is preserved.
Manifest stratified_split(const Manifest& m, int per_class_val, uint64_t seed);

// --- configuration ----------------------------------------------------------------
// Plain-text key = value file; '#' starts a comment; unknown keys are errors.

struct RunConfig {
  // paths / modes
  std::string manifest;
  std::string features_mode = "stub";  // "stub" or "dir"
  std::string features_dir;
  std::string stats;  // corpus stats file (generate)
  std::string cache_dir;
  std::string codes_dir;
  std::string vqvae_checkpoint;
  std::string snail_checkpoint;
  std::string resume_from;
  std::string generated_manifest;
  std::string reference_manifest;
  std::string reference_split;  // "" = all records
  std::string fad_backend = "spectral-stats";

  // audio extents
  int source_rate = 22050;
  int model_rate = 24000;
  double clip_seconds = 4.0;
  int fft_size = 1024;
  int hop = 320;
  int mel_rows = 129;
  int feature_rows = 1023;
  double amp_floor = 1e-5;
  int invert_iterations = 32;

  // masking augmentation
  int mask_time_max = 24;
  int mask_freq_max = 12;
  int masks_per_kind = 2;

  // vqvae
  int codebook_size = 1024;
  int channels = 128;
  int residual_blocks = 2;
  bool parallel_block = true;
  double beta = 0.25;
  double class_weight = 0.01;
  double vqvae_lr = 3e-3;
  int vqvae_batch = 16;
  int64_t vqvae_steps = 0;  // 0 -> vqvae_epochs * steps_per_epoch
  int vqvae_epochs = 800;

  // autoregressive prior
  int snail_channels = 128;
  int snail_res_blocks = 2;
  int snail_groups = 4;
  int snail_kernel = 3;
  int snail_zen_kernel = 0;  // 0 -> zen_stride
  int snail_heads = 1;
  int zen_stride = 4;
  int snail_batch = 8;
  double snail_base_lr = 1e-5;
  double snail_max_lr = 1e-4;  // 10x base by default
  int64_t snail_cycle_steps = 500;
  int64_t snail_steps = 0;  // 0 -> snail_epochs * steps_per_epoch
  int snail_epochs = 265;
  double max_grad_norm = 1.0;

  // run control
  int64_t log_interval = 10;
  int64_t checkpoint_interval = 0;  // 0 -> final checkpoint only
  int generate_per_class = 32;
  double temperature = 1.0;
  int val_per_class = 35;

  static RunConfig load(const std::string& path);

  // Hash over the model/data-shape/training keys (paths and run control
  // excluded); checkpoints carry it and refuse to resume across a change.
  uint64_t model_hash() const;

  int frames() const {
    return static_cast<int>(
        static_cast<int64_t>(clip_seconds * model_rate) / hop);
  }
  int cembed_rows() const { return mel_rows + feature_rows; }

  audio::MelParams mel_params() const;
  vqvae::VqVaeConfig vqvae_config() const;
  snail::SnailConfig snail_config() const;
};

// --- corpus statistics --------------------------------------------------------------

struct CorpusStats {
  double mel_mean = 0.0, mel_std = 1.0;
  double feat_mean = 0.0, feat_std = 1.0;

  void save(const std::string& path) const;
  static CorpusStats load(const std::string& path);
};

// --- learning-rate schedule -----------------------------------------------------------

struct CyclicLr {
  double base_lr = 1e-5;
  double max_lr = 1e-4;
  int64_t cycle_steps = 500;  // half period; triangular wave

  double at(int64_t step) const;
};

// --- checkpoints ------------------------------------------------------------------------
// magic "ZFCK", little-endian: u32 version, u64 config hash, u64 step,
// u32 tensor count, then per tensor: u32 name length, name bytes, u32 ndims,
// u32 dims..., f32 data.

struct Checkpoint {
  uint32_t version = 1;
  uint64_t config_hash = 0;
  uint64_t step = 0;
  std::vector<NamedTensor> tensors;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
  const Tensor* find(const std::string& name) const;
};

// Copies checkpoint values into the given parameters (matched by name,
// shape-checked). Missing names or shape changes are versioning errors.
void load_parameters(std::vector<NamedTensor>& params, const Checkpoint& ck);

// --- stages -------------------------------------------------------------------------------

void prepare(const RunConfig& cfg, uint64_t seed, const std::string& out_dir);

struct TrainSummary {
  int64_t steps = 0;
  double final_loss = 0.0;
  double final_latent_diff = 0.0;
  std::string checkpoint_path;
};

TrainSummary train_vqvae(const RunConfig& cfg, uint64_t seed,
                         const std::string& out_dir);
void extract_codes(const RunConfig& cfg, const std::string& out_dir);
TrainSummary train_snail(const RunConfig& cfg, uint64_t seed,
                         const std::string& out_dir);
void generate(const RunConfig& cfg, int per_class, uint64_t seed,
              const std::string& out_dir);
fad::FadReport evaluate(const RunConfig& cfg, const std::string& out_dir);

// Derived per-clip paths.
std::string clip_stem(const std::string& path);
std::string cache_path(const std::string& dir, const std::string& stem);
std::string feature_path(const std::string& dir, const std::string& stem);
std::string code_path(const std::string& dir, const std::string& stem);

int cli_main(int argc, const char* const* argv);

}  // namespace zenfoley::pipeline
