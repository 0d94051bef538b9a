#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zenfoley/common.hpp"
#include "zenfoley/optim.hpp"
#include "zenfoley/tensor.hpp"

namespace zenfoley::vqvae {

struct VqVaeConfig {
  int in_rows = 1152;
  int in_cols = 300;
  int channels = 128;        // latent channel count
  int residual_blocks = 2;   // gated residual units per stack
  bool parallel_block = true;
  int codebook_size = 1024;
  float beta = 0.25f;
  float class_weight = 0.01f;  // 0 disables the conditioning loss term
  int num_classes = kNumCategories;
  // Total per-axis downsampling; realized as two stride-2 stages.
  int downsample = 4;

  int latent_rows() const { return in_rows / downsample; }
  int latent_cols() const { return in_cols / downsample; }
};

struct Codebook {
  Tensor codewords;           // (K, D)
  std::vector<float> usage;   // assignments since the last reset
};

struct QuantizeResult {
  std::vector<int32_t> indices;  // (B, rows, cols) row-major
  int64_t batch = 0, rows = 0, cols = 0;
  Tensor z_q;     // codeword values arranged (B,D,rows,cols); grads reach the codebook
  Tensor z_q_st;  // straight-through copy: value == z_q, gradient -> z_e
};

// Nearest codeword per grid cell (Euclidean, double accumulation), ties broken
// toward the lowest index. Updates the codebook usage counters.
QuantizeResult quantize(const Tensor& z_e, Codebook& cb);

struct VqLoss {
  double recon_mse = 0.0;
  double codebook_term = 0.0;
  double commitment_term = 0.0;  // beta-scaled
  double class_ce = 0.0;
  double total = 0.0;
};

struct LossTensors {
  Tensor total;  // differentiable
  VqLoss values;
};

// recon term: MSE(recon, x); codebook term: MSE(sg[z_e], z_q);
// commitment: beta * MSE(z_e, sg[z_q]); class term: class_weight * CE.
LossTensors vqvae_loss(const Tensor& x, const Tensor& recon, const Tensor& z_e,
                       const QuantizeResult& q, const Tensor& logits,
                       const std::vector<int32_t>& labels, float beta,
                       float class_weight);

class VqVae {
 public:
  VqVae(const VqVaeConfig& cfg, uint64_t seed);

  const VqVaeConfig& config() const { return cfg_; }

  Tensor encode(const Tensor& x);           // (B,1,H,W) -> (B,D,H/4,W/4)
  Tensor decode(const Tensor& z);           // (B,D,h,w) -> (B,1,H,W)
  Tensor classify_latent(const Tensor& z_e);  // (B,num_classes)

  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }

  // Re-seeds every unused codeword (usage == 0) to a random cell of z_e and
  // resets the counters. Returns the number of codewords replaced.
  int reseed_dead_codewords(const Tensor& z_e, SplitMix64& rng);

  std::vector<NamedTensor> parameters();  // stable order and names

 private:
  struct GatedUnit {
    Tensor wa, ba, wb, bb, wo, bo;
  };
  struct Stack {
    std::vector<GatedUnit> units;
  };

  Tensor run_stacks(const Tensor& h, Stack& main, Stack& parallel);

  VqVaeConfig cfg_;
  Tensor enc_w1_, enc_b1_, enc_w2_, enc_b2_;
  Stack enc_main_, enc_par_;
  Stack dec_main_, dec_par_;
  Tensor dec_w1_, dec_b1_, dec_w2_, dec_b2_;
  Tensor cls_w_, cls_b_;
  Codebook codebook_;
};

struct TrainStepResult {
  VqLoss loss;
  double grad_norm = 0.0;
  double latent_diff = 0.0;  // mean ||z_e - z_q||^2 per element
};

// One optimizer step on the full loss. Throws TrainingError (listing the batch
// clip ids) when the loss goes non-finite.
TrainStepResult train_step_vqvae(VqVae& model,
                                 std::vector<NamedTensor>& params,
                                 const Tensor& batch,
                                 const std::vector<int32_t>& labels,
                                 const std::vector<std::string>& batch_ids,
                                 optim::Adam& opt, double lr);

// Mean squared distance between pre- and post-quantization encodings.
double latent_diff(const Tensor& z_e, const Tensor& z_q);

// --- code-grid cache files ---------------------------------------------------
// magic "CODE", little-endian u32: version=1, rows, cols, label, then
// rows*cols u32 codebook indices, row-major.

struct CodeGrid {
  uint32_t rows = 0, cols = 0;
  uint32_t label = 0;
  std::vector<int32_t> codes;
};

void save_code_grid(const std::string& path, const CodeGrid& g);
CodeGrid load_code_grid(const std::string& path);

// Encode + quantize one clip tensor (1,1,H,W) into its code grid.
CodeGrid codes_for(VqVae& model, const Tensor& x_single, int label);

}  // namespace zenfoley::vqvae
