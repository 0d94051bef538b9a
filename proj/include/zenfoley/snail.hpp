#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zenfoley/common.hpp"
#include "zenfoley/optim.hpp"
#include "zenfoley/tensor.hpp"
#include "zenfoley/vqvae.hpp"

namespace zenfoley::snail {

// Row-major scan with the time axis (columns) fastest; cell (r,c) maps to
// position r*cols + c.
std::vector<int32_t> raster_order(const std::vector<int32_t>& grid, int rows,
                                  int cols);
std::vector<int32_t> raster_inverse(const std::vector<int32_t>& seq, int rows,
                                    int cols);

// Causal 1-D convolution: left pad of L-1 zeros, so out[u] depends only on
// in[p] with p <= u*stride; output length ceil(N/stride).
Tensor causal_conv(const Tensor& x, const Tensor& w, const Tensor& bias,
                   int stride);

// Causal transposed convolution: out[t] = sum over u with 0 <= t-u*S < L of
// w[t-u*S]*in[u]; out[t] depends only on in[u] for u <= floor(t/S); output
// length N*S.
Tensor causal_transposed_conv(const Tensor& x, const Tensor& w,
                              const Tensor& bias, int stride);

struct SnailConfig {
  int grid_rows = 8;
  int grid_cols = 16;
  int vocab = 1024;  // codebook size K; token K is the start token
  int channels = 64;
  int res_blocks = 2;  // gated causal-conv blocks per group
  int groups = 1;      // each group ends with one attention block
  int kernel_len = 3;  // causal res conv kernel length
  int zen_kernel = 0;  // k/q/v and upsample kernel length; 0 -> zen_stride
  int heads = 1;
  int zen_stride = 4;  // attention downsampling factor S
  int num_classes = kNumCategories;

  int seq_len() const { return grid_rows * grid_cols; }
};

// Attention over a sequence downsampled by S: keys, queries and values come
// from strided causal convolutions (length M = ceil(N/S)), masked scaled
// dot-product attention runs on the M-length sequence, and a causal
// transposed convolution restores length N. The block's residual carries the
// full-resolution stream.
class ZenAttention {
 public:
  ZenAttention(int channels, int heads, int stride, int kernel, SplitMix64& rng);

  Tensor forward(const Tensor& x);  // (B,C,N) -> (B,C,N)

  uint64_t attention_entries() const { return attention_entries_; }
  void reset_attention_entries() { attention_entries_ = 0; }

  void collect(std::vector<NamedTensor>& out, const std::string& prefix);

 private:
  int channels_, heads_, stride_, kernel_;
  Tensor wq_, bq_, wk_, bk_, wv_, bv_, wu_, bu_;
  uint64_t attention_entries_ = 0;
};

class SnailModel {
 public:
  SnailModel(const SnailConfig& cfg, uint64_t seed);

  const SnailConfig& config() const { return cfg_; }

  // tokens: (B, N) grids in raster order; one label per sequence. The input
  // is shifted right behind a dedicated start token, so logits at position i
  // depend only on tokens before i (and the label). Output (B, N, K).
  Tensor logits(const std::vector<int32_t>& tokens, int64_t batch,
                const std::vector<int32_t>& labels);

  // Mean over batch and positions of -log p(token).
  Tensor nll(const std::vector<int32_t>& tokens, int64_t batch,
             const std::vector<int32_t>& labels);

  // Ancestral sampling in raster order; logits divided by temperature;
  // deterministic for a given seed. temperature must be > 0.
  std::vector<int32_t> sample(int label, double temperature, uint64_t seed);

  std::vector<NamedTensor> parameters();

  uint64_t attention_entries() const;
  void reset_attention_entries();

 private:
  struct GatedBlock {
    Tensor wa, ba, wb, bb, wo, bo;
  };

  SnailConfig cfg_;
  Tensor token_table_;  // (K+1, C)
  Tensor cat_table_;    // (num_classes, C)
  std::vector<std::vector<GatedBlock>> res_;  // per group
  std::vector<ZenAttention> attn_;            // one per group
  Tensor head_w_, head_b_;
};

struct SnailStepResult {
  double nll = 0.0;
  double grad_norm = 0.0;  // post-clip
};

SnailStepResult train_step_snail(SnailModel& model,
                                 std::vector<NamedTensor>& params,
                                 const std::vector<int32_t>& tokens,
                                 int64_t batch,
                                 const std::vector<int32_t>& labels,
                                 optim::Adam& opt, double lr, double max_norm);

}  // namespace zenfoley::snail
