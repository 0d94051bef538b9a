#include "zenfoley/snail.hpp"

#include <cmath>

namespace zenfoley::snail {

namespace {

Tensor init_param(Shape s, int64_t fan_in, SplitMix64& rng) {
  float bound = static_cast<float>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  return Tensor::random_uniform(std::move(s), rng, -bound, bound, true);
}

}  // namespace

std::vector<int32_t> raster_order(const std::vector<int32_t>& grid, int rows,
                                  int cols) {
  if (static_cast<size_t>(rows) * static_cast<size_t>(cols) != grid.size())
    throw DimensionError("raster_order: grid size != rows*cols");
  return grid;  // storage is already row-major with columns innermost
}

std::vector<int32_t> raster_inverse(const std::vector<int32_t>& seq, int rows,
                                    int cols) {
  if (static_cast<size_t>(rows) * static_cast<size_t>(cols) != seq.size())
    throw DimensionError("raster_inverse: sequence size != rows*cols");
  return seq;
}

Tensor causal_conv(const Tensor& x, const Tensor& w, const Tensor& bias,
                   int stride) {
  return conv1d(x, w, bias, stride, static_cast<int>(w.dim(2)) - 1);
}

Tensor causal_transposed_conv(const Tensor& x, const Tensor& w,
                              const Tensor& bias, int stride) {
  return conv1d_transpose(x, w, bias, stride);
}

// --- zen attention ---------------------------------------------------------------

ZenAttention::ZenAttention(int channels, int heads, int stride, int kernel,
                           SplitMix64& rng)
    : channels_(channels), heads_(heads), stride_(stride), kernel_(kernel) {
  if (channels % heads != 0)
    throw ConfigError("zen attention: channels " + std::to_string(channels) +
                      " not divisible by heads " + std::to_string(heads));
  if (stride < 1 || kernel < 1)
    throw ConfigError("zen attention: stride and kernel must be >= 1");
  int64_t C = channels, L = kernel;
  wq_ = init_param({C, C, L}, C * L, rng);
  bq_ = Tensor::zeros({C}, true);
  wk_ = init_param({C, C, L}, C * L, rng);
  bk_ = Tensor::zeros({C}, true);
  wv_ = init_param({C, C, L}, C * L, rng);
  bv_ = Tensor::zeros({C}, true);
  wu_ = init_param({C, C, L}, C * L, rng);
  bu_ = Tensor::zeros({C}, true);
}

Tensor ZenAttention::forward(const Tensor& x) {
  int64_t B = x.dim(0), N = x.dim(2);
  Tensor q = causal_conv(x, wq_, bq_, stride_);
  Tensor k = causal_conv(x, wk_, bk_, stride_);
  Tensor v = causal_conv(x, wv_, bv_, stride_);
  int64_t M = q.dim(2);
  int64_t dh = channels_ / heads_;

  // Mask disallowing attention to later downsampled positions. -1e9 keeps the
  // arithmetic finite while zeroing those weights after the softmax.
  std::vector<float> maskv(static_cast<size_t>(M * M), 0.0f);
  for (int64_t u = 0; u < M; ++u)
    for (int64_t t = u + 1; t < M; ++t)
      maskv[static_cast<size_t>(u * M + t)] = -1e9f;
  Tensor mask = Tensor::from_values({M, M}, std::move(maskv));

  Tensor attn_out;
  for (int h = 0; h < heads_; ++h) {
    Tensor qh = slice(q, 1, h * dh, (h + 1) * dh);  // (B,dh,M)
    Tensor kh = slice(k, 1, h * dh, (h + 1) * dh);
    Tensor vh = slice(v, 1, h * dh, (h + 1) * dh);
    Tensor scores = scale(bmm(transpose_last2(qh), kh),
                          1.0 / std::sqrt(static_cast<double>(dh)));
    scores = add(scores, mask);
    Tensor attn = softmax_lastdim(scores);  // (B,M,M)
    attention_entries_ += static_cast<uint64_t>(B) * static_cast<uint64_t>(M) *
                          static_cast<uint64_t>(M);
    Tensor oh = transpose_last2(bmm(attn, transpose_last2(vh)));  // (B,dh,M)
    attn_out = attn_out.defined() ? concat_axis(attn_out, oh, 1) : oh;
  }

  Tensor up = causal_transposed_conv(attn_out, wu_, bu_, stride_);
  if (up.dim(2) != N) up = slice(up, 2, 0, N);
  return add(x, up);
}

void ZenAttention::collect(std::vector<NamedTensor>& out,
                           const std::string& prefix) {
  out.push_back({prefix + ".wq", wq_});
  out.push_back({prefix + ".bq", bq_});
  out.push_back({prefix + ".wk", wk_});
  out.push_back({prefix + ".bk", bk_});
  out.push_back({prefix + ".wv", wv_});
  out.push_back({prefix + ".bv", bv_});
  out.push_back({prefix + ".wu", wu_});
  out.push_back({prefix + ".bu", bu_});
}

// --- model ------------------------------------------------------------------------

SnailModel::SnailModel(const SnailConfig& cfg, uint64_t seed) : cfg_(cfg) {
  if (cfg.vocab <= 0 || cfg.channels <= 0 || cfg.groups < 1 ||
      cfg.res_blocks < 0 || cfg.kernel_len < 1)
    throw ConfigError("snail: invalid model extents");
  if (cfg.zen_stride < 1) throw ConfigError("snail: zen_stride must be >= 1");

  SplitMix64 rng(mix_seed(seed, fnv1a64("snail")));
  int64_t C = cfg.channels, K = cfg.vocab, L = cfg.kernel_len;
  token_table_ = init_param({K + 1, C}, C, rng);
  cat_table_ = init_param({cfg.num_classes, C}, C, rng);

  int zk = cfg.zen_kernel > 0 ? cfg.zen_kernel : cfg.zen_stride;
  for (int g = 0; g < cfg.groups; ++g) {
    std::vector<GatedBlock> blocks;
    for (int i = 0; i < cfg.res_blocks; ++i) {
      GatedBlock b;
      b.wa = init_param({C, C, L}, C * L, rng);
      b.ba = Tensor::zeros({C}, true);
      b.wb = init_param({C, C, L}, C * L, rng);
      b.bb = Tensor::zeros({C}, true);
      b.wo = init_param({C, C, 1}, C, rng);
      b.bo = Tensor::zeros({C}, true);
      blocks.push_back(std::move(b));
    }
    res_.push_back(std::move(blocks));
    attn_.emplace_back(cfg.channels, cfg.heads, cfg.zen_stride, zk, rng);
  }
  head_w_ = init_param({K, C, 1}, C, rng);
  head_b_ = Tensor::zeros({K}, true);
}

Tensor SnailModel::logits(const std::vector<int32_t>& tokens, int64_t batch,
                          const std::vector<int32_t>& labels) {
  int64_t N = cfg_.seq_len();
  if (static_cast<int64_t>(tokens.size()) != batch * N)
    throw DimensionError("snail logits: token count != batch * seq_len");
  if (static_cast<int64_t>(labels.size()) != batch)
    throw DimensionError("snail logits: label count != batch");
  for (int32_t t : tokens)
    if (t < 0 || t >= cfg_.vocab)
      throw ContractError("snail logits: token " + std::to_string(t) +
                          " out of range [0," + std::to_string(cfg_.vocab) + ")");
  for (int32_t l : labels)
    if (l < 0 || l >= cfg_.num_classes)
      throw ContractError("snail logits: label out of range");

  // Shift right behind the start token (id = vocab).
  std::vector<int32_t> shifted(tokens.size());
  for (int64_t b = 0; b < batch; ++b) {
    shifted[static_cast<size_t>(b * N)] = cfg_.vocab;
    for (int64_t i = 1; i < N; ++i)
      shifted[static_cast<size_t>(b * N + i)] = tokens[static_cast<size_t>(b * N + i - 1)];
  }

  Tensor emb = embed_lookup(shifted, {batch, N}, token_table_);  // (B,N,C)
  Tensor x = transpose_last2(emb);                               // (B,C,N)
  Tensor cat = transpose_last2(embed_lookup(labels, {batch, 1}, cat_table_));  // (B,C,1)

  for (size_t g = 0; g < attn_.size(); ++g) {
    for (auto& blk : res_[g]) {
      Tensor h = add(x, cat);
      Tensor gate = mul(tanh(causal_conv(h, blk.wa, blk.ba, 1)),
                        sigmoid(causal_conv(h, blk.wb, blk.bb, 1)));
      x = add(x, conv1d(gate, blk.wo, blk.bo, 1, 0));
    }
    x = attn_[g].forward(add(x, cat));
  }
  Tensor out = conv1d(elu(x), head_w_, head_b_, 1, 0);  // (B,K,N)
  return transpose_last2(out);                          // (B,N,K)
}

Tensor SnailModel::nll(const std::vector<int32_t>& tokens, int64_t batch,
                       const std::vector<int32_t>& labels) {
  Tensor lg = logits(tokens, batch, labels);
  int64_t N = cfg_.seq_len();
  Tensor flat = reshape(lg, {batch * N, static_cast<int64_t>(cfg_.vocab)});
  return cross_entropy_rows(flat, tokens);
}

std::vector<int32_t> SnailModel::sample(int label, double temperature,
                                        uint64_t seed) {
  if (temperature <= 0.0)
    throw ContractError("sample: temperature must be > 0");
  if (label < 0 || label >= cfg_.num_classes)
    throw ContractError("sample: label out of range");
  int64_t N = cfg_.seq_len();
  std::vector<int32_t> tokens(static_cast<size_t>(N), 0);
  std::vector<int32_t> labels = {static_cast<int32_t>(label)};
  SplitMix64 rng(seed);
  for (int64_t i = 0; i < N; ++i) {
    Tensor lg = logits(tokens, 1, labels);  // (1,N,K)
    const float* row = lg.values().data() + i * cfg_.vocab;
    // Softmax with temperature, in double, then CDF inversion.
    double m = row[0];
    for (int k = 1; k < cfg_.vocab; ++k)
      m = std::max(m, static_cast<double>(row[k]));
    std::vector<double> p(static_cast<size_t>(cfg_.vocab));
    double z = 0.0;
    for (int k = 0; k < cfg_.vocab; ++k) {
      p[static_cast<size_t>(k)] = std::exp((row[k] - m) / temperature);
      z += p[static_cast<size_t>(k)];
    }
    double u = rng.next_unit() * z;
    double c = 0.0;
    int32_t pick = cfg_.vocab - 1;
    for (int k = 0; k < cfg_.vocab; ++k) {
      c += p[static_cast<size_t>(k)];
      if (u < c) {
        pick = k;
        break;
      }
    }
    tokens[static_cast<size_t>(i)] = pick;
  }
  return tokens;
}

std::vector<NamedTensor> SnailModel::parameters() {
  std::vector<NamedTensor> out;
  out.push_back({"tok", token_table_});
  out.push_back({"cat", cat_table_});
  for (size_t g = 0; g < attn_.size(); ++g) {
    for (size_t i = 0; i < res_[g].size(); ++i) {
      auto& b = res_[g][i];
      std::string base = "g" + std::to_string(g) + ".res" + std::to_string(i);
      out.push_back({base + ".wa", b.wa});
      out.push_back({base + ".ba", b.ba});
      out.push_back({base + ".wb", b.wb});
      out.push_back({base + ".bb", b.bb});
      out.push_back({base + ".wo", b.wo});
      out.push_back({base + ".bo", b.bo});
    }
    attn_[g].collect(out, "g" + std::to_string(g) + ".attn");
  }
  out.push_back({"head.w", head_w_});
  out.push_back({"head.b", head_b_});
  return out;
}

uint64_t SnailModel::attention_entries() const {
  uint64_t total = 0;
  for (const auto& a : attn_) total += a.attention_entries();
  return total;
}

void SnailModel::reset_attention_entries() {
  for (auto& a : attn_) a.reset_attention_entries();
}

SnailStepResult train_step_snail(SnailModel& model,
                                 std::vector<NamedTensor>& params,
                                 const std::vector<int32_t>& tokens,
                                 int64_t batch,
                                 const std::vector<int32_t>& labels,
                                 optim::Adam& opt, double lr, double max_norm) {
  Graph g;
  Tensor loss = model.nll(tokens, batch, labels);
  SnailStepResult res;
  res.nll = loss.item();
  if (!std::isfinite(res.nll))
    throw TrainingError("non-finite snail loss at optimizer step " +
                        std::to_string(opt.step_count() + 1));
  GradientMap grads = g.backward(loss);
  res.grad_norm = opt.step(params, grads, lr, max_norm);
  return res;
}

}  // namespace zenfoley::snail
