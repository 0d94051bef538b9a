#include "zenfoley/vqvae.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace zenfoley::vqvae {

namespace {

Tensor init_conv(Shape s, int64_t fan_in, SplitMix64& rng) {
  float bound = static_cast<float>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  return Tensor::random_uniform(std::move(s), rng, -bound, bound, true);
}

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

QuantizeResult quantize(const Tensor& z_e, Codebook& cb) {
  if (!cb.codewords.defined() || cb.codewords.dim(0) == 0)
    throw ContractError("quantize: empty codebook");
  if (z_e.rank() != 4)
    throw DimensionError("quantize: z_e must be (B,D,rows,cols), got " +
                         shape_str(z_e.shape()));
  int64_t K = cb.codewords.dim(0), D = cb.codewords.dim(1);
  if (z_e.dim(1) != D)
    throw DimensionError("quantize: channel count " + std::to_string(z_e.dim(1)) +
                         " != codeword dim " + std::to_string(D));
  int64_t B = z_e.dim(0), R = z_e.dim(2), C = z_e.dim(3);

  QuantizeResult q;
  q.batch = B;
  q.rows = R;
  q.cols = C;
  q.indices.resize(static_cast<size_t>(B * R * C));
  const float* zv = z_e.values().data();
  const float* cw = cb.codewords.values().data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t r = 0; r < R; ++r)
      for (int64_t c = 0; c < C; ++c) {
        double best = 0.0;
        int32_t best_k = 0;
        for (int64_t k = 0; k < K; ++k) {
          double d = 0.0;
          for (int64_t j = 0; j < D; ++j) {
            double diff = static_cast<double>(zv[((b * D + j) * R + r) * C + c]) -
                          cw[k * D + j];
            d += diff * diff;
          }
          if (k == 0 || d < best) {
            best = d;
            best_k = static_cast<int32_t>(k);
          }
        }
        q.indices[static_cast<size_t>((b * R + r) * C + c)] = best_k;
        cb.usage[static_cast<size_t>(best_k)] += 1.0f;
      }

  q.z_q = codebook_gather(q.indices, B, R, C, cb.codewords);
  q.z_q_st = straight_through(q.z_q, z_e);
  return q;
}

double latent_diff(const Tensor& z_e, const Tensor& z_q) {
  if (z_e.size() != z_q.size())
    throw DimensionError("latent_diff: size mismatch");
  const float* a = z_e.values().data();
  const float* b = z_q.values().data();
  double acc = 0.0;
  for (int64_t i = 0; i < z_e.size(); ++i) {
    double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(z_e.size());
}

LossTensors vqvae_loss(const Tensor& x, const Tensor& recon, const Tensor& z_e,
                       const QuantizeResult& q, const Tensor& logits,
                       const std::vector<int32_t>& labels, float beta,
                       float class_weight) {
  if (beta < 0.0f) throw ConfigError("vqvae_loss: beta must be >= 0");
  if (x.shape() != recon.shape())
    throw DimensionError("vqvae_loss: recon shape " + shape_str(recon.shape()) +
                         " != input shape " + shape_str(x.shape()));

  Tensor rdiff = sub(recon, x);
  Tensor recon_mse = mean(mul(rdiff, rdiff));

  Tensor cdiff = sub(stop_gradient(z_e), q.z_q);
  Tensor codebook_term = mean(mul(cdiff, cdiff));

  Tensor mdiff = sub(z_e, stop_gradient(q.z_q));
  Tensor commit_raw = mean(mul(mdiff, mdiff));

  Tensor class_ce = cross_entropy_rows(logits, labels);

  Tensor total = add(add(recon_mse, codebook_term),
                     scale(commit_raw, static_cast<double>(beta)));
  if (class_weight != 0.0f)
    total = add(total, scale(class_ce, static_cast<double>(class_weight)));

  LossTensors out;
  out.total = total;
  out.values.recon_mse = recon_mse.item();
  out.values.codebook_term = codebook_term.item();
  out.values.commitment_term = static_cast<double>(beta) * commit_raw.item();
  out.values.class_ce = class_ce.item();
  out.values.total = total.item();
  return out;
}

// --- model ----------------------------------------------------------------------

VqVae::VqVae(const VqVaeConfig& cfg, uint64_t seed) : cfg_(cfg) {
  if (cfg.downsample != 4)
    throw ConfigError("vqvae: downsample must be 4 (two stride-2 stages)");
  if (cfg.in_rows % 4 != 0 || cfg.in_cols % 4 != 0)
    throw ConfigError("vqvae: input extents " + std::to_string(cfg.in_rows) +
                      "x" + std::to_string(cfg.in_cols) +
                      " not divisible by the downsample factor 4");
  if (cfg.channels <= 0 || cfg.codebook_size <= 0 || cfg.residual_blocks < 0)
    throw ConfigError("vqvae: channels/codebook/residual_blocks invalid");

  SplitMix64 rng(mix_seed(seed, fnv1a64("vqvae")));
  int64_t C = cfg.channels;

  enc_w1_ = init_conv({C, 1, 4, 4}, 16, rng);
  enc_b1_ = Tensor::zeros({C}, true);
  enc_w2_ = init_conv({C, C, 4, 4}, C * 16, rng);
  enc_b2_ = Tensor::zeros({C}, true);

  auto make_stack = [&](int n) {
    Stack s;
    for (int i = 0; i < n; ++i) {
      GatedUnit u;
      u.wa = init_conv({C, C, 3, 3}, C * 9, rng);
      u.ba = Tensor::zeros({C}, true);
      u.wb = init_conv({C, C, 3, 3}, C * 9, rng);
      u.bb = Tensor::zeros({C}, true);
      u.wo = init_conv({C, C, 1, 1}, C, rng);
      u.bo = Tensor::zeros({C}, true);
      s.units.push_back(std::move(u));
    }
    return s;
  };
  enc_main_ = make_stack(cfg.residual_blocks);
  enc_par_ = make_stack(cfg.parallel_block ? cfg.residual_blocks : 0);
  dec_main_ = make_stack(cfg.residual_blocks);
  dec_par_ = make_stack(cfg.parallel_block ? cfg.residual_blocks : 0);

  dec_w1_ = init_conv({C, C, 4, 4}, C * 16, rng);
  dec_b1_ = Tensor::zeros({C}, true);
  dec_w2_ = init_conv({C, 1, 4, 4}, C * 16, rng);
  dec_b2_ = Tensor::zeros({1}, true);

  cls_w_ = init_conv({C, cfg.num_classes}, C, rng);
  cls_b_ = Tensor::zeros({static_cast<int64_t>(cfg.num_classes)}, true);

  codebook_.codewords = init_conv({cfg.codebook_size, C}, C, rng);
  codebook_.usage.assign(static_cast<size_t>(cfg.codebook_size), 0.0f);
}

namespace {
Tensor gated_unit(const Tensor& h, const Tensor& wa, const Tensor& ba,
                  const Tensor& wb, const Tensor& bb, const Tensor& wo,
                  const Tensor& bo) {
  Tensor gate = mul(tanh(conv2d(h, wa, ba, 1, 1)), sigmoid(conv2d(h, wb, bb, 1, 1)));
  return add(h, conv2d(gate, wo, bo, 1, 0));
}
}  // namespace

Tensor VqVae::run_stacks(const Tensor& h, Stack& main, Stack& parallel) {
  Tensor out = h;
  for (auto& u : main.units)
    out = gated_unit(out, u.wa, u.ba, u.wb, u.bb, u.wo, u.bo);
  if (!parallel.units.empty()) {
    Tensor par = h;
    for (auto& u : parallel.units)
      par = gated_unit(par, u.wa, u.ba, u.wb, u.bb, u.wo, u.bo);
    out = add(out, par);
  }
  return out;
}

Tensor VqVae::encode(const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg_.in_rows ||
      x.dim(3) != cfg_.in_cols)
    throw DimensionError("encode: expected (B,1," + std::to_string(cfg_.in_rows) +
                         "," + std::to_string(cfg_.in_cols) + "), got " +
                         shape_str(x.shape()));
  Tensor h = elu(conv2d(x, enc_w1_, enc_b1_, 2, 1));
  h = elu(conv2d(h, enc_w2_, enc_b2_, 2, 1));
  return run_stacks(h, enc_main_, enc_par_);
}

Tensor VqVae::decode(const Tensor& z) {
  if (z.rank() != 4 || z.dim(1) != cfg_.channels ||
      z.dim(2) != cfg_.latent_rows() || z.dim(3) != cfg_.latent_cols())
    throw DimensionError("decode: expected (B," + std::to_string(cfg_.channels) +
                         "," + std::to_string(cfg_.latent_rows()) + "," +
                         std::to_string(cfg_.latent_cols()) + "), got " +
                         shape_str(z.shape()));
  Tensor h = run_stacks(z, dec_main_, dec_par_);
  h = elu(conv2d_transpose(h, dec_w1_, dec_b1_, 2, 1));
  return conv2d_transpose(h, dec_w2_, dec_b2_, 2, 1);
}

Tensor VqVae::classify_latent(const Tensor& z_e) {
  // Channel means over the two grid axes, then a single linear map.
  Tensor pooled = mean_axis(mean_axis(z_e, 3), 2);  // (B, D)
  return add(matmul(pooled, cls_w_), cls_b_);
}

int VqVae::reseed_dead_codewords(const Tensor& z_e, SplitMix64& rng) {
  int64_t B = z_e.dim(0), D = z_e.dim(1), R = z_e.dim(2), C = z_e.dim(3);
  const float* zv = z_e.values().data();
  auto cw = codebook_.codewords.values_mut();
  int replaced = 0;
  for (int64_t k = 0; k < cfg_.codebook_size; ++k) {
    if (codebook_.usage[static_cast<size_t>(k)] != 0.0f) continue;
    uint64_t cell = rng.next_below(static_cast<uint64_t>(B * R * C));
    int64_t b = static_cast<int64_t>(cell) / (R * C);
    int64_t r = (static_cast<int64_t>(cell) / C) % R;
    int64_t c = static_cast<int64_t>(cell) % C;
    for (int64_t j = 0; j < D; ++j)
      cw[static_cast<size_t>(k * D + j)] = zv[((b * D + j) * R + r) * C + c];
    ++replaced;
  }
  for (auto& u : codebook_.usage) u = 0.0f;
  return replaced;
}

std::vector<NamedTensor> VqVae::parameters() {
  std::vector<NamedTensor> out;
  out.push_back({"enc.in1.w", enc_w1_});
  out.push_back({"enc.in1.b", enc_b1_});
  out.push_back({"enc.in2.w", enc_w2_});
  out.push_back({"enc.in2.b", enc_b2_});
  auto add_stack = [&out](const char* prefix, Stack& s) {
    for (size_t i = 0; i < s.units.size(); ++i) {
      auto& u = s.units[i];
      std::string base = std::string(prefix) + std::to_string(i);
      out.push_back({base + ".wa", u.wa});
      out.push_back({base + ".ba", u.ba});
      out.push_back({base + ".wb", u.wb});
      out.push_back({base + ".bb", u.bb});
      out.push_back({base + ".wo", u.wo});
      out.push_back({base + ".bo", u.bo});
    }
  };
  add_stack("enc.res.", enc_main_);
  add_stack("enc.par.", enc_par_);
  add_stack("dec.res.", dec_main_);
  add_stack("dec.par.", dec_par_);
  out.push_back({"dec.up1.w", dec_w1_});
  out.push_back({"dec.up1.b", dec_b1_});
  out.push_back({"dec.up2.w", dec_w2_});
  out.push_back({"dec.up2.b", dec_b2_});
  out.push_back({"cls.w", cls_w_});
  out.push_back({"cls.b", cls_b_});
  out.push_back({"codebook", codebook_.codewords});
  return out;
}

TrainStepResult train_step_vqvae(VqVae& model,
                                 std::vector<NamedTensor>& params,
                                 const Tensor& batch,
                                 const std::vector<int32_t>& labels,
                                 const std::vector<std::string>& batch_ids,
                                 optim::Adam& opt, double lr) {
  Graph g;
  Tensor z_e = model.encode(batch);
  QuantizeResult q = quantize(z_e, model.codebook());
  Tensor recon = model.decode(q.z_q_st);
  Tensor logits = model.classify_latent(z_e);
  LossTensors lt =
      vqvae_loss(batch, recon, z_e, q, logits, labels,
                 model.config().beta, model.config().class_weight);
  if (!std::isfinite(lt.values.total)) {
    std::string ids;
    for (const auto& id : batch_ids) ids += (ids.empty() ? "" : ",") + id;
    throw TrainingError("non-finite vqvae loss on batch [" + ids + "]");
  }
  TrainStepResult res;
  res.loss = lt.values;
  res.latent_diff = latent_diff(z_e, q.z_q);
  GradientMap grads = g.backward(lt.total);
  res.grad_norm = opt.step(params, grads, lr);
  return res;
}

// --- code grids -------------------------------------------------------------------

void save_code_grid(const std::string& path, const CodeGrid& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write code file: " + path);
  out.write("CODE", 4);
  write_u32le(out, 1);
  write_u32le(out, g.rows);
  write_u32le(out, g.cols);
  write_u32le(out, g.label);
  for (int32_t c : g.codes) write_u32le(out, static_cast<uint32_t>(c));
  if (!out) throw IoError("short write to code file: " + path);
}

CodeGrid load_code_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open code file: " + path);
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "CODE", 4) != 0)
    throw FormatError("code file magic mismatch in " + path);
  uint32_t version = read_u32le(in);
  if (version != 1)
    throw VersioningError("code file version " + std::to_string(version) +
                          " unsupported in " + path);
  CodeGrid g;
  g.rows = read_u32le(in);
  g.cols = read_u32le(in);
  g.label = read_u32le(in);
  if (!in || g.rows == 0 || g.cols == 0)
    throw FormatError("code file degenerate header in " + path);
  size_t n = static_cast<size_t>(g.rows) * g.cols;
  g.codes.resize(n);
  for (size_t i = 0; i < n; ++i) {
    g.codes[i] = static_cast<int32_t>(read_u32le(in));
    if (!in) throw FormatError("code file payload truncated in " + path);
  }
  return g;
}

CodeGrid codes_for(VqVae& model, const Tensor& x_single, int label) {
  Tensor z_e = model.encode(x_single);
  QuantizeResult q = quantize(z_e, model.codebook());
  CodeGrid g;
  g.rows = static_cast<uint32_t>(q.rows);
  g.cols = static_cast<uint32_t>(q.cols);
  g.label = static_cast<uint32_t>(label);
  g.codes = std::move(q.indices);
  return g;
}

}  // namespace zenfoley::vqvae
