// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "support/deskcfg.hpp"
#include "support/fd.hpp"
#include "support/testutil.hpp"
#include "zenfoley/audio.hpp"
#include "zenfoley/fad.hpp"
#include "zenfoley/features.hpp"
#include "zenfoley/pipeline.hpp"
#include "zenfoley/snail.hpp"
#include "zenfoley/vqvae.hpp"

using namespace zenfoley;
using zftest::check_gradient;
using zftest::output_sensitivity;
using zftest::TempDir;

namespace {

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& what) {
  if (!cond) throw CheckFailure(what);
}

Tensor randu(Shape s, uint64_t seed, float lo = -1.0f, float hi = 1.0f,
             bool rg = false) {
  SplitMix64 rng(seed);
  return Tensor::random_uniform(std::move(s), rng, lo, hi, rg);
}

Tensor weighted_sum(const Tensor& t, uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor w = Tensor::random_uniform(t.shape(), rng, 0.25f, 1.75f);
  return sum(mul(t, w));
}

std::vector<double> log_column(const std::string& path, const std::string& key) {
  std::ifstream in(path);
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    size_t at = line.find(key + "=");
    if (at == std::string::npos) continue;
    out.push_back(std::stod(line.substr(at + key.size() + 1)));
  }
  return out;
}

double head_mean(const std::vector<double>& v, size_t n) {
  double acc = 0;
  for (size_t i = 0; i < n; ++i) acc += v[i];
  return acc / static_cast<double>(n);
}

double tail_mean(const std::vector<double>& v, size_t n) {
  double acc = 0;
  for (size_t i = v.size() - n; i < v.size(); ++i) acc += v[i];
  return acc / static_cast<double>(n);
}

// --- criterion 1: shape fidelity at the full-scale configuration --------------

void criterion_shapes() {
  audio::Waveform src = zftest::make_sine(440.0, 4.0, 22050);
  require(src.samples.size() == 88200, "source clip is not 4 s at 22050 Hz");
  audio::Waveform w = audio::resample(src, 24000);
  require(w.samples.size() == 96000,
          "resampled audio has " + std::to_string(w.samples.size()) +
              " samples, want 96000");

  audio::MelParams mp;  // 24 kHz, fft 1024, hop 320, 129 rows
  audio::MelSpec mel = audio::melspectrogram(w, mp);
  require(mel.rows == 129 && mel.frames == 300,
          "mel is " + std::to_string(mel.rows) + "x" + std::to_string(mel.frames));

  audio::ExternalFeatures feats = audio::stub_features(1, 1023, 300);
  require(feats.rows == 1023 && feats.cols == 300, "features are not 1023x300");

  audio::CEmbed ce = audio::assemble_cembed(mel, feats);
  require(ce.rows() == 1152 && ce.frames == 300, "cembed is not 1152x300");

  // Full-scale spatial extents; the latent channel count is unconstrained, so
  // the dry run keeps it small.
  vqvae::VqVaeConfig vc;
  vc.in_rows = 1152;
  vc.in_cols = 300;
  vc.channels = 8;
  vc.residual_blocks = 1;
  vc.codebook_size = 16;
  vqvae::VqVae model(vc, 1);
  Tensor x = Tensor::from_values({1, 1, 1152, 300},
                                 std::vector<float>(ce.values.begin(), ce.values.end()));
  Tensor z = model.encode(x);
  require(z.dim(2) == 288 && z.dim(3) == 75,
          "latent grid is " + std::to_string(z.dim(2)) + "x" +
              std::to_string(z.dim(3)) + ", want 288x75");

  audio::Waveform out = audio::invert_mel(mel, 1);
  require(out.samples.size() == 96000,
          "inverted audio has " + std::to_string(out.samples.size()) +
              " samples, want 96000");
}

// --- criterion 2: gradient suite ----------------------------------------------

void criterion_gradients() {
  const double tol = 1e-3;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    // primitives, step 1e-3
    {
      Tensor a = randu({3, 4}, seed * 11 + 1, -1, 1, true);
      Tensor b = randu({4, 2}, seed * 11 + 2, -1, 1, true);
      auto f = [&]() { return weighted_sum(matmul(a, b), seed); };
      require(check_gradient(a, f).max_rel_err < tol, "matmul lhs gradient");
      require(check_gradient(b, f).max_rel_err < tol, "matmul rhs gradient");
    }
    {
      Tensor x = randu({2, 3}, seed * 13, -1, 1, true);
      auto chk = [&](const char* name, std::function<Tensor()> f) {
        if (check_gradient(x, f).max_rel_err >= tol)
          throw CheckFailure(std::string(name) + " gradient off");
      };
      chk("add", [&]() { return weighted_sum(add(x, randu({3}, seed)), seed); });
      chk("sub", [&]() { return weighted_sum(sub(x, randu({3}, seed)), seed); });
      chk("mul", [&]() { return weighted_sum(mul(x, randu({3}, seed)), seed); });
      chk("elu", [&]() { return weighted_sum(elu(x), seed); });
      chk("sigmoid", [&]() { return weighted_sum(sigmoid(x), seed); });
      chk("tanh", [&]() { return weighted_sum(tanh(x), seed); });
      chk("exp", [&]() { return weighted_sum(exp(x), seed); });
      chk("softmax", [&]() { return weighted_sum(softmax_lastdim(x), seed); });
      chk("sum", [&]() { return sum(x); });
      chk("mean", [&]() { return mean(x); });
      chk("sum_axis", [&]() { return weighted_sum(sum_axis(x, 0), seed); });
      chk("mean_axis", [&]() { return weighted_sum(mean_axis(x, 1), seed); });
      chk("scale", [&]() { return weighted_sum(scale(x, -2.5), seed); });
      chk("reshape", [&]() { return weighted_sum(reshape(x, {6}), seed); });
      chk("slice", [&]() { return weighted_sum(slice(x, 1, 1, 3), seed); });
      chk("transpose", [&]() { return weighted_sum(transpose_last2(x), seed); });
      chk("concat", [&]() {
        return weighted_sum(concat_axis0(x, randu({1, 3}, seed)), seed);
      });
      // straight_through defines its gradient as a copy (its forward value
      // ignores the gradient path by construction), so the check is
      // semantic: the received gradient equals the upstream weights exactly.
      {
        Graph g;
        Tensor st = straight_through(randu({2, 3}, seed), x);
        Tensor loss = weighted_sum(st, seed);
        Tensor gx = g.backward(loss).at(x);
        SplitMix64 wrng(seed);
        Tensor w = Tensor::random_uniform({2, 3}, wrng, 0.25f, 1.75f);
        for (int64_t i = 0; i < gx.size(); ++i)
          require(std::fabs(gx.values()[static_cast<size_t>(i)] -
                            w.values()[static_cast<size_t>(i)]) < 1e-6,
                  "straight_through gradient is not the upstream copy");
      }
    }
    {
      Tensor x = randu({2, 3}, seed * 17, 0.2f, 1.8f, true);
      auto f = [&]() { return weighted_sum(log(x), seed); };
      require(check_gradient(x, f).max_rel_err < tol, "log gradient");
    }
    {
      Tensor t = randu({5, 3}, seed * 19, -1, 1, true);
      std::vector<int32_t> idx = {4, 0, 2, 0};
      auto f = [&]() { return weighted_sum(embed_lookup(idx, {4}, t), seed); };
      require(check_gradient(t, f).max_rel_err < tol, "embed_lookup gradient");
    }
    {
      Tensor lg = randu({3, 5}, seed * 23, -1, 1, true);
      std::vector<int32_t> tg = {1, 4, 0};
      auto f = [&]() { return cross_entropy_rows(lg, tg); };
      require(check_gradient(lg, f).max_rel_err < tol, "cross entropy gradient");
    }
    {
      Tensor a = randu({2, 2, 3}, seed * 29, -1, 1, true);
      Tensor b = randu({2, 3, 2}, seed * 29 + 1, -1, 1, true);
      auto f = [&]() { return weighted_sum(bmm(a, b), seed); };
      require(check_gradient(a, f).max_rel_err < tol, "bmm lhs gradient");
      require(check_gradient(b, f).max_rel_err < tol, "bmm rhs gradient");
    }
    {
      Tensor x = randu({1, 2, 6}, seed * 31, -1, 1, true);
      Tensor w = randu({2, 2, 3}, seed * 31 + 1, -1, 1, true);
      Tensor b = randu({2}, seed * 31 + 2, -1, 1, true);
      auto f = [&]() { return weighted_sum(conv1d(x, w, b, 2, 2), seed); };
      require(check_gradient(x, f).max_rel_err < tol, "conv1d x gradient");
      require(check_gradient(w, f).max_rel_err < tol, "conv1d w gradient");
      auto ft = [&]() { return weighted_sum(conv1d_transpose(x, w, b, 2), seed); };
      require(check_gradient(x, ft).max_rel_err < tol, "conv1d_transpose x gradient");
      require(check_gradient(w, ft).max_rel_err < tol, "conv1d_transpose w gradient");
    }
    {
      Tensor x = randu({1, 1, 6, 6}, seed * 37, -1, 1, true);
      Tensor w = randu({2, 1, 4, 4}, seed * 37 + 1, -1, 1, true);
      Tensor b = randu({2}, seed * 37 + 2, -1, 1, true);
      auto f = [&]() { return weighted_sum(conv2d(x, w, b, 2, 1), seed); };
      require(check_gradient(x, f).max_rel_err < tol, "conv2d x gradient");
      require(check_gradient(w, f).max_rel_err < tol, "conv2d w gradient");
      Tensor xt = randu({1, 2, 3, 3}, seed * 41, -1, 1, true);
      Tensor wt = randu({2, 1, 4, 4}, seed * 41 + 1, -1, 1, true);
      Tensor bt = randu({1}, seed * 41 + 2, -1, 1, true);
      auto g = [&]() { return weighted_sum(conv2d_transpose(xt, wt, bt, 2, 1), seed); };
      require(check_gradient(xt, g).max_rel_err < tol, "conv2d_transpose x gradient");
      require(check_gradient(wt, g).max_rel_err < tol, "conv2d_transpose w gradient");
    }

    // composite blocks, step 5e-3 (float32 round-off grows with chain depth)
    {
      vqvae::VqVaeConfig vc;
      vc.in_rows = 16;
      vc.in_cols = 16;
      vc.channels = 4;
      vc.residual_blocks = 1;
      vc.codebook_size = 8;
      vqvae::VqVae model(vc, seed);
      Tensor x = randu({1, 1, 16, 16}, seed * 43, -1, 1, true);
      auto fe = [&]() { return weighted_sum(model.encode(x), seed); };
      require(check_gradient(x, fe, 7e-3).max_rel_err < tol, "encoder gradient");

      Tensor z = randu({1, 4, 4, 4}, seed * 47, -1, 1, true);
      Tensor target = randu({1, 1, 16, 16}, seed * 47 + 1);
      auto fd = [&]() {
        Tensor d = sub(model.decode(z), target);
        return mean(mul(d, d));
      };
      require(check_gradient(z, fd, 7e-3).max_rel_err < tol, "decoder gradient");
    }
    {
      SplitMix64 rng(seed * 53);
      snail::ZenAttention block(4, 1, 4, 4, rng);
      Tensor x = randu({1, 4, 8}, seed * 53 + 1, -1, 1, true);
      auto f = [&]() { return weighted_sum(block.forward(x), seed); };
      require(check_gradient(x, f, 7e-3).max_rel_err < tol,
              "zen attention gradient");
    }
    {
      snail::SnailConfig sc;
      sc.grid_rows = 2;
      sc.grid_cols = 6;
      sc.vocab = 6;
      sc.channels = 4;
      sc.res_blocks = 1;
      sc.groups = 1;
      sc.zen_stride = 2;
      snail::SnailModel model(sc, 200 + seed);
      auto params = model.parameters();
      for (auto& p : params)
        if (p.name == "g0.attn.wq" || p.name == "g0.attn.wk")
          for (auto& v : p.t.values_mut()) v *= 6.0f;
      std::vector<int32_t> tokens = {0, 3, 5, 1, 2, 4, 1, 0, 5, 2, 3, 4};
      auto f = [&]() { return model.nll(tokens, 1, {3}); };
      for (auto& p : params) {
        auto r = check_gradient(p.t, f, 7e-3);
        require(zftest::fd_agrees(r),
                "snail step gradient for " + p.name + " (rel " +
                    std::to_string(r.max_rel_err) + ", abs " +
                    std::to_string(r.max_abs_err) + ")");
      }
    }
  }
}

// --- criterion 3: causality suite -----------------------------------------------

void criterion_causality() {
  const double tol = 1e-7;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    for (int s : {1, 2, 4}) {
      int n = 8, l = 3, m = (n + s - 1) / s;
      Tensor x = randu({1, 1, n}, 900 + seed, -1, 1, true);
      Tensor w = randu({1, 1, l}, 910 + seed);
      auto f = [&]() { return snail::causal_conv(x, w, Tensor(), s); };
      for (int p = 0; p < n; ++p) {
        auto sens = output_sensitivity(x, static_cast<size_t>(p), f);
        for (int u = 0; u < m; ++u)
          if (p > u * s)
            require(std::fabs(sens[static_cast<size_t>(u)]) < tol,
                    "causal_conv leaks future input");
      }
      Tensor xm = randu({1, 1, 4}, 920 + seed, -1, 1, true);
      auto ft = [&]() { return snail::causal_transposed_conv(xm, w, Tensor(), s); };
      for (int u = 0; u < 4; ++u) {
        auto sens = output_sensitivity(xm, static_cast<size_t>(u), ft);
        for (int t = 0; t < 4 * s; ++t)
          if (u > t / s)
            require(std::fabs(sens[static_cast<size_t>(t)]) < tol,
                    "causal_transposed_conv leaks future input");
      }
    }
    for (int s : {1, 4}) {
      SplitMix64 rng(930 + seed + static_cast<uint64_t>(s));
      snail::ZenAttention block(4, 1, s, s, rng);
      Tensor x = randu({1, 4, 8}, 940 + seed, -1, 1, true);
      auto f = [&]() { return block.forward(x); };
      for (int tp = 0; tp < 8; ++tp)
        for (int c = 0; c < 4; ++c) {
          auto sens = output_sensitivity(x, static_cast<size_t>(c * 8 + tp), f);
          for (int t = 0; t < 8; ++t)
            for (int co = 0; co < 4; ++co)
              if (tp > t)
                require(std::fabs(sens[static_cast<size_t>(co * 8 + t)]) < tol,
                        "zen attention leaks future input");
        }
    }
    for (int s : {1, 4}) {
      snail::SnailConfig sc;
      sc.grid_rows = 2;
      sc.grid_cols = 2;
      sc.vocab = 8;
      sc.channels = 4;
      sc.res_blocks = 1;
      sc.groups = 1;
      sc.zen_stride = s;
      snail::SnailModel model(sc, 100 + seed);
      std::vector<int32_t> tokens = {0, 1, 2, 3};  // distinct: rows are probes
      Tensor* table = nullptr;
      auto params = model.parameters();
      for (auto& p : params)
        if (p.name == "tok") table = &p.t;
      auto f = [&]() { return model.logits(tokens, 1, {1}); };
      for (int j = 0; j < 4; ++j)
        for (int c = 0; c < 4; ++c) {
          auto sens = output_sensitivity(
              *table, static_cast<size_t>(tokens[static_cast<size_t>(j)] * 4 + c), f);
          for (int i = 0; i <= j; ++i)
            for (int k = 0; k < 8; ++k)
              require(std::fabs(sens[static_cast<size_t>(i * 8 + k)]) < tol,
                      "snail logits leak future tokens");
        }
    }
  }
}

// --- criterion 4: loss decomposition and stop-gradient routing -------------------

void criterion_loss_decomposition() {
  vqvae::VqVaeConfig vc;
  vc.in_rows = 16;
  vc.in_cols = 16;
  vc.channels = 8;
  vc.residual_blocks = 1;
  vc.codebook_size = 8;
  vqvae::VqVae model(vc, 21);

  Tensor x = randu({1, 1, 16, 16}, 200);
  Tensor z_e = randu({1, 8, 4, 4}, 201, -1, 1, true);
  vqvae::QuantizeResult q = vqvae::quantize(z_e, model.codebook());
  Tensor recon = randu({1, 1, 16, 16}, 202);
  Tensor lg = randu({1, 7}, 203);
  vqvae::LossTensors lt =
      vqvae::vqvae_loss(x, recon, z_e, q, lg, {4}, 0.25f, 0.01f);

  double recon_ref = 0, code_ref = 0, commit_ref = 0;
  for (int64_t i = 0; i < x.size(); ++i) {
    double d = static_cast<double>(recon.values()[static_cast<size_t>(i)]) -
               x.values()[static_cast<size_t>(i)];
    recon_ref += d * d;
  }
  recon_ref /= static_cast<double>(x.size());
  for (int64_t i = 0; i < z_e.size(); ++i) {
    double d = static_cast<double>(z_e.values()[static_cast<size_t>(i)]) -
               q.z_q.values()[static_cast<size_t>(i)];
    code_ref += d * d;
  }
  code_ref /= static_cast<double>(z_e.size());
  commit_ref = 0.25 * code_ref;
  const float* lv = lg.values().data();
  double mx = lv[0];
  for (int i = 1; i < 7; ++i) mx = std::max(mx, static_cast<double>(lv[i]));
  double lse = 0;
  for (int i = 0; i < 7; ++i) lse += std::exp(lv[i] - mx);
  double ce_ref = mx + std::log(lse) - lv[4];
  double total_ref = recon_ref + code_ref + commit_ref + 0.01 * ce_ref;
  require(std::fabs(lt.values.total - total_ref) < 1e-6,
          "total differs from recomputed term sum by " +
              std::to_string(std::fabs(lt.values.total - total_ref)));

  auto max_abs = [](const Tensor& t) {
    double m = 0;
    for (float v : t.values()) m = std::max(m, std::fabs(static_cast<double>(v)));
    return m;
  };

  // routing: the codebook term moves only e
  Tensor e = model.codebook().codewords;
  {
    Graph g;
    vqvae::QuantizeResult q2 = vqvae::quantize(z_e, model.codebook());
    Tensor d = sub(stop_gradient(z_e), q2.z_q);
    Tensor term = mean(mul(d, d));
    GradientMap gm = g.backward(term);
    require(gm.contains(e) && max_abs(gm.at(e)) > 0,
            "codebook term must reach the codebook");
    require(!gm.contains(z_e) || max_abs(gm.at(z_e)) == 0.0,
            "codebook term must not reach z_e");
  }
  auto f_code = [&]() {
    vqvae::QuantizeResult q2 = vqvae::quantize(z_e, model.codebook());
    Tensor d = sub(stop_gradient(z_e), q2.z_q);
    return mean(mul(d, d));
  };
  require(check_gradient(e, f_code).max_rel_err < 1e-3,
          "codebook-term gradient on e fails finite differences");

  // routing: the commitment term moves only z_e
  {
    Graph g;
    vqvae::QuantizeResult q2 = vqvae::quantize(z_e, model.codebook());
    Tensor d = sub(z_e, stop_gradient(q2.z_q));
    Tensor term = mean(mul(d, d));
    GradientMap gm = g.backward(term);
    require(gm.contains(z_e) && max_abs(gm.at(z_e)) > 0,
            "commitment term must reach z_e");
    require(!gm.contains(e) || max_abs(gm.at(e)) == 0.0,
            "commitment term must not reach the codebook");
  }
  auto f_commit = [&]() {
    vqvae::QuantizeResult q2 = vqvae::quantize(z_e, model.codebook());
    Tensor d = sub(z_e, stop_gradient(q2.z_q));
    return mean(mul(d, d));
  };
  require(check_gradient(z_e, f_commit).max_rel_err < 1e-3,
          "commitment-term gradient on z_e fails finite differences");
}

// --- criterion 5: quantizer vs exhaustive scan ------------------------------------

void criterion_quantizer() {
  SplitMix64 rng(5005);
  int K = 24, D = 4;
  Tensor cbw = Tensor::random_uniform({K, D}, rng, -1, 1);
  {
    auto v = cbw.values_mut();
    for (int j = 0; j < D; ++j) {
      v[static_cast<size_t>(7 * D + j)] = v[static_cast<size_t>(3 * D + j)];
      v[static_cast<size_t>(19 * D + j)] = v[static_cast<size_t>(11 * D + j)];
    }
  }
  vqvae::Codebook cb;
  cb.codewords = cbw;
  cb.usage.assign(static_cast<size_t>(K), 0.0f);

  Tensor z = randu({1, 4, 25, 40}, 5006);  // 1000 cells
  vqvae::QuantizeResult q = vqvae::quantize(z, cb);
  const float* zv = z.values().data();
  const float* cw = cbw.values().data();
  int agree = 0;
  for (int r = 0; r < 25; ++r)
    for (int c = 0; c < 40; ++c) {
      int best = -1;
      double best_d = 0;
      for (int k = 0; k < K; ++k) {
        double d = 0;
        for (int j = 0; j < D; ++j) {
          double diff = static_cast<double>(zv[(j * 25 + r) * 40 + c]) - cw[k * D + j];
          d += diff * diff;
        }
        if (best < 0 || d < best_d) {
          best = k;
          best_d = d;
        }
      }
      if (q.indices[static_cast<size_t>(r * 40 + c)] == best) ++agree;
    }
  require(agree == 1000, "quantizer agreed on only " + std::to_string(agree) +
                             "/1000 cells");

  // the duplicate pairs force the tie rule: the lower index must win
  Tensor tie = Tensor::from_values(
      {1, 4, 1, 1}, {cw[3 * D], cw[3 * D + 1], cw[3 * D + 2], cw[3 * D + 3]});
  vqvae::QuantizeResult qt = vqvae::quantize(tie, cb);
  require(qt.indices[0] == 3, "tie did not resolve to the lowest index");
}

// --- criterion 6: autoregressive normalization -------------------------------------

void criterion_normalization() {
  for (int s : {1, 4}) {
    snail::SnailConfig sc;
    sc.grid_rows = 2;
    sc.grid_cols = 2;
    sc.vocab = 3;
    sc.channels = 4;
    sc.res_blocks = 1;
    sc.groups = 1;
    sc.zen_stride = s;
    snail::SnailModel model(sc, 23 + static_cast<uint64_t>(s));
    double total = 0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 3; ++c)
          for (int d = 0; d < 3; ++d) {
            Tensor nll = model.nll({a, b, c, d}, 1, {2});
            total += std::exp(-4.0 * static_cast<double>(nll.item()));
          }
    require(total >= 0.9999 && total <= 1.0001,
            "sequence probabilities sum to " + std::to_string(total));
  }
}

// --- criterion 7: zen attention cost accounting --------------------------------------

void criterion_zen_cost() {
  std::vector<int32_t> tokens(32);
  for (size_t i = 0; i < tokens.size(); ++i)
    tokens[i] = static_cast<int32_t>(i % 8);
  auto entries_for = [&](int stride) {
    snail::SnailConfig sc;
    sc.grid_rows = 4;
    sc.grid_cols = 8;  // N = 32, divisible by 4
    sc.vocab = 8;
    sc.channels = 4;
    sc.res_blocks = 1;
    sc.groups = 1;
    sc.zen_stride = stride;
    snail::SnailModel model(sc, 3);
    model.logits(tokens, 1, {0});
    return model.attention_entries();
  };
  uint64_t e4 = entries_for(4), e1 = entries_for(1);
  require(e4 == 8 * 8, "S=4 stored " + std::to_string(e4) + " entries");
  require(e1 == 32 * 32, "S=1 stored " + std::to_string(e1) + " entries");
  require(e1 == 16 * e4, "cost ratio is not exactly 16");
}

// --- criterion 8: analytic FAD cases ---------------------------------------------------

void criterion_fad() {
  fad::FrechetStats a;
  a.mu = Eigen::VectorXd::Zero(2);
  a.sigma = Eigen::MatrixXd::Identity(2, 2);
  require(fad::frechet_distance(a, a) < 1e-9, "identical stats give nonzero FAD");

  fad::FrechetStats u, v;
  u.mu = Eigen::VectorXd::Zero(1);
  u.sigma = Eigen::MatrixXd::Identity(1, 1);
  v.mu = Eigen::VectorXd::Constant(1, 3.0);
  v.sigma = Eigen::MatrixXd::Identity(1, 1);
  require(std::fabs(fad::frechet_distance(u, v) - 9.0) < 1e-6,
          "1-D case is not 9.0");

  fad::FrechetStats p, q;
  p.mu = Eigen::VectorXd::Zero(2);
  q.mu = Eigen::VectorXd::Zero(2);
  p.sigma = Eigen::Vector2d(1, 4).asDiagonal();
  q.sigma = Eigen::Vector2d(4, 1).asDiagonal();
  require(std::fabs(fad::frechet_distance(p, q) - 2.0) < 1e-6,
          "diagonal case is not 2.0");

  SplitMix64 rng(88);
  fad::EmbeddingSet s1, s2;
  s1.rows.resize(12, 3);
  s2.rows.resize(15, 3);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 3; ++j) s1.rows(i, j) = rng.next_sym();
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < 3; ++j) s2.rows(i, j) = rng.next_sym() + 0.3;
  fad::FrechetStats g1 = fad::gaussian_stats(s1), g2 = fad::gaussian_stats(s2);
  require(std::fabs(fad::frechet_distance(g1, g2) -
                    fad::frechet_distance(g2, g1)) < 1e-8,
          "FAD is not symmetric to 1e-8");
}

// --- criterion 9: desk-scale learning trends --------------------------------------------

void criterion_desk_trends() {
  TempDir tmp("zenfoley_acc9");
  // 64 clips over the 7 categories (9 each, one extra in category 0)
  pipeline::Manifest m;
  for (int c = 0; c < 7; ++c) {
    int n = (c == 0) ? 10 : 9;
    for (int i = 0; i < n; ++i) {
      auto w = zftest::synth_clip(c, mix_seed(4242, static_cast<uint64_t>(c * 100 + i)),
                                  1.0, 4096);
      std::string path = tmp.file("clip_c" + std::to_string(c) + "_" +
                                  std::to_string(i) + ".wav");
      audio::write_wav(path, w);
      m.records.push_back({path, c, "train"});
    }
  }
  require(m.records.size() == 64, "corpus is not 64 clips");
  std::string manifest = tmp.file("manifest.tsv");
  m.save(manifest);

  std::string prep = tmp.file("prep");
  std::string cfg_path = tmp.file("run.cfg");
  // Desk row split favors the mel band: the stub feature rows are i.i.d.
  // noise, which bounds how far their reconstruction error can fall.
  zftest::write_file(cfg_path,
                     zftest::desk_config_text(manifest, prep + "/cache", tmp.file("codes"),
                                              "vqvae_steps = 200\n"
                                              "snail_steps = 300\n"
                                              "vqvae_batch = 16\n"
                                              "channels = 24\n"
                                              "mel_rows = 24\n"
                                              "feature_rows = 8\n"
                                              "log_interval = 1\n"));
  pipeline::RunConfig cfg = pipeline::RunConfig::load(cfg_path);
  pipeline::prepare(cfg, 7, prep);

  // 200-step VQ-VAE run: reconstruction MSE falls by more than half.
  std::string vq_out = tmp.file("vq");
  pipeline::train_vqvae(cfg, 7, vq_out);
  auto recon = log_column(vq_out + "/vqvae_log.txt", "recon");
  require(recon.size() == 200, "expected 200 vqvae log lines");
  double start = recon.front(), late = tail_mean(recon, 10);
  require(late < 0.5 * start,
          "recon MSE fell only from " + std::to_string(start) + " to " +
              std::to_string(late));

  // latent diff trend: 50-step window means do not increase
  auto latent = log_column(vq_out + "/vqvae_log.txt", "latent_diff");
  {
    std::vector<double> windows;
    for (size_t w = 0; w + 50 <= latent.size(); w += 50) {
      double acc = 0;
      for (size_t i = w; i < w + 50; ++i) acc += latent[i];
      windows.push_back(acc / 50.0);
    }
    for (size_t i = 1; i < windows.size(); ++i)
      require(windows[i] <= windows[i - 1],
              "latent diff window " + std::to_string(i) + " rose from " +
                  std::to_string(windows[i - 1]) + " to " +
                  std::to_string(windows[i]));
  }

  // conditioned vs unconditioned: latent diff is lower with the class term.
  double cond_latent = tail_mean(latent, 20);
  {
    std::string cfg2_path = tmp.file("run_uncond.cfg");
    zftest::write_file(cfg2_path,
                       zftest::desk_config_text(manifest, prep + "/cache", tmp.file("codes"),
                                                "vqvae_steps = 200\n"
                                                "vqvae_batch = 16\n"
                                                "channels = 24\n"
                                                "mel_rows = 24\n"
                                                "feature_rows = 8\n"
                                                "log_interval = 1\n"
                                                "class_weight = 0\n"));
    pipeline::RunConfig cfg2 = pipeline::RunConfig::load(cfg2_path);
    std::string vq2_out = tmp.file("vq_uncond");
    pipeline::train_vqvae(cfg2, 7, vq2_out);
    auto latent2 = log_column(vq2_out + "/vqvae_log.txt", "latent_diff");
    double uncond_latent = tail_mean(latent2, 20);
    require(cond_latent < uncond_latent,
            "conditioned latent diff " + std::to_string(cond_latent) +
                " is not below unconditioned " + std::to_string(uncond_latent));
  }

  // 300-step prior run on extracted codes: NLL falls by more than 30%.
  cfg.vqvae_checkpoint = vq_out + "/vqvae_final.zfck";
  pipeline::extract_codes(cfg, tmp.file("codes"));
  std::string sn_out = tmp.file("sn");
  pipeline::train_snail(cfg, 7, sn_out);
  auto nll = log_column(sn_out + "/snail_log.txt", "nll");
  require(nll.size() == 300, "expected 300 snail log lines");
  double nll_early = head_mean(nll, 10), nll_late = tail_mean(nll, 10);
  require(nll_late < 0.7 * nll_early,
          "NLL fell only from " + std::to_string(nll_early) + " to " +
              std::to_string(nll_late));

  // single-grid overfit: greedy decoding reproduces the grid exactly.
  {
    snail::SnailConfig sc;
    sc.grid_rows = 4;
    sc.grid_cols = 8;
    sc.vocab = 16;
    sc.channels = 16;
    sc.res_blocks = 1;
    sc.groups = 1;
    sc.zen_stride = 4;
    snail::SnailModel model(sc, 77);
    auto params = model.parameters();
    optim::Adam opt;
    SplitMix64 grng(4321);
    std::vector<int32_t> grid(32);
    for (auto& g : grid) g = static_cast<int32_t>(grng.next_below(16));
    for (int s = 0; s < 300; ++s)
      snail::train_step_snail(model, params, grid, 1, {3}, opt, 2e-3, 1.0);
    auto decoded = model.sample(3, 1e-6, 1);
    require(decoded == grid, "greedy decoding did not reproduce the grid");
  }
}

// --- criterion 10: determinism and persistence ---------------------------------------------

void criterion_determinism() {
  TempDir tmp("zenfoley_acc10");
  std::string manifest = zftest::make_desk_corpus(tmp, 7, 4, 4646);
  {
    pipeline::Manifest m = pipeline::Manifest::load(manifest);
    pipeline::Manifest s = pipeline::stratified_split(m, 2, 5);
    s.save(manifest);
  }
  std::string extra =
      "vqvae_steps = 20\n"
      "snail_steps = 20\n"
      "log_interval = 1\n"
      "checkpoint_interval = 10\n"
      "generate_per_class = 2\n"
      "reference_split = val\n";

  auto run_pipeline = [&](const std::string& root) {
    std::filesystem::create_directories(root);
    std::string cfg_path = root + "/run.cfg";
    zftest::write_file(cfg_path, zftest::desk_config_text(
                                     manifest, root + "/prep/cache",
                                     root + "/codes", extra));
    pipeline::RunConfig cfg = pipeline::RunConfig::load(cfg_path);
    pipeline::prepare(cfg, 3, root + "/prep");
    pipeline::TrainSummary vq = pipeline::train_vqvae(cfg, 3, root + "/vq");
    cfg.vqvae_checkpoint = vq.checkpoint_path;
    pipeline::extract_codes(cfg, root + "/codes");
    pipeline::TrainSummary sn = pipeline::train_snail(cfg, 3, root + "/sn");
    cfg.snail_checkpoint = sn.checkpoint_path;
    cfg.stats = root + "/prep/corpus_stats.txt";
    pipeline::generate(cfg, 2, 3, root + "/gen");
    cfg.generated_manifest = root + "/gen/generated_manifest.tsv";
    cfg.reference_manifest = manifest;
    fad::FadReport report = pipeline::evaluate(cfg, root + "/eval");
    return std::make_tuple(vq.final_loss, sn.final_loss, report.records());
  };

  auto [vq1, sn1, rep1] = run_pipeline(tmp.file("runA"));
  auto [vq2, sn2, rep2] = run_pipeline(tmp.file("runB"));
  require(vq1 == vq2, "vqvae final losses differ across identical runs");
  require(sn1 == sn2, "snail final losses differ across identical runs");
  require(rep1 == rep2, "FAD reports differ across identical runs");

  // caches byte-identical
  pipeline::Manifest m = pipeline::Manifest::load(manifest);
  for (const auto& rec : m.records) {
    std::string stem = pipeline::clip_stem(rec.path);
    std::ifstream f1(pipeline::cache_path(tmp.file("runA") + "/prep/cache", stem),
                     std::ios::binary);
    std::ifstream f2(pipeline::cache_path(tmp.file("runB") + "/prep/cache", stem),
                     std::ios::binary);
    std::ostringstream b1, b2;
    b1 << f1.rdbuf();
    b2 << f2.rdbuf();
    require(b1.str() == b2.str() && !b1.str().empty(),
            "caches differ for " + stem);
  }
  // generated wavs byte-identical
  for (int c = 0; c < 7; ++c) {
    std::ifstream f1(tmp.file("runA") + "/gen/gen_" + std::to_string(c) + "_0.wav",
                     std::ios::binary);
    std::ifstream f2(tmp.file("runB") + "/gen/gen_" + std::to_string(c) + "_0.wav",
                     std::ios::binary);
    std::ostringstream b1, b2;
    b1 << f1.rdbuf();
    b2 << f2.rdbuf();
    require(b1.str() == b2.str() && !b1.str().empty(), "generated wavs differ");
  }

  // checkpoint save/load preserves probe outputs bit-exactly
  {
    std::string cfg_path = tmp.file("runA") + "/run.cfg";
    pipeline::RunConfig cfg = pipeline::RunConfig::load(cfg_path);
    vqvae::VqVae model(cfg.vqvae_config(), 3);
    auto params = model.parameters();
    pipeline::Checkpoint ck =
        pipeline::Checkpoint::load(tmp.file("runA") + "/vq/vqvae_final.zfck");
    pipeline::load_parameters(params, ck);
    Tensor probe = randu({2, 1, 32, 64}, 31337);
    Tensor out1 = model.decode(model.encode(probe));

    vqvae::VqVae fresh(cfg.vqvae_config(), 999);  // different init
    auto fresh_params = fresh.parameters();
    pipeline::load_parameters(fresh_params, ck);
    Tensor out2 = fresh.decode(fresh.encode(probe));
    require(std::memcmp(out1.values().data(), out2.values().data(),
                        static_cast<size_t>(out1.size()) * 4) == 0,
            "probe outputs differ after checkpoint round trip");
  }

  // resume from step 10 matches the uninterrupted 20-step run
  {
    std::string root = tmp.file("runA");
    std::string cfg_path = root + "/run.cfg";
    pipeline::RunConfig cfg = pipeline::RunConfig::load(cfg_path);
    cfg.resume_from = root + "/vq/vqvae_step10.zfck";
    pipeline::TrainSummary resumed =
        pipeline::train_vqvae(cfg, 3, tmp.file("resume"));
    require(resumed.final_loss == vq1,
            "resumed run final loss differs from the uninterrupted run");
    pipeline::Checkpoint full =
        pipeline::Checkpoint::load(root + "/vq/vqvae_final.zfck");
    pipeline::Checkpoint res =
        pipeline::Checkpoint::load(tmp.file("resume") + "/vqvae_final.zfck");
    require(full.tensors.size() == res.tensors.size(), "checkpoint sizes differ");
    for (size_t i = 0; i < full.tensors.size(); ++i)
      require(std::memcmp(full.tensors[i].t.values().data(),
                          res.tensors[i].t.values().data(),
                          static_cast<size_t>(full.tensors[i].t.size()) * 4) == 0,
              "resumed tensor " + full.tensors[i].name + " differs");
  }
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<void()> run;
  };
  std::vector<Criterion> criteria = {
      {1, "shape fidelity at full scale", criterion_shapes},
      {2, "gradient suite vs central finite differences", criterion_gradients},
      {3, "causality suite", criterion_causality},
      {4, "loss decomposition and stop-gradient routing", criterion_loss_decomposition},
      {5, "quantizer vs exhaustive nearest neighbor", criterion_quantizer},
      {6, "autoregressive normalization (exhaustive)", criterion_normalization},
      {7, "zen attention cost accounting", criterion_zen_cost},
      {8, "FAD analytic cases", criterion_fad},
      {9, "desk-scale learning trends", criterion_desk_trends},
      {10, "determinism and persistence", criterion_determinism},
  };

  int failures = 0;
  for (auto& c : criteria) {
    auto start = std::chrono::steady_clock::now();
    try {
      c.run();
      auto secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
      std::printf("[PASS] criterion %2d: %s (%.1fs)\n", c.id, c.name, secs);
    } catch (const std::exception& e) {
      ++failures;
      std::printf("[FAIL] criterion %2d: %s -- %s\n", c.id, c.name, e.what());
    }
    std::fflush(stdout);
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
