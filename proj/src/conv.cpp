#include <cmath>

#include "zenfoley/tensor.hpp"

namespace zenfoley {

namespace {

Tensor make_result(Shape s, std::vector<float> v, bool rg) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(s);
  n->values = std::move(v);
  n->requires_grad = rg;
  n->leaf = false;
  return Tensor(std::move(n));
}

bool want_grad(std::initializer_list<const Tensor*> ins) {
  if (!Graph::recording()) return false;
  for (const Tensor* t : ins)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

void record(std::initializer_list<std::shared_ptr<TensorNode>> nodes,
            std::function<void()> fn) {
  Graph* g = Graph::current();
  for (const auto& n : nodes)
    if (n) g->touch(n);
  g->add_entry(std::move(fn));
}

void flush_grad(TensorNode& n, const std::vector<double>& acc) {
  float* g = n.grad.data();
  for (size_t i = 0; i < acc.size(); ++i) g[i] += static_cast<float>(acc[i]);
}

void check_bias(const Tensor& bias, int64_t cout, const char* name) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != cout)
    throw DimensionError(std::string(name) + ": bias shape " +
                         shape_str(bias.shape()) + " != (" +
                         std::to_string(cout) + ")");
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int left_pad) {
  if (x.rank() != 3 || w.rank() != 3)
    throw DimensionError("conv1d: x must be (B,Cin,N) and w (Cout,Cin,L)");
  if (x.dim(1) != w.dim(1))
    throw DimensionError("conv1d: channel mismatch, x " + shape_str(x.shape()) +
                         " vs w " + shape_str(w.shape()));
  if (stride < 1) throw ContractError("conv1d: stride must be >= 1");
  if (left_pad < 0) throw ContractError("conv1d: left_pad must be >= 0");
  int64_t B = x.dim(0), Cin = x.dim(1), N = x.dim(2);
  int64_t Cout = w.dim(0), L = w.dim(2);
  check_bias(bias, Cout, "conv1d");
  int64_t M = (N + left_pad - L) / stride + 1;
  if (M < 1) throw DimensionError("conv1d: kernel longer than padded input");

  std::vector<float> out(static_cast<size_t>(B * Cout * M));
  const float* xv = x.values().data();
  const float* wv = w.values().data();
  const float* bv = bias.defined() ? bias.values().data() : nullptr;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t u = 0; u < M; ++u) {
        double acc = bv ? static_cast<double>(bv[co]) : 0.0;
        for (int64_t ci = 0; ci < Cin; ++ci) {
          const float* xrow = xv + (b * Cin + ci) * N;
          const float* wrow = wv + (co * Cin + ci) * L;
          for (int64_t l = 0; l < L; ++l) {
            int64_t p = u * stride + l - left_pad;
            if (p >= 0 && p < N) acc += static_cast<double>(wrow[l]) * xrow[p];
          }
        }
        out[static_cast<size_t>((b * Cout + co) * M + u)] = static_cast<float>(acc);
      }

  bool rg = want_grad({&x, &w, &bias});
  Tensor res = make_result({B, Cout, M}, std::move(out), rg);
  if (rg) {
    auto xn = x.node(), wn = w.node(), on = res.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    record({xn, wn, bn, on}, [xn, wn, bn, on, B, Cin, N, Cout, L, M, stride,
                              left_pad]() {
      const float* go = on->grad.data();
      const float* xv2 = xn->values.data();
      const float* wv2 = wn->values.data();
      std::vector<double> gx, gw, gb;
      if (xn->requires_grad) gx.assign(xn->values.size(), 0.0);
      if (wn->requires_grad) gw.assign(wn->values.size(), 0.0);
      if (bn && bn->requires_grad) gb.assign(bn->values.size(), 0.0);
      for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Cout; ++co)
          for (int64_t u = 0; u < M; ++u) {
            double g = go[(b * Cout + co) * M + u];
            if (!gb.empty()) gb[static_cast<size_t>(co)] += g;
            for (int64_t ci = 0; ci < Cin; ++ci)
              for (int64_t l = 0; l < L; ++l) {
                int64_t p = u * stride + l - left_pad;
                if (p < 0 || p >= N) continue;
                if (!gx.empty())
                  gx[static_cast<size_t>((b * Cin + ci) * N + p)] +=
                      g * wv2[(co * Cin + ci) * L + l];
                if (!gw.empty())
                  gw[static_cast<size_t>((co * Cin + ci) * L + l)] +=
                      g * xv2[(b * Cin + ci) * N + p];
              }
          }
      if (!gx.empty()) flush_grad(*xn, gx);
      if (!gw.empty()) flush_grad(*wn, gw);
      if (!gb.empty()) flush_grad(*bn, gb);
    });
  }
  return res;
}

Tensor conv1d_transpose(const Tensor& x, const Tensor& w, const Tensor& bias,
                        int stride) {
  if (x.rank() != 3 || w.rank() != 3)
    throw DimensionError("conv1d_transpose: x must be (B,Cin,M) and w (Cin,Cout,L)");
  if (x.dim(1) != w.dim(0))
    throw DimensionError("conv1d_transpose: channel mismatch, x " +
                         shape_str(x.shape()) + " vs w " + shape_str(w.shape()));
  if (stride < 1) throw ContractError("conv1d_transpose: stride must be >= 1");
  int64_t B = x.dim(0), Cin = x.dim(1), M = x.dim(2);
  int64_t Cout = w.dim(1), L = w.dim(2);
  check_bias(bias, Cout, "conv1d_transpose");
  int64_t N = M * stride;

  std::vector<double> acc(static_cast<size_t>(B * Cout * N), 0.0);
  const float* xv = x.values().data();
  const float* wv = w.values().data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t ci = 0; ci < Cin; ++ci)
      for (int64_t u = 0; u < M; ++u) {
        double xval = xv[(b * Cin + ci) * M + u];
        for (int64_t co = 0; co < Cout; ++co) {
          const float* wrow = wv + (ci * Cout + co) * L;
          double* orow = acc.data() + (b * Cout + co) * N;
          for (int64_t l = 0; l < L; ++l) {
            int64_t t = u * stride + l;
            if (t < N) orow[t] += static_cast<double>(wrow[l]) * xval;
          }
        }
      }
  std::vector<float> out(acc.size());
  const float* bv = bias.defined() ? bias.values().data() : nullptr;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t t = 0; t < N; ++t) {
        double v = acc[static_cast<size_t>((b * Cout + co) * N + t)];
        if (bv) v += bv[co];
        out[static_cast<size_t>((b * Cout + co) * N + t)] = static_cast<float>(v);
      }

  bool rg = want_grad({&x, &w, &bias});
  Tensor res = make_result({B, Cout, N}, std::move(out), rg);
  if (rg) {
    auto xn = x.node(), wn = w.node(), on = res.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    record({xn, wn, bn, on}, [xn, wn, bn, on, B, Cin, M, Cout, L, N, stride]() {
      const float* go = on->grad.data();
      const float* xv2 = xn->values.data();
      const float* wv2 = wn->values.data();
      std::vector<double> gx, gw, gb;
      if (xn->requires_grad) gx.assign(xn->values.size(), 0.0);
      if (wn->requires_grad) gw.assign(wn->values.size(), 0.0);
      if (bn && bn->requires_grad) gb.assign(bn->values.size(), 0.0);
      if (!gb.empty())
        for (int64_t b = 0; b < B; ++b)
          for (int64_t co = 0; co < Cout; ++co)
            for (int64_t t = 0; t < N; ++t)
              gb[static_cast<size_t>(co)] += go[(b * Cout + co) * N + t];
      for (int64_t b = 0; b < B; ++b)
        for (int64_t ci = 0; ci < Cin; ++ci)
          for (int64_t u = 0; u < M; ++u) {
            double xval = xv2[(b * Cin + ci) * M + u];
            for (int64_t co = 0; co < Cout; ++co)
              for (int64_t l = 0; l < L; ++l) {
                int64_t t = u * stride + l;
                if (t >= N) continue;
                double g = go[(b * Cout + co) * N + t];
                if (!gx.empty())
                  gx[static_cast<size_t>((b * Cin + ci) * M + u)] +=
                      g * wv2[(ci * Cout + co) * L + l];
                if (!gw.empty())
                  gw[static_cast<size_t>((ci * Cout + co) * L + l)] += g * xval;
              }
          }
      if (!gx.empty()) flush_grad(*xn, gx);
      if (!gw.empty()) flush_grad(*wn, gw);
      if (!gb.empty()) flush_grad(*bn, gb);
    });
  }
  return res;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int pad) {
  if (x.rank() != 4 || w.rank() != 4)
    throw DimensionError("conv2d: x must be (B,Cin,H,W) and w (Cout,Cin,kh,kw)");
  if (x.dim(1) != w.dim(1))
    throw DimensionError("conv2d: channel mismatch, x " + shape_str(x.shape()) +
                         " vs w " + shape_str(w.shape()));
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  check_bias(bias, Cout, "conv2d");
  int64_t OH = (H + 2 * pad - kh) / stride + 1;
  int64_t OW = (W + 2 * pad - kw) / stride + 1;
  if (OH < 1 || OW < 1)
    throw DimensionError("conv2d: kernel larger than padded input");

  std::vector<float> out(static_cast<size_t>(B * Cout * OH * OW));
  const float* xv = x.values().data();
  const float* wv = w.values().data();
  const float* bv = bias.defined() ? bias.values().data() : nullptr;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oi = 0; oi < OH; ++oi)
        for (int64_t oj = 0; oj < OW; ++oj) {
          double acc = bv ? static_cast<double>(bv[co]) : 0.0;
          for (int64_t ci = 0; ci < Cin; ++ci) {
            const float* xpl = xv + (b * Cin + ci) * H * W;
            const float* wpl = wv + (co * Cin + ci) * kh * kw;
            for (int64_t ki = 0; ki < kh; ++ki) {
              int64_t ii = oi * stride - pad + ki;
              if (ii < 0 || ii >= H) continue;
              for (int64_t kj = 0; kj < kw; ++kj) {
                int64_t jj = oj * stride - pad + kj;
                if (jj < 0 || jj >= W) continue;
                acc += static_cast<double>(wpl[ki * kw + kj]) * xpl[ii * W + jj];
              }
            }
          }
          out[static_cast<size_t>(((b * Cout + co) * OH + oi) * OW + oj)] =
              static_cast<float>(acc);
        }

  bool rg = want_grad({&x, &w, &bias});
  Tensor res = make_result({B, Cout, OH, OW}, std::move(out), rg);
  if (rg) {
    auto xn = x.node(), wn = w.node(), on = res.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    record({xn, wn, bn, on}, [xn, wn, bn, on, B, Cin, H, W, Cout, kh, kw, OH,
                              OW, stride, pad]() {
      const float* go = on->grad.data();
      const float* xv2 = xn->values.data();
      const float* wv2 = wn->values.data();
      std::vector<double> gx, gw, gb;
      if (xn->requires_grad) gx.assign(xn->values.size(), 0.0);
      if (wn->requires_grad) gw.assign(wn->values.size(), 0.0);
      if (bn && bn->requires_grad) gb.assign(bn->values.size(), 0.0);
      for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Cout; ++co)
          for (int64_t oi = 0; oi < OH; ++oi)
            for (int64_t oj = 0; oj < OW; ++oj) {
              double g = go[((b * Cout + co) * OH + oi) * OW + oj];
              if (!gb.empty()) gb[static_cast<size_t>(co)] += g;
              for (int64_t ci = 0; ci < Cin; ++ci)
                for (int64_t ki = 0; ki < kh; ++ki) {
                  int64_t ii = oi * stride - pad + ki;
                  if (ii < 0 || ii >= H) continue;
                  for (int64_t kj = 0; kj < kw; ++kj) {
                    int64_t jj = oj * stride - pad + kj;
                    if (jj < 0 || jj >= W) continue;
                    if (!gx.empty())
                      gx[static_cast<size_t>(((b * Cin + ci) * H + ii) * W + jj)] +=
                          g * wv2[((co * Cin + ci) * kh + ki) * kw + kj];
                    if (!gw.empty())
                      gw[static_cast<size_t>(((co * Cin + ci) * kh + ki) * kw + kj)] +=
                          g * xv2[((b * Cin + ci) * H + ii) * W + jj];
                  }
                }
            }
      if (!gx.empty()) flush_grad(*xn, gx);
      if (!gw.empty()) flush_grad(*wn, gw);
      if (!gb.empty()) flush_grad(*bn, gb);
    });
  }
  return res;
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& w, const Tensor& bias,
                        int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4)
    throw DimensionError(
        "conv2d_transpose: x must be (B,Cin,H,W) and w (Cin,Cout,kh,kw)");
  if (x.dim(1) != w.dim(0))
    throw DimensionError("conv2d_transpose: channel mismatch, x " +
                         shape_str(x.shape()) + " vs w " + shape_str(w.shape()));
  if (stride < 1) throw ContractError("conv2d_transpose: stride must be >= 1");
  int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t Cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  check_bias(bias, Cout, "conv2d_transpose");
  int64_t OH = (H - 1) * stride - 2 * pad + kh;
  int64_t OW = (W - 1) * stride - 2 * pad + kw;
  if (OH < 1 || OW < 1) throw DimensionError("conv2d_transpose: empty output");

  std::vector<double> acc(static_cast<size_t>(B * Cout * OH * OW), 0.0);
  const float* xv = x.values().data();
  const float* wv = w.values().data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t ci = 0; ci < Cin; ++ci)
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          double xval = xv[((b * Cin + ci) * H + i) * W + j];
          for (int64_t co = 0; co < Cout; ++co) {
            const float* wpl = wv + (ci * Cout + co) * kh * kw;
            double* opl = acc.data() + (b * Cout + co) * OH * OW;
            for (int64_t ki = 0; ki < kh; ++ki) {
              int64_t oi = i * stride - pad + ki;
              if (oi < 0 || oi >= OH) continue;
              for (int64_t kj = 0; kj < kw; ++kj) {
                int64_t oj = j * stride - pad + kj;
                if (oj < 0 || oj >= OW) continue;
                opl[oi * OW + oj] += static_cast<double>(wpl[ki * kw + kj]) * xval;
              }
            }
          }
        }
  std::vector<float> out(acc.size());
  const float* bv = bias.defined() ? bias.values().data() : nullptr;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co) {
      double badd = bv ? static_cast<double>(bv[co]) : 0.0;
      for (int64_t t = 0; t < OH * OW; ++t) {
        size_t ix = static_cast<size_t>((b * Cout + co) * OH * OW + t);
        out[ix] = static_cast<float>(acc[ix] + badd);
      }
    }

  bool rg = want_grad({&x, &w, &bias});
  Tensor res = make_result({B, Cout, OH, OW}, std::move(out), rg);
  if (rg) {
    auto xn = x.node(), wn = w.node(), on = res.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    record({xn, wn, bn, on}, [xn, wn, bn, on, B, Cin, H, W, Cout, kh, kw, OH,
                              OW, stride, pad]() {
      const float* go = on->grad.data();
      const float* xv2 = xn->values.data();
      const float* wv2 = wn->values.data();
      std::vector<double> gx, gw, gb;
      if (xn->requires_grad) gx.assign(xn->values.size(), 0.0);
      if (wn->requires_grad) gw.assign(wn->values.size(), 0.0);
      if (bn && bn->requires_grad) gb.assign(bn->values.size(), 0.0);
      if (!gb.empty())
        for (int64_t b = 0; b < B; ++b)
          for (int64_t co = 0; co < Cout; ++co)
            for (int64_t t = 0; t < OH * OW; ++t)
              gb[static_cast<size_t>(co)] += go[(b * Cout + co) * OH * OW + t];
      for (int64_t b = 0; b < B; ++b)
        for (int64_t ci = 0; ci < Cin; ++ci)
          for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j) {
              double xval = xv2[((b * Cin + ci) * H + i) * W + j];
              for (int64_t co = 0; co < Cout; ++co)
                for (int64_t ki = 0; ki < kh; ++ki) {
                  int64_t oi = i * stride - pad + ki;
                  if (oi < 0 || oi >= OH) continue;
                  for (int64_t kj = 0; kj < kw; ++kj) {
                    int64_t oj = j * stride - pad + kj;
                    if (oj < 0 || oj >= OW) continue;
                    double g = go[((b * Cout + co) * OH + oi) * OW + oj];
                    if (!gx.empty())
                      gx[static_cast<size_t>(((b * Cin + ci) * H + i) * W + j)] +=
                          g * wv2[((ci * Cout + co) * kh + ki) * kw + kj];
                    if (!gw.empty())
                      gw[static_cast<size_t>(((ci * Cout + co) * kh + ki) * kw + kj)] +=
                          g * xval;
                  }
                }
            }
      if (!gx.empty()) flush_grad(*xn, gx);
      if (!gw.empty()) flush_grad(*wn, gw);
      if (!gb.empty()) flush_grad(*bn, gb);
    });
  }
  return res;
}

}  // namespace zenfoley
