#include <algorithm>
#include <cmath>
#include <cstring>

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

// Flush a 64-bit accumulator into a node's gradient buffer.
void flush_grad(TensorNode& n, const std::vector<double>& acc) {
  float* g = n.grad.data();
  for (size_t i = 0; i < acc.size(); ++i) g[i] += static_cast<float>(acc[i]);
}

// ---------------------------------------------------------------------------
// Broadcasting: shapes are right-aligned; each axis pair must be equal or one
// of the two extents must be 1 (which realizes scalar and row/column
// expansion). Anything else is a dimension error.
// ---------------------------------------------------------------------------

struct BcPlan {
  Shape out;
  std::vector<int64_t> stride_a, stride_b;  // per out axis; 0 where broadcast
  int64_t n = 0;
};

BcPlan broadcast_plan(const Shape& sa, const Shape& sb, const char* opname) {
  int ra = static_cast<int>(sa.size()), rb = static_cast<int>(sb.size());
  int r = std::max(ra, rb);
  BcPlan p;
  p.out.resize(static_cast<size_t>(r));
  Shape pa(static_cast<size_t>(r), 1), pb(static_cast<size_t>(r), 1);
  std::copy(sa.begin(), sa.end(), pa.begin() + (r - ra));
  std::copy(sb.begin(), sb.end(), pb.begin() + (r - rb));
  for (int i = 0; i < r; ++i) {
    int64_t ea = pa[static_cast<size_t>(i)], eb = pb[static_cast<size_t>(i)];
    if (ea == eb)
      p.out[static_cast<size_t>(i)] = ea;
    else if (ea == 1)
      p.out[static_cast<size_t>(i)] = eb;
    else if (eb == 1)
      p.out[static_cast<size_t>(i)] = ea;
    else
      throw DimensionError(std::string(opname) + ": shapes " + shape_str(sa) +
                           " and " + shape_str(sb) + " are not compatible");
  }
  p.stride_a.assign(static_cast<size_t>(r), 0);
  p.stride_b.assign(static_cast<size_t>(r), 0);
  int64_t stra = 1, strb = 1;
  for (int i = r - 1; i >= 0; --i) {
    if (pa[static_cast<size_t>(i)] != 1) p.stride_a[static_cast<size_t>(i)] = stra;
    if (pb[static_cast<size_t>(i)] != 1) p.stride_b[static_cast<size_t>(i)] = strb;
    stra *= pa[static_cast<size_t>(i)];
    strb *= pb[static_cast<size_t>(i)];
  }
  p.n = numel(p.out);
  return p;
}

template <class F>
void bc_iterate(const BcPlan& p, F&& f) {
  int r = static_cast<int>(p.out.size());
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  int64_t ia = 0, ib = 0;
  for (int64_t o = 0; o < p.n; ++o) {
    f(o, ia, ib);
    for (int ax = r - 1; ax >= 0; --ax) {
      size_t a = static_cast<size_t>(ax);
      idx[a]++;
      ia += p.stride_a[a];
      ib += p.stride_b[a];
      if (idx[a] < p.out[a]) break;
      ia -= p.stride_a[a] * p.out[a];
      ib -= p.stride_b[a] * p.out[a];
      idx[a] = 0;
    }
  }
}

enum class BinOp { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinOp op,
                 const char* name) {
  BcPlan p = broadcast_plan(a.shape(), b.shape(), name);
  std::vector<float> out(static_cast<size_t>(p.n));
  const float* av = a.values().data();
  const float* bv = b.values().data();
  bc_iterate(p, [&](int64_t o, int64_t ia, int64_t ib) {
    float x = av[ia], y = bv[ib];
    switch (op) {
      case BinOp::Add: out[static_cast<size_t>(o)] = x + y; break;
      case BinOp::Sub: out[static_cast<size_t>(o)] = x - y; break;
      case BinOp::Mul: out[static_cast<size_t>(o)] = x * y; break;
    }
  });
  bool rg = want_grad({&a, &b});
  Tensor res = make_result(p.out, std::move(out), rg);
  if (rg) {
    auto an = a.node(), bn = b.node(), on = res.node();
    record({an, bn, on}, [an, bn, on, p, op]() {
      const float* go = on->grad.data();
      const float* av2 = an->values.data();
      const float* bv2 = bn->values.data();
      std::vector<double> ga, gb;
      if (an->requires_grad) ga.assign(an->values.size(), 0.0);
      if (bn->requires_grad) gb.assign(bn->values.size(), 0.0);
      bc_iterate(p, [&](int64_t o, int64_t ia, int64_t ib) {
        double g = go[o];
        switch (op) {
          case BinOp::Add:
            if (!ga.empty()) ga[static_cast<size_t>(ia)] += g;
            if (!gb.empty()) gb[static_cast<size_t>(ib)] += g;
            break;
          case BinOp::Sub:
            if (!ga.empty()) ga[static_cast<size_t>(ia)] += g;
            if (!gb.empty()) gb[static_cast<size_t>(ib)] -= g;
            break;
          case BinOp::Mul:
            if (!ga.empty()) ga[static_cast<size_t>(ia)] += g * bv2[ib];
            if (!gb.empty()) gb[static_cast<size_t>(ib)] += g * av2[ia];
            break;
        }
      });
      if (!ga.empty()) flush_grad(*an, ga);
      if (!gb.empty()) flush_grad(*bn, gb);
    });
  }
  return res;
}

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd) {
  std::vector<float> out(x.values().begin(), x.values().end());
  for (auto& v : out) v = fwd(v);
  bool rg = want_grad({&x});
  Tensor res = make_result(x.shape(), std::move(out), rg);
  if (rg) {
    auto xn = x.node(), on = res.node();
    record({xn, on}, [xn, on, bwd]() {
      const float* go = on->grad.data();
      const float* xv = xn->values.data();
      const float* yv = on->values.data();
      float* gx = xn->grad.data();
      for (size_t i = 0; i < xn->values.size(); ++i)
        gx[i] += static_cast<float>(go[i] * bwd(xv[i], yv[i]));
    });
  }
  return res;
}

}  // namespace

// --- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, BinOp::Add, "add");
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, BinOp::Sub, "sub");
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(a, b, BinOp::Mul, "mul");
}

Tensor scale(const Tensor& x, double s) {
  return unary_op(
      x, [s](float v) { return static_cast<float>(s * v); },
      [s](float, float) { return s; });
}

Tensor elu(const Tensor& x) {
  return unary_op(
      x,
      [](float v) {
        return v > 0.0f ? v : static_cast<float>(std::exp(static_cast<double>(v)) - 1.0);
      },
      [](float xv, float yv) { return xv > 0.0f ? 1.0 : static_cast<double>(yv) + 1.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x,
      [](float v) {
        return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
      },
      [](float, float yv) { return static_cast<double>(yv) * (1.0 - yv); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](float v) { return static_cast<float>(std::tanh(static_cast<double>(v))); },
      [](float, float yv) { return 1.0 - static_cast<double>(yv) * yv; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      x, [](float v) { return static_cast<float>(std::log(static_cast<double>(v))); },
      [](float xv, float) { return 1.0 / static_cast<double>(xv); });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](float v) { return static_cast<float>(std::exp(static_cast<double>(v))); },
      [](float, float yv) { return static_cast<double>(yv); });
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() < 1) throw DimensionError("softmax_lastdim: rank must be >= 1");
  int64_t k = x.dim(x.rank() - 1);
  int64_t rows = x.size() / k;
  std::vector<float> out(static_cast<size_t>(x.size()));
  const float* xv = x.values().data();
  for (int64_t r = 0; r < rows; ++r) {
    const float* row = xv + r * k;
    float* orow = out.data() + r * k;
    double m = row[0];
    for (int64_t j = 1; j < k; ++j) m = std::max(m, static_cast<double>(row[j]));
    double denom = 0.0;
    for (int64_t j = 0; j < k; ++j) denom += std::exp(row[j] - m);
    for (int64_t j = 0; j < k; ++j)
      orow[j] = static_cast<float>(std::exp(row[j] - m) / denom);
  }
  bool rg = want_grad({&x});
  Tensor res = make_result(x.shape(), std::move(out), rg);
  if (rg) {
    auto xn = x.node(), on = res.node();
    record({xn, on}, [xn, on, rows, k]() {
      const float* go = on->grad.data();
      const float* yv = on->values.data();
      float* gx = xn->grad.data();
      for (int64_t r = 0; r < rows; ++r) {
        const float* g = go + r * k;
        const float* y = yv + r * k;
        double dot = 0.0;
        for (int64_t j = 0; j < k; ++j) dot += static_cast<double>(g[j]) * y[j];
        for (int64_t j = 0; j < k; ++j)
          gx[r * k + j] += static_cast<float>(y[j] * (g[j] - dot));
      }
    });
  }
  return res;
}

// --- reductions ---------------------------------------------------------------

namespace {
Tensor full_reduce(const Tensor& x, bool take_mean) {
  double acc = 0.0;
  for (float v : x.values()) acc += v;
  double denom = take_mean ? static_cast<double>(x.size()) : 1.0;
  bool rg = want_grad({&x});
  Tensor res = make_result({1}, {static_cast<float>(acc / denom)}, rg);
  if (rg) {
    auto xn = x.node(), on = res.node();
    record({xn, on}, [xn, on, denom]() {
      double g = on->grad[0] / denom;
      float* gx = xn->grad.data();
      for (size_t i = 0; i < xn->values.size(); ++i)
        gx[i] += static_cast<float>(g);
    });
  }
  return res;
}

Tensor axis_reduce(const Tensor& x, int axis, bool take_mean,
                   const char* name) {
  if (axis < 0 || axis >= x.rank())
    throw DimensionError(std::string(name) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(x.shape()));
  int64_t extent = x.dim(axis);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  Shape os;
  for (int i = 0; i < x.rank(); ++i)
    if (i != axis) os.push_back(x.dim(i));
  if (os.empty()) os = {1};
  double denom = take_mean ? static_cast<double>(extent) : 1.0;
  std::vector<float> out(static_cast<size_t>(outer * inner));
  const float* xv = x.values().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (int64_t e = 0; e < extent; ++e)
        acc += xv[(o * extent + e) * inner + i];
      out[static_cast<size_t>(o * inner + i)] = static_cast<float>(acc / denom);
    }
  bool rg = want_grad({&x});
  Tensor res = make_result(std::move(os), std::move(out), rg);
  if (rg) {
    auto xn = x.node(), on = res.node();
    record({xn, on}, [xn, on, outer, inner, extent, denom]() {
      const float* go = on->grad.data();
      float* gx = xn->grad.data();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t e = 0; e < extent; ++e)
          for (int64_t i = 0; i < inner; ++i)
            gx[(o * extent + e) * inner + i] +=
                static_cast<float>(go[o * inner + i] / denom);
    });
  }
  return res;
}
}  // namespace

Tensor sum(const Tensor& x) { return full_reduce(x, false); }
Tensor mean(const Tensor& x) { return full_reduce(x, true); }
Tensor sum_axis(const Tensor& x, int axis) {
  return axis_reduce(x, axis, false, "sum_axis");
}
Tensor mean_axis(const Tensor& x, int axis) {
  return axis_reduce(x, axis, true, "mean_axis");
}

// --- structure ----------------------------------------------------------------

Tensor concat_axis(const Tensor& a, const Tensor& b, int axis) {
  if (a.rank() != b.rank() || a.rank() < 1)
    throw DimensionError("concat_axis: ranks differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  if (axis < 0 || axis >= a.rank())
    throw DimensionError("concat_axis: axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(a.shape()));
  for (int i = 0; i < a.rank(); ++i)
    if (i != axis && a.dim(i) != b.dim(i))
      throw DimensionError("concat_axis: extents differ off axis, " +
                           shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  int64_t ea = a.dim(axis), eb = b.dim(axis);
  Shape os = a.shape();
  os[static_cast<size_t>(axis)] = ea + eb;
  std::vector<float> out(static_cast<size_t>(a.size() + b.size()));
  const float* av = a.values().data();
  const float* bv = b.values().data();
  for (int64_t o = 0; o < outer; ++o) {
    std::memcpy(out.data() + o * (ea + eb) * inner, av + o * ea * inner,
                static_cast<size_t>(ea * inner) * sizeof(float));
    std::memcpy(out.data() + (o * (ea + eb) + ea) * inner, bv + o * eb * inner,
                static_cast<size_t>(eb * inner) * sizeof(float));
  }
  bool rg = want_grad({&a, &b});
  Tensor res = make_result(std::move(os), std::move(out), rg);
  if (rg) {
    auto an = a.node(), bn = b.node(), on = res.node();
    record({an, bn, on}, [an, bn, on, outer, inner, ea, eb]() {
      const float* go = on->grad.data();
      for (int64_t o = 0; o < outer; ++o) {
        if (an->requires_grad) {
          float* ga = an->grad.data();
          for (int64_t i = 0; i < ea * inner; ++i)
            ga[o * ea * inner + i] += go[o * (ea + eb) * inner + i];
        }
        if (bn->requires_grad) {
          float* gb = bn->grad.data();
          for (int64_t i = 0; i < eb * inner; ++i)
            gb[o * eb * inner + i] += go[(o * (ea + eb) + ea) * inner + i];
        }
      }
    });
  }
  return res;
}

Tensor concat_axis0(const Tensor& a, const Tensor& b) {
  return concat_axis(a, b, 0);
}

Tensor slice(const Tensor& x, int axis, int64_t begin, int64_t end) {
  if (axis < 0 || axis >= x.rank())
    throw DimensionError("slice: axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(x.shape()));
  if (begin < 0 || end > x.dim(axis) || begin >= end)
    throw DimensionError("slice: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") invalid for extent " +
                         std::to_string(x.dim(axis)));
  int64_t extent = x.dim(axis);
  int64_t span = end - begin;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  Shape os = x.shape();
  os[static_cast<size_t>(axis)] = span;
  std::vector<float> out(static_cast<size_t>(outer * span * inner));
  const float* xv = x.values().data();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * span * inner,
                xv + (o * extent + begin) * inner,
                static_cast<size_t>(span * inner) * sizeof(float));
  bool rg = want_grad({&x});
  Tensor res = make_result(std::move(os), std::move(out), rg);
  if (rg) {
    auto xn = x.node(), on = res.node();
    record({xn, on}, [xn, on, outer, inner, extent, begin, span]() {
      const float* go = on->grad.data();
      float* gx = xn->grad.data();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t s = 0; s < span; ++s)
          for (int64_t i = 0; i < inner; ++i)
            gx[(o * extent + begin + s) * inner + i] +=
                go[(o * span + s) * inner + i];
    });
  }
  return res;
}

Tensor reshape(const Tensor& x, Shape s) {
  if (numel(s) != x.size())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) +
                         " as " + shape_str(s));
  std::vector<float> out(x.values().begin(), x.values().end());
  bool rg = want_grad({&x});
  Tensor res = make_result(std::move(s), std::move(out), rg);
  if (rg) {
    auto xn = x.node(), on = res.node();
    record({xn, on}, [xn, on]() {
      const float* go = on->grad.data();
      float* gx = xn->grad.data();
      for (size_t i = 0; i < xn->values.size(); ++i) gx[i] += go[i];
    });
  }
  return res;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose: rank 2 required");
  return transpose_last2(x);
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2)
    throw DimensionError("transpose_last2: rank must be >= 2, got " +
                         shape_str(x.shape()));
  int64_t m = x.dim(x.rank() - 2), n = x.dim(x.rank() - 1);
  int64_t batch = x.size() / (m * n);
  Shape os = x.shape();
  std::swap(os[os.size() - 1], os[os.size() - 2]);
  std::vector<float> out(static_cast<size_t>(x.size()));
  const float* xv = x.values().data();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j)
        out[static_cast<size_t>(b * m * n + j * m + i)] = xv[b * m * n + i * n + j];
  bool rg = want_grad({&x});
  Tensor res = make_result(std::move(os), std::move(out), rg);
  if (rg) {
    auto xn = x.node(), on = res.node();
    record({xn, on}, [xn, on, batch, m, n]() {
      const float* go = on->grad.data();
      float* gx = xn->grad.data();
      for (int64_t b = 0; b < batch; ++b)
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j)
            gx[b * m * n + i * n + j] += go[b * m * n + j * m + i];
    });
  }
  return res;
}

Tensor stop_gradient(const Tensor& x) {
  auto n = std::make_shared<TensorNode>();
  n->shape = x.shape();
  n->values.assign(x.values().begin(), x.values().end());
  n->requires_grad = false;
  n->leaf = true;
  return Tensor(std::move(n));
}

Tensor straight_through(const Tensor& value, const Tensor& grad_path) {
  if (value.shape() != grad_path.shape())
    throw DimensionError("straight_through: shapes differ, " +
                         shape_str(value.shape()) + " vs " +
                         shape_str(grad_path.shape()));
  std::vector<float> out(value.values().begin(), value.values().end());
  bool rg = want_grad({&grad_path});
  Tensor res = make_result(value.shape(), std::move(out), rg);
  if (rg) {
    auto gn = grad_path.node(), on = res.node();
    record({gn, on}, [gn, on]() {
      const float* go = on->grad.data();
      float* gx = gn->grad.data();
      for (size_t i = 0; i < gn->values.size(); ++i) gx[i] += go[i];
    });
  }
  return res;
}

// --- lookups -------------------------------------------------------------------

Tensor embed_lookup(const std::vector<int32_t>& indices,
                    const Shape& index_shape, const Tensor& table) {
  if (table.rank() != 2)
    throw DimensionError("embed_lookup: table must be rank 2, got " +
                         shape_str(table.shape()));
  if (numel(index_shape) != static_cast<int64_t>(indices.size()))
    throw DimensionError("embed_lookup: index count does not match shape " +
                         shape_str(index_shape));
  int64_t k = table.dim(0), d = table.dim(1);
  for (int32_t ix : indices)
    if (ix < 0 || ix >= k)
      throw ContractError("embed_lookup: index " + std::to_string(ix) +
                          " out of range [0," + std::to_string(k) + ")");
  Shape os = index_shape;
  os.push_back(d);
  std::vector<float> out(indices.size() * static_cast<size_t>(d));
  const float* tv = table.values().data();
  for (size_t p = 0; p < indices.size(); ++p)
    std::memcpy(out.data() + p * static_cast<size_t>(d),
                tv + static_cast<size_t>(indices[p]) * static_cast<size_t>(d),
                static_cast<size_t>(d) * sizeof(float));
  bool rg = want_grad({&table});
  Tensor res = make_result(std::move(os), std::move(out), rg);
  if (rg) {
    auto tn = table.node(), on = res.node();
    std::vector<int32_t> idx = indices;
    record({tn, on}, [tn, on, idx, d]() {
      const float* go = on->grad.data();
      std::vector<double> gt(tn->values.size(), 0.0);
      for (size_t p = 0; p < idx.size(); ++p)
        for (int64_t j = 0; j < d; ++j)
          gt[static_cast<size_t>(idx[p]) * static_cast<size_t>(d) +
             static_cast<size_t>(j)] += go[p * static_cast<size_t>(d) + static_cast<size_t>(j)];
      flush_grad(*tn, gt);
    });
  }
  return res;
}

Tensor codebook_gather(const std::vector<int32_t>& indices, int64_t batch,
                       int64_t rows, int64_t cols, const Tensor& cb) {
  if (cb.rank() != 2)
    throw DimensionError("codebook_gather: codebook must be rank 2");
  if (static_cast<int64_t>(indices.size()) != batch * rows * cols)
    throw DimensionError("codebook_gather: index count mismatch");
  int64_t k = cb.dim(0), d = cb.dim(1);
  for (int32_t ix : indices)
    if (ix < 0 || ix >= k)
      throw ContractError("codebook_gather: index out of range");
  std::vector<float> out(static_cast<size_t>(batch * d * rows * cols));
  const float* cv = cb.values().data();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) {
        int32_t ix = indices[static_cast<size_t>((b * rows + r) * cols + c)];
        for (int64_t j = 0; j < d; ++j)
          out[static_cast<size_t>(((b * d + j) * rows + r) * cols + c)] =
              cv[static_cast<size_t>(ix * d + j)];
      }
  bool rg = want_grad({&cb});
  Tensor res = make_result({batch, d, rows, cols}, std::move(out), rg);
  if (rg) {
    auto cn = cb.node(), on = res.node();
    std::vector<int32_t> idx = indices;
    record({cn, on}, [cn, on, idx, batch, rows, cols, d]() {
      const float* go = on->grad.data();
      std::vector<double> gc(cn->values.size(), 0.0);
      for (int64_t b = 0; b < batch; ++b)
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < cols; ++c) {
            int32_t ix = idx[static_cast<size_t>((b * rows + r) * cols + c)];
            for (int64_t j = 0; j < d; ++j)
              gc[static_cast<size_t>(ix * d + j)] +=
                  go[((b * d + j) * rows + r) * cols + c];
          }
      flush_grad(*cn, gc);
    });
  }
  return res;
}

Tensor cross_entropy_rows(const Tensor& logits,
                          const std::vector<int32_t>& targets) {
  if (logits.rank() != 2)
    throw DimensionError("cross_entropy_rows: logits must be rank 2, got " +
                         shape_str(logits.shape()));
  int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != n)
    throw DimensionError("cross_entropy_rows: target count " +
                         std::to_string(targets.size()) + " != rows " +
                         std::to_string(n));
  for (int32_t t : targets)
    if (t < 0 || t >= k)
      throw ContractError("cross_entropy_rows: target out of range");
  const float* lv = logits.values().data();
  double acc = 0.0;
  std::vector<double> lse(static_cast<size_t>(n));
  for (int64_t r = 0; r < n; ++r) {
    const float* row = lv + r * k;
    double m = row[0];
    for (int64_t j = 1; j < k; ++j) m = std::max(m, static_cast<double>(row[j]));
    double s = 0.0;
    for (int64_t j = 0; j < k; ++j) s += std::exp(row[j] - m);
    lse[static_cast<size_t>(r)] = m + std::log(s);
    acc += lse[static_cast<size_t>(r)] - row[targets[static_cast<size_t>(r)]];
  }
  bool rg = want_grad({&logits});
  Tensor res = make_result({1}, {static_cast<float>(acc / static_cast<double>(n))}, rg);
  if (rg) {
    auto ln = logits.node(), on = res.node();
    std::vector<int32_t> tg = targets;
    record({ln, on}, [ln, on, tg, lse, n, k]() {
      double g = on->grad[0] / static_cast<double>(n);
      const float* lv2 = ln->values.data();
      float* gl = ln->grad.data();
      for (int64_t r = 0; r < n; ++r)
        for (int64_t j = 0; j < k; ++j) {
          double p = std::exp(lv2[r * k + j] - lse[static_cast<size_t>(r)]);
          double onehot = (j == tg[static_cast<size_t>(r)]) ? 1.0 : 0.0;
          gl[r * k + j] += static_cast<float>(g * (p - onehot));
        }
    });
  }
  return res;
}

// --- matrix products ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  int64_t m = a.dim(0), kd = a.dim(1), n = b.dim(1);
  std::vector<float> out(static_cast<size_t>(m * n));
  const float* av = a.values().data();
  const float* bv = b.values().data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t t = 0; t < kd; ++t) acc += static_cast<double>(av[i * kd + t]) * bv[t * n + j];
      out[static_cast<size_t>(i * n + j)] = static_cast<float>(acc);
    }
  bool rg = want_grad({&a, &b});
  Tensor res = make_result({m, n}, std::move(out), rg);
  if (rg) {
    auto an = a.node(), bn = b.node(), on = res.node();
    record({an, bn, on}, [an, bn, on, m, kd, n]() {
      const float* go = on->grad.data();
      const float* av2 = an->values.data();
      const float* bv2 = bn->values.data();
      if (an->requires_grad) {
        std::vector<double> ga(an->values.size(), 0.0);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t t = 0; t < kd; ++t) {
            double acc = 0.0;
            for (int64_t j = 0; j < n; ++j)
              acc += static_cast<double>(go[i * n + j]) * bv2[t * n + j];
            ga[static_cast<size_t>(i * kd + t)] = acc;
          }
        flush_grad(*an, ga);
      }
      if (bn->requires_grad) {
        std::vector<double> gb(bn->values.size(), 0.0);
        for (int64_t t = 0; t < kd; ++t)
          for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t i = 0; i < m; ++i)
              acc += static_cast<double>(av2[i * kd + t]) * go[i * n + j];
            gb[static_cast<size_t>(t * n + j)] = acc;
          }
        flush_grad(*bn, gb);
      }
    });
  }
  return res;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(1))
    throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  int64_t bs = a.dim(0), m = a.dim(1), kd = a.dim(2), n = b.dim(2);
  std::vector<float> out(static_cast<size_t>(bs * m * n));
  const float* av = a.values().data();
  const float* bv = b.values().data();
  for (int64_t q = 0; q < bs; ++q)
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int64_t t = 0; t < kd; ++t)
          acc += static_cast<double>(av[(q * m + i) * kd + t]) * bv[(q * kd + t) * n + j];
        out[static_cast<size_t>((q * m + i) * n + j)] = static_cast<float>(acc);
      }
  bool rg = want_grad({&a, &b});
  Tensor res = make_result({bs, m, n}, std::move(out), rg);
  if (rg) {
    auto an = a.node(), bn = b.node(), on = res.node();
    record({an, bn, on}, [an, bn, on, bs, m, kd, n]() {
      const float* go = on->grad.data();
      const float* av2 = an->values.data();
      const float* bv2 = bn->values.data();
      if (an->requires_grad) {
        std::vector<double> ga(an->values.size(), 0.0);
        for (int64_t q = 0; q < bs; ++q)
          for (int64_t i = 0; i < m; ++i)
            for (int64_t t = 0; t < kd; ++t) {
              double acc = 0.0;
              for (int64_t j = 0; j < n; ++j)
                acc += static_cast<double>(go[(q * m + i) * n + j]) * bv2[(q * kd + t) * n + j];
              ga[static_cast<size_t>((q * m + i) * kd + t)] = acc;
            }
        flush_grad(*an, ga);
      }
      if (bn->requires_grad) {
        std::vector<double> gb(bn->values.size(), 0.0);
        for (int64_t q = 0; q < bs; ++q)
          for (int64_t t = 0; t < kd; ++t)
            for (int64_t j = 0; j < n; ++j) {
              double acc = 0.0;
              for (int64_t i = 0; i < m; ++i)
                acc += static_cast<double>(av2[(q * m + i) * kd + t]) * go[(q * m + i) * n + j];
              gb[static_cast<size_t>((q * kd + t) * n + j)] = acc;
            }
        flush_grad(*bn, gb);
      }
    });
  }
  return res;
}

}  // namespace zenfoley
