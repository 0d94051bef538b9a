#include "zenfoley/tensor.hpp"

#include <sstream>

namespace zenfoley {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

// --- Tensor -----------------------------------------------------------------

static void check_shape(const Shape& s) {
  for (int64_t d : s) {
    if (d <= 0)
      throw DimensionError("non-positive extent in shape " + shape_str(s));
  }
}

Tensor Tensor::zeros(Shape s, bool requires_grad) {
  return constant(std::move(s), 0.0f, requires_grad);
}

Tensor Tensor::constant(Shape s, float v, bool requires_grad) {
  check_shape(s);
  auto n = std::make_shared<TensorNode>();
  n->values.assign(static_cast<size_t>(numel(s)), v);
  n->shape = std::move(s);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_values(Shape s, std::vector<float> v, bool requires_grad) {
  check_shape(s);
  if (numel(s) != static_cast<int64_t>(v.size()))
    throw DimensionError("value count " + std::to_string(v.size()) +
                         " does not match shape " + shape_str(s));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(s);
  n->values = std::move(v);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(float v) { return constant({1}, v); }

Tensor Tensor::random_uniform(Shape s, SplitMix64& rng, float lo, float hi,
                              bool requires_grad) {
  check_shape(s);
  std::vector<float> v(static_cast<size_t>(numel(s)));
  for (auto& x : v)
    x = static_cast<float>(lo + (hi - lo) * rng.next_unit());
  return from_values(std::move(s), std::move(v), requires_grad);
}

float Tensor::item() const {
  if (!node_ || node_->size() != 1)
    throw ContractError("item() requires a scalar tensor, got " +
                        (node_ ? shape_str(node_->shape) : "undefined"));
  return node_->values[0];
}

Tensor Tensor::grad() const {
  if (!has_grad())
    throw ContractError("tensor has no gradient buffer");
  return Tensor::from_values(node_->shape, node_->grad);
}

Tensor Tensor::clone() const {
  auto n = std::make_shared<TensorNode>();
  n->shape = node_->shape;
  n->values = node_->values;
  n->requires_grad = node_->requires_grad;
  return Tensor(std::move(n));
}

// --- GradientMap -------------------------------------------------------------

bool GradientMap::contains(const Tensor& leaf) const {
  return grads_.count(leaf.node().get()) > 0;
}

Tensor GradientMap::at(const Tensor& leaf) const {
  auto it = grads_.find(leaf.node().get());
  if (it == grads_.end())
    throw ContractError("no gradient recorded for the given leaf");
  return it->second;
}

// --- Graph -------------------------------------------------------------------

static thread_local Graph* t_current_graph = nullptr;

Graph::Graph() {
  prev_ = t_current_graph;
  t_current_graph = this;
}

Graph::~Graph() { t_current_graph = prev_; }

Graph* Graph::current() { return t_current_graph; }
bool Graph::recording() { return t_current_graph != nullptr; }

void Graph::add_entry(std::function<void()> fn) {
  entries_.push_back(std::move(fn));
}

void Graph::touch(const std::shared_ptr<TensorNode>& n) {
  if (touched_set_.insert(n.get()).second) touched_.push_back(n);
}

GradientMap Graph::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("graph already consumed by backward()");
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward() requires a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : "undefined"));

  for (auto& n : touched_) n->ensure_grad();
  auto loss_node = loss.node();
  if (!touched_set_.count(loss_node.get())) loss_node->ensure_grad();
  loss_node->grad[0] = 1.0f;

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();

  GradientMap out;
  for (auto& n : touched_) {
    if (n->leaf && n->requires_grad)
      out.grads_.emplace(n.get(), Tensor::from_values(n->shape, n->grad));
  }
  consumed_ = true;
  entries_.clear();
  return out;
}

}  // namespace zenfoley
