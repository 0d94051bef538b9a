#include "zenfoley/optim.hpp"

#include <cmath>

namespace zenfoley::optim {

double global_grad_norm(const std::vector<NamedTensor>& params,
                        const GradientMap& grads) {
  double acc = 0.0;
  for (const auto& p : params) {
    if (!grads.contains(p.t)) continue;
    Tensor g = grads.at(p.t);
    for (float v : g.values()) acc += static_cast<double>(v) * v;
  }
  return std::sqrt(acc);
}

void Adam::ensure_slots(const std::vector<NamedTensor>& params) {
  if (!m_.empty()) {
    if (m_.size() != params.size())
      throw ContractError("optimizer state does not match parameter count");
    return;
  }
  m_.resize(params.size());
  v_.resize(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    m_[i].assign(static_cast<size_t>(params[i].t.size()), 0.0f);
    v_[i].assign(static_cast<size_t>(params[i].t.size()), 0.0f);
  }
}

double Adam::step(std::vector<NamedTensor>& params, const GradientMap& grads,
                  double lr, double max_norm) {
  ensure_slots(params);
  double norm = global_grad_norm(params, grads);
  double clip_scale = 1.0;
  if (max_norm > 0.0 && norm > max_norm) clip_scale = max_norm / norm;

  step_ += 1;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));

  for (size_t i = 0; i < params.size(); ++i) {
    auto vals = params[i].t.values_mut();
    const bool have = grads.contains(params[i].t);
    Tensor g = have ? grads.at(params[i].t) : Tensor();
    std::span<const float> gv = have ? g.values() : std::span<const float>();
    for (size_t j = 0; j < vals.size(); ++j) {
      double gj = have ? static_cast<double>(gv[j]) * clip_scale : 0.0;
      double mj = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * gj;
      double vj = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * gj * gj;
      m_[i][j] = static_cast<float>(mj);
      v_[i][j] = static_cast<float>(vj);
      double mhat = static_cast<double>(m_[i][j]) / bc1;
      double vhat = static_cast<double>(v_[i][j]) / bc2;
      vals[j] = static_cast<float>(vals[j] - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
  return norm * clip_scale;
}

std::vector<NamedTensor> Adam::state_tensors(
    const std::vector<NamedTensor>& params) const {
  std::vector<NamedTensor> out;
  if (m_.empty()) return out;
  if (m_.size() != params.size())
    throw ContractError("optimizer state does not match parameter count");
  for (size_t i = 0; i < params.size(); ++i) {
    out.push_back({"opt.m." + params[i].name,
                   Tensor::from_values(params[i].t.shape(), m_[i])});
    out.push_back({"opt.v." + params[i].name,
                   Tensor::from_values(params[i].t.shape(), v_[i])});
  }
  return out;
}

void Adam::load_state(const std::vector<NamedTensor>& params,
                      const std::vector<NamedTensor>& state,
                      int64_t step_count) {
  m_.assign(params.size(), {});
  v_.assign(params.size(), {});
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor* mt = nullptr;
    const Tensor* vt = nullptr;
    for (const auto& s : state) {
      if (s.name == "opt.m." + params[i].name) mt = &s.t;
      if (s.name == "opt.v." + params[i].name) vt = &s.t;
    }
    if (!mt || !vt)
      throw VersioningError("optimizer state missing for parameter " +
                            params[i].name);
    if (mt->size() != params[i].t.size() || vt->size() != params[i].t.size())
      throw VersioningError("optimizer state size mismatch for parameter " +
                            params[i].name);
    m_[i].assign(mt->values().begin(), mt->values().end());
    v_[i].assign(vt->values().begin(), vt->values().end());
  }
  step_ = step_count;
}

}  // namespace zenfoley::optim
