#include "canseg/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "canseg/kernels.hpp"

namespace canseg::nn {

const NodePtr& ParamSet::find(const std::string& name) const {
  for (const auto& [n, p] : items)
    if (n == name) return p;
  throw std::runtime_error("params: no tensor named '" + name + "'");
}

RmsProp::RmsProp(ParamSet& params, float l1_penalty, float l2_penalty)
    : l1(l1_penalty), l2(l2_penalty), params_(&params) {
  cache_.reserve(params.items.size());
  for (auto& [_, p] : params.items) cache_.emplace_back(p->value.size(), 0.f);
}

void RmsProp::step(float lr) {
  const auto& kt = kern::active();
  for (std::size_t i = 0; i < params_->items.size(); ++i) {
    NodePtr& p = params_->items[i].second;
    if (p->grad.size() != p->value.size()) p->ensure_grad();
    kt.rmsprop_step(p->value.data(), p->grad.data(), cache_[i].data(), p->value.size(), lr,
                    rho, eps, l1, l2);
  }
}

Adam::Adam(ParamSet& params) : params_(&params) {
  m_.reserve(params.items.size());
  v_.reserve(params.items.size());
  for (auto& [_, p] : params.items) {
    m_.emplace_back(p->value.size(), 0.f);
    v_.emplace_back(p->value.size(), 0.f);
  }
}

void Adam::step(float lr) {
  ++t_;
  const float bc1 = 1.f - std::pow(beta1, float(t_));
  const float bc2 = 1.f - std::pow(beta2, float(t_));
  const auto& kt = kern::active();
  for (std::size_t i = 0; i < params_->items.size(); ++i) {
    NodePtr& p = params_->items[i].second;
    if (p->grad.size() != p->value.size()) p->ensure_grad();
    kt.adam_step(p->value.data(), p->grad.data(), m_[i].data(), v_[i].data(), p->value.size(),
                 lr, beta1, beta2, eps, bc1, bc2, l1, l2);
  }
}

}  // namespace canseg::nn
