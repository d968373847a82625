#pragma once

#include <string>
#include <utility>
#include <vector>

#include "canseg/tensor.hpp"

namespace canseg::nn {

/// Named trainable tensors of one model, in registration order.
struct ParamSet {
  std::vector<std::pair<std::string, NodePtr>> items;

  void add(const Tensor& t) { items.emplace_back(t.n->name, t.n); }
  void zero_grad() {
    for (auto& [_, p] : items) p->zero_grad();
  }
  [[nodiscard]] std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto& [_, p] : items) n += std::int64_t(p->value.size());
    return n;
  }
  [[nodiscard]] const NodePtr& find(const std::string& name) const;
};

/// RMSProp with fused L1/L2 penalties (coarse-stage optimizer).
struct RmsProp {
  float rho = 0.9f;
  float eps = 1e-6f;
  float l1 = 0.f;
  float l2 = 0.f;

  explicit RmsProp(ParamSet& params, float l1_penalty = 0.f, float l2_penalty = 0.f);
  void step(float lr);

 private:
  ParamSet* params_;
  std::vector<std::vector<float>> cache_;
};

/// Adam with bias correction (fine-stage optimizer).
struct Adam {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float l1 = 0.f;
  float l2 = 0.f;

  explicit Adam(ParamSet& params);
  void step(float lr);

 private:
  ParamSet* params_;
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
};

}  // namespace canseg::nn
