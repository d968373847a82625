#include "canseg/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace canseg::nn {

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor: non-positive extent");
    n *= d;
  }
  return n;
}

namespace {
bool g_grad_enabled = true;

NodePtr make_node(Shape s) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(s);
  n->value.assign(std::size_t(numel(n->shape)), 0.f);
  return n;
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor zeros(Shape s) { return Tensor(make_node(std::move(s))); }

Tensor full(Shape s, float v) {
  auto n = make_node(std::move(s));
  std::fill(n->value.begin(), n->value.end(), v);
  return Tensor(n);
}

Tensor from_data(Shape s, const float* src) {
  auto n = make_node(std::move(s));
  std::copy(src, src + n->value.size(), n->value.begin());
  return Tensor(n);
}

Tensor param(Shape s, std::string name) {
  auto n = make_node(std::move(s));
  n->requires_grad = true;
  n->name = std::move(name);
  return Tensor(n);
}

Tensor param_randn(Shape s, float stddev, std::mt19937_64& rng, std::string name) {
  Tensor t = param(std::move(s), std::move(name));
  std::normal_distribution<float> dist(0.f, stddev);
  for (auto& v : t.n->value) v = dist(rng);
  return t;
}

namespace detail {
Tensor op_output(Shape s, std::vector<NodePtr> parents) {
  auto n = make_node(std::move(s));
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p && p->requires_grad) {
        n->requires_grad = true;
        break;
      }
    if (n->requires_grad) n->parents = std::move(parents);
  }
  return Tensor(n);
}
}  // namespace detail

namespace {
void run_backward(const Tensor& root, const float* seed, std::size_t seed_n) {
  if (!root.defined() || root.size() != seed_n)
    throw std::invalid_argument("backward: seed size mismatch");
  if (!root.n->requires_grad) return;

  // Depth-first topological order over the parent DAG.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.n.get(), 0}};
  seen.insert(root.n.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.n->ensure_grad();
  for (std::size_t i = 0; i < seed_n; ++i) root.n->grad[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}
}  // namespace

void backward(const Tensor& root, float seed) {
  if (!root.defined() || root.size() != 1)
    throw std::invalid_argument("backward: root must be a scalar node");
  run_backward(root, &seed, 1);
}

void backward_seeded(const Tensor& root, const float* seed) {
  run_backward(root, seed, root.size());
}

}  // namespace canseg::nn
