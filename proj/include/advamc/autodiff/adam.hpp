#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "advamc/autodiff/tensor.hpp"

namespace advamc::ad {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

template <class T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter from its `grad`
/// buffer. Parameters without a gradient are treated as zero-gradient.
/// State is lazily sized on the first call; afterwards it must match.
template <class T>
void adam_step(std::span<const TensorPtr<T>> params, AdamState<T>& state, const AdamHyper& h) {
  if (state.m.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(p->size(), T{0});
      state.v.emplace_back(p->size(), T{0});
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("Adam state does not match the parameter list");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.m[k].size() != params[k]->size() || state.v[k].size() != params[k]->size()) {
      throw ShapeError("Adam state shape mismatch for parameter " + std::to_string(k));
    }
    if (params[k]->has_grad() && params[k]->grad.size() != params[k]->size()) {
      throw ShapeError("gradient shape mismatch for parameter " + std::to_string(k));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const T g = p.has_grad() ? p.grad[j] : T{0};
      m[j] = b1 * m[j] + (T{1} - b1) * g;
      v[j] = b2 * v[j] + (T{1} - b2) * g * g;
      const double m_hat = static_cast<double>(m[j]) / c1;
      const double v_hat = static_cast<double>(v[j]) / c2;
      p.data[j] = static_cast<T>(static_cast<double>(p.data[j]) - h.lr * m_hat / (std::sqrt(v_hat) + h.eps_hat));
    }
  }
}

}  // namespace advamc::ad
