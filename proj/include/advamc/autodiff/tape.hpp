#pragma once

#include <functional>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "advamc/autodiff/tensor.hpp"

namespace advamc::ad {

/// Which leaves receive gradients. `watched_only` lets a caller take input
/// gradients through a model without touching its parameter grads.
enum class LeafPolicy { requires_grad, watched_only };

/// Records primitive operations during a forward pass and replays them in
/// reverse. One backward per recorded forward; backward() consumes the tape.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  explicit Tape(LeafPolicy policy = LeafPolicy::requires_grad) : policy_(policy) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void watch(const TensorPtr<T>& leaf) {
    if (tracked_.insert(leaf.get()).second) leaves_.push_back(leaf);
  }

  /// True if gradients must flow into `t`. Registers requires_grad leaves
  /// on first sight under the default policy.
  bool involve(const TensorPtr<T>& t) {
    if (tracked_.count(t.get())) return true;
    if (policy_ == LeafPolicy::requires_grad && t->requires_grad) {
      watch(t);
      return true;
    }
    return false;
  }

  void record(const TensorPtr<T>& output, BackwardFn fn) {
    tracked_.insert(output.get());
    entries_.emplace_back(output, std::move(fn));
  }

  /// Gradient accumulator for `t`, zero-initialized on first access.
  std::vector<T>& grad_buffer(const Tensor<T>& t) {
    auto [it, inserted] = grads_.try_emplace(&t);
    if (inserted) it->second.assign(t.size(), T{0});
    return it->second;
  }

  const std::vector<T>* grad(const Tensor<T>& t) const {
    auto it = grads_.find(&t);
    return it == grads_.end() ? nullptr : &it->second;
  }

  /// Seeds d(loss)/d(loss) = 1, runs the recorded ops in reverse and
  /// accumulates leaf gradients into Tensor::grad. Clears the tape.
  void backward(const TensorPtr<T>& loss) {
    if (entries_.empty()) throw TapeEmpty("backward called without a recorded forward pass");
    if (loss->size() != 1) throw ShapeError("backward expects a scalar loss, got " + shape_str(loss->shape));
    if (!tracked_.count(loss.get())) throw TapeEmpty("loss was not produced on this tape");
    grad_buffer(*loss)[0] = T{1};
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (grads_.count(it->first.get())) {
        it->second(*this);
        grads_.erase(it->first.get());
      }
    }
    for (const auto& leaf : leaves_) {
      auto g = grads_.find(leaf.get());
      if (g == grads_.end()) continue;
      if (leaf->grad.size() != leaf->size()) leaf->zero_grad();
      for (std::size_t k = 0; k < leaf->size(); ++k) leaf->grad[k] += g->second[k];
    }
    reset();
  }

  void reset() {
    entries_.clear();
    grads_.clear();
    tracked_.clear();
    leaves_.clear();
  }

  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  LeafPolicy policy_;
  std::unordered_set<const Tensor<T>*> tracked_;
  std::vector<TensorPtr<T>> leaves_;
  std::vector<std::pair<TensorPtr<T>, BackwardFn>> entries_;
  std::unordered_map<const Tensor<T>*, std::vector<T>> grads_;
};

}  // namespace advamc::ad
