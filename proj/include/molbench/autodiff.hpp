// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

#include "molbench/tensor.hpp"

namespace molbench::ad {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while
/// its tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recording of one forward computation. A tape belongs to a
/// single thread; use a fresh tape per step.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a Parameter. Repeated calls for one parameter return the
  /// same leaf. Frozen parameters become non-differentiable leaves.
  Var parameter(Parameter& param);

  /// Records an op result; it requires grad iff any input does, and the
  /// backward closure then runs during backward().
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and back-propagates; trainable parameter
  /// gradients are accumulated into Parameter::grad. Root must hold one value.
  void backward(Var root);

  const Tensor& value(const Var& v) const;
  bool requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }
  /// Gradient buffer of v, zero-initialized on first access.
  Tensor& grad(const Var& v);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

enum class AttentionMode { Bidirectional, Causal, Cross };

// Core ops. Shape mismatches throw std::invalid_argument naming both shapes.

Var matmul(Var a, Var b);
/// x[m x in] * w[in x out] + b[out]
Var linear(Var x, Var w, Var b);
Var linear(Var x, Var w);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var embedding(Var table, std::span<const std::int32_t> ids);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var rms_norm(Var x, Var gamma, double eps = 1e-6);
Var softmax_lastdim(Var x);
/// Exact x * Phi(x).
Var gelu(Var x);
Var silu(Var x);
/// Rotary position embedding (rotate-half convention) per head.
Var rotary(Var x, std::size_t num_heads, double base = 10000.0);

/// Multi-head scaled dot-product attention. key_mask (empty = all valid)
/// marks usable key positions; causal additionally hides j > i. A query row
/// with no usable key throws std::domain_error.
Var attention(Var q, Var k, Var v, std::size_t num_heads, AttentionMode mode,
              std::span<const std::uint8_t> key_mask = {});

Var select_rows(Var x, std::span<const std::size_t> rows);
Var concat_rows(std::span<const Var> parts);

/// Mean |pred - target| over mask = 1 cells; throws on an all-zero mask.
Var l1_loss(Var pred, const Tensor& target, std::span<const std::uint8_t> mask);
/// Mean of max(x,0) - x t + log(1 + exp(-|x|)).
Var bce_with_logits(Var logits, const Tensor& target);
/// sum(x * w); used to probe gradients.
Var weighted_sum(Var x, const Tensor& weights);

double gelu_value(double x);
double normal_cdf(double x);
double bce_with_logits_value(double logit, double target);

}  // namespace molbench::ad
