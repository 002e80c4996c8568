/* Copyright 2026 The MMDA-ASR Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Reverse-mode automatic differentiation over dense row-major Eigen matrices.
//
// A Tape records every operation of one forward pass in insertion order, which
// is also a valid topological order. Parameters live outside the tape (in a
// ParamStore) so that a fresh tape can be built for every utterance while
// gradients accumulate into the same Parameter::grad buffers.
//
// Vectors are represented as 1 x n (row) or n x 1 (column) matrices.

#ifndef MMDA_AUTODIFF_H_
#define MMDA_AUTODIFF_H_

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mmda/errors.h"

namespace mmda {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
std::string shape_string(const Eigen::MatrixBase<Derived>& m) {
  return shape_string(m.rows(), m.cols());
}

// Parameter groups: acoustic encoder, attention, decoder and the
// data-augmenting encoder.
enum class ParamGroup : std::uint8_t {
  kEncoder = 0,
  kAttention = 1,
  kDecoder = 2,
  kAugmenting = 3,
};

inline constexpr ParamGroup kAllGroups[] = {ParamGroup::kEncoder, ParamGroup::kAttention,
                                            ParamGroup::kDecoder, ParamGroup::kAugmenting};

std::string_view group_name(ParamGroup g);

template <typename T>
struct Parameter {
  std::string name;
  ParamGroup group = ParamGroup::kEncoder;
  Matrix<T> value;
  Matrix<T> grad;
  // Set when backward() routed a gradient here since the last zero_grad().
  bool touched = false;

  void zero_grad() {
    grad.setZero(value.rows(), value.cols());
    touched = false;
  }
};

// Owns a model's parameters. Addresses are stable for the store's lifetime,
// including across moves, so layers may keep raw Parameter pointers.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Parameter<T>& add(std::string name, ParamGroup group, Matrix<T> init) {
    if (index_.count(name) != 0) throw ContractError("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->group = group;
    p->value = std::move(init);
    p->zero_grad();
    index_.emplace(p->name, params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>* find(std::string_view name) {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter<T>* find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  Parameter<T>& at(std::string_view name) {
    Parameter<T>* p = find(name);
    if (p == nullptr) throw ContractError("unknown parameter: " + std::string(name));
    return *p;
  }

  std::vector<Parameter<T>*> all() const {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

  std::vector<Parameter<T>*> group(ParamGroup g) const {
    std::vector<Parameter<T>*> out;
    for (const auto& p : params_) {
      if (p->group == g) out.push_back(p.get());
    }
    return out;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t size() const { return params_.size(); }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix<T>& value() const;
  const Matrix<T>& grad() const;
  bool requires_grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

  // Shorthand for 1x1 values.
  T scalar() const { return value()(0, 0); }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Non-differentiable input.
  Var<T> constant(Matrix<T> value) {
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  // Leaf bound to a parameter. Repeated calls return the same node. The node
  // references Parameter::value, so values must not change while the tape is
  // in use.
  Var<T> param(Parameter<T>& p) {
    auto it = param_ids_.find(&p);
    if (it != param_ids_.end()) return Var<T>(this, it->second);
    Node n;
    n.ref = &p.value;
    n.param = &p;
    n.requires_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    int id = static_cast<int>(nodes_.size()) - 1;
    param_ids_.emplace(&p, id);
    return Var<T>(this, id);
  }

  Var<T> record(Matrix<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                  std::move(fn));
  }

  Var<T> record(Matrix<T> value, std::span<const Var<T>> inputs, BackwardFn fn) {
    bool needs = false;
    for (const Var<T>& v : inputs) {
      if (&v.tape() != this) throw ContractError("operands live on different tapes");
      needs = needs || nodes_[static_cast<std::size_t>(v.id())].requires_grad;
    }
#ifndef NDEBUG
    bool finite_inputs = true;
    for (const Var<T>& v : inputs) finite_inputs = finite_inputs && v.value().allFinite();
    assert(!finite_inputs || value.allFinite());
#endif
    Node n;
    n.owned = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Matrix<T>& value(int id) const { return node(id).value(); }
  const Matrix<T>& grad(int id) const { return node(id).grad; }
  bool requires_grad(int id) const { return node(id).requires_grad; }

  // Gradient buffer of `id`, zero-initialised on first use.
  Matrix<T>& grad_buffer(int id) {
    Node& n = node(id);
    if (n.grad.size() == 0) n.grad.setZero(n.value().rows(), n.value().cols());
    return n.grad;
  }

  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = node(id);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Propagates d(loss)/d(node) to every node recorded before `loss`, then adds
  // the leaf gradients into Parameter::grad. Parameter gradients accumulate
  // across calls until zero_grad().
  void backward(const Var<T>& loss, T seed = T(1)) {
    if (&loss.tape() != this) throw ContractError("loss belongs to another tape");
    const Matrix<T>& lv = loss.value();
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ContractError("backward needs a scalar loss, got " + shape_string(lv));
    }
    for (Node& n : nodes_) n.grad.resize(0, 0);
    if (!node(loss.id()).requires_grad) return;
    node(loss.id()).grad = Matrix<T>::Constant(1, 1, seed);
    for (int id = loss.id(); id >= 0; --id) {
      Node& n = node(id);
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.param != nullptr) {
        n.param->grad += n.grad;
        n.param->touched = true;
      } else if (n.backward) {
        n.backward(*this, id);
      }
    }
  }

  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Matrix<T> owned;
    const Matrix<T>* ref = nullptr;
    Matrix<T> grad;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;

    const Matrix<T>& value() const { return ref != nullptr ? *ref : owned; }
  };

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> param_ids_;
  bool grad_enabled_ = true;
};

template <typename T>
const Matrix<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
const Matrix<T>& Var<T>::grad() const {
  return tape_->grad(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int coords_checked = 0;
};

// Compares analytic gradients of `loss_fn` against the five-point stencil
// (8 (f(p+e) - f(p-e)) - (f(p+2e) - f(p-2e))) / (12 e). The relative error of
// one coordinate is
// |a - n| / max(|a|, |n|, abs_floor); abs_floor keeps coordinates whose true
// gradient is ~0 from dividing rounding noise by zero. When
// `max_coords_per_param` > 0 a seeded random subset of coordinates is checked.
template <typename T>
GradCheckResult finite_diff_check(const std::function<Var<T>(Tape<T>&)>& loss_fn,
                                  std::span<Parameter<T>* const> params, double eps,
                                  int max_coords_per_param = -1, double abs_floor = 1e-6,
                                  std::uint64_t seed = 0) {
  if (!(eps > 0)) throw ContractError("finite_diff_check needs eps > 0");
  for (Parameter<T>* p : params) p->zero_grad();
  {
    Tape<T> tape;
    Var<T> loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape<T> tape;
    tape.set_grad_enabled(false);
    return static_cast<double>(loss_fn(tape).scalar());
  };

  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (Parameter<T>* p : params) {
    const Eigen::Index n = p->value.size();
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    if (max_coords_per_param > 0 && n > max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(max_coords_per_param));
    }
    for (Eigen::Index i : coords) {
      T& x = p->value.data()[i];
      const T saved = x;
      auto at = [&](double offset) {
        x = saved + static_cast<T>(offset);
        return eval();
      };
      const double d1 = at(eps) - at(-eps);
      const double d2 = at(2 * eps) - at(-2 * eps);
      x = saved;
      const double numeric = (8.0 * d1 - d2) / (12.0 * eps);
      const double analytic = static_cast<double>(p->grad.data()[i]);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.coords_checked;
      if (rel > result.max_rel_error || result.worst_index < 0) {
        result.max_rel_error = std::max(result.max_rel_error, rel);
        result.worst_param = p->name;
        result.worst_index = i;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace mmda

#endif  // MMDA_AUTODIFF_H_
