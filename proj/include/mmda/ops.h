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

// Differentiable operations on Var<T>. Every op checks shapes eagerly and
// throws DimensionError naming both operands.

#ifndef MMDA_OPS_H_
#define MMDA_OPS_H_

#include <span>
#include <string>
#include <vector>

#include "mmda/autodiff.h"

namespace mmda {

enum class Activation { kSigmoid, kTanh };

namespace internal {

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.value()) +
                         " vs " + shape_string(b.value()));
  }
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace internal

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.value()) + " x " +
                         shape_string(b.value()));
  }
  Matrix<T> out;
  out.noalias() = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

// Elementwise sum. `b` may also be a 1 x n row broadcast over the rows of `a`.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const int ia = a.id(), ib = b.id();
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    Matrix<T> out = a.value() + b.value();
    return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
      const Matrix<T>& g = t.grad(self);
      t.accumulate(ia, g);
      t.accumulate(ib, g);
    });
  }
  if (b.rows() == 1 && b.cols() == a.cols()) {
    Matrix<T> out = a.value().rowwise() + b.value().row(0);
    return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
      const Matrix<T>& g = t.grad(self);
      t.accumulate(ia, g);
      if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
    });
  }
  if (a.rows() == 1 && a.cols() == b.cols()) return add(b, a);
  throw DimensionError("add: cannot combine " + shape_string(a.value()) + " and " +
                       shape_string(b.value()));
}

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
  return add(a, b);
}

template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
  internal::require_same_shape("sub", a, b);
  Matrix<T> out = a.value() - b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
    const Matrix<T>& g = t.grad(self);
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

template <typename T>
Var<T> cwise_product(const Var<T>& a, const Var<T>& b) {
  internal::require_same_shape("cwise_product", a, b);
  Matrix<T> out = a.value().cwiseProduct(b.value());
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Matrix<T> out = a.value() * s;
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, s](Tape<T>& t, int self) {
    t.accumulate(ia, t.grad(self) * s);
  });
}

template <typename T>
Var<T> apply_activation(const Var<T>& x, Activation kind) {
  Matrix<T> out;
  if (kind == Activation::kSigmoid) {
    out = x.value().unaryExpr([](T v) { return internal::sigmoid(v); });
  } else {
    out = x.value().array().tanh().matrix();
  }
  const int ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, kind](Tape<T>& t, int self) {
    const Matrix<T>& y = t.value(self);
    const Matrix<T>& g = t.grad(self);
    if (kind == Activation::kSigmoid) {
      t.accumulate(ix, (g.array() * y.array() * (T(1) - y.array())).matrix());
    } else {
      t.accumulate(ix, (g.array() * (T(1) - y.array().square())).matrix());
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return apply_activation(x, Activation::kSigmoid);
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return apply_activation(x, Activation::kTanh);
}

// Softmax along `axis` (1: across each row, 0: down each column), with
// max-subtraction.
template <typename T>
Var<T> softmax(const Var<T>& x, int axis = 1) {
  if (axis != 0 && axis != 1) throw ContractError("softmax: axis must be 0 or 1");
  Matrix<T> out = x.value();
  if (axis == 1) {
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      row.array() = (row.array() - row.maxCoeff()).exp();
      row /= row.sum();
    }
  } else {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      auto col = out.col(c);
      col.array() = (col.array() - col.maxCoeff()).exp();
      col /= col.sum();
    }
  }
  const int ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, axis](Tape<T>& t, int self) {
    const Matrix<T>& y = t.value(self);
    const Matrix<T>& g = t.grad(self);
    Matrix<T> gy = g.cwiseProduct(y);
    Matrix<T> dx(y.rows(), y.cols());
    if (axis == 1) {
      Eigen::Matrix<T, Eigen::Dynamic, 1> dots = gy.rowwise().sum();
      dx = gy - (y.array().colwise() * dots.array()).matrix();
    } else {
      Eigen::Matrix<T, 1, Eigen::Dynamic> dots = gy.colwise().sum();
      dx = gy - (y.array().rowwise() * dots.array()).matrix();
    }
    t.accumulate(ix, dx);
  });
}

// Row-wise log-softmax.
template <typename T>
Var<T> log_softmax(const Var<T>& x) {
  Matrix<T> out = x.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const T m = row.maxCoeff();
    const T lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
  const int ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape<T>& t, int self) {
    const Matrix<T>& y = t.value(self);
    const Matrix<T>& g = t.grad(self);
    Eigen::Matrix<T, Eigen::Dynamic, 1> sums = g.rowwise().sum();
    Matrix<T> dx = g - (y.array().exp().colwise() * sums.array()).matrix();
    t.accumulate(ix, dx);
  });
}

// Gathers rows of `table`; backward scatter-adds into the same rows.
template <typename T>
Var<T> embedding_lookup(const Var<T>& table, std::span<const int> ids) {
  const Eigen::Index vocab = table.rows();
  Matrix<T> out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) {
      throw VocabError("embedding_lookup: id " + std::to_string(ids[i]) +
                       " out of vocabulary of size " + std::to_string(vocab));
    }
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  const int it = table.id();
  std::vector<int> rows(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table},
                             [it, rows = std::move(rows)](Tape<T>& t, int self) {
                               const Matrix<T>& g = t.grad(self);
                               Matrix<T>& gt = t.grad_buffer(it);
                               for (std::size_t i = 0; i < rows.size(); ++i) {
                                 gt.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
                               }
                             });
}

// Same-length 1-D cross-correlation of a T x 1 sequence with F kernels of odd
// width K (kernel is F x K), zero padded. Output is T x F.
template <typename T>
Var<T> conv1d_same(const Var<T>& seq, const Var<T>& kernel) {
  if (seq.cols() != 1) {
    throw DimensionError("conv1d_same: sequence must be T x 1, got " + shape_string(seq.value()));
  }
  const Eigen::Index width = kernel.cols();
  if (width % 2 == 0) {
    throw ConfigError("conv1d_same: kernel width must be odd, got " + std::to_string(width));
  }
  const Eigen::Index len = seq.rows(), channels = kernel.rows(), half = width / 2;
  const Matrix<T>& s = seq.value();
  const Matrix<T>& k = kernel.value();
  Matrix<T> out = Matrix<T>::Zero(len, channels);
  for (Eigen::Index t = 0; t < len; ++t) {
    for (Eigen::Index j = 0; j < width; ++j) {
      const Eigen::Index src = t + j - half;
      if (src < 0 || src >= len) continue;
      out.row(t) += s(src, 0) * k.col(j).transpose();
    }
  }
  const int is = seq.id(), ik = kernel.id();
  return seq.tape().record(std::move(out), {seq, kernel}, [is, ik, half](Tape<T>& t, int self) {
    const Matrix<T>& g = t.grad(self);
    const Matrix<T>& s = t.value(is);
    const Matrix<T>& k = t.value(ik);
    const Eigen::Index len = s.rows(), width = k.cols();
    const bool want_s = t.requires_grad(is), want_k = t.requires_grad(ik);
    Matrix<T> ds = Matrix<T>::Zero(len, 1);
    Matrix<T> dk = Matrix<T>::Zero(k.rows(), width);
    for (Eigen::Index tt = 0; tt < len; ++tt) {
      for (Eigen::Index j = 0; j < width; ++j) {
        const Eigen::Index src = tt + j - half;
        if (src < 0 || src >= len) continue;
        if (want_s) ds(src, 0) += g.row(tt).dot(k.col(j).transpose());
        if (want_k) dk.col(j) += s(src, 0) * g.row(tt).transpose();
      }
    }
    if (want_s) t.accumulate(is, ds);
    if (want_k) t.accumulate(ik, dk);
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  Matrix<T> out = a.value().transpose();
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, int self) {
    t.accumulate(ia, t.grad(self).transpose());
  });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var<T>& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row counts differ, " + shape_string(parts[0].value()) +
                           " vs " + shape_string(p.value()));
    }
    cols += p.cols();
  }
  Matrix<T> out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index offset = 0;
  for (const Var<T>& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    layout.emplace_back(p.id(), p.cols());
    offset += p.cols();
  }
  return parts[0].tape().record(std::move(out), parts,
                                [layout = std::move(layout)](Tape<T>& t, int self) {
                                  const Matrix<T>& g = t.grad(self);
                                  Eigen::Index off = 0;
                                  for (const auto& [id, n] : layout) {
                                    t.accumulate(id, g.middleCols(off, n));
                                    off += n;
                                  }
                                });
}

template <typename T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b) {
  const Var<T> parts[] = {a, b};
  return concat_cols<T>(std::span<const Var<T>>(parts));
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var<T>& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column counts differ, " +
                           shape_string(parts[0].value()) + " vs " + shape_string(p.value()));
    }
    rows += p.rows();
  }
  Matrix<T> out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index offset = 0;
  for (const Var<T>& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    layout.emplace_back(p.id(), p.rows());
    offset += p.rows();
  }
  return parts[0].tape().record(std::move(out), parts,
                                [layout = std::move(layout)](Tape<T>& t, int self) {
                                  const Matrix<T>& g = t.grad(self);
                                  Eigen::Index off = 0;
                                  for (const auto& [id, n] : layout) {
                                    t.accumulate(id, g.middleRows(off, n));
                                    off += n;
                                  }
                                });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) +
                         ") outside " + shape_string(a.value()));
  }
  Matrix<T> out = a.value().middleRows(start, count);
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, start, count](Tape<T>& t, int self) {
    if (!t.requires_grad(ia)) return;
    t.grad_buffer(ia).middleRows(start, count) += t.grad(self);
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) +
                         ") outside " + shape_string(a.value()));
  }
  Matrix<T> out = a.value().middleCols(start, count);
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, start, count](Tape<T>& t, int self) {
    if (!t.requires_grad(ia)) return;
    t.grad_buffer(ia).middleCols(start, count) += t.grad(self);
  });
}

template <typename T>
Var<T> reverse_rows(const Var<T>& a) {
  Matrix<T> out = a.value().colwise().reverse();
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, int self) {
    t.accumulate(ia, t.grad(self).colwise().reverse());
  });
}

// Concatenates adjacent row pairs: T x C -> ceil(T/2) x 2C. An odd final row
// is paired with a copy of itself.
template <typename T>
Var<T> pair_concat_rows(const Var<T>& a) {
  const Eigen::Index len = a.rows(), width = a.cols();
  if (len < 1) throw ContractError("pair_concat_rows: empty sequence");
  const Eigen::Index out_len = (len + 1) / 2;
  Matrix<T> out(out_len, 2 * width);
  for (Eigen::Index i = 0; i < out_len; ++i) {
    out.row(i).head(width) = a.value().row(2 * i);
    out.row(i).tail(width) = a.value().row(std::min(2 * i + 1, len - 1));
  }
  const int ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, len, width](Tape<T>& t, int self) {
    if (!t.requires_grad(ia)) return;
    const Matrix<T>& g = t.grad(self);
    Matrix<T>& ga = t.grad_buffer(ia);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      ga.row(2 * i) += g.row(i).head(width);
      ga.row(std::min(2 * i + 1, len - 1)) += g.row(i).tail(width);
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  Matrix<T> out = Matrix<T>::Constant(1, 1, a.value().sum());
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape().record(std::move(out), {a}, [ia, r, c](Tape<T>& t, int self) {
    t.accumulate(ia, Matrix<T>::Constant(r, c, t.grad(self)(0, 0)));
  });
}

// Mean negative log-likelihood: -(1/N) sum_i logp(i, targets[i]).
template <typename T>
Var<T> nll_mean(const Var<T>& log_probs, std::span<const int> targets) {
  if (static_cast<Eigen::Index>(targets.size()) != log_probs.rows() || targets.empty()) {
    throw DimensionError("nll_mean: " + std::to_string(targets.size()) + " targets for " +
                         shape_string(log_probs.value()) + " log-probabilities");
  }
  T total = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= log_probs.cols()) {
      throw VocabError("nll_mean: target " + std::to_string(targets[i]) +
                       " out of vocabulary of size " + std::to_string(log_probs.cols()));
    }
    total += log_probs.value()(static_cast<Eigen::Index>(i), targets[i]);
  }
  const T n = static_cast<T>(targets.size());
  Matrix<T> out = Matrix<T>::Constant(1, 1, -total / n);
  const int il = log_probs.id();
  std::vector<int> tg(targets.begin(), targets.end());
  return log_probs.tape().record(std::move(out), {log_probs},
                                 [il, n, tg = std::move(tg)](Tape<T>& t, int self) {
                                   const T g = t.grad(self)(0, 0);
                                   Matrix<T>& gl = t.grad_buffer(il);
                                   for (std::size_t i = 0; i < tg.size(); ++i) {
                                     gl(static_cast<Eigen::Index>(i), tg[i]) -= g / n;
                                   }
                                 });
}

}  // namespace mmda

#endif  // MMDA_OPS_H_
