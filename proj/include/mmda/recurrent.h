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

// Fused LSTM kernels. Weights are packed as one (I + H) x 4H matrix whose
// column blocks are the input, forget, output and candidate gates; the first I
// rows act on the input and the last H rows on the previous hidden state.

#ifndef MMDA_RECURRENT_H_
#define MMDA_RECURRENT_H_

#include <string>

#include "mmda/autodiff.h"
#include "mmda/ops.h"

namespace mmda {

template <typename T>
struct LstmOutput {
  Var<T> h;
  Var<T> c;
};

namespace internal {

template <typename T>
void check_lstm_weights(const char* op, Eigen::Index input_dim, Eigen::Index hidden,
                        const Var<T>& weight, const Var<T>& bias) {
  if (weight.rows() != input_dim + hidden || weight.cols() != 4 * hidden) {
    throw DimensionError(std::string(op) + ": weight " + shape_string(weight.value()) +
                         " does not fit input " + std::to_string(input_dim) + " / hidden " +
                         std::to_string(hidden));
  }
  if (bias.rows() != 1 || bias.cols() != 4 * hidden) {
    throw DimensionError(std::string(op) + ": bias " + shape_string(bias.value()) +
                         " does not fit hidden " + std::to_string(hidden));
  }
}

// Applies gate nonlinearities in place to a row of pre-activations.
template <typename Row>
void activate_gates(Row&& z, Eigen::Index hidden) {
  using T = typename std::decay_t<Row>::Scalar;
  for (Eigen::Index j = 0; j < 3 * hidden; ++j) z(j) = sigmoid<T>(z(j));
  z.tail(hidden) = z.tail(hidden).array().tanh();
}

// Gate pre-activation gradient for one step given d(loss)/dh and d(loss)/dc
// flowing into the step's outputs. Returns dc for the previous cell state.
template <typename T, typename GateRow, typename DzRow>
void lstm_step_backward(const GateRow& gates, const Eigen::Matrix<T, 1, Eigen::Dynamic>& c_prev,
                        const Eigen::Matrix<T, 1, Eigen::Dynamic>& tanh_c,
                        const Eigen::Matrix<T, 1, Eigen::Dynamic>& dh,
                        Eigen::Matrix<T, 1, Eigen::Dynamic>& dc, DzRow&& dz,
                        Eigen::Index hidden) {
  const auto i = gates.segment(0, hidden).array();
  const auto f = gates.segment(hidden, hidden).array();
  const auto o = gates.segment(2 * hidden, hidden).array();
  const auto g = gates.segment(3 * hidden, hidden).array();
  dc.array() += dh.array() * o * (T(1) - tanh_c.array().square());
  dz.segment(0, hidden).array() = dc.array() * g * i * (T(1) - i);
  dz.segment(hidden, hidden).array() = dc.array() * c_prev.array() * f * (T(1) - f);
  dz.segment(2 * hidden, hidden).array() = dh.array() * tanh_c.array() * o * (T(1) - o);
  dz.segment(3 * hidden, hidden).array() = dc.array() * i * (T(1) - g.square());
  dc.array() *= f;
}

}  // namespace internal

// One LSTM step on 1 x I input with 1 x H state.
template <typename T>
LstmOutput<T> lstm_cell(const Var<T>& x, const Var<T>& h, const Var<T>& c, const Var<T>& weight,
                        const Var<T>& bias) {
  const Eigen::Index in = x.cols(), hid = h.cols();
  if (x.rows() != 1 || h.rows() != 1 || c.rows() != 1 || c.cols() != hid) {
    throw DimensionError("lstm_cell: expected row vectors, got x " + shape_string(x.value()) +
                         ", h " + shape_string(h.value()) + ", c " + shape_string(c.value()));
  }
  internal::check_lstm_weights("lstm_cell", in, hid, weight, bias);
  using Row = Eigen::Matrix<T, 1, Eigen::Dynamic>;
  const Matrix<T>& w = weight.value();
  Row gates = bias.value().row(0);
  gates.noalias() += x.value().row(0) * w.topRows(in);
  gates.noalias() += h.value().row(0) * w.bottomRows(hid);
  internal::activate_gates(gates, hid);
  Row c_new = gates.segment(hid, hid).cwiseProduct(c.value().row(0)) +
              gates.segment(0, hid).cwiseProduct(gates.segment(3 * hid, hid));
  Row tanh_c = c_new.array().tanh();
  Matrix<T> out(1, 2 * hid);
  out.row(0).head(hid) = gates.segment(2 * hid, hid).cwiseProduct(tanh_c);
  out.row(0).tail(hid) = c_new;

  const int ix = x.id(), ih = h.id(), ic = c.id(), iw = weight.id(), ib = bias.id();
  const Var<T> inputs[] = {x, h, c, weight, bias};
  Var<T> packed = x.tape().record(
      std::move(out), std::span<const Var<T>>(inputs),
      [=, gates = std::move(gates), tanh_c = std::move(tanh_c)](Tape<T>& t, int self) {
        const Matrix<T>& g = t.grad(self);
        Row dh = g.row(0).head(hid);
        Row dc = g.row(0).tail(hid);
        Row c_prev = t.value(ic).row(0);
        Row dz(4 * hid);
        internal::lstm_step_backward<T>(gates, c_prev, tanh_c, dh, dc, dz, hid);
        const Matrix<T>& w = t.value(iw);
        if (t.requires_grad(iw)) {
          Matrix<T>& gw = t.grad_buffer(iw);
          gw.topRows(in).noalias() += t.value(ix).transpose() * dz;
          gw.bottomRows(hid).noalias() += t.value(ih).transpose() * dz;
        }
        if (t.requires_grad(ib)) t.accumulate(ib, dz);
        if (t.requires_grad(ix)) t.accumulate(ix, dz * w.topRows(in).transpose());
        if (t.requires_grad(ih)) t.accumulate(ih, dz * w.bottomRows(hid).transpose());
        t.accumulate(ic, dc);
      });
  return {slice_cols(packed, 0, hid), slice_cols(packed, hid, hid)};
}

// Runs an LSTM over the rows of `seq` (T x I) from zero state and returns the
// T x H hidden states, row t holding the state after consuming frame t. With
// `reverse` the frames are consumed from last to first.
template <typename T>
Var<T> lstm_sequence(const Var<T>& seq, const Var<T>& weight, const Var<T>& bias, bool reverse) {
  const Eigen::Index len = seq.rows(), in = seq.cols();
  if (len < 1) throw ContractError("lstm_sequence: empty sequence");
  const Eigen::Index hid = bias.cols() / 4;
  internal::check_lstm_weights("lstm_sequence", in, hid, weight, bias);
  using Row = Eigen::Matrix<T, 1, Eigen::Dynamic>;
  const Matrix<T>& w = weight.value();

  // gates holds activated gates per frame; cells the cell state per frame.
  Matrix<T> gates = seq.value() * w.topRows(in);
  gates.rowwise() += bias.value().row(0);
  Matrix<T> cells(len, hid);
  Matrix<T> hidden(len, hid);
  Row h = Row::Zero(hid), c = Row::Zero(hid);
  for (Eigen::Index s = 0; s < len; ++s) {
    const Eigen::Index t = reverse ? len - 1 - s : s;
    auto z = gates.row(t);
    z.noalias() += h * w.bottomRows(hid);
    internal::activate_gates(z, hid);
    c = z.segment(hid, hid).cwiseProduct(c) + z.segment(0, hid).cwiseProduct(z.segment(3 * hid, hid));
    h = z.segment(2 * hid, hid).cwiseProduct(c.array().tanh().matrix());
    cells.row(t) = c;
    hidden.row(t) = h;
  }

  const int is = seq.id(), iw = weight.id(), ib = bias.id();
  return seq.tape().record(
      std::move(hidden), {seq, weight, bias},
      [=, gates = std::move(gates), cells = std::move(cells)](Tape<T>& tp, int self) {
        const Matrix<T>& g = tp.grad(self);
        const Matrix<T>& hs = tp.value(self);
        const Matrix<T>& w = tp.value(iw);
        Matrix<T> dz(len, 4 * hid);
        // prev_h row t holds the hidden state that fed frame t.
        Matrix<T> prev_h = Matrix<T>::Zero(len, hid);
        Row dh_next = Row::Zero(hid), dc = Row::Zero(hid);
        for (Eigen::Index s = len - 1; s >= 0; --s) {
          const Eigen::Index t = reverse ? len - 1 - s : s;
          const bool first = s == 0;
          const Eigen::Index tp_prev = reverse ? t + 1 : t - 1;
          Row c_prev = first ? Row::Zero(hid) : Row(cells.row(tp_prev));
          if (!first) prev_h.row(t) = hs.row(tp_prev);
          Row tanh_c = cells.row(t).array().tanh();
          Row dh = g.row(t) + dh_next;
          internal::lstm_step_backward<T>(gates.row(t), c_prev, tanh_c, dh, dc, dz.row(t), hid);
          dh_next.noalias() = dz.row(t) * w.bottomRows(hid).transpose();
        }
        if (tp.requires_grad(iw)) {
          Matrix<T>& gw = tp.grad_buffer(iw);
          gw.topRows(in).noalias() += tp.value(is).transpose() * dz;
          gw.bottomRows(hid).noalias() += prev_h.transpose() * dz;
        }
        if (tp.requires_grad(ib)) tp.accumulate(ib, dz.colwise().sum());
        if (tp.requires_grad(is)) tp.accumulate(is, dz * w.topRows(in).transpose());
      });
}

}  // namespace mmda

#endif  // MMDA_RECURRENT_H_
