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

// Encoder-decoder building blocks: LSTM cell, projection-biLSTM, pyramidal
// encoder, location-aware attention and the attention decoder step.
//
// Parameter structs hold non-owning pointers into a ParamStore. All weights
// are initialised uniform(-0.1, 0.1); LSTM forget-gate biases start at 1.

#ifndef MMDA_LAYERS_H_
#define MMDA_LAYERS_H_

#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmda/autodiff.h"
#include "mmda/ops.h"
#include "mmda/recurrent.h"

namespace mmda {

inline constexpr double kInitScale = 0.1;
inline constexpr double kForgetBias = 1.0;

template <typename T>
Matrix<T> uniform_init(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                       double scale = kInitScale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

// T_enc = ceil(ceil(L / 2) / 2).
constexpr int pyramid_output_length(int input_length) {
  return ((input_length + 1) / 2 + 1) / 2;
}

// ---------------------------------------------------------------------------
// LSTM cell

template <typename T>
struct LstmCellParams {
  Parameter<T>* weight = nullptr;  // (I + H) x 4H, gate blocks i, f, o, g
  Parameter<T>* bias = nullptr;    // 1 x 4H
  Eigen::Index input_dim = 0;
  Eigen::Index hidden_dim = 0;

  static LstmCellParams create(ParamStore<T>& store, const std::string& prefix, ParamGroup group,
                               Eigen::Index input_dim, Eigen::Index hidden_dim,
                               std::mt19937_64& rng) {
    LstmCellParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    p.weight = &store.add(prefix + ".weight", group,
                          uniform_init<T>(input_dim + hidden_dim, 4 * hidden_dim, rng));
    Matrix<T> bias = uniform_init<T>(1, 4 * hidden_dim, rng);
    bias.middleCols(hidden_dim, hidden_dim).setConstant(static_cast<T>(kForgetBias));
    p.bias = &store.add(prefix + ".bias", group, std::move(bias));
    return p;
  }
};

template <typename T>
LstmOutput<T> lstm_cell_step(const Var<T>& x, const Var<T>& h, const Var<T>& c,
                             const LstmCellParams<T>& p) {
  Tape<T>& tape = x.tape();
  if (x.cols() != p.input_dim || h.cols() != p.hidden_dim) {
    throw DimensionError("lstm_cell_step: x " + shape_string(x.value()) + ", h " +
                         shape_string(h.value()) + " for cell " + std::to_string(p.input_dim) +
                         " -> " + std::to_string(p.hidden_dim));
  }
  return lstm_cell(x, h, c, tape.param(*p.weight), tape.param(*p.bias));
}

// ---------------------------------------------------------------------------
// Projection-biLSTM
//
// Output row t is act([fwd_t, bwd_t] * proj_weight + proj_bias), where act is
// tanh or identity. The forward and backward directions are exchanged, and the
// result time-reversed, by swapping the two LSTMs and the top/bottom H-row
// blocks of proj_weight.

template <typename T>
struct ProjectionBiLstmParams {
  LstmCellParams<T> forward;
  LstmCellParams<T> backward;
  Parameter<T>* proj_weight = nullptr;  // 2H x P
  Parameter<T>* proj_bias = nullptr;    // 1 x P
  bool tanh_output = true;

  Eigen::Index input_dim() const { return forward.input_dim; }
  Eigen::Index output_dim() const { return proj_weight->value.cols(); }

  static ProjectionBiLstmParams create(ParamStore<T>& store, const std::string& prefix,
                                       ParamGroup group, Eigen::Index input_dim,
                                       Eigen::Index hidden_dim, Eigen::Index proj_dim,
                                       bool tanh_output, std::mt19937_64& rng) {
    ProjectionBiLstmParams p;
    p.forward = LstmCellParams<T>::create(store, prefix + ".fwd", group, input_dim, hidden_dim, rng);
    p.backward = LstmCellParams<T>::create(store, prefix + ".bwd", group, input_dim, hidden_dim, rng);
    p.proj_weight =
        &store.add(prefix + ".proj.weight", group, uniform_init<T>(2 * hidden_dim, proj_dim, rng));
    p.proj_bias = &store.add(prefix + ".proj.bias", group, uniform_init<T>(1, proj_dim, rng));
    p.tanh_output = tanh_output;
    return p;
  }
};

template <typename T>
Var<T> projection_bilstm_layer(const Var<T>& seq, const ProjectionBiLstmParams<T>& p) {
  Tape<T>& tape = seq.tape();
  if (seq.cols() != p.input_dim()) {
    throw DimensionError("projection_bilstm_layer: input " + shape_string(seq.value()) +
                         " for layer expecting " + std::to_string(p.input_dim()) + " features");
  }
  Var<T> fwd = lstm_sequence(seq, tape.param(*p.forward.weight), tape.param(*p.forward.bias), false);
  Var<T> bwd = lstm_sequence(seq, tape.param(*p.backward.weight), tape.param(*p.backward.bias), true);
  Var<T> proj = matmul(concat_cols(fwd, bwd), tape.param(*p.proj_weight)) + tape.param(*p.proj_bias);
  return p.tanh_output ? tanh(proj) : proj;
}

// ---------------------------------------------------------------------------
// Pyramidal encoder

inline constexpr int kEncoderLayers = 4;
// Layers after which adjacent frames are concatenated (0-based).
inline constexpr int kSubsampleAfter[] = {0, 1};

constexpr bool subsamples_after(int layer) {
  for (int l : kSubsampleAfter) {
    if (l == layer) return true;
  }
  return false;
}

template <typename T>
struct PyramidalEncoderParams {
  std::vector<ProjectionBiLstmParams<T>> layers;

  Eigen::Index input_dim() const { return layers.front().input_dim(); }
  Eigen::Index output_dim() const { return layers.back().output_dim(); }

  static PyramidalEncoderParams create(ParamStore<T>& store, const std::string& prefix,
                                       ParamGroup group, Eigen::Index feat_dim,
                                       Eigen::Index hidden_dim, Eigen::Index proj_dim,
                                       std::mt19937_64& rng) {
    PyramidalEncoderParams p;
    Eigen::Index in = feat_dim;
    for (int l = 0; l < kEncoderLayers; ++l) {
      p.layers.push_back(ProjectionBiLstmParams<T>::create(
          store, prefix + ".layer" + std::to_string(l), group, in, hidden_dim, proj_dim, true, rng));
      in = subsamples_after(l) ? 2 * proj_dim : proj_dim;
    }
    return p;
  }
};

// L x D frames -> pyramid_output_length(L) x P.
template <typename T>
Var<T> pyramidal_encode(const Var<T>& frames, const PyramidalEncoderParams<T>& p) {
  if (frames.rows() < 1) throw ContractError("pyramidal_encode: empty feature sequence");
  Var<T> h = frames;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    h = projection_bilstm_layer(h, p.layers[l]);
    if (subsamples_after(static_cast<int>(l))) h = pair_concat_rows(h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Location-aware attention
//
//   f   = conv(prev_alignment)                         T x F
//   e_t = w' tanh(W s + V h_t + U f_t + b)
//   a   = softmax(e),  context = sum_t a_t h_t

inline constexpr int kConvChannels = 10;
inline constexpr int kConvWidth = 5;

template <typename T>
struct AttentionParams {
  Parameter<T>* state_proj = nullptr;  // Hdec x A   (W)
  Parameter<T>* key_proj = nullptr;    // P x A      (V)
  Parameter<T>* loc_proj = nullptr;    // F x A      (U)
  Parameter<T>* bias = nullptr;        // 1 x A
  Parameter<T>* score = nullptr;       // A x 1      (w)
  Parameter<T>* conv = nullptr;        // F x K

  static AttentionParams create(ParamStore<T>& store, const std::string& prefix,
                                Eigen::Index state_dim, Eigen::Index key_dim, Eigen::Index att_dim,
                                std::mt19937_64& rng, int channels = kConvChannels,
                                int width = kConvWidth) {
    if (width % 2 == 0) throw ConfigError("attention conv width must be odd");
    const ParamGroup g = ParamGroup::kAttention;
    AttentionParams p;
    p.state_proj = &store.add(prefix + ".state_proj", g, uniform_init<T>(state_dim, att_dim, rng));
    p.key_proj = &store.add(prefix + ".key_proj", g, uniform_init<T>(key_dim, att_dim, rng));
    p.loc_proj = &store.add(prefix + ".loc_proj", g, uniform_init<T>(channels, att_dim, rng));
    p.bias = &store.add(prefix + ".bias", g, uniform_init<T>(1, att_dim, rng));
    p.score = &store.add(prefix + ".score", g, uniform_init<T>(att_dim, 1, rng));
    p.conv = &store.add(prefix + ".conv", g, uniform_init<T>(channels, width, rng));
    return p;
  }
};

// Per-utterance attention memory: encoder output, its projected keys and the
// previous step's alignment (T x 1).
template <typename T>
struct AttentionState {
  Var<T> memory;
  Var<T> keys;
  Var<T> prev_alignment;
};

template <typename T>
AttentionState<T> init_attention(const Var<T>& enc_out, const AttentionParams<T>& p) {
  Tape<T>& tape = enc_out.tape();
  const Eigen::Index len = enc_out.rows();
  AttentionState<T> st;
  st.memory = enc_out;
  st.keys = matmul(enc_out, tape.param(*p.key_proj));
  st.prev_alignment = tape.constant(Matrix<T>::Constant(len, 1, T(1) / static_cast<T>(len)));
  return st;
}

template <typename T>
struct AttentionOutput {
  Var<T> context;    // 1 x P
  Var<T> alignment;  // T x 1
};

template <typename T>
AttentionOutput<T> location_attention_step(const Var<T>& dec_state, const AttentionState<T>& st,
                                           const AttentionParams<T>& p) {
  Tape<T>& tape = dec_state.tape();
  if (st.prev_alignment.rows() != st.memory.rows() || st.prev_alignment.cols() != 1) {
    throw ContractError("location_attention_step: alignment " +
                        shape_string(st.prev_alignment.value()) + " for " +
                        std::to_string(st.memory.rows()) + " encoder frames");
  }
  Var<T> loc = matmul(conv1d_same(st.prev_alignment, tape.param(*p.conv)), tape.param(*p.loc_proj));
  Var<T> query = matmul(dec_state, tape.param(*p.state_proj)) + tape.param(*p.bias);
  Var<T> energies = matmul(tanh((st.keys + loc) + query), tape.param(*p.score));
  Var<T> alignment = softmax(energies, 0);
  Var<T> context = matmul(transpose(alignment), st.memory);
  return {context, alignment};
}

// ---------------------------------------------------------------------------
// Decoder

template <typename T>
struct DecoderParams {
  Parameter<T>* embedding = nullptr;   // V x E
  LstmCellParams<T> cell;              // (E + P) -> Hdec
  Parameter<T>* out_weight = nullptr;  // Hdec x V
  Parameter<T>* out_bias = nullptr;    // 1 x V

  Eigen::Index vocab_size() const { return embedding->value.rows(); }
  Eigen::Index hidden_dim() const { return cell.hidden_dim; }

  static DecoderParams create(ParamStore<T>& store, const std::string& prefix, Eigen::Index vocab,
                              Eigen::Index emb_dim, Eigen::Index context_dim,
                              Eigen::Index hidden_dim, std::mt19937_64& rng) {
    const ParamGroup g = ParamGroup::kDecoder;
    DecoderParams p;
    p.embedding = &store.add(prefix + ".embedding", g, uniform_init<T>(vocab, emb_dim, rng));
    p.cell = LstmCellParams<T>::create(store, prefix + ".lstm", g, emb_dim + context_dim,
                                       hidden_dim, rng);
    p.out_weight = &store.add(prefix + ".out.weight", g, uniform_init<T>(hidden_dim, vocab, rng));
    p.out_bias = &store.add(prefix + ".out.bias", g, uniform_init<T>(1, vocab, rng));
    return p;
  }
};

template <typename T>
struct DecoderStepOutput {
  Var<T> logits;  // 1 x V
  Var<T> h;
  Var<T> c;
};

// Embeds y_prev, appends the attention context, advances the LSTM and maps
// the new hidden state to vocabulary logits.
template <typename T>
DecoderStepOutput<T> decoder_step(int y_prev, const Var<T>& context, const Var<T>& h,
                                  const Var<T>& c, const DecoderParams<T>& p) {
  Tape<T>& tape = context.tape();
  const int ids[] = {y_prev};
  Var<T> emb = embedding_lookup(tape.param(*p.embedding), std::span<const int>(ids));
  LstmOutput<T> next = lstm_cell_step(concat_cols(emb, context), h, c, p.cell);
  Var<T> logits = matmul(next.h, tape.param(*p.out_weight)) + tape.param(*p.out_bias);
  return {logits, next.h, next.c};
}

}  // namespace mmda

#endif  // MMDA_LAYERS_H_
