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

// Beam search with shallow fusion:
//
//   score(y) = log P_ASR(y | x) + lambda * log P_LM(y)
//
// The beam is re-ranked by the fused score after every expansion. Finished
// hypotheses are ranked by score / length (length counts the emitted tokens,
// eos included). Ties are broken by the lexicographically smaller token
// sequence.

#ifndef MMDA_DECODING_H_
#define MMDA_DECODING_H_

#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mmda/model.h"

namespace mmda {

// Incremental next-token scorer. States are opaque handles owned by the
// scorer.
class SequenceScorer {
 public:
  virtual ~SequenceScorer() = default;
  virtual int vocab_size() const = 0;
  virtual int initial_state() = 0;
  // Consumes `token` from `state`; writes log P(next | ...) over the
  // vocabulary and returns the successor state.
  virtual int advance(int state, int token, Eigen::VectorXd& log_probs) = 0;
};

// Runs the encoder once, then one attention + decoder step per advance().
template <typename T>
class AsrScorer : public SequenceScorer {
 public:
  AsrScorer(const Seq2Seq<T>& model, const Matrix<T>& frames) : model_(model) {
    tape_.set_grad_enabled(false);
    Var<T> memory = model.encode_speech(tape_.constant(frames));
    base_ = init_attention(memory, model.attention());
  }

  int vocab_size() const override { return model_.config().vocab_size; }

  int initial_state() override {
    const Eigen::Index hid = model_.config().dec_hidden;
    states_.push_back({tape_.constant(Matrix<T>::Zero(1, hid)),
                       tape_.constant(Matrix<T>::Zero(1, hid)), base_.prev_alignment});
    return static_cast<int>(states_.size()) - 1;
  }

  int advance(int state, int token, Eigen::VectorXd& log_probs) override {
    const State st = states_.at(static_cast<std::size_t>(state));
    AttentionState<T> att = base_;
    att.prev_alignment = st.alignment;
    AttentionOutput<T> a = location_attention_step(st.h, att, model_.attention());
    DecoderStepOutput<T> out = decoder_step(token, a.context, st.h, st.c, model_.decoder());
    log_probs = log_softmax(out.logits).value().row(0).transpose().template cast<double>();
    states_.push_back({out.h, out.c, a.alignment});
    return static_cast<int>(states_.size()) - 1;
  }

  // Alignment (T_enc x 1) held by `state`.
  const Matrix<T>& alignment(int state) const {
    return states_.at(static_cast<std::size_t>(state)).alignment.value();
  }

 private:
  struct State {
    Var<T> h;
    Var<T> c;
    Var<T> alignment;
  };

  const Seq2Seq<T>& model_;
  Tape<T> tape_;
  AttentionState<T> base_;
  std::vector<State> states_;
};

template <typename T>
class LmScorer : public SequenceScorer {
 public:
  explicit LmScorer(const RnnLm<T>& lm) : lm_(lm) { tape_.set_grad_enabled(false); }

  int vocab_size() const override { return lm_.config().vocab_size; }

  int initial_state() override {
    states_.push_back(lm_.initial_state(tape_));
    return static_cast<int>(states_.size()) - 1;
  }

  int advance(int state, int token, Eigen::VectorXd& log_probs) override {
    auto [next, logp] = lm_.step(tape_, states_.at(static_cast<std::size_t>(state)), token);
    log_probs = logp.value().row(0).transpose().template cast<double>();
    states_.push_back(next);
    return static_cast<int>(states_.size()) - 1;
  }

 private:
  const RnnLm<T>& lm_;
  Tape<T> tape_;
  std::vector<typename RnnLm<T>::State> states_;
};

struct DecodeConfig {
  int beam_size = 4;
  double lm_weight = 0.3;
  int max_output_len = 200;  // emitted tokens, eos included

  void validate() const;
};

inline double fuse_score(double asr_logp, double lm_logp, double lm_weight) {
  return asr_logp + lm_weight * lm_logp;
}

struct Hypothesis {
  std::vector<int> tokens;  // sos first
  double asr_logp = 0.0;
  double lm_logp = 0.0;
  double score = 0.0;
  int asr_state = -1;
  int lm_state = -1;
  bool finished = false;

  // Emitted tokens (everything after sos).
  int length() const { return static_cast<int>(tokens.size()) - 1; }
  double normalized_score() const { return length() > 0 ? score / length() : score; }
};

struct DecodeResult {
  Hypothesis best;
  // True when no hypothesis emitted eos within max_output_len.
  bool unfinished = false;
  std::vector<Hypothesis> finished;

  // Output tokens without sos/eos.
  std::vector<int> output() const;
};

// `lm` may be null for pure ASR decoding. Tokens in `excluded` are never
// emitted (pad and sos by default).
DecodeResult beam_search_fusion(SequenceScorer& asr, SequenceScorer* lm, const DecodeConfig& cfg,
                                std::span<const int> excluded = {});

// Decodes one utterance with a Seq2Seq model and optional RNNLM.
template <typename T>
DecodeResult decode_utterance(const Seq2Seq<T>& model, const Matrix<T>& frames,
                              const RnnLm<T>* lm, const DecodeConfig& cfg) {
  AsrScorer<T> asr(model, frames);
  if (lm == nullptr) return beam_search_fusion(asr, nullptr, cfg);
  LmScorer<T> lms(*lm);
  return beam_search_fusion(asr, &lms, cfg);
}

}  // namespace mmda

#endif  // MMDA_DECODING_H_
