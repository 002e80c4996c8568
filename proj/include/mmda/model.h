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

// Attention encoder-decoder with an optional data-augmenting encoder.
//
//   speech batch:        X  -> enc -> att/dec                      (all kinds)
//   MMDA augmenting:     x^ -> aug enc (P-dim) -> att/dec
//   PSDA augmenting:     x^ -> aug enc (D-dim pseudo-speech) -> enc -> att/dec
//
// Every loss is the mean per-token negative log-likelihood under teacher
// forcing. Recurrent and attention state is reset for each utterance.

#ifndef MMDA_MODEL_H_
#define MMDA_MODEL_H_

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmda/autodiff.h"
#include "mmda/layers.h"
#include "mmda/ops.h"
#include "mmda/vocab.h"

namespace mmda {

enum class ModelKind : std::uint8_t { kBaseline = 0, kMmda = 1, kPsda = 2 };

std::string_view model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ModelConfig {
  ModelKind kind = ModelKind::kMmda;
  int feat_dim = 40;
  int vocab_size = 0;
  int num_phonemes = 0;  // augmenting inventory size; unused for kBaseline
  int phone_emb = 64;
  int enc_hidden = 128;  // per direction
  int proj_dim = 128;
  int aug_hidden = 128;
  int dec_emb = 64;
  int dec_hidden = 128;
  int att_dim = 128;
  int conv_channels = kConvChannels;
  int conv_width = kConvWidth;
  double init_scale = kInitScale;  // half-width of the uniform weight init
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct AugmentingEncoderParams {
  Parameter<T>* embedding = nullptr;  // phonemes x E
  ProjectionBiLstmParams<T> layer;    // projects to P (MMDA) or D (PSDA)
};

// Groups disjoint by construction; their union is every parameter.
template <typename T>
struct ParamPartition {
  std::array<std::vector<Parameter<T>*>, 4> groups;

  const std::vector<Parameter<T>*>& operator[](ParamGroup g) const {
    return groups[static_cast<std::size_t>(g)];
  }
};

enum class TrainPhase : std::uint8_t { kPretrainMmda, kPretrainPsda, kMain };

// Groups allowed to change in `phase`.
struct GroupMask {
  std::array<bool, 4> allowed{};
  bool contains(ParamGroup g) const { return allowed[static_cast<std::size_t>(g)]; }
};

GroupMask trainable_mask(TrainPhase phase);

template <typename T>
class Seq2Seq {
 public:
  explicit Seq2Seq(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    encoder_ = PyramidalEncoderParams<T>::create(store_, "enc", ParamGroup::kEncoder, cfg.feat_dim,
                                                 cfg.enc_hidden, cfg.proj_dim, rng);
    attention_ = AttentionParams<T>::create(store_, "att", cfg.dec_hidden, cfg.proj_dim,
                                            cfg.att_dim, rng, cfg.conv_channels, cfg.conv_width);
    decoder_ = DecoderParams<T>::create(store_, "dec", cfg.vocab_size, cfg.dec_emb, cfg.proj_dim,
                                        cfg.dec_hidden, rng);
    if (cfg.kind != ModelKind::kBaseline) {
      const ParamGroup g = ParamGroup::kAugmenting;
      AugmentingEncoderParams<T> aug;
      aug.embedding = &store_.add("aug.embedding", g,
                                  uniform_init<T>(cfg.num_phonemes, cfg.phone_emb, rng));
      const bool psda = cfg.kind == ModelKind::kPsda;
      aug.layer = ProjectionBiLstmParams<T>::create(store_, "aug.layer0", g, cfg.phone_emb,
                                                    cfg.aug_hidden,
                                                    psda ? cfg.feat_dim : cfg.proj_dim,
                                                    /*tanh_output=*/!psda, rng);
      augmenting_ = aug;
    }
    if (cfg.init_scale != kInitScale) rescale_init(static_cast<T>(cfg.init_scale / kInitScale));
  }

  Seq2Seq(Seq2Seq&&) noexcept = default;
  Seq2Seq& operator=(Seq2Seq&&) noexcept = default;
  Seq2Seq(const Seq2Seq&) = delete;
  Seq2Seq& operator=(const Seq2Seq&) = delete;

  // Same architecture and parameter values.
  Seq2Seq clone() const {
    Seq2Seq copy(cfg_);
    copy.copy_values_from(*this);
    return copy;
  }

  void copy_values_from(const Seq2Seq& other) {
    for (Parameter<T>* p : store_.all()) p->value = other.store_.find(p->name)->value;
  }

  const ModelConfig& config() const { return cfg_; }
  ModelKind kind() const { return cfg_.kind; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  ParamPartition<T> partition() const {
    ParamPartition<T> part;
    for (ParamGroup g : kAllGroups) part.groups[static_cast<std::size_t>(g)] = store_.group(g);
    return part;
  }

  const PyramidalEncoderParams<T>& encoder() const { return encoder_; }
  const AttentionParams<T>& attention() const { return attention_; }
  const DecoderParams<T>& decoder() const { return decoder_; }
  const std::optional<AugmentingEncoderParams<T>>& augmenting() const { return augmenting_; }

  // L x D frames -> T_enc x P.
  Var<T> encode_speech(const Var<T>& frames) const {
    if (frames.cols() != cfg_.feat_dim) {
      throw DimensionError("encode_speech: frames " + shape_string(frames.value()) +
                           " for feature dim " + std::to_string(cfg_.feat_dim));
    }
    return pyramidal_encode(frames, encoder_);
  }

  // Augmenting encoder output: len(x^) x P for MMDA, len(x^) x D for PSDA.
  Var<T> augmenting_output(Tape<T>& tape, std::span<const int> phones) const {
    if (!augmenting_) throw ContractError("model has no augmenting encoder");
    if (phones.empty()) throw ContractError("empty augmenting sequence");
    Var<T> emb = embedding_lookup(tape.param(*augmenting_->embedding), phones);
    return projection_bilstm_layer(emb, augmenting_->layer);
  }

  // Teacher-forced decoding of `target` (sos ... eos) against encoder memory.
  Var<T> decoder_loss(const Var<T>& memory, std::span<const int> target) const {
    if (target.size() < 2) throw ContractError("target must hold at least sos and eos");
    if (target.front() != Vocab::kSos || target.back() != Vocab::kEos) {
      throw ContractError("target must start with sos and end with eos");
    }
    Tape<T>& tape = memory.tape();
    const std::size_t steps = target.size() - 1;
    const Eigen::Index hid = cfg_.dec_hidden;
    Var<T> emb = embedding_lookup(tape.param(*decoder_.embedding), target.first(steps));
    Var<T> h = tape.constant(Matrix<T>::Zero(1, hid));
    Var<T> c = tape.constant(Matrix<T>::Zero(1, hid));
    AttentionState<T> att = init_attention(memory, attention_);
    std::vector<Var<T>> hs;
    hs.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      AttentionOutput<T> a = location_attention_step(h, att, attention_);
      att.prev_alignment = a.alignment;
      LstmOutput<T> next = lstm_cell_step(
          concat_cols(slice_rows(emb, static_cast<Eigen::Index>(t), 1), a.context), h, c,
          decoder_.cell);
      h = next.h;
      c = next.c;
      hs.push_back(h);
    }
    Var<T> logits = matmul(concat_rows<T>(hs), tape.param(*decoder_.out_weight)) +
                    tape.param(*decoder_.out_bias);
    return nll_mean(log_softmax(logits), target.subspan(1));
  }

 private:
  // Same draws, wider range; forget-gate biases keep their constant.
  void rescale_init(T factor) {
    for (Parameter<T>* p : store_.all()) p->value *= factor;
    auto reset_forget = [](const LstmCellParams<T>& c) {
      c.bias->value.middleCols(c.hidden_dim, c.hidden_dim).setConstant(static_cast<T>(kForgetBias));
    };
    for (const auto& layer : encoder_.layers) {
      reset_forget(layer.forward);
      reset_forget(layer.backward);
    }
    reset_forget(decoder_.cell);
    if (augmenting_) {
      reset_forget(augmenting_->layer.forward);
      reset_forget(augmenting_->layer.backward);
    }
  }

  ModelConfig cfg_;
  ParamStore<T> store_;
  PyramidalEncoderParams<T> encoder_;
  AttentionParams<T> attention_;
  DecoderParams<T> decoder_;
  std::optional<AugmentingEncoderParams<T>> augmenting_;
};

// -log P(y | X) / |y| through encoder, attention and decoder.
template <typename T>
Var<T> asr_log_likelihood(Tape<T>& tape, const Seq2Seq<T>& model, const Matrix<T>& frames,
                          std::span<const int> target) {
  if (target.empty()) throw ContractError("asr_log_likelihood: empty target");
  Var<T> x = tape.constant(frames);
  return model.decoder_loss(model.encode_speech(x), target);
}

// -log P(y | x^) / |y| with the augmenting encoder replacing the acoustic one.
template <typename T>
Var<T> mmda_log_likelihood(Tape<T>& tape, const Seq2Seq<T>& model, std::span<const int> phones,
                           std::span<const int> target) {
  if (model.kind() != ModelKind::kMmda) {
    throw ConfigError("mmda_log_likelihood needs an MMDA model, got " +
                      std::string(model_kind_name(model.kind())));
  }
  if (phones.empty()) throw ContractError("mmda_log_likelihood: empty augmenting sequence");
  return model.decoder_loss(model.augmenting_output(tape, phones), target);
}

// Pseudo-speech (len(x^) x D) cascaded through the acoustic encoder.
template <typename T>
Var<T> pseudo_speech(Tape<T>& tape, const Seq2Seq<T>& model, std::span<const int> phones) {
  if (model.kind() != ModelKind::kPsda) {
    throw ConfigError("pseudo_speech needs a PSDA model, got " +
                      std::string(model_kind_name(model.kind())));
  }
  Var<T> out = model.augmenting_output(tape, phones);
  if (out.cols() != model.config().feat_dim) {
    throw ConfigError("pseudo-speech dim " + std::to_string(out.cols()) +
                      " differs from acoustic feature dim " +
                      std::to_string(model.config().feat_dim));
  }
  return out;
}

template <typename T>
Var<T> psda_log_likelihood(Tape<T>& tape, const Seq2Seq<T>& model, std::span<const int> phones,
                           std::span<const int> target) {
  if (phones.empty()) throw ContractError("psda_log_likelihood: empty augmenting sequence");
  return model.decoder_loss(model.encode_speech(pseudo_speech(tape, model, phones)), target);
}

// Augmenting-branch loss for whichever wiring the model uses.
template <typename T>
Var<T> augmenting_log_likelihood(Tape<T>& tape, const Seq2Seq<T>& model,
                                 std::span<const int> phones, std::span<const int> target) {
  return model.kind() == ModelKind::kPsda ? psda_log_likelihood(tape, model, phones, target)
                                          : mmda_log_likelihood(tape, model, phones, target);
}

// ---------------------------------------------------------------------------
// Character RNN language model over the ASR output vocabulary.

struct RnnLmConfig {
  int vocab_size = 0;
  int emb_dim = 64;
  int hidden_dim = 128;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static RnnLmConfig from_json(const nlohmann::json& j);
  bool operator==(const RnnLmConfig&) const = default;
};

template <typename T>
class RnnLm {
 public:
  explicit RnnLm(const RnnLmConfig& cfg) : cfg_(cfg) {
    if (cfg.vocab_size <= Vocab::kNumReserved) throw ConfigError("RNNLM vocabulary is empty");
    std::mt19937_64 rng(cfg.seed);
    const ParamGroup g = ParamGroup::kDecoder;
    embedding_ = &store_.add("lm.embedding", g, uniform_init<T>(cfg.vocab_size, cfg.emb_dim, rng));
    cell_ = LstmCellParams<T>::create(store_, "lm.lstm", g, cfg.emb_dim, cfg.hidden_dim, rng);
    out_weight_ =
        &store_.add("lm.out.weight", g, uniform_init<T>(cfg.hidden_dim, cfg.vocab_size, rng));
    out_bias_ = &store_.add("lm.out.bias", g, uniform_init<T>(1, cfg.vocab_size, rng));
  }

  RnnLm(RnnLm&&) noexcept = default;
  RnnLm& operator=(RnnLm&&) noexcept = default;

  const RnnLmConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  struct State {
    Var<T> h;
    Var<T> c;
  };

  State initial_state(Tape<T>& tape) const {
    return {tape.constant(Matrix<T>::Zero(1, cfg_.hidden_dim)),
            tape.constant(Matrix<T>::Zero(1, cfg_.hidden_dim))};
  }

  // Consumes `token`; returns the new state and 1 x V log-probabilities of
  // the next token.
  std::pair<State, Var<T>> step(Tape<T>& tape, const State& st, int token) const {
    const int ids[] = {token};
    Var<T> emb = embedding_lookup(tape.param(*embedding_), std::span<const int>(ids));
    LstmOutput<T> next = lstm_cell_step(emb, st.h, st.c, cell_);
    Var<T> logits = matmul(next.h, tape.param(*out_weight_)) + tape.param(*out_bias_);
    return {State{next.h, next.c}, log_softmax(logits)};
  }

  // Mean per-token negative log-likelihood of sos ... eos.
  Var<T> loss(Tape<T>& tape, std::span<const int> tokens) const {
    if (tokens.size() < 2) throw ContractError("RNNLM loss needs at least two tokens");
    const std::size_t steps = tokens.size() - 1;
    Var<T> emb = embedding_lookup(tape.param(*embedding_), tokens.first(steps));
    State st = initial_state(tape);
    std::vector<Var<T>> hs;
    for (std::size_t t = 0; t < steps; ++t) {
      LstmOutput<T> next =
          lstm_cell_step(slice_rows(emb, static_cast<Eigen::Index>(t), 1), st.h, st.c, cell_);
      st = {next.h, next.c};
      hs.push_back(next.h);
    }
    Var<T> logits = matmul(concat_rows<T>(hs), tape.param(*out_weight_)) + tape.param(*out_bias_);
    return nll_mean(log_softmax(logits), tokens.subspan(1));
  }

 private:
  RnnLmConfig cfg_;
  ParamStore<T> store_;
  Parameter<T>* embedding_ = nullptr;
  LstmCellParams<T> cell_;
  Parameter<T>* out_weight_ = nullptr;
  Parameter<T>* out_bias_ = nullptr;
};

// log P_LM(next | prefix). `prefix` starts with sos.
template <typename T>
double rnnlm_logprob(const RnnLm<T>& lm, std::span<const int> prefix, int next) {
  if (prefix.empty()) throw ContractError("rnnlm_logprob: empty prefix");
  const int vocab = lm.config().vocab_size;
  if (next < 0 || next >= vocab) {
    throw VocabError("rnnlm_logprob: token " + std::to_string(next) + " outside vocabulary of size " +
                     std::to_string(vocab));
  }
  Tape<T> tape;
  tape.set_grad_enabled(false);
  auto st = lm.initial_state(tape);
  Var<T> logp;
  for (int tok : prefix) std::tie(st, logp) = lm.step(tape, st, tok);
  return static_cast<double>(logp.value()(0, next));
}

}  // namespace mmda

#endif  // MMDA_MODEL_H_
