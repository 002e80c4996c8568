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

// Training engine: pretraining on augmenting batches, then main training
// where each step draws a speech or augmenting batch.
//
// Optimizer: Adam (lr 1e-3, beta1 0.9, beta2 0.999, eps 1e-8) with a step
// count per parameter. A parameter is updated only when its group is allowed
// in the current phase and the step produced a gradient for it; otherwise its
// value, moments and step count stay untouched.

#ifndef MMDA_TRAINING_H_
#define MMDA_TRAINING_H_

#include <cstdint>
#include <functional>
#include <limits>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mmda/augmentation.h"
#include "mmda/decoding.h"
#include "mmda/io.h"
#include "mmda/metrics.h"
#include "mmda/model.h"

namespace mmda {

struct CorpusSpec {
  std::string lang;
  std::string manifest;
  bool operator==(const CorpusSpec&) const = default;
};

struct TrainConfig {
  double rho = 0.5;  // P(augmenting batch) per main step
  long pretrain_batches = 2000;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double grad_clip = 5.0;
  int max_epochs = 20;
  int patience = 3;
  std::uint64_t seed = 1;
  ModelKind mode = ModelKind::kMmda;
  std::vector<CorpusSpec> languages;
  std::string dev_manifest;
  std::string aug_dir;

  int phone_emb = 64;
  int enc_hidden = 128;
  int proj_dim = 128;
  int aug_hidden = 128;
  int dec_emb = 64;
  int dec_hidden = 128;
  int att_dim = 128;
  double init_scale = kInitScale;

  // Sets one field from its textual form. Unknown keys and malformed values
  // raise ConfigError.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  ModelConfig model_config(int vocab_size, int num_phonemes, int feat_dim) const;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  // JSON object or flat "key = value" lines ('#' starts a comment).
  static TrainConfig parse(std::string_view text);
  static TrainConfig load(const std::string& path);
};

enum class Task : std::uint8_t { kSpeech, kAugmenting };

std::string_view task_name(Task t);

// Augmenting with probability rho.
Task draw_task(std::mt19937_64& rng, double rho);

// Visits 0..n-1 once per epoch in an order fixed by (seed, epoch).
class EpochSampler {
 public:
  EpochSampler() = default;
  EpochSampler(std::size_t n, std::uint64_t seed);

  // Up to `batch_size` indices; a batch never crosses an epoch boundary.
  std::vector<std::size_t> next_batch(std::size_t batch_size);

  std::size_t size() const { return n_; }
  long epoch() const { return epoch_; }
  std::size_t position() const { return pos_; }
  void restore(long epoch, std::size_t pos);
  std::size_t batches_per_epoch(std::size_t batch_size) const;

 private:
  void shuffle();

  std::size_t n_ = 0;
  std::uint64_t seed_ = 0;
  long epoch_ = 0;
  std::size_t pos_ = 0;
  std::vector<std::size_t> order_;
};

struct SpeechExample {
  std::string id;
  std::string lang;
  Matrix<float> frames;
  std::vector<int> target;  // sos ... eos
};

struct TextExample {
  std::string id;
  std::vector<int> phonemes;  // not duration-expanded
  std::vector<int> target;
};

struct MixedCorpus {
  Vocab vocab;
  std::vector<Utterance> utterances;  // concatenation in corpus order
  std::vector<std::string> langs;
};

// Loads every corpus and merges their vocabularies. Feature dims must agree.
MixedCorpus mix_corpora(std::span<const CorpusSpec> corpora);
MixedCorpus mix_corpora(std::vector<std::pair<std::string, std::vector<Utterance>>> corpora);

std::vector<SpeechExample> make_speech_examples(std::span<const Utterance> utts,
                                                const Vocab& vocab);
std::vector<TextExample> make_text_examples(std::span<const AugmentingRecord> records,
                                            const Vocab& vocab);

class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  struct Slot {
    Matrix<float> m;
    Matrix<float> v;
    long steps = 0;
  };

  Adam() = default;
  Adam(const ParamStore<float>& params, double lr);

  void step(ParamStore<float>& params, const GroupMask& mask);

  double learning_rate() const { return lr_; }
  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }

 private:
  double lr_ = 1e-3;
  std::map<std::string, Slot> slots_;
};

// L2 norm over every touched gradient.
double global_grad_norm(const ParamStore<float>& params);
// Scales touched gradients so the global norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_global_norm(ParamStore<float>& params, double max_norm);

enum class Phase : std::uint8_t { kPretrain, kMain };

std::string_view phase_name(Phase p);

struct TrainState {
  long step = 0;  // updates so far, both phases
  Phase phase = Phase::kPretrain;
  long pretrain_done = 0;
  long speech_batches = 0;
  long aug_batches = 0;
  long speech_epoch = 0;
  std::size_t speech_pos = 0;
  long aug_epoch = 0;
  std::size_t aug_pos = 0;
  std::mt19937_64 rng;
  double best_dev_cer = std::numeric_limits<double>::max();
  int epochs_since_best = 0;
  long dev_evals = 0;
  bool finished = false;

  nlohmann::json to_json() const;
  static TrainState from_json(const nlohmann::json& j);
  bool operator==(const TrainState&) const = default;
};

struct StepRecord {
  long step = 0;
  Phase phase = Phase::kPretrain;
  Task task = Task::kSpeech;
  double loss = 0.0;
  double grad_norm = 0.0;

  nlohmann::json to_json() const;
};

struct DevRecord {
  long step = 0;
  long epoch = 0;
  double dev_cer = 0.0;
  bool improved = false;
};

// Transcribes an utterance; used to score arbitrary systems.
using Transcriber = std::function<std::string(const Utterance&)>;

ErrorRates evaluate_transcriber(std::span<const Utterance> dev, const Transcriber& transcribe);

// Greedy or beam decoding of every dev utterance, pooled CER.
ErrorRates evaluate_dev(const Seq2Seq<float>& model, std::span<const Utterance> dev,
                        const Vocab& vocab, const DecodeConfig& cfg, const RnnLm<float>* lm = nullptr);

// Mean augmenting-branch loss over `examples` with durations drawn from
// `seed`, identical for every model evaluated with the same seed.
double augmenting_dev_loss(const Seq2Seq<float>& model, std::span<const TextExample> examples,
                           const DurationModel& dm, std::uint64_t seed);

struct LmTrainConfig {
  int batch_size = 16;
  int epochs = 5;
  double learning_rate = 1e-3;
  double grad_clip = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// Trains on sos ... eos sequences; returns the mean loss of each epoch.
std::vector<double> train_rnnlm(RnnLm<float>& lm, std::span<const std::vector<int>> sentences,
                                const LmTrainConfig& cfg,
                                const std::function<void(long, double)>& on_epoch = {});

class Trainer {
 public:
  Trainer(Seq2Seq<float>& model, const TrainConfig& cfg, std::vector<SpeechExample> speech,
          std::vector<TextExample> text, DurationModel durations, std::vector<Utterance> dev = {},
          const Vocab* vocab = nullptr);

  // One update on an explicit batch. Zero grads, forward, backward,
  // clip, update.
  StepRecord train_step(Task task, std::span<const std::size_t> batch, Phase phase);

  // Next scheduled unit of work: a pretraining step, or a main step followed
  // by a dev evaluation when it closes a speech epoch. Returns nothing once
  // training has finished.
  std::optional<StepRecord> advance();

  // Main-phase step with a fixed task, bypassing draw_task.
  StepRecord step_main(Task task);

  // Runs the schedule to completion.
  void run(const std::function<void(const StepRecord&)>& on_step = {});

  bool done() const { return state_.finished; }
  long speech_budget() const;

  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }
  Adam& optimizer() { return adam_; }
  const Adam& optimizer() const { return adam_; }
  const TrainConfig& config() const { return cfg_; }
  Seq2Seq<float>& model() { return model_; }
  const std::vector<DevRecord>& dev_history() const { return dev_history_; }

  // Parameters at the best dev CER so far (empty before the first eval).
  std::map<std::string, Matrix<float>>& best_params() { return best_; }
  const std::map<std::string, Matrix<float>>& best_params() const { return best_; }

  // Aligns samplers with the state after a restore.
  void sync_samplers();

 private:
  TrainPhase mask_phase(Phase phase) const;
  std::vector<std::size_t> next_batch(Task task);
  void evaluate_and_track();
  void finish();

  Seq2Seq<float>& model_;
  TrainConfig cfg_;
  std::vector<SpeechExample> speech_;
  std::vector<TextExample> text_;
  DurationModel durations_;
  std::vector<Utterance> dev_;
  const Vocab* vocab_;
  Adam adam_;
  TrainState state_;
  EpochSampler speech_sampler_;
  EpochSampler aug_sampler_;
  std::map<std::string, Matrix<float>> best_;
  std::vector<DevRecord> dev_history_;
};

}  // namespace mmda

#endif  // MMDA_TRAINING_H_
