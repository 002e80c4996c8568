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

#include "mmda/training.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mmda/errors.h"

namespace mmda {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  const std::string v = trim(value);
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as a number");
  }
  return out;
}

std::vector<CorpusSpec> parse_languages(const std::string& value) {
  std::vector<CorpusSpec> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      out.push_back({"", item});
    } else {
      out.push_back({trim(item.substr(0, colon)), trim(item.substr(colon + 1))});
    }
  }
  return out;
}

void require_positive(const char* key, double v) {
  if (!(v > 0)) throw ConfigError(std::string(key) + " must be positive");
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "rho") {
    rho = parse_number<double>(key, value);
  } else if (key == "pretrain_batches") {
    pretrain_batches = parse_number<long>(key, value);
  } else if (key == "batch_size") {
    batch_size = parse_number<int>(key, value);
  } else if (key == "learning_rate") {
    learning_rate = parse_number<double>(key, value);
  } else if (key == "grad_clip") {
    grad_clip = parse_number<double>(key, value);
  } else if (key == "max_epochs") {
    max_epochs = parse_number<int>(key, value);
  } else if (key == "patience") {
    patience = parse_number<int>(key, value);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "mode") {
    try {
      mode = parse_model_kind(trim(value));
    } catch (const Error& e) {
      throw ConfigError(std::string("config key 'mode': ") + e.what());
    }
  } else if (key == "languages") {
    languages = parse_languages(value);
  } else if (key == "dev_manifest") {
    dev_manifest = trim(value);
  } else if (key == "aug_dir") {
    aug_dir = trim(value);
  } else if (key == "phone_emb") {
    phone_emb = parse_number<int>(key, value);
  } else if (key == "enc_hidden") {
    enc_hidden = parse_number<int>(key, value);
  } else if (key == "proj_dim") {
    proj_dim = parse_number<int>(key, value);
  } else if (key == "aug_hidden") {
    aug_hidden = parse_number<int>(key, value);
  } else if (key == "dec_emb") {
    dec_emb = parse_number<int>(key, value);
  } else if (key == "dec_hidden") {
    dec_hidden = parse_number<int>(key, value);
  } else if (key == "att_dim") {
    att_dim = parse_number<int>(key, value);
  } else if (key == "init_scale") {
    init_scale = parse_number<double>(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void TrainConfig::validate() const {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw ConfigError("rho must lie in the open interval (0,1), got " + std::to_string(rho));
  }
  if (pretrain_batches < 0) throw ConfigError("pretrain_batches must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  require_positive("learning_rate", learning_rate);
  require_positive("grad_clip", grad_clip);
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  for (int d : {phone_emb, enc_hidden, proj_dim, aug_hidden, dec_emb, dec_hidden, att_dim}) {
    if (d < 1) throw ConfigError("model dimensions must be >= 1");
  }
  require_positive("init_scale", init_scale);
}

ModelConfig TrainConfig::model_config(int vocab_size, int num_phonemes, int feat_dim) const {
  ModelConfig m;
  m.kind = mode;
  m.feat_dim = feat_dim;
  m.vocab_size = vocab_size;
  m.num_phonemes = mode == ModelKind::kBaseline ? 0 : num_phonemes;
  m.phone_emb = phone_emb;
  m.enc_hidden = enc_hidden;
  m.proj_dim = proj_dim;
  m.aug_hidden = aug_hidden;
  m.dec_emb = dec_emb;
  m.dec_hidden = dec_hidden;
  m.att_dim = att_dim;
  m.init_scale = init_scale;
  m.seed = seed;
  return m;
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json langs = nlohmann::json::array();
  for (const CorpusSpec& c : languages) langs.push_back({{"lang", c.lang}, {"manifest", c.manifest}});
  return {{"rho", rho},
          {"pretrain_batches", pretrain_batches},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"grad_clip", grad_clip},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"seed", seed},
          {"mode", std::string(model_kind_name(mode))},
          {"languages", langs},
          {"dev_manifest", dev_manifest},
          {"aug_dir", aug_dir},
          {"phone_emb", phone_emb},
          {"enc_hidden", enc_hidden},
          {"proj_dim", proj_dim},
          {"aug_hidden", aug_hidden},
          {"dec_emb", dec_emb},
          {"dec_hidden", dec_hidden},
          {"att_dim", att_dim},
          {"init_scale", init_scale}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config JSON must be an object");
  TrainConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "languages" && value.is_array()) {
      cfg.languages.clear();
      for (const auto& item : value) {
        if (item.is_string()) {
          auto parsed = parse_languages(item.get<std::string>());
          cfg.languages.insert(cfg.languages.end(), parsed.begin(), parsed.end());
        } else if (item.is_object()) {
          cfg.languages.push_back({item.value("lang", std::string()),
                                   item.at("manifest").get<std::string>()});
        } else {
          throw ConfigError("config key 'languages': entries must be strings or objects");
        }
      }
    } else if (value.is_string()) {
      cfg.set(key, value.get<std::string>());
    } else if (value.is_number() || value.is_boolean()) {
      cfg.set(key, value.dump());
    } else {
      throw ConfigError("config key '" + key + "': unsupported value " + value.dump());
    }
  }
  return cfg;
}

TrainConfig TrainConfig::parse(std::string_view text) {
  const std::string body = trim(text);
  if (!body.empty() && body.front() == '{') {
    try {
      return from_json(nlohmann::json::parse(body));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config JSON: ") + e.what());
    }
  }
  TrainConfig cfg;
  std::stringstream ss{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string_view task_name(Task t) { return t == Task::kSpeech ? "speech" : "augmenting"; }

std::string_view phase_name(Phase p) { return p == Phase::kPretrain ? "pretrain" : "main"; }

Task draw_task(std::mt19937_64& rng, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw ConfigError("rho must lie in the open interval (0,1), got " + std::to_string(rho));
  }
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return u < rho ? Task::kAugmenting : Task::kSpeech;
}

EpochSampler::EpochSampler(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) { shuffle(); }

void EpochSampler::shuffle() {
  order_.resize(n_);
  std::iota(order_.begin(), order_.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(epoch_)};
  std::mt19937_64 rng(seq);
  std::shuffle(order_.begin(), order_.end(), rng);
}

std::vector<std::size_t> EpochSampler::next_batch(std::size_t batch_size) {
  if (n_ == 0) throw ContractError("EpochSampler: empty corpus");
  if (batch_size == 0) throw ContractError("EpochSampler: batch size 0");
  if (pos_ >= n_) {
    ++epoch_;
    pos_ = 0;
    shuffle();
  }
  const std::size_t take = std::min(batch_size, n_ - pos_);
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                               order_.begin() + static_cast<std::ptrdiff_t>(pos_ + take));
  pos_ += take;
  return out;
}

void EpochSampler::restore(long epoch, std::size_t pos) {
  if (pos > n_) throw ContractError("EpochSampler: position beyond corpus size");
  epoch_ = epoch;
  pos_ = pos;
  shuffle();
}

std::size_t EpochSampler::batches_per_epoch(std::size_t batch_size) const {
  return (n_ + batch_size - 1) / batch_size;
}

MixedCorpus mix_corpora(std::vector<std::pair<std::string, std::vector<Utterance>>> corpora) {
  if (corpora.empty()) throw ConfigError("mix_corpora: no corpora given");
  MixedCorpus out;
  std::vector<Vocab> vocabs;
  Eigen::Index dim = -1;
  std::string dim_lang;
  for (auto& [lang, utts] : corpora) {
    std::vector<std::string> texts;
    for (Utterance& u : utts) {
      if (dim < 0) {
        dim = u.frames.cols();
        dim_lang = lang;
      } else if (u.frames.cols() != dim) {
        throw ConfigError("feature dim " + std::to_string(u.frames.cols()) + " in corpus '" + lang +
                          "' differs from dim " + std::to_string(dim) + " in corpus '" +
                          dim_lang + "'");
      }
      if (u.lang.empty()) u.lang = lang;
      texts.push_back(u.text);
      out.utterances.push_back(std::move(u));
    }
    vocabs.push_back(Vocab::from_texts(texts));
    out.langs.push_back(lang);
  }
  out.vocab = merge_vocabularies(vocabs);
  return out;
}

MixedCorpus mix_corpora(std::span<const CorpusSpec> corpora) {
  std::vector<std::pair<std::string, std::vector<Utterance>>> loaded;
  for (const CorpusSpec& c : corpora) loaded.emplace_back(c.lang, load_utterances(c.manifest));
  return mix_corpora(std::move(loaded));
}

std::vector<SpeechExample> make_speech_examples(std::span<const Utterance> utts,
                                                const Vocab& vocab) {
  std::vector<SpeechExample> out;
  out.reserve(utts.size());
  for (const Utterance& u : utts) out.push_back({u.id, u.lang, u.frames, vocab.encode(u.text)});
  return out;
}

std::vector<TextExample> make_text_examples(std::span<const AugmentingRecord> records,
                                            const Vocab& vocab) {
  std::vector<TextExample> out;
  out.reserve(records.size());
  for (const AugmentingRecord& r : records) {
    if (r.phoneme_ids.empty()) continue;
    out.push_back({r.id, r.phoneme_ids, vocab.encode(r.text)});
  }
  return out;
}

Adam::Adam(const ParamStore<float>& params, double lr) : lr_(lr) {
  for (const Parameter<float>* p : params.all()) {
    Slot s;
    s.m = Matrix<float>::Zero(p->value.rows(), p->value.cols());
    s.v = Matrix<float>::Zero(p->value.rows(), p->value.cols());
    slots_.emplace(p->name, std::move(s));
  }
}

void Adam::step(ParamStore<float>& params, const GroupMask& mask) {
  for (Parameter<float>* p : params.all()) {
    if (!mask.contains(p->group) || !p->touched) continue;
    Slot& s = slots_.at(p->name);
    ++s.steps;
    const auto b1 = static_cast<float>(kBeta1), b2 = static_cast<float>(kBeta2);
    s.m = b1 * s.m + (1.0f - b1) * p->grad;
    s.v = b2 * s.v + (1.0f - b2) * p->grad.cwiseProduct(p->grad);
    const double t = static_cast<double>(s.steps);
    const auto c1 = static_cast<float>(1.0 - std::pow(kBeta1, t));
    const auto c2 = static_cast<float>(1.0 - std::pow(kBeta2, t));
    const auto lr = static_cast<float>(lr_);
    const auto eps = static_cast<float>(kEps);
    p->value.array() -=
        lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps);
  }
}

double global_grad_norm(const ParamStore<float>& params) {
  double sq = 0.0;
  for (const Parameter<float>* p : params.all()) {
    if (p->touched) sq += p->grad.cast<double>().squaredNorm();
  }
  return std::sqrt(sq);
}

double clip_global_norm(ParamStore<float>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) throw DivergenceError("non-finite gradient norm");
  if (norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (Parameter<float>* p : params.all()) {
      if (p->touched) p->grad *= scale;
    }
  }
  return norm;
}

nlohmann::json TrainState::to_json() const {
  std::ostringstream rs;
  rs << rng;
  return {{"step", step},
          {"phase", std::string(phase_name(phase))},
          {"pretrain_done", pretrain_done},
          {"speech_batches", speech_batches},
          {"aug_batches", aug_batches},
          {"speech_epoch", speech_epoch},
          {"speech_pos", speech_pos},
          {"aug_epoch", aug_epoch},
          {"aug_pos", aug_pos},
          {"rng", rs.str()},
          {"best_dev_cer", best_dev_cer},
          {"epochs_since_best", epochs_since_best},
          {"dev_evals", dev_evals},
          {"finished", finished}};
}

TrainState TrainState::from_json(const nlohmann::json& j) {
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.contains(name)) throw LoadError(std::string("training state: missing field '") + name + "'");
    return j.at(name);
  };
  TrainState s;
  try {
    s.step = field("step").get<long>();
    const std::string phase = field("phase").get<std::string>();
    if (phase != "pretrain" && phase != "main") {
      throw LoadError("training state: bad field 'phase' = " + phase);
    }
    s.phase = phase == "pretrain" ? Phase::kPretrain : Phase::kMain;
    s.pretrain_done = field("pretrain_done").get<long>();
    s.speech_batches = field("speech_batches").get<long>();
    s.aug_batches = field("aug_batches").get<long>();
    s.speech_epoch = field("speech_epoch").get<long>();
    s.speech_pos = field("speech_pos").get<std::size_t>();
    s.aug_epoch = field("aug_epoch").get<long>();
    s.aug_pos = field("aug_pos").get<std::size_t>();
    std::istringstream rs(field("rng").get<std::string>());
    rs >> s.rng;
    if (!rs) throw LoadError("training state: bad field 'rng'");
    s.best_dev_cer = field("best_dev_cer").get<double>();
    s.epochs_since_best = field("epochs_since_best").get<int>();
    s.dev_evals = field("dev_evals").get<long>();
    s.finished = field("finished").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("training state: ") + e.what());
  }
  return s;
}

nlohmann::json StepRecord::to_json() const {
  return {{"step", step},
          {"phase", std::string(phase_name(phase))},
          {"task", std::string(task_name(task))},
          {"loss", loss},
          {"grad_norm", grad_norm}};
}

ErrorRates evaluate_transcriber(std::span<const Utterance> dev, const Transcriber& transcribe) {
  if (dev.empty()) throw ContractError("evaluate_dev: empty dev set");
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(dev.size());
  for (const Utterance& u : dev) pairs.emplace_back(u.text, transcribe(u));
  return corpus_cer_wer(pairs);
}

ErrorRates evaluate_dev(const Seq2Seq<float>& model, std::span<const Utterance> dev,
                        const Vocab& vocab, const DecodeConfig& cfg, const RnnLm<float>* lm) {
  return evaluate_transcriber(dev, [&](const Utterance& u) {
    const DecodeResult r = decode_utterance<float>(model, u.frames, lm, cfg);
    const std::vector<int> out = r.output();
    return vocab.decode(out);
  });
}

double augmenting_dev_loss(const Seq2Seq<float>& model, std::span<const TextExample> examples,
                           const DurationModel& dm, std::uint64_t seed) {
  if (examples.empty()) throw ContractError("augmenting_dev_loss: no examples");
  std::mt19937_64 rng(seed);
  double total = 0.0;
  for (const TextExample& ex : examples) {
    const std::vector<int> input = expand_durations(ex.phonemes, sample_durations(ex.phonemes, dm, rng));
    Tape<float> tape;
    tape.set_grad_enabled(false);
    total += augmenting_log_likelihood(tape, model, input, ex.target).scalar();
  }
  return total / static_cast<double>(examples.size());
}

void LmTrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  require_positive("learning_rate", learning_rate);
  require_positive("grad_clip", grad_clip);
}

std::vector<double> train_rnnlm(RnnLm<float>& lm, std::span<const std::vector<int>> sentences,
                                const LmTrainConfig& cfg,
                                const std::function<void(long, double)>& on_epoch) {
  cfg.validate();
  if (sentences.empty()) throw ContractError("train_rnnlm: no sentences");
  ParamStore<float>& params = lm.params();
  Adam adam(params, cfg.learning_rate);
  EpochSampler sampler(sentences.size(), cfg.seed);
  const GroupMask all = trainable_mask(TrainPhase::kMain);
  std::vector<double> epoch_loss;
  for (long e = 0; e < cfg.epochs; ++e) {
    double total = 0.0;
    do {
      const std::vector<std::size_t> batch = sampler.next_batch(static_cast<std::size_t>(cfg.batch_size));
      params.zero_grad();
      const auto weight = 1.0f / static_cast<float>(batch.size());
      for (std::size_t idx : batch) {
        Tape<float> tape;
        Var<float> loss = lm.loss(tape, sentences[idx]);
        if (!std::isfinite(loss.scalar())) {
          throw DivergenceError("non-finite RNNLM loss in epoch " + std::to_string(e) +
                                " on sentence " + std::to_string(idx));
        }
        total += loss.scalar();
        tape.backward(loss, weight);
      }
      clip_global_norm(params, cfg.grad_clip);
      adam.step(params, all);
    } while (sampler.position() < sampler.size());
    epoch_loss.push_back(total / static_cast<double>(sentences.size()));
    if (on_epoch) on_epoch(e, epoch_loss.back());
  }
  return epoch_loss;
}

Trainer::Trainer(Seq2Seq<float>& model, const TrainConfig& cfg, std::vector<SpeechExample> speech,
                 std::vector<TextExample> text, DurationModel durations, std::vector<Utterance> dev,
                 const Vocab* vocab)
    : model_(model),
      cfg_(cfg),
      speech_(std::move(speech)),
      text_(std::move(text)),
      durations_(durations),
      dev_(std::move(dev)),
      vocab_(vocab),
      adam_(model.params(), cfg.learning_rate) {
  cfg_.validate();
  if (model.kind() != cfg_.mode) {
    throw ConfigError("trainer mode " + std::string(model_kind_name(cfg_.mode)) +
                      " does not match model kind " + std::string(model_kind_name(model.kind())));
  }
  if (speech_.empty()) throw ConfigError("no speech training utterances");
  const bool augmenting = cfg_.mode != ModelKind::kBaseline;
  if (augmenting && text_.empty()) throw ConfigError("no augmenting sentences for " +
                                                     std::string(model_kind_name(cfg_.mode)));
  if (!dev_.empty() && vocab_ == nullptr) throw ContractError("dev evaluation needs a vocabulary");
  std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32),
                    7u};
  state_.rng.seed(seq);
  if (!augmenting || cfg_.pretrain_batches == 0) state_.phase = Phase::kMain;
  sync_samplers();
}

void Trainer::sync_samplers() {
  speech_sampler_ = EpochSampler(speech_.size(), cfg_.seed);
  speech_sampler_.restore(state_.speech_epoch, state_.speech_pos);
  if (!text_.empty()) {
    aug_sampler_ = EpochSampler(text_.size(), cfg_.seed + 0x9E3779B97F4A7C15ull);
    aug_sampler_.restore(state_.aug_epoch, state_.aug_pos);
  }
}

long Trainer::speech_budget() const {
  return static_cast<long>(cfg_.max_epochs) *
         static_cast<long>(speech_sampler_.batches_per_epoch(static_cast<std::size_t>(cfg_.batch_size)));
}

TrainPhase Trainer::mask_phase(Phase phase) const {
  if (phase == Phase::kMain) return TrainPhase::kMain;
  return cfg_.mode == ModelKind::kPsda ? TrainPhase::kPretrainPsda : TrainPhase::kPretrainMmda;
}

std::vector<std::size_t> Trainer::next_batch(Task task) {
  const auto b = static_cast<std::size_t>(cfg_.batch_size);
  if (task == Task::kSpeech) {
    std::vector<std::size_t> batch = speech_sampler_.next_batch(b);
    state_.speech_epoch = speech_sampler_.epoch();
    state_.speech_pos = speech_sampler_.position();
    return batch;
  }
  if (text_.empty()) throw ContractError("augmenting batch requested without augmenting data");
  std::vector<std::size_t> batch = aug_sampler_.next_batch(b);
  state_.aug_epoch = aug_sampler_.epoch();
  state_.aug_pos = aug_sampler_.position();
  return batch;
}

StepRecord Trainer::train_step(Task task, std::span<const std::size_t> batch, Phase phase) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  if (task == Task::kAugmenting && model_.kind() == ModelKind::kBaseline) {
    throw ContractError("train_step: augmenting batch for a model without augmenting encoder");
  }
  ParamStore<float>& params = model_.params();
  params.zero_grad();
  const auto weight = 1.0f / static_cast<float>(batch.size());
  double total = 0.0;
  for (std::size_t idx : batch) {
    Tape<float> tape;
    Var<float> loss;
    std::string id;
    if (task == Task::kSpeech) {
      const SpeechExample& ex = speech_.at(idx);
      id = ex.id;
      loss = asr_log_likelihood(tape, model_, ex.frames, ex.target);
    } else {
      const TextExample& ex = text_.at(idx);
      id = ex.id;
      const std::vector<int> input =
          expand_durations(ex.phonemes, sample_durations(ex.phonemes, durations_, state_.rng));
      loss = augmenting_log_likelihood(tape, model_, input, ex.target);
    }
    const double value = loss.scalar();
    if (!std::isfinite(value)) {
      throw DivergenceError("non-finite loss at step " + std::to_string(state_.step + 1) + " on " +
                            std::string(task_name(task)) + " utterance " + id);
    }
    total += value;
    tape.backward(loss, weight);
  }
  StepRecord rec;
  rec.phase = phase;
  rec.task = task;
  rec.loss = total / static_cast<double>(batch.size());
  rec.grad_norm = clip_global_norm(params, cfg_.grad_clip);
  adam_.step(params, trainable_mask(mask_phase(phase)));
  rec.step = ++state_.step;
  return rec;
}

StepRecord Trainer::step_main(Task task) {
  const std::vector<std::size_t> batch = next_batch(task);
  StepRecord rec = train_step(task, batch, Phase::kMain);
  if (task == Task::kSpeech) {
    ++state_.speech_batches;
  } else {
    ++state_.aug_batches;
  }
  return rec;
}

std::optional<StepRecord> Trainer::advance() {
  if (state_.finished) return std::nullopt;
  if (state_.phase == Phase::kPretrain) {
    const std::vector<std::size_t> batch = next_batch(Task::kAugmenting);
    StepRecord rec = train_step(Task::kAugmenting, batch, Phase::kPretrain);
    ++state_.aug_batches;
    if (++state_.pretrain_done >= cfg_.pretrain_batches) state_.phase = Phase::kMain;
    return rec;
  }
  if (state_.speech_batches >= speech_budget()) {
    finish();
    return std::nullopt;
  }
  const Task task = cfg_.mode == ModelKind::kBaseline ? Task::kSpeech
                                                      : draw_task(state_.rng, cfg_.rho);
  StepRecord rec = step_main(task);
  if (task == Task::kSpeech && speech_sampler_.position() == speech_sampler_.size() &&
      !dev_.empty()) {
    evaluate_and_track();
  }
  if (!state_.finished && state_.speech_batches >= speech_budget()) finish();
  return rec;
}

void Trainer::run(const std::function<void(const StepRecord&)>& on_step) {
  while (std::optional<StepRecord> rec = advance()) {
    if (on_step) on_step(*rec);
  }
}

void Trainer::evaluate_and_track() {
  std::size_t longest = 1;
  for (const Utterance& u : dev_) longest = std::max(longest, utf8_length(u.text));
  DecodeConfig greedy;
  greedy.beam_size = 1;
  greedy.lm_weight = 0.0;
  greedy.max_output_len = static_cast<int>(2 * longest + 10);
  const double cer = evaluate_dev(model_, dev_, *vocab_, greedy).cer;
  DevRecord rec{state_.step, state_.speech_epoch, cer, cer < state_.best_dev_cer};
  ++state_.dev_evals;
  if (rec.improved) {
    state_.best_dev_cer = cer;
    state_.epochs_since_best = 0;
    best_.clear();
    for (const Parameter<float>* p : model_.params().all()) best_.emplace(p->name, p->value);
  } else if (++state_.epochs_since_best >= cfg_.patience) {
    dev_history_.push_back(rec);
    finish();
    return;
  }
  dev_history_.push_back(rec);
}

void Trainer::finish() {
  if (!best_.empty()) {
    for (Parameter<float>* p : model_.params().all()) p->value = best_.at(p->name);
  }
  state_.finished = true;
}

}  // namespace mmda
