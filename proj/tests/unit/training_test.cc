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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "mmda/errors.h"
#include "mmda/training.h"
#include "test_util.h"

namespace mmda {
namespace {

using testing::random_matrix;
using testing::random_target;
using testing::tiny_config;

TEST(DrawTaskTest, FractionsWithinThreeSigma) {
  for (double rho : {0.1, 0.2, 0.5}) {
    std::mt19937_64 rng(42);
    const int n = 10000;
    int aug = 0;
    for (int i = 0; i < n; ++i) aug += draw_task(rng, rho) == Task::kAugmenting;
    const double sigma = std::sqrt(n * rho * (1 - rho));
    EXPECT_LE(std::abs(aug - n * rho), 3 * sigma) << rho;
  }
}

TEST(DrawTaskTest, DeterministicGivenSeed) {
  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(draw_task(a, 0.3), draw_task(b, 0.3));
}

TEST(DrawTaskTest, RhoOutsideOpenIntervalIsAConfigError) {
  std::mt19937_64 rng(1);
  for (double rho : {0.0, 1.0, 1.5, -0.2, std::nan("")}) {
    EXPECT_THROW(draw_task(rng, rho), ConfigError) << rho;
  }
}

TEST(EpochSamplerTest, EachEpochIsAPermutation) {
  EpochSampler s(10, 3);
  std::vector<std::vector<std::size_t>> epochs(3);
  for (int e = 0; e < 3; ++e) {
    while (epochs[static_cast<std::size_t>(e)].size() < 10) {
      const std::vector<std::size_t> b = s.next_batch(4);
      EXPECT_LE(b.size(), 4u);
      EXPECT_EQ(s.epoch(), e);
      epochs[static_cast<std::size_t>(e)].insert(epochs[static_cast<std::size_t>(e)].end(),
                                                 b.begin(), b.end());
    }
    std::vector<std::size_t> sorted = epochs[static_cast<std::size_t>(e)];
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> ids(10);
    std::iota(ids.begin(), ids.end(), 0);
    EXPECT_EQ(sorted, ids);
  }
  EXPECT_NE(epochs[0], epochs[1]);
  EXPECT_EQ(s.batches_per_epoch(4), 3u);
}

TEST(EpochSamplerTest, RestoreContinuesTheSameStream) {
  EpochSampler a(13, 8);
  for (int i = 0; i < 7; ++i) a.next_batch(3);
  EpochSampler b(13, 8);
  b.restore(a.epoch(), a.position());
  for (int i = 0; i < 20; ++i) EXPECT_EQ(a.next_batch(3), b.next_batch(3));
  EXPECT_THROW(b.restore(0, 14), ContractError);
}

std::vector<Utterance> fake_utts(const std::string& lang, int n, int dim, const std::string& text) {
  std::vector<Utterance> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({lang + std::to_string(i), Matrix<float>::Constant(3, dim, 0.5f), text, ""});
  }
  return out;
}

TEST(MixCorporaTest, MinorityFractionIsExactPerEpoch) {
  MixedCorpus mc = mix_corpora({{"it", fake_utts("it", 900, 4, "ciao")},
                                {"de", fake_utts("de", 100, 4, "hallo")}});
  ASSERT_EQ(mc.utterances.size(), 1000u);
  EpochSampler s(mc.utterances.size(), 1);
  int minority = 0, seen = 0;
  while (seen < 1000) {
    for (std::size_t i : s.next_batch(7)) {
      minority += mc.utterances[i].lang == "de";
      ++seen;
    }
  }
  EXPECT_EQ(minority, 100);
  for (char32_t c : utf8_decode("ciaohl")) EXPECT_TRUE(mc.vocab.contains(c));
}

TEST(MixCorporaTest, FeatureDimMismatchNamesBothCorpora) {
  try {
    mix_corpora({{"it", fake_utts("it", 2, 4, "a")}, {"de", fake_utts("de", 2, 5, "b")}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("it"), std::string::npos) << msg;
    EXPECT_NE(msg.find("de"), std::string::npos) << msg;
  }
  EXPECT_THROW(mix_corpora(std::vector<std::pair<std::string, std::vector<Utterance>>>{}),
               ConfigError);
}

TEST(TrainConfigTest, KeyValueAndJsonForms) {
  const TrainConfig kv = TrainConfig::parse(
      "# comment\nrho = 0.2\npretrain_batches=50\nmode = psda\nlanguages = it:a.jsonl,de:b.jsonl\n");
  EXPECT_DOUBLE_EQ(kv.rho, 0.2);
  EXPECT_EQ(kv.pretrain_batches, 50);
  EXPECT_EQ(kv.mode, ModelKind::kPsda);
  ASSERT_EQ(kv.languages.size(), 2u);
  EXPECT_EQ(kv.languages[1], (CorpusSpec{"de", "b.jsonl"}));
  const TrainConfig js = TrainConfig::parse(kv.to_json().dump());
  EXPECT_EQ(js.to_json(), kv.to_json());
  EXPECT_THROW(TrainConfig::parse("bogus = 1\n"), ConfigError);
  EXPECT_THROW(TrainConfig::parse("rho = abc\n"), ConfigError);
  EXPECT_THROW(TrainConfig::parse("just words\n"), ConfigError);
}

TEST(TrainConfigTest, RhoBoundIsNamed) {
  TrainConfig c;
  c.rho = 1.5;
  try {
    c.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("(0,1)"), std::string::npos);
  }
  c.rho = 0.5;
  c.pretrain_batches = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(AdamTest, OneStepMatchesClosedForm) {
  ParamStore<float> store;
  Parameter<float>& p = store.add("w", ParamGroup::kDecoder, Matrix<float>::Constant(1, 3, 1.0f));
  p.grad = (Matrix<float>(1, 3) << 0.5f, -2.0f, 0.0f).finished();
  p.touched = true;
  Adam adam(store, 1e-3);
  adam.step(store, trainable_mask(TrainPhase::kMain));
  // First step: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
  for (int k = 0; k < 3; ++k) {
    const double g = k == 0 ? 0.5 : (k == 1 ? -2.0 : 0.0);
    EXPECT_NEAR(p.value(0, k), 1.0 - 1e-3 * g / (std::abs(g) + 1e-8), 1e-7);
  }
  EXPECT_EQ(adam.slots().at("w").steps, 1);
}

TEST(AdamTest, SkipsUntouchedAndMaskedParameters) {
  ParamStore<float> store;
  Parameter<float>& enc = store.add("enc", ParamGroup::kEncoder, Matrix<float>::Ones(2, 2));
  Parameter<float>& dec = store.add("dec", ParamGroup::kDecoder, Matrix<float>::Ones(2, 2));
  Adam adam(store, 1e-3);
  enc.grad.setConstant(1.0f);
  enc.touched = true;
  adam.step(store, trainable_mask(TrainPhase::kPretrainMmda));
  EXPECT_EQ(enc.value, Matrix<float>::Ones(2, 2));
  EXPECT_EQ(dec.value, Matrix<float>::Ones(2, 2));
  EXPECT_EQ(adam.slots().at("enc").steps, 0);
  EXPECT_EQ(adam.slots().at("dec").steps, 0);
  EXPECT_TRUE(adam.slots().at("enc").m.isZero(0));
}

TEST(ClipTest, PostClipNormIsBounded) {
  ParamStore<float> store;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 4; ++i) {
    Parameter<float>& p = store.add("p" + std::to_string(i), ParamGroup::kDecoder,
                                    Matrix<float>::Zero(3, 3));
    p.grad = random_matrix<float>(3, 3, rng, 10.0);
    p.touched = true;
  }
  const double before = clip_global_norm(store, 0.01);
  EXPECT_GT(before, 0.01);
  EXPECT_LE(global_grad_norm(store), 0.01 + 1e-6);
  store.at("p0").grad(0, 0) = std::nanf("");
  EXPECT_THROW(clip_global_norm(store, 1.0), DivergenceError);
}

TEST(TrainStateTest, JsonRoundTrip) {
  TrainState s;
  s.step = 12;
  s.phase = Phase::kMain;
  s.pretrain_done = 5;
  s.speech_batches = 4;
  s.aug_batches = 8;
  s.speech_pos = 3;
  s.rng.seed(99);
  s.rng.discard(17);
  s.best_dev_cer = 0.25;
  s.dev_evals = 2;
  EXPECT_EQ(TrainState::from_json(s.to_json()), s);
  nlohmann::json j = s.to_json();
  j.erase("rng");
  EXPECT_THROW(TrainState::from_json(j), LoadError);
}

// Small speech and text sets over the tiny model dims (D=3, V=7, 5 phonemes).
class TrainerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 6; ++i) {
      speech_.push_back({"s" + std::to_string(i), "toy", random_matrix<float>(8 + i, 3, rng),
                         random_target(3, 7, rng)});
      text_.push_back({"t" + std::to_string(i), {2, 3, 4, 1, 2}, random_target(3, 7, rng)});
    }
  }

  TrainConfig config(ModelKind mode, long pretrain) const {
    TrainConfig c;
    c.mode = mode;
    c.pretrain_batches = pretrain;
    c.batch_size = 2;
    c.max_epochs = 2;
    c.seed = 4;
    return c;
  }

  static std::map<std::string, Matrix<float>> snapshot(const Seq2Seq<float>& m, ParamGroup g) {
    std::map<std::string, Matrix<float>> out;
    for (const Parameter<float>* p : m.params().group(g)) out.emplace(p->name, p->value);
    return out;
  }

  std::vector<SpeechExample> speech_;
  std::vector<TextExample> text_;
  DurationModel dm_{2.0, 0.0};
};

TEST_F(TrainerTest, ZeroPretrainLeavesParametersUnchanged) {
  Seq2Seq<float> model(tiny_config(ModelKind::kMmda));
  Seq2Seq<float> init = model.clone();
  Trainer tr(model, config(ModelKind::kMmda, 0), speech_, text_, dm_);
  EXPECT_EQ(tr.state().phase, Phase::kMain);
  EXPECT_EQ(tr.state().step, 0);
  for (const Parameter<float>* p : model.params().all()) {
    EXPECT_EQ(p->value, init.params().find(p->name)->value);
  }
}

TEST_F(TrainerTest, MmdaPretrainFreezesTheAcousticEncoder) {
  Seq2Seq<float> model(tiny_config(ModelKind::kMmda));
  const auto enc = snapshot(model, ParamGroup::kEncoder);
  const auto att = snapshot(model, ParamGroup::kAttention);
  Trainer tr(model, config(ModelKind::kMmda, 5), speech_, text_, dm_);
  for (int i = 0; i < 5; ++i) ASSERT_TRUE(tr.advance());
  EXPECT_EQ(snapshot(model, ParamGroup::kEncoder), enc);
  EXPECT_NE(snapshot(model, ParamGroup::kAttention), att);
}

TEST_F(TrainerTest, PsdaPretrainUpdatesTheAcousticEncoder) {
  Seq2Seq<float> model(tiny_config(ModelKind::kPsda));
  const auto enc = snapshot(model, ParamGroup::kEncoder);
  Trainer tr(model, config(ModelKind::kPsda, 3), speech_, text_, dm_);
  for (int i = 0; i < 3; ++i) ASSERT_TRUE(tr.advance());
  EXPECT_NE(snapshot(model, ParamGroup::kEncoder), enc);
}

TEST_F(TrainerTest, PhaseSwitchesOnceAtPretrainBudget) {
  Seq2Seq<float> model(tiny_config(ModelKind::kMmda));
  Trainer tr(model, config(ModelKind::kMmda, 7), speech_, text_, dm_);
  int switches = 0;
  Phase last = tr.state().phase;
  while (std::optional<StepRecord> rec = tr.advance()) {
    if (rec->step <= 7) {
      EXPECT_EQ(rec->phase, Phase::kPretrain);
      EXPECT_EQ(rec->task, Task::kAugmenting);
      EXPECT_EQ(tr.state().speech_batches, 0);
    } else {
      EXPECT_EQ(rec->phase, Phase::kMain);
    }
    if (tr.state().phase != last) {
      ++switches;
      EXPECT_EQ(tr.state().step, 7);
      last = tr.state().phase;
    }
  }
  EXPECT_EQ(switches, 1);
  EXPECT_EQ(tr.state().speech_batches, tr.speech_budget());
  EXPECT_EQ(tr.speech_budget(), 6);
}

TEST_F(TrainerTest, SpeechStepLeavesAugmentingEncoderAndSlotsIdentical) {
  Seq2Seq<float> model(tiny_config(ModelKind::kPsda));
  Trainer tr(model, config(ModelKind::kPsda, 0), speech_, text_, dm_);
  tr.step_main(Task::kAugmenting);
  const auto da = snapshot(model, ParamGroup::kAugmenting);
  std::map<std::string, Adam::Slot> slots;
  for (const Parameter<float>* p : model.params().group(ParamGroup::kAugmenting)) {
    slots.emplace(p->name, tr.optimizer().slots().at(p->name));
  }
  for (int i = 0; i < 3; ++i) tr.step_main(Task::kSpeech);
  EXPECT_EQ(snapshot(model, ParamGroup::kAugmenting), da);
  for (const auto& [name, s] : slots) {
    const Adam::Slot& now = tr.optimizer().slots().at(name);
    EXPECT_EQ(now.m, s.m);
    EXPECT_EQ(now.v, s.v);
    EXPECT_EQ(now.steps, s.steps);
  }
}

TEST_F(TrainerTest, OverfitsOneBatch) {
  for (ModelKind kind : {ModelKind::kBaseline, ModelKind::kPsda}) {
    Seq2Seq<float> model(tiny_config(kind));
    TrainConfig cfg = config(kind, 0);
    Trainer tr(model, cfg, speech_, text_, dm_);
    const std::vector<std::size_t> batch{0, 1};
    const Task task = kind == ModelKind::kBaseline ? Task::kSpeech : Task::kAugmenting;
    std::vector<double> losses;
    for (int i = 0; i < 51; ++i) losses.push_back(tr.train_step(task, batch, Phase::kMain).loss);
    int decreases = 0;
    for (std::size_t i = 1; i < losses.size(); ++i) {
      ASSERT_TRUE(std::isfinite(losses[i]));
      decreases += losses[i] < losses[i - 1];
    }
    EXPECT_GE(decreases, 45) << model_kind_name(kind);
  }
}

TEST_F(TrainerTest, MainPhaseTaskCountsAreBinomial) {
  Seq2Seq<float> model(tiny_config(ModelKind::kMmda));
  TrainConfig cfg = config(ModelKind::kMmda, 0);
  cfg.rho = 0.2;
  cfg.batch_size = 1;
  cfg.max_epochs = 200;
  Trainer tr(model, cfg, speech_, text_, dm_);
  long aug = 0, total = 0;
  tr.run([&](const StepRecord& r) {
    aug += r.task == Task::kAugmenting;
    ++total;
  });
  EXPECT_EQ(total - aug, 1200);
  const double sigma = std::sqrt(total * 0.2 * 0.8);
  EXPECT_LE(std::abs(static_cast<double>(aug) - 0.2 * static_cast<double>(total)), 3 * sigma);
}

TEST_F(TrainerTest, NonFiniteLossNamesTheUtterance) {
  Seq2Seq<float> model(tiny_config(ModelKind::kBaseline));
  model.params().at("dec.out.bias").value(0, 3) = std::nanf("");
  Trainer tr(model, config(ModelKind::kBaseline, 0), speech_, text_, dm_);
  try {
    tr.train_step(Task::kSpeech, std::vector<std::size_t>{4}, Phase::kMain);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("s4"), std::string::npos) << e.what();
  }
}

TEST_F(TrainerTest, RejectsInconsistentSetups) {
  Seq2Seq<float> model(tiny_config(ModelKind::kMmda));
  EXPECT_THROW(Trainer(model, config(ModelKind::kPsda, 0), speech_, text_, dm_), ConfigError);
  EXPECT_THROW(Trainer(model, config(ModelKind::kMmda, 0), speech_, {}, dm_), ConfigError);
  EXPECT_THROW(Trainer(model, config(ModelKind::kMmda, 0), {}, text_, dm_), ConfigError);
  Seq2Seq<float> base(tiny_config(ModelKind::kBaseline));
  Trainer tr(base, config(ModelKind::kBaseline, 100), speech_, {}, dm_);
  EXPECT_EQ(tr.state().phase, Phase::kMain);
  EXPECT_THROW(tr.step_main(Task::kAugmenting), ContractError);
}

TEST_F(TrainerTest, RestoresBestParametersAndStopsEarly) {
  Seq2Seq<float> model(tiny_config(ModelKind::kBaseline));
  TrainConfig cfg = config(ModelKind::kBaseline, 0);
  cfg.max_epochs = 30;
  cfg.patience = 2;
  const Vocab vocab(std::set<char32_t>{U'a', U'b', U'c'});
  std::vector<Utterance> dev{{"d0", speech_[0].frames, "abc", "toy"},
                             {"d1", speech_[1].frames, "ca", "toy"}};
  Trainer tr(model, cfg, speech_, {}, dm_, dev, &vocab);
  tr.run();
  ASSERT_FALSE(tr.dev_history().empty());
  EXPECT_TRUE(tr.done());
  double best = tr.dev_history().front().dev_cer;
  for (const DevRecord& r : tr.dev_history()) best = std::min(best, r.dev_cer);
  EXPECT_EQ(tr.state().best_dev_cer, best);
  for (const Parameter<float>* p : model.params().all()) {
    EXPECT_EQ(p->value, tr.best_params().at(p->name));
  }
  DecodeConfig greedy;
  greedy.beam_size = 1;
  greedy.lm_weight = 0.0;
  greedy.max_output_len = 16;
  EXPECT_EQ(evaluate_dev(model, dev, vocab, greedy).cer, best);
  if (tr.dev_history().size() < 30) {
    EXPECT_FALSE(tr.dev_history().back().improved);
  }
}

TEST(EvaluateTest, StubTranscribers) {
  const std::vector<Utterance> dev{{"a", Matrix<float>::Zero(1, 1), "hello there", ""},
                                   {"b", Matrix<float>::Zero(1, 1), "abc", ""}};
  EXPECT_EQ(evaluate_transcriber(dev, [](const Utterance& u) { return u.text; }).cer, 0.0);
  EXPECT_EQ(evaluate_transcriber(dev, [](const Utterance&) { return std::string(); }).cer, 1.0);
  EXPECT_THROW(evaluate_transcriber({}, [](const Utterance& u) { return u.text; }), ContractError);
}

TEST(EvaluateTest, TrainedToyModelBeatsAllUnk) {
  // Two fixed utterances; memorising them is enough to beat an all-<unk> output.
  std::mt19937_64 rng(3);
  const Vocab vocab(std::set<char32_t>{U'a', U'b', U'c'});
  std::vector<Utterance> utts{{"u0", random_matrix<float>(6, 3, rng), "abca", "toy"},
                              {"u1", random_matrix<float>(7, 3, rng), "cb", "toy"}};
  Seq2Seq<float> model(tiny_config(ModelKind::kBaseline));
  TrainConfig cfg;
  cfg.mode = ModelKind::kBaseline;
  cfg.batch_size = 2;
  cfg.max_epochs = 1;
  cfg.learning_rate = 0.01;
  Trainer tr(model, cfg, make_speech_examples(utts, vocab), {}, DurationModel{});
  for (int i = 0; i < 300; ++i) tr.step_main(Task::kSpeech);
  DecodeConfig greedy;
  greedy.beam_size = 1;
  greedy.lm_weight = 0.0;
  greedy.max_output_len = 10;
  const double cer = evaluate_dev(model, utts, vocab, greedy).cer;
  const double unk_cer = evaluate_transcriber(utts, [](const Utterance& u) {
                           return std::string(utf8_length(u.text), '?');
                         }).cer;
  EXPECT_EQ(unk_cer, 1.0);
  EXPECT_LT(cer, unk_cer);
}

}  // namespace
}  // namespace mmda
