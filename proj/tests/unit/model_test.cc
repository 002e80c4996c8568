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

#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "mmda/errors.h"
#include "mmda/model.h"
#include "mmda/training.h"
#include "test_util.h"

namespace mmda {
namespace {

using testing::random_matrix;
using testing::random_target;
using testing::tiny_config;
using Md = Matrix<double>;

constexpr double kTol = 1e-6;

std::array<bool, 4> nonzero_groups(const Seq2Seq<double>& model) {
  std::array<bool, 4> nz{};
  for (const Parameter<double>* p : model.params().all()) {
    if (!p->grad.isZero(0)) nz[static_cast<std::size_t>(p->group)] = true;
  }
  return nz;
}

bool group_exactly_zero(const Seq2Seq<double>& model, ParamGroup g) {
  for (const Parameter<double>* p : model.params().group(g)) {
    if (!p->grad.isZero(0)) return false;
  }
  return true;
}

TEST(ModelConfigTest, RejectsNonsense) {
  ModelConfig c = tiny_config(ModelKind::kMmda);
  c.num_phonemes = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config(ModelKind::kMmda);
  c.vocab_size = 2;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfigTest, JsonRoundTrip) {
  const ModelConfig c = tiny_config(ModelKind::kPsda, 9);
  EXPECT_EQ(ModelConfig::from_json(c.to_json()), c);
  EXPECT_EQ(parse_model_kind(model_kind_name(ModelKind::kPsda)), ModelKind::kPsda);
  EXPECT_THROW(parse_model_kind("mmdx"), ConfigError);
}

TEST(ModelConfigTest, InitScaleWidensTheSameDraws) {
  ModelConfig narrow = tiny_config(ModelKind::kPsda, 4);
  ModelConfig wide = narrow;
  wide.init_scale = 0.3;
  const Seq2Seq<double> a(narrow), b(wide);
  int forget = 0;
  for (const Parameter<double>* p : a.params().all()) {
    const Md& x = p->value;
    const Md& y = b.params().find(p->name)->value;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x.data()[i] == kForgetBias) {
        ++forget;
        EXPECT_EQ(y.data()[i], kForgetBias) << p->name;
        continue;
      }
      EXPECT_NEAR(y.data()[i], 3.0 * x.data()[i], 1e-12) << p->name;
      EXPECT_LE(std::abs(y.data()[i]), 0.3) << p->name;
    }
  }
  EXPECT_GT(forget, 0);
  wide.init_scale = 0.0;
  EXPECT_THROW(wide.validate(), ConfigError);
}

TEST(PartitionTest, GroupsAreDisjointAndCoverEverything) {
  for (ModelKind kind : {ModelKind::kBaseline, ModelKind::kMmda, ModelKind::kPsda}) {
    Seq2Seq<double> model(tiny_config(kind));
    ParamPartition<double> part = model.partition();
    std::set<const Parameter<double>*> seen;
    std::size_t total = 0;
    for (ParamGroup g : kAllGroups) {
      for (const Parameter<double>* p : part[g]) {
        EXPECT_EQ(p->group, g);
        seen.insert(p);
        ++total;
      }
    }
    EXPECT_EQ(total, seen.size());
    EXPECT_EQ(seen.size(), model.params().all().size());
    EXPECT_EQ(part[ParamGroup::kAugmenting].empty(), kind == ModelKind::kBaseline);
  }
}

TEST(PartitionTest, AttentionAndDecoderShapesAgreeAcrossWirings) {
  Seq2Seq<float> mmda(tiny_config(ModelKind::kMmda));
  Seq2Seq<float> psda(tiny_config(ModelKind::kPsda));
  for (ParamGroup g : {ParamGroup::kAttention, ParamGroup::kDecoder}) {
    for (const Parameter<float>* p : mmda.params().group(g)) {
      const Parameter<float>* q = psda.params().find(p->name);
      ASSERT_NE(q, nullptr) << p->name;
      EXPECT_EQ(p->value.rows(), q->value.rows()) << p->name;
      EXPECT_EQ(p->value.cols(), q->value.cols()) << p->name;
    }
  }
}

TEST(PartitionTest, AugmentingOutputDims) {
  Tape<double> tape;
  const std::vector<int> phones{0, 1, 1, 1, 4, 2, 2};
  Seq2Seq<double> psda(tiny_config(ModelKind::kPsda));
  Var<double> pseudo = pseudo_speech(tape, psda, phones);
  EXPECT_EQ(pseudo.rows(), 7);
  EXPECT_EQ(pseudo.cols(), psda.config().feat_dim);
  Seq2Seq<double> mmda(tiny_config(ModelKind::kMmda));
  Var<double> out = mmda.augmenting_output(tape, phones);
  EXPECT_EQ(out.cols(), mmda.config().proj_dim);
  EXPECT_THROW(pseudo_speech(tape, mmda, phones), ConfigError);
  EXPECT_THROW(mmda_log_likelihood(tape, psda, phones, std::vector<int>{1, 4, 2}), ConfigError);
}

TEST(TrainableMaskTest, Phases) {
  const GroupMask pm = trainable_mask(TrainPhase::kPretrainMmda);
  EXPECT_FALSE(pm.contains(ParamGroup::kEncoder));
  EXPECT_TRUE(pm.contains(ParamGroup::kAttention));
  EXPECT_TRUE(pm.contains(ParamGroup::kDecoder));
  EXPECT_TRUE(pm.contains(ParamGroup::kAugmenting));
  const GroupMask pp = trainable_mask(TrainPhase::kPretrainPsda);
  const GroupMask main = trainable_mask(TrainPhase::kMain);
  for (ParamGroup g : kAllGroups) {
    EXPECT_TRUE(pp.contains(g));
    EXPECT_TRUE(main.contains(g));
  }
}

class LossTest : public ::testing::Test {
 protected:
  std::mt19937_64 rng_{51};
};

TEST_F(LossTest, EmptyTargetsAndSequencesAreContractErrors) {
  Seq2Seq<double> model(tiny_config(ModelKind::kMmda));
  Tape<double> tape;
  const Md x = random_matrix<double>(4, 3, rng_);
  EXPECT_THROW(asr_log_likelihood(tape, model, x, {}), ContractError);
  EXPECT_THROW(asr_log_likelihood(tape, model, x, std::vector<int>{1, 5}), ContractError);
  EXPECT_THROW(mmda_log_likelihood(tape, model, {}, std::vector<int>{1, 5, 2}), ContractError);
}

TEST_F(LossTest, UntrainedLossIsNearLogV) {
  ModelConfig cfg = tiny_config(ModelKind::kBaseline);
  cfg.vocab_size = 30;
  Seq2Seq<double> model(cfg);
  double total = 0.0;
  for (int i = 0; i < 10; ++i) {
    Tape<double> tape;
    total += asr_log_likelihood(tape, model, random_matrix<double>(9, 3, rng_),
                                random_target(6, 30, rng_))
                 .value()(0, 0);
  }
  EXPECT_NEAR(total / 10, std::log(30.0), 0.1 * std::log(30.0));
}

TEST_F(LossTest, RoutingTable) {
  const std::vector<int> target = random_target(3, 7, rng_);
  const std::vector<int> phones{0, 0, 3, 3, 3, 1, 4};
  for (ModelKind kind : {ModelKind::kMmda, ModelKind::kPsda}) {
    Seq2Seq<double> model(tiny_config(kind, 3));
    {
      model.params().zero_grad();
      Tape<double> tape;
      tape.backward(asr_log_likelihood(tape, model, random_matrix<double>(6, 3, rng_), target));
      EXPECT_TRUE(group_exactly_zero(model, ParamGroup::kAugmenting));
      const auto nz = nonzero_groups(model);
      EXPECT_TRUE(nz[0] && nz[1] && nz[2]);
    }
    {
      model.params().zero_grad();
      Tape<double> tape;
      tape.backward(augmenting_log_likelihood(tape, model, phones, target));
      const auto nz = nonzero_groups(model);
      EXPECT_TRUE(nz[1] && nz[2] && nz[3]);
      if (kind == ModelKind::kMmda) {
        EXPECT_TRUE(group_exactly_zero(model, ParamGroup::kEncoder));
      } else {
        EXPECT_TRUE(nz[0]);
      }
    }
  }
}

// Teacher-forced loss recomputed with plain Eigen from the raw parameter
// values, given the encoder memory.
double manual_decoder_loss(const Seq2Seq<double>& m, const Md& memory,
                           const std::vector<int>& target) {
  auto val = [&](const char* name) { return m.params().find(name)->value; };
  auto sig = [](const Md& z) { return Md(1.0 / (1.0 + (-z.array()).exp())); };
  const Md W = val("att.state_proj"), V = val("att.key_proj"), U = val("att.loc_proj");
  const Md b = val("att.bias"), w = val("att.score"), K = val("att.conv");
  const Md E = val("dec.embedding"), Wc = val("dec.lstm.weight"), bc = val("dec.lstm.bias");
  const Md Wo = val("dec.out.weight"), bo = val("dec.out.bias");
  const Eigen::Index T = memory.rows(), H = m.config().dec_hidden, half = K.cols() / 2;
  Md h = Md::Zero(1, H), c = Md::Zero(1, H), align = Md::Constant(T, 1, 1.0 / T);
  double nll = 0.0;
  for (std::size_t s = 0; s + 1 < target.size(); ++s) {
    Md e(T, 1);
    for (Eigen::Index t = 0; t < T; ++t) {
      Md f = Md::Zero(1, K.rows());
      for (Eigen::Index j = 0; j < K.cols(); ++j) {
        const Eigen::Index src = t + j - half;
        if (src >= 0 && src < T) f += align(src, 0) * K.col(j).transpose();
      }
      const Md pre = h * W + memory.row(t) * V + f * U + b;
      e(t, 0) = (Md(pre.array().tanh()) * w)(0, 0);
    }
    const Md a = (e.array() - e.maxCoeff()).exp();
    align = a / a.sum();
    const Md ctx = align.transpose() * memory;
    Md in(1, E.cols() + ctx.cols() + H);
    in << E.row(target[s]), ctx, h;
    const Md z = in * Wc + bc;
    const Md ig = sig(z.middleCols(0, H)), fg = sig(z.middleCols(H, H));
    const Md og = sig(z.middleCols(2 * H, H));
    const Md gg = z.middleCols(3 * H, H).array().tanh();
    c = fg.cwiseProduct(c) + ig.cwiseProduct(gg);
    h = og.cwiseProduct(Md(c.array().tanh()));
    const Md logits = h * Wo + bo;
    const double mx = logits.maxCoeff();
    const double lse = mx + std::log((logits.array() - mx).exp().sum());
    nll -= logits(0, target[s + 1]) - lse;
  }
  return nll / static_cast<double>(target.size() - 1);
}

TEST_F(LossTest, MatchesHandAccumulation) {
  Seq2Seq<double> model(tiny_config(ModelKind::kBaseline, 4));
  const Md x = random_matrix<double>(5, 3, rng_);
  const std::vector<int> target{Vocab::kSos, 5, 4, Vocab::kEos};
  Tape<double> tape;
  const double loss = asr_log_likelihood(tape, model, x, target).value()(0, 0);
  const Md memory = model.encode_speech(tape.constant(x)).value();
  EXPECT_NEAR(loss, manual_decoder_loss(model, memory, target), 1e-12);
}

TEST_F(LossTest, PermutationCovariantInVocabulary) {
  Seq2Seq<double> model(tiny_config(ModelKind::kBaseline, 5));
  Seq2Seq<double> relabeled = model.clone();
  std::vector<int> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[4], perm[6]);
  std::swap(perm[5], perm[6]);
  Parameter<double>& emb = relabeled.params().at("dec.embedding");
  Parameter<double>& ow = relabeled.params().at("dec.out.weight");
  Parameter<double>& ob = relabeled.params().at("dec.out.bias");
  const Parameter<double>& emb0 = *model.params().find("dec.embedding");
  const Parameter<double>& ow0 = *model.params().find("dec.out.weight");
  const Parameter<double>& ob0 = *model.params().find("dec.out.bias");
  for (int v = 0; v < 7; ++v) {
    emb.value.row(perm[v]) = emb0.value.row(v);
    ow.value.col(perm[v]) = ow0.value.col(v);
    ob.value.col(perm[v]) = ob0.value.col(v);
  }
  const Md x = random_matrix<double>(7, 3, rng_);
  const std::vector<int> target = random_target(4, 7, rng_);
  std::vector<int> mapped;
  for (int t : target) mapped.push_back(perm[static_cast<std::size_t>(t)]);
  Tape<double> tape;
  EXPECT_NEAR(asr_log_likelihood(tape, model, x, target).value()(0, 0),
              asr_log_likelihood(tape, relabeled, x, mapped).value()(0, 0), 1e-13);
}

TEST_F(LossTest, ReplayIsBitIdentical) {
  auto run = [&](std::uint64_t seed) {
    Seq2Seq<double> model(tiny_config(ModelKind::kPsda, seed));
    std::mt19937_64 rng(seed);
    const Md x = random_matrix<double>(6, 3, rng);
    const std::vector<int> target = random_target(3, 7, rng);
    Tape<double> tape;
    Var<double> loss = asr_log_likelihood(tape, model, x, target) +
                       augmenting_log_likelihood(tape, model, std::vector<int>{1, 2, 2, 3}, target);
    tape.backward(loss);
    std::vector<Md> grads{loss.value()};
    for (const Parameter<double>* p : model.params().all()) grads.push_back(p->grad);
    return grads;
  };
  const auto a = run(8), b = run(8);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i] == b[i]);
}

TEST_F(LossTest, EndToEndGradientsPassFiniteDifferences) {
  Seq2Seq<double> model(tiny_config(ModelKind::kBaseline, 6));
  const Md x = random_matrix<double>(3, 3, rng_);
  const std::vector<int> target{Vocab::kSos, 4, 6, Vocab::kEos};
  auto loss = [&](Tape<double>& t) { return asr_log_likelihood(t, model, x, target); };
  const GradCheckResult r = finite_diff_check<double>(loss, model.params().all(), 1e-3);
  EXPECT_LT(r.max_rel_error, kTol) << r.worst_param;
}

TEST_F(LossTest, AugmentingGradientsPassFiniteDifferences) {
  const std::vector<int> phones{0, 0, 2, 4, 4, 1};
  const std::vector<int> target{Vocab::kSos, 5, 4, Vocab::kEos};
  for (ModelKind kind : {ModelKind::kMmda, ModelKind::kPsda}) {
    Seq2Seq<double> model(tiny_config(kind, 7));
    auto loss = [&](Tape<double>& t) {
      return augmenting_log_likelihood(t, model, phones, target);
    };
    const GradCheckResult r = finite_diff_check<double>(loss, model.params().all(), 1e-3);
    EXPECT_LT(r.max_rel_error, kTol) << model_kind_name(kind) << " " << r.worst_param;
  }
}

class RnnLmTest : public ::testing::Test {
 protected:
  static RnnLmConfig small(int vocab) {
    RnnLmConfig c;
    c.vocab_size = vocab;
    c.emb_dim = 8;
    c.hidden_dim = 16;
    c.seed = 3;
    return c;
  }
};

TEST_F(RnnLmTest, LogProbsNormalize) {
  RnnLm<float> lm(small(9));
  const std::vector<int> prefix{Vocab::kSos, 5, 7};
  double total = 0.0;
  for (int v = 0; v < 9; ++v) total += std::exp(rnnlm_logprob(lm, prefix, v));
  EXPECT_NEAR(total, 1.0, 1e-6);
  EXPECT_THROW(rnnlm_logprob(lm, prefix, 9), VocabError);
  EXPECT_THROW(rnnlm_logprob(lm, prefix, -1), VocabError);
}

TEST_F(RnnLmTest, UntrainedIsNearUniform) {
  RnnLm<float> lm(small(30));
  const std::vector<int> prefix{Vocab::kSos, 5};
  for (int v : {4, 10, 29}) EXPECT_NEAR(rnnlm_logprob(lm, prefix, v), -std::log(30.0), 0.1 * std::log(30.0));
}

TEST_F(RnnLmTest, LearnsAlternation) {
  // Tokens: 4 = 'a', 5 = 'b'.
  RnnLm<float> lm(small(6));
  std::vector<int> seq{Vocab::kSos};
  for (int i = 0; i < 12; ++i) seq.push_back(i % 2 == 0 ? 4 : 5);
  seq.push_back(Vocab::kEos);
  Adam adam(lm.params(), 1e-2);
  for (int it = 0; it < 100; ++it) {
    lm.params().zero_grad();
    Tape<float> tape;
    tape.backward(lm.loss(tape, seq));
    adam.step(lm.params(), trainable_mask(TrainPhase::kMain));
  }
  const std::vector<int> prefix{Vocab::kSos, 4, 5, 4};
  EXPECT_GT(rnnlm_logprob(lm, prefix, 5), rnnlm_logprob(lm, prefix, 4));
  EXPECT_GT(rnnlm_logprob(lm, prefix, 5), std::log(0.9));
}

TEST_F(RnnLmTest, GradientsPassFiniteDifferences) {
  RnnLm<double> lm(small(6));
  const std::vector<int> seq{Vocab::kSos, 4, 5, 4, Vocab::kEos};
  auto loss = [&](Tape<double>& t) { return lm.loss(t, seq); };
  EXPECT_LT(finite_diff_check<double>(loss, lm.params().all(), 1e-3).max_rel_error, kTol);
}

}  // namespace
}  // namespace mmda
