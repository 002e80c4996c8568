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
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "mmda/augmentation.h"
#include "mmda/errors.h"
#include "mmda/vocab.h"

namespace mmda {
namespace {

Lexicon lexicon(const std::string& tsv) {
  std::istringstream in(tsv);
  return read_lexicon(in);
}

std::set<char32_t> chars(std::string_view s) {
  const std::u32string u = utf8_decode(s);
  return {u.begin(), u.end()};
}

TEST(LexiconTest, AssignsSortedIdsAfterReserved) {
  Lexicon lex = lexicon("ab\tp2 p1\nba\tp1 p2\n");
  EXPECT_EQ(lex.inventory.symbol(PhonemeInventory::kPad), "<pad>");
  EXPECT_EQ(lex.inventory.symbol(PhonemeInventory::kWordBoundary), "<wb>");
  EXPECT_EQ(*lex.inventory.find("p1"), 2);
  EXPECT_EQ(*lex.inventory.find("p2"), 3);
  EXPECT_EQ(lex.pronunciations.at("ab"), (std::vector<int>{3, 2}));
}

TEST(LexiconTest, RejectsMalformedLines) {
  EXPECT_THROW(lexicon("ab p1\n"), FormatError);
  EXPECT_THROW(lexicon("ab\t\n"), FormatError);
}

TEST(LexiconTest, InventoryJsonRoundTrip) {
  Lexicon lex = lexicon("ab\tp1 p2\n");
  lex.inventory.fallback_id(U'z');
  const PhonemeInventory back = PhonemeInventory::from_json(lex.inventory.to_json());
  EXPECT_EQ(back.symbols(), lex.inventory.symbols());
  EXPECT_EQ(back.hash(), lex.inventory.hash());
}

TEST(FilterTest, DropsUnknownCharactersAndBadLengths) {
  const std::set<char32_t> cs = chars("abc ");
  const std::vector<std::string> in{"abc", "abca", "", "abd a", "ab ca", "cccccccc"};
  FilterOptions opts;
  opts.max_len = 6;
  EXPECT_EQ(filter_corpus(in, cs, opts), (std::vector<std::string>{"abca", "ab ca"}));
  EXPECT_THROW(filter_corpus(in, {}, opts), ContractError);
}

TEST(FilterTest, MatchesPredicateOracleAndIsIdempotent) {
  std::mt19937_64 rng(3);
  const std::string alphabet = "abcde xy";
  std::vector<std::string> corpus;
  for (int i = 0; i < 500; ++i) {
    std::string s(rng() % 12, ' ');
    for (char& ch : s) ch = alphabet[rng() % alphabet.size()];
    corpus.push_back(s);
  }
  const std::set<char32_t> cs = chars("abcde ");
  FilterOptions opts;
  opts.min_len = 3;
  opts.max_len = 9;
  std::vector<std::string> oracle;
  for (const std::string& s : corpus) {
    const bool ok_chars = s.find_first_not_of("abcde ") == std::string::npos;
    if (ok_chars && s.size() >= 3 && s.size() <= 9) oracle.push_back(s);
  }
  const std::vector<std::string> kept = filter_corpus(corpus, cs, opts);
  EXPECT_EQ(kept, oracle);
  EXPECT_EQ(filter_corpus(kept, cs, opts), kept);
}

TEST(FilterTest, LengthCountsCharactersNotBytes) {
  FilterOptions opts;
  opts.min_len = 4;
  opts.max_len = 4;
  EXPECT_EQ(filter_corpus(std::vector<std::string>{"\xc3\xa9t\xc3\xa9s"}, chars("\xc3\xa9ts"), opts)
                .size(),
            1u);
}

TEST(PhonemizeTest, JoinsWordsWithBoundary) {
  Lexicon lex = lexicon("ab\tp1 p2\n");
  const int p1 = *lex.inventory.find("p1"), p2 = *lex.inventory.find("p2");
  const int wb = PhonemeInventory::kWordBoundary;
  EXPECT_EQ(phonemize_sentence("ab ab", lex), (std::vector<int>{p1, p2, wb, p1, p2}));
  EXPECT_EQ(phonemize_sentence("ab", lex), (std::vector<int>{p1, p2}));
}

TEST(PhonemizeTest, FallsBackToGraphemes) {
  Lexicon lex = lexicon("ab\tp1 p2\n");
  const int before = lex.inventory.size();
  const std::vector<int> out = phonemize_sentence("cd", lex);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(lex.inventory.size(), before + 2);
  EXPECT_EQ(lex.inventory.symbol(out[0]), "g:c");
  EXPECT_EQ(lex.inventory.symbol(out[1]), "g:d");
  EXPECT_EQ(phonemize_sentence("dc", lex), (std::vector<int>{out[1], out[0]}));
}

TEST(PhonemizeTest, MixedSentenceMatchesHandComposition) {
  Lexicon lex = lexicon("the\tdh ax\ncat\tk ae t\n");
  auto id = [&](const char* s) { return *lex.inventory.find(s); };
  const std::vector<int> out = phonemize_sentence("the  cat zq the", lex);
  const int wb = PhonemeInventory::kWordBoundary;
  const int gz = *lex.inventory.find_fallback(U'z'), gq = *lex.inventory.find_fallback(U'q');
  EXPECT_EQ(out, (std::vector<int>{id("dh"), id("ax"), wb, id("k"), id("ae"), id("t"), wb, gz, gq,
                                   wb, id("dh"), id("ax")}));
}

TEST(DurationModelTest, PooledRatio) {
  const std::vector<UtteranceStats> one{{100, 20}};
  EXPECT_DOUBLE_EQ(estimate_duration_mean(one).mean, 5.0);
  EXPECT_DOUBLE_EQ(estimate_duration_mean(one).stddev, 1.25);
  const std::vector<UtteranceStats> two{{100, 20}, {50, 30}};
  EXPECT_DOUBLE_EQ(estimate_duration_mean(two).mean, 3.0);
  EXPECT_THROW(estimate_duration_mean({}), ContractError);
  EXPECT_THROW(estimate_duration_mean(std::vector<UtteranceStats>{{0, 3}}), ContractError);
}

TEST(DurationModelTest, MatchesSummationOracle) {
  std::mt19937_64 rng(9);
  std::vector<UtteranceStats> m;
  long frames = 0, symbols = 0;
  for (int i = 0; i < 200; ++i) {
    const long f = 1 + static_cast<long>(rng() % 900), s = 1 + static_cast<long>(rng() % 90);
    m.push_back({f, s});
    frames += f;
    symbols += s;
  }
  EXPECT_DOUBLE_EQ(estimate_duration_mean(m).mean,
                   static_cast<double>(frames) / static_cast<double>(symbols));
}

TEST(DurationTest, DegenerateGaussianRepeatsExactly) {
  std::mt19937_64 rng(1);
  const std::vector<int> ph{4, 2, 7};
  DurationModel dm{3.0, 0.0};
  EXPECT_EQ(sample_durations(ph, dm, rng), (std::vector<int>{3, 3, 3}));
  dm.mean = 1.0;
  const std::vector<int> d = sample_durations(ph, dm, rng);
  EXPECT_EQ(expand_durations(ph, d), ph);
}

TEST(DurationTest, ClampedAtOne) {
  std::mt19937_64 rng(2);
  const DurationModel dm{0.3, 2.0};
  for (int i = 0; i < 1000; ++i) EXPECT_GE(sample_duration(dm, rng), 1);
}

TEST(DurationTest, EmpiricalMeanWithinOnePercent) {
  std::mt19937_64 rng(4);
  const DurationModel dm = DurationModel::from_mean(5.0);
  EXPECT_DOUBLE_EQ(dm.stddev, 1.25);
  double total = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) total += sample_duration(dm, rng);
  EXPECT_NEAR(total / n, 5.0, 0.05);
}

TEST(DurationTest, ExpandRejectsLengthMismatch) {
  EXPECT_THROW(expand_durations(std::vector<int>{1, 2}, std::vector<int>{1}), DimensionError);
}

class ExampleTest : public ::testing::Test {
 protected:
  Lexicon lex_ = lexicon("ab\tp1 p2\nba\tp2 p1 p3\n");
  Vocab vocab_ = Vocab::from_texts(std::vector<std::string>{"ab ba"});
  DurationModel dm_ = DurationModel::from_mean(3.0);
};

TEST_F(ExampleTest, DuplicatesGetDistinctInputsSameTarget) {
  std::mt19937_64 rng(5);
  AugmentingExample a = build_augmenting_example("ab ba ab", lex_, vocab_, dm_, rng);
  AugmentingExample b = build_augmenting_example("ab ba ab", lex_, vocab_, dm_, rng);
  EXPECT_NE(a.input, b.input);
  EXPECT_EQ(a.target, b.target);
  EXPECT_EQ(a.target, vocab_.encode("ab ba ab"));
}

TEST_F(ExampleTest, SingleWordHasNoBoundary) {
  std::mt19937_64 rng(6);
  AugmentingExample ex = build_augmenting_example("ba", lex_, vocab_, dm_, rng);
  EXPECT_EQ(std::count(ex.input.begin(), ex.input.end(), PhonemeInventory::kWordBoundary), 0);
}

TEST_F(ExampleTest, CollapsingRunsRecoversPhonemization) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    AugmentingExample ex = build_augmenting_example("ab ba ab ab", lex_, vocab_, dm_, rng);
    // Durations are known, so undo them run by run; adjacent phonemes may repeat.
    std::vector<int> collapsed;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < ex.durations.size(); ++i) {
      ASSERT_GE(ex.durations[i], 1);
      for (int k = 0; k < ex.durations[i]; ++k) EXPECT_EQ(ex.input[pos + k], ex.phonemes[i]);
      collapsed.push_back(ex.input[pos]);
      pos += static_cast<std::size_t>(ex.durations[i]);
    }
    EXPECT_EQ(pos, ex.input.size());
    EXPECT_EQ(collapsed, phonemize_sentence("ab ba ab ab", lex_));
    EXPECT_GE(ex.input.size(), ex.phonemes.size());
    for (int id : ex.input) EXPECT_LT(id, lex_.inventory.size());
    for (int id : ex.target) EXPECT_LT(id, vocab_.size());
  }
}

TEST_F(ExampleTest, LengthEqualsPhonemeCountIffAllDurationsAreOne) {
  std::mt19937_64 rng(8);
  const DurationModel narrow{1.2, 0.5};
  for (int trial = 0; trial < 200; ++trial) {
    AugmentingExample ex = build_augmenting_example("ab", lex_, vocab_, narrow, rng);
    const bool all_one =
        std::all_of(ex.durations.begin(), ex.durations.end(), [](int d) { return d == 1; });
    EXPECT_EQ(ex.input.size() == ex.phonemes.size(), all_one);
  }
}

TEST_F(ExampleTest, SameSeedIsBitIdentical) {
  auto build = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<int>> out;
    for (const char* s : {"ab ba", "ba", "ab ab ba"}) {
      out.push_back(build_augmenting_example(s, lex_, vocab_, dm_, rng).input);
    }
    return out;
  };
  EXPECT_EQ(build(11), build(11));
  EXPECT_NE(build(11), build(12));
}

TEST_F(ExampleTest, PrepareCountsDropsAndFitsDurations) {
  const std::vector<std::string> text{"ab ba", "abz", "x", "ba ab ab"};
  const std::vector<UtteranceStats> speech{{60, 10}, {40, 10}};
  PreparedCorpus pc = prepare_augmenting(text, lex_, chars("ab "), speech);
  ASSERT_EQ(pc.sentences.size(), 2u);
  EXPECT_EQ(pc.dropped, 2u);
  EXPECT_EQ(pc.sentences[1].text, "ba ab ab");
  EXPECT_EQ(pc.sentences[1].phonemes, phonemize_sentence("ba ab ab", lex_));
  EXPECT_DOUBLE_EQ(pc.durations.mean, 5.0);
}

TEST(VocabMergeTest, UnionIsSortedAndOrderIndependent) {
  const Vocab ab(chars("ab")), bc(chars("bc")), abc(chars("abc"));
  const std::vector<Vocab> v1{ab, bc}, v2{bc, ab}, same{ab, ab};
  EXPECT_EQ(merge_vocabularies(v1), abc);
  EXPECT_EQ(merge_vocabularies(v2), abc);
  EXPECT_EQ(merge_vocabularies(same), ab);
  EXPECT_EQ(abc.id(U'a'), Vocab::kNumReserved);
  EXPECT_EQ(abc.id(U'c'), Vocab::kNumReserved + 2);
  EXPECT_THROW(merge_vocabularies({}), ContractError);
}

TEST(VocabTest, EncodeDecodeRoundTrip) {
  const Vocab v = Vocab::from_texts(std::vector<std::string>{"h\xc3\xa9llo w"});
  const std::vector<int> ids = v.encode("w\xc3\xa9h");
  EXPECT_EQ(ids.front(), Vocab::kSos);
  EXPECT_EQ(ids.back(), Vocab::kEos);
  EXPECT_EQ(v.decode(ids), "w\xc3\xa9h");
  EXPECT_EQ(v.encode("q")[1], Vocab::kUnk);
  EXPECT_EQ(Vocab::from_json(v.to_json()), v);
  EXPECT_THROW(utf8_decode("\xc3"), FormatError);
}

}  // namespace
}  // namespace mmda
