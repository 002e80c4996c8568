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

// Synthetic speech-like task.
//
// Letters map many-to-one onto phonemes, so a phoneme string does not spell
// its word unambiguously. Words are drawn from a fixed list under a Zipfian
// bigram model; no two words share a pronunciation and no word repeats a
// phoneme back to back. Each phoneme (and the word boundary) owns a fixed
// emission vector; an utterance repeats the vector for a sampled duration and
// adds Gaussian noise.

#ifndef MMDA_TOY_TASK_H_
#define MMDA_TOY_TASK_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmda/augmentation.h"
#include "mmda/io.h"

namespace mmda {

struct ToyTaskSpec {
  int num_phonemes = 20;
  int num_words = 200;
  int min_word_len = 2;
  int max_word_len = 6;
  int min_words = 3;
  int max_words = 12;
  int feat_dim = 40;
  double duration_mean = 4.0;
  double duration_stddev = 1.0;
  double noise_std = 0.1;
  double zipf_exponent = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static ToyTaskSpec from_json(const nlohmann::json& j);
};

struct ToyCorpus {
  ToyTaskSpec spec;
  std::vector<std::string> phonemes;  // symbol names
  // Row k is the emission of phonemes[k]; the last row is the word boundary.
  Matrix<float> emissions;
  std::map<char, int> letter_to_phoneme;
  std::map<std::string, std::vector<int>> words;  // pronunciations
  std::vector<Utterance> train;
  std::vector<Utterance> dev;
  std::vector<std::string> augmenting;  // disjoint from train and dev text
};

// Pronunciation of a word under the letter map, as phoneme indices.
std::vector<int> toy_pronounce(const ToyCorpus& corpus, const std::string& word);

ToyCorpus make_toy_corpus(const ToyTaskSpec& spec, int n_train, int n_dev, int n_aug);

// Lexicon in read_lexicon form.
std::string toy_lexicon_tsv(const ToyCorpus& corpus);
Lexicon toy_lexicon(const ToyCorpus& corpus);

// Writes feats/, train.jsonl, dev.jsonl, aug.txt, lexicon.tsv and toy.json.
// Refuses a nonempty directory unless `force`.
void write_toy_corpus(const ToyCorpus& corpus, const std::string& dir, bool force);

}  // namespace mmda

#endif  // MMDA_TOY_TASK_H_
