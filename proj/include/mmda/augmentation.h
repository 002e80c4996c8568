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

// Text-to-augmenting-input pipeline: corpus filtering, lexicon
// phonemization, the shared Gaussian duration model and duration expansion.

#ifndef MMDA_AUGMENTATION_H_
#define MMDA_AUGMENTATION_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mmda/vocab.h"

namespace mmda {

// Phoneme symbol table. Id 0 is padding and id 1 the word boundary.
// Out-of-lexicon characters map to grapheme symbols spelled "g:<char>".
class PhonemeInventory {
 public:
  static constexpr int kPad = 0;
  static constexpr int kWordBoundary = 1;

  PhonemeInventory();

  int add(const std::string& symbol);
  std::optional<int> find(const std::string& symbol) const;
  int fallback_id(char32_t c);
  std::optional<int> find_fallback(char32_t c) const;
  // Registers fallback symbols for every character, in code-point order.
  void add_graphemes(const std::set<char32_t>& chars);

  int size() const { return static_cast<int>(symbols_.size()); }
  const std::string& symbol(int id) const;
  const std::vector<std::string>& symbols() const { return symbols_; }

  std::uint64_t hash() const;
  nlohmann::json to_json() const;
  static PhonemeInventory from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

struct Lexicon {
  std::map<std::string, std::vector<int>> pronunciations;
  PhonemeInventory inventory;
};

// Reads "word<TAB>ph1 ph2 ..." lines. Phoneme ids are assigned in sorted
// symbol order after the reserved ones.
Lexicon read_lexicon(std::istream& in);
Lexicon load_lexicon(const std::string& path);

struct FilterOptions {
  std::size_t min_len = 4;
  std::size_t max_len = 300;
};

// Keeps sentences whose characters all belong to `charset` and whose length in
// characters lies in [min_len, max_len]. Order is preserved.
std::vector<std::string> filter_corpus(std::span<const std::string> sentences,
                                       const std::set<char32_t>& charset,
                                       const FilterOptions& opts = {});

// Lexicon pronunciations joined by the word-boundary symbol. Unknown words are
// spelled with grapheme fallback symbols, which are added to the inventory on
// first use.
std::vector<int> phonemize_sentence(std::string_view sentence, Lexicon& lex);

// Shared Gaussian over frames per output symbol.
struct DurationModel {
  double mean = 1.0;
  double stddev = 0.0;

  static constexpr double kStdFraction = 0.25;
  static DurationModel from_mean(double mean);
};

struct UtteranceStats {
  long frames = 0;
  long symbols = 0;
};

// mean = sum(frames) / sum(symbols), stddev = 0.25 mean.
DurationModel estimate_duration_mean(std::span<const UtteranceStats> manifest);

// One duration draw: round(N(mean, stddev^2)) clamped to >= 1.
int sample_duration(const DurationModel& dm, std::mt19937_64& rng);

std::vector<int> sample_durations(std::span<const int> phonemes, const DurationModel& dm,
                                  std::mt19937_64& rng);

// Repeats phonemes[i] durations[i] times.
std::vector<int> expand_durations(std::span<const int> phonemes, std::span<const int> durations);

struct AugmentingExample {
  std::vector<int> phonemes;   // before duration expansion
  std::vector<int> durations;  // one per phoneme
  std::vector<int> input;      // duration-expanded phoneme ids
  std::vector<int> target;     // sos + characters + eos
};

AugmentingExample build_augmenting_example(std::string_view sentence, Lexicon& lex,
                                           const Vocab& vocab, const DurationModel& dm,
                                           std::mt19937_64& rng);

struct PreparedSentence {
  std::string text;
  std::vector<int> phonemes;  // not duration-expanded
};

struct PreparedCorpus {
  std::vector<PreparedSentence> sentences;
  DurationModel durations;
  std::size_t dropped = 0;
};

// Filters `sentences` against the speech charset, phonemizes the survivors
// and fits the duration model on `speech`.
PreparedCorpus prepare_augmenting(std::span<const std::string> sentences, Lexicon& lex,
                                  const std::set<char32_t>& charset,
                                  std::span<const UtteranceStats> speech,
                                  const FilterOptions& opts = {});

}  // namespace mmda

#endif  // MMDA_AUGMENTATION_H_
