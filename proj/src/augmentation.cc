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

#include "mmda/augmentation.h"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mmda/errors.h"

namespace mmda {

PhonemeInventory::PhonemeInventory() {
  add("<pad>");
  add("<wb>");
}

int PhonemeInventory::add(const std::string& symbol) {
  auto it = index_.find(symbol);
  if (it != index_.end()) return it->second;
  const int id = size();
  symbols_.push_back(symbol);
  index_.emplace(symbol, id);
  return id;
}

std::optional<int> PhonemeInventory::find(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int PhonemeInventory::fallback_id(char32_t c) { return add("g:" + utf8_encode(c)); }

std::optional<int> PhonemeInventory::find_fallback(char32_t c) const {
  return find("g:" + utf8_encode(c));
}

void PhonemeInventory::add_graphemes(const std::set<char32_t>& chars) {
  for (char32_t c : chars) fallback_id(c);
}

const std::string& PhonemeInventory::symbol(int id) const {
  if (id < 0 || id >= size()) {
    throw VocabError("phoneme id " + std::to_string(id) + " outside inventory of size " +
                     std::to_string(size()));
  }
  return symbols_[static_cast<std::size_t>(id)];
}

std::uint64_t PhonemeInventory::hash() const {
  std::uint64_t h = fnv1a("phones");
  for (const std::string& s : symbols_) h = fnv1a(s + '\n', h);
  return h;
}

nlohmann::json PhonemeInventory::to_json() const { return {{"symbols", symbols_}}; }

PhonemeInventory PhonemeInventory::from_json(const nlohmann::json& j) {
  PhonemeInventory inv;
  const auto& symbols = j.at("symbols");
  if (symbols.size() < 2 || symbols[0] != "<pad>" || symbols[1] != "<wb>") {
    throw FormatError("phoneme inventory must start with <pad>, <wb>");
  }
  for (const auto& s : symbols) {
    const std::string sym = s.get<std::string>();
    if (inv.find(sym)) {
      if (sym == "<pad>" || sym == "<wb>") continue;
      throw FormatError("duplicate phoneme symbol " + sym);
    }
    inv.add(sym);
  }
  return inv;
}

Lexicon read_lexicon(std::istream& in) {
  std::vector<std::pair<std::string, std::vector<std::string>>> raw;
  std::set<std::string> phones;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError("lexicon line " + std::to_string(lineno) + ": missing TAB separator");
    }
    std::string word = line.substr(0, tab);
    std::vector<std::string> pron = split_words(std::string_view(line).substr(tab + 1));
    if (word.empty() || pron.empty()) {
      throw FormatError("lexicon line " + std::to_string(lineno) + ": empty word or pronunciation");
    }
    phones.insert(pron.begin(), pron.end());
    raw.emplace_back(std::move(word), std::move(pron));
  }
  Lexicon lex;
  for (const std::string& p : phones) lex.inventory.add(p);
  for (auto& [word, pron] : raw) {
    std::vector<int> ids;
    for (const std::string& p : pron) ids.push_back(*lex.inventory.find(p));
    lex.pronunciations[word] = std::move(ids);
  }
  return lex;
}

Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open lexicon " + path);
  return read_lexicon(in);
}

std::vector<std::string> filter_corpus(std::span<const std::string> sentences,
                                       const std::set<char32_t>& charset,
                                       const FilterOptions& opts) {
  if (charset.empty()) throw ContractError("filter_corpus: empty training character set");
  std::vector<std::string> kept;
  for (const std::string& s : sentences) {
    const std::u32string cps = utf8_decode(s);
    if (cps.size() < opts.min_len || cps.size() > opts.max_len) continue;
    bool ok = true;
    for (char32_t c : cps) {
      if (charset.count(c) == 0) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(s);
  }
  if (kept.empty() && !sentences.empty()) {
    std::cerr << "warning: filter_corpus kept none of " << sentences.size() << " sentences\n";
  }
  return kept;
}

std::vector<int> phonemize_sentence(std::string_view sentence, Lexicon& lex) {
  std::vector<int> out;
  const std::vector<std::string> words = split_words(sentence);
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (w > 0) out.push_back(PhonemeInventory::kWordBoundary);
    auto it = lex.pronunciations.find(words[w]);
    if (it != lex.pronunciations.end()) {
      out.insert(out.end(), it->second.begin(), it->second.end());
    } else {
      for (char32_t c : utf8_decode(words[w])) out.push_back(lex.inventory.fallback_id(c));
    }
  }
  return out;
}

DurationModel DurationModel::from_mean(double mean) {
  if (!(mean > 0)) throw ContractError("duration mean must be positive");
  return {mean, kStdFraction * mean};
}

DurationModel estimate_duration_mean(std::span<const UtteranceStats> manifest) {
  if (manifest.empty()) throw ContractError("estimate_duration_mean: empty manifest");
  long frames = 0, symbols = 0;
  for (const UtteranceStats& u : manifest) {
    if (u.frames <= 0 || u.symbols <= 0) {
      throw ContractError("estimate_duration_mean: utterance with no frames or symbols");
    }
    frames += u.frames;
    symbols += u.symbols;
  }
  return DurationModel::from_mean(static_cast<double>(frames) / static_cast<double>(symbols));
}

int sample_duration(const DurationModel& dm, std::mt19937_64& rng) {
  double d = dm.mean;
  if (dm.stddev > 0) d = std::normal_distribution<double>(dm.mean, dm.stddev)(rng);
  const double r = std::round(d);
  return r < 1.0 ? 1 : static_cast<int>(r);
}

std::vector<int> sample_durations(std::span<const int> phonemes, const DurationModel& dm,
                                  std::mt19937_64& rng) {
  std::vector<int> durations;
  durations.reserve(phonemes.size());
  for (std::size_t i = 0; i < phonemes.size(); ++i) durations.push_back(sample_duration(dm, rng));
  return durations;
}

std::vector<int> expand_durations(std::span<const int> phonemes, std::span<const int> durations) {
  if (phonemes.size() != durations.size()) {
    throw DimensionError("expand_durations: " + std::to_string(phonemes.size()) + " phonemes, " +
                         std::to_string(durations.size()) + " durations");
  }
  std::vector<int> out;
  for (std::size_t i = 0; i < phonemes.size(); ++i) out.insert(out.end(), durations[i], phonemes[i]);
  return out;
}

AugmentingExample build_augmenting_example(std::string_view sentence, Lexicon& lex,
                                           const Vocab& vocab, const DurationModel& dm,
                                           std::mt19937_64& rng) {
  AugmentingExample ex;
  ex.phonemes = phonemize_sentence(sentence, lex);
  if (ex.phonemes.empty()) throw ContractError("build_augmenting_example: empty sentence");
  ex.durations = sample_durations(ex.phonemes, dm, rng);
  ex.input = expand_durations(ex.phonemes, ex.durations);
  ex.target = vocab.encode(sentence);
  return ex;
}

PreparedCorpus prepare_augmenting(std::span<const std::string> sentences, Lexicon& lex,
                                  const std::set<char32_t>& charset,
                                  std::span<const UtteranceStats> speech,
                                  const FilterOptions& opts) {
  PreparedCorpus out;
  out.durations = estimate_duration_mean(speech);
  const std::vector<std::string> kept = filter_corpus(sentences, charset, opts);
  out.dropped = sentences.size() - kept.size();
  for (const std::string& s : kept) {
    std::vector<int> ph = phonemize_sentence(s, lex);
    if (ph.empty()) {
      ++out.dropped;
      continue;
    }
    out.sentences.push_back({s, std::move(ph)});
  }
  return out;
}

}  // namespace mmda
