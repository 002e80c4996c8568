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

#ifndef MMDA_VOCAB_H_
#define MMDA_VOCAB_H_

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace mmda {

// UTF-8 <-> code points. Invalid bytes raise FormatError.
std::u32string utf8_decode(std::string_view text);
std::string utf8_encode(std::u32string_view text);
std::string utf8_encode(char32_t c);

// Number of code points.
std::size_t utf8_length(std::string_view text);

// Whitespace-separated tokens.
std::vector<std::string> split_words(std::string_view text);

// FNV-1a over a byte string.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL);

// Character output vocabulary. Ids 0..3 are reserved (pad, sos, eos, unk);
// the remaining symbols follow in ascending code-point order.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocab() = default;
  explicit Vocab(const std::set<char32_t>& symbols);

  static Vocab from_texts(std::span<const std::string> texts);

  int size() const { return kNumReserved + static_cast<int>(symbols_.size()); }
  int id(char32_t c) const;
  bool contains(char32_t c) const { return index_.count(c) != 0; }
  // Printable form of any id, reserved ids included ("<eos>" ...).
  std::string symbol_string(int id) const;
  const std::vector<char32_t>& symbols() const { return symbols_; }
  std::set<char32_t> symbol_set() const { return {symbols_.begin(), symbols_.end()}; }

  // sos + characters + eos.
  std::vector<int> encode(std::string_view text) const;
  // Drops reserved ids.
  std::string decode(std::span<const int> ids) const;

  std::uint64_t hash() const;
  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

  bool operator==(const Vocab& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<char32_t> symbols_;
  std::map<char32_t, int> index_;
};

// Grapheme union of several vocabularies.
Vocab merge_vocabularies(std::span<const Vocab> vocabs);

}  // namespace mmda

#endif  // MMDA_VOCAB_H_
