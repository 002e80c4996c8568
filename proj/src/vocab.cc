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

#include "mmda/vocab.h"

#include <cctype>

#include "mmda/errors.h"

namespace mmda {

std::u32string utf8_decode(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    int extra = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      extra = 1;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      extra = 2;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      extra = 3;
    } else {
      throw FormatError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + static_cast<std::size_t>(extra) >= text.size()) {
      throw FormatError("truncated UTF-8 sequence at offset " + std::to_string(i));
    }
    for (int k = 1; k <= extra; ++k) {
      const auto b = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
      if ((b & 0xC0) != 0x80) {
        throw FormatError("invalid UTF-8 continuation byte at offset " +
                          std::to_string(i + static_cast<std::size_t>(k)));
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    out.push_back(cp);
    i += 1 + static_cast<std::size_t>(extra);
  }
  return out;
}

std::string utf8_encode(char32_t c) {
  std::string out;
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
  return out;
}

std::string utf8_encode(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t c : text) out += utf8_encode(c);
  return out;
}

std::size_t utf8_length(std::string_view text) { return utf8_decode(text).size(); }

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (char ch : bytes) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return h;
}

Vocab::Vocab(const std::set<char32_t>& symbols) : symbols_(symbols.begin(), symbols.end()) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    index_.emplace(symbols_[i], kNumReserved + static_cast<int>(i));
  }
}

Vocab Vocab::from_texts(std::span<const std::string> texts) {
  std::set<char32_t> symbols;
  for (const std::string& t : texts) {
    for (char32_t c : utf8_decode(t)) symbols.insert(c);
  }
  return Vocab(symbols);
}

int Vocab::id(char32_t c) const {
  auto it = index_.find(c);
  return it == index_.end() ? kUnk : it->second;
}

std::string Vocab::symbol_string(int id) const {
  switch (id) {
    case kPad:
      return "<pad>";
    case kSos:
      return "<sos>";
    case kEos:
      return "<eos>";
    case kUnk:
      return "<unk>";
    default:
      break;
  }
  if (id < 0 || id >= size()) throw VocabError("vocabulary id " + std::to_string(id) + " out of range");
  return utf8_encode(symbols_[static_cast<std::size_t>(id - kNumReserved)]);
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids{kSos};
  for (char32_t c : utf8_decode(text)) ids.push_back(id(c));
  ids.push_back(kEos);
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::u32string out;
  for (int id : ids) {
    if (id < kNumReserved) continue;
    if (id >= size()) throw VocabError("vocabulary id " + std::to_string(id) + " out of range");
    out.push_back(symbols_[static_cast<std::size_t>(id - kNumReserved)]);
  }
  return utf8_encode(out);
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = fnv1a("vocab");
  for (char32_t c : symbols_) h = fnv1a(utf8_encode(c) + '\n', h);
  return h;
}

nlohmann::json Vocab::to_json() const {
  nlohmann::json symbols = nlohmann::json::array();
  for (char32_t c : symbols_) symbols.push_back(utf8_encode(c));
  return {{"reserved", {"<pad>", "<sos>", "<eos>", "<unk>"}}, {"symbols", symbols}};
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  std::set<char32_t> symbols;
  for (const auto& s : j.at("symbols")) {
    std::u32string cps = utf8_decode(s.get<std::string>());
    if (cps.size() != 1) throw FormatError("vocabulary symbol must be one character: " + s.dump());
    symbols.insert(cps[0]);
  }
  return Vocab(symbols);
}

Vocab merge_vocabularies(std::span<const Vocab> vocabs) {
  if (vocabs.empty()) throw ContractError("merge_vocabularies: no vocabularies");
  std::set<char32_t> all;
  for (const Vocab& v : vocabs) all.insert(v.symbols().begin(), v.symbols().end());
  return Vocab(all);
}

}  // namespace mmda
