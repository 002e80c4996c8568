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

#include "mmda/metrics.h"

#include "mmda/errors.h"
#include "mmda/vocab.h"

namespace mmda {

EditStats char_edit_distance(std::string_view ref, std::string_view hyp) {
  const std::u32string r = utf8_decode(ref), h = utf8_decode(hyp);
  return edit_distance<char32_t>(r, h);
}

EditStats word_edit_distance(std::string_view ref, std::string_view hyp) {
  const std::vector<std::string> r = split_words(ref), h = split_words(hyp);
  return edit_distance<std::string>(r, h);
}

ErrorRates corpus_cer_wer(std::span<const std::pair<std::string, std::string>> pairs) {
  if (pairs.empty()) throw ContractError("corpus_cer_wer: no utterances");
  ErrorRates r;
  for (const auto& [ref, hyp] : pairs) {
    r.char_errors += char_edit_distance(ref, hyp).distance;
    r.char_ref += static_cast<long>(utf8_length(ref));
    r.word_errors += word_edit_distance(ref, hyp).distance;
    r.word_ref += static_cast<long>(split_words(ref).size());
  }
  if (r.char_ref == 0) throw ContractError("corpus_cer_wer: total reference length is zero");
  r.cer = static_cast<double>(r.char_errors) / static_cast<double>(r.char_ref);
  r.wer = r.word_ref > 0 ? static_cast<double>(r.word_errors) / static_cast<double>(r.word_ref) : 0.0;
  return r;
}

}  // namespace mmda
