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

#ifndef MMDA_METRICS_H_
#define MMDA_METRICS_H_

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mmda {

struct EditStats {
  long distance = 0;
  long substitutions = 0;
  long insertions = 0;
  long deletions = 0;
};

// Unit-cost Levenshtein alignment of `hyp` against `ref`. The operation
// counts always sum to the distance.
template <typename Sym>
EditStats edit_distance(std::span<const Sym> ref, std::span<const Sym> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<long> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> long& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<long>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const long sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditStats s;
  s.distance = at(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++s.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++s.deletions;
      --i;
    } else {
      ++s.insertions;
      --j;
    }
  }
  return s;
}

// Character (code point) level.
EditStats char_edit_distance(std::string_view ref, std::string_view hyp);
// Whitespace-token level.
EditStats word_edit_distance(std::string_view ref, std::string_view hyp);

struct ErrorRates {
  double cer = 0.0;
  double wer = 0.0;
  long char_errors = 0;
  long char_ref = 0;
  long word_errors = 0;
  long word_ref = 0;
};

// Pooled rates: total edit distance over total reference length, per
// granularity. Pairs are (reference, hypothesis).
ErrorRates corpus_cer_wer(std::span<const std::pair<std::string, std::string>> pairs);

}  // namespace mmda

#endif  // MMDA_METRICS_H_
