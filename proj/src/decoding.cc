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

#include "mmda/decoding.h"

#include <algorithm>

namespace mmda {

void DecodeConfig::validate() const {
  if (beam_size < 1) throw ConfigError("beam_size must be >= 1, got " + std::to_string(beam_size));
  if (lm_weight < 0) throw ConfigError("lm_weight must be >= 0");
  if (max_output_len < 1) throw ConfigError("max_output_len must be >= 1");
}

std::vector<int> DecodeResult::output() const {
  std::vector<int> out;
  for (int tok : best.tokens) {
    if (tok != Vocab::kSos && tok != Vocab::kEos) out.push_back(tok);
  }
  return out;
}

namespace {

struct Candidate {
  const Hypothesis* parent;
  int token;
  double asr_logp;
  double lm_logp;
  double score;
  int asr_state;
  int lm_state;
};

// Lexicographic order of parent->tokens + token.
bool tokens_less(const Candidate& a, const Candidate& b) {
  auto at = [](const Candidate& c, std::size_t i) {
    return i < c.parent->tokens.size() ? c.parent->tokens[i] : c.token;
  };
  const std::size_t la = a.parent->tokens.size() + 1, lb = b.parent->tokens.size() + 1;
  for (std::size_t i = 0; i < std::min(la, lb); ++i) {
    if (at(a, i) != at(b, i)) return at(a, i) < at(b, i);
  }
  return la < lb;
}

bool hyp_better(const Hypothesis& a, const Hypothesis& b, bool normalized) {
  const double sa = normalized ? a.normalized_score() : a.score;
  const double sb = normalized ? b.normalized_score() : b.score;
  if (sa != sb) return sa > sb;
  return a.tokens < b.tokens;
}

}  // namespace

DecodeResult beam_search_fusion(SequenceScorer& asr, SequenceScorer* lm, const DecodeConfig& cfg,
                                std::span<const int> excluded) {
  cfg.validate();
  const int vocab = asr.vocab_size();
  if (lm != nullptr && lm->vocab_size() != vocab) {
    throw ConfigError("language model vocabulary (" + std::to_string(lm->vocab_size()) +
                      ") differs from ASR vocabulary (" + std::to_string(vocab) + ")");
  }
  std::vector<bool> allowed(static_cast<std::size_t>(vocab), true);
  if (excluded.empty()) {
    allowed[Vocab::kPad] = false;
    allowed[Vocab::kSos] = false;
  } else {
    for (int tok : excluded) {
      if (tok >= 0 && tok < vocab) allowed[static_cast<std::size_t>(tok)] = false;
    }
  }

  Hypothesis init;
  init.tokens = {Vocab::kSos};
  init.asr_state = asr.initial_state();
  init.lm_state = lm != nullptr ? lm->initial_state() : -1;
  std::vector<Hypothesis> live{init};
  DecodeResult result;

  Eigen::VectorXd asr_lp, lm_lp;
  std::vector<Candidate> cands;
  for (int step = 0; step < cfg.max_output_len && !live.empty(); ++step) {
    cands.clear();
    for (const Hypothesis& h : live) {
      const int last = h.tokens.back();
      const int asr_next = asr.advance(h.asr_state, last, asr_lp);
      int lm_next = -1;
      if (lm != nullptr) lm_next = lm->advance(h.lm_state, last, lm_lp);
      for (int v = 0; v < vocab; ++v) {
        if (!allowed[static_cast<std::size_t>(v)]) continue;
        Candidate c{&h, v, h.asr_logp + asr_lp(v), h.lm_logp, 0.0, asr_next, lm_next};
        if (lm != nullptr) c.lm_logp += lm_lp(v);
        c.score = fuse_score(c.asr_logp, c.lm_logp, cfg.lm_weight);
        cands.push_back(c);
      }
    }
    const std::size_t keep = std::min(cands.size(), static_cast<std::size_t>(cfg.beam_size));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        return tokens_less(a, b);
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = cands[i];
      Hypothesis h;
      h.tokens = c.parent->tokens;
      h.tokens.push_back(c.token);
      h.asr_logp = c.asr_logp;
      h.lm_logp = c.lm_logp;
      h.score = c.score;
      h.asr_state = c.asr_state;
      h.lm_state = c.lm_state;
      if (c.token == Vocab::kEos) {
        h.finished = true;
        result.finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }

  if (!result.finished.empty()) {
    result.best = *std::min_element(
        result.finished.begin(), result.finished.end(),
        [](const Hypothesis& a, const Hypothesis& b) { return hyp_better(a, b, true); });
  } else {
    if (live.empty()) throw ContractError("beam_search_fusion: every token is excluded");
    result.unfinished = true;
    result.best = *std::min_element(
        live.begin(), live.end(),
        [](const Hypothesis& a, const Hypothesis& b) { return hyp_better(a, b, true); });
  }
  return result;
}

}  // namespace mmda
