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

#include "mmda/toy_task.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "mmda/errors.h"

namespace mmda {

namespace fs = std::filesystem;

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<int>(rng() % span);
}

double gaussian(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int sample_cdf(const std::vector<double>& cdf, std::mt19937_64& rng) {
  const double u = uniform01(rng) * cdf.back();
  return static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

std::vector<double> zipf_cdf(int n, double s) {
  std::vector<double> cdf(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    acc += 1.0 / std::pow(k + 1.0, s);
    cdf[static_cast<std::size_t>(k)] = acc;
  }
  return cdf;
}

void fisher_yates(std::vector<int>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(i) - 1))]);
  }
}

}  // namespace

void ToyTaskSpec::validate() const {
  if (num_phonemes < 2) throw ConfigError("toy task needs at least 2 phonemes");
  if (num_phonemes > 26) throw ConfigError("toy task supports at most 26 phonemes");
  if (num_words < 1) throw ConfigError("toy task needs at least one word");
  if (min_word_len < 1 || max_word_len < min_word_len) throw ConfigError("bad word length range");
  if (min_words < 1 || max_words < min_words) throw ConfigError("bad sentence length range");
  if (feat_dim < 1) throw ConfigError("feat_dim must be >= 1");
  if (!(duration_mean > 0)) throw ConfigError("duration_mean must be positive");
  if (duration_stddev < 0) throw ConfigError("duration_stddev must be >= 0");
  if (noise_std < 0) throw ConfigError("noise std must be >= 0");
}

nlohmann::json ToyTaskSpec::to_json() const {
  return {{"num_phonemes", num_phonemes}, {"num_words", num_words},
          {"min_word_len", min_word_len}, {"max_word_len", max_word_len},
          {"min_words", min_words},       {"max_words", max_words},
          {"feat_dim", feat_dim},         {"duration_mean", duration_mean},
          {"duration_stddev", duration_stddev}, {"noise_std", noise_std},
          {"zipf_exponent", zipf_exponent},     {"seed", seed}};
}

ToyTaskSpec ToyTaskSpec::from_json(const nlohmann::json& j) {
  ToyTaskSpec s;
  s.num_phonemes = j.value("num_phonemes", s.num_phonemes);
  s.num_words = j.value("num_words", s.num_words);
  s.min_word_len = j.value("min_word_len", s.min_word_len);
  s.max_word_len = j.value("max_word_len", s.max_word_len);
  s.min_words = j.value("min_words", s.min_words);
  s.max_words = j.value("max_words", s.max_words);
  s.feat_dim = j.value("feat_dim", s.feat_dim);
  s.duration_mean = j.value("duration_mean", s.duration_mean);
  s.duration_stddev = j.value("duration_stddev", s.duration_stddev);
  s.noise_std = j.value("noise_std", s.noise_std);
  s.zipf_exponent = j.value("zipf_exponent", s.zipf_exponent);
  s.seed = j.value("seed", s.seed);
  return s;
}

std::vector<int> toy_pronounce(const ToyCorpus& corpus, const std::string& word) {
  std::vector<int> out;
  for (char ch : word) out.push_back(corpus.letter_to_phoneme.at(ch));
  return out;
}

ToyCorpus make_toy_corpus(const ToyTaskSpec& spec, int n_train, int n_dev, int n_aug) {
  spec.validate();
  if (n_train < 1 || n_dev < 1 || n_aug < 1) throw ConfigError("corpus sizes must be >= 1");
  std::mt19937_64 rng(spec.seed);
  ToyCorpus c;
  c.spec = spec;
  const int np = spec.num_phonemes;
  for (int k = 0; k < np; ++k) {
    char name[16];
    std::snprintf(name, sizeof(name), "p%02d", k);
    c.phonemes.push_back(name);
  }

  // Emissions: one row per phoneme plus the word boundary.
  c.emissions.resize(np + 1, spec.feat_dim);
  for (Eigen::Index i = 0; i < c.emissions.size(); ++i) {
    c.emissions.data()[i] = static_cast<float>(gaussian(rng));
  }

  // Every phoneme receives a letter; the leftover letters collide.
  std::vector<int> letters(26);
  std::iota(letters.begin(), letters.end(), 0);
  fisher_yates(letters, rng);
  for (int i = 0; i < 26; ++i) {
    const int ph = i < np ? i : uniform_int(rng, 0, np - 1);
    c.letter_to_phoneme[static_cast<char>('a' + letters[static_cast<std::size_t>(i)])] = ph;
  }

  std::vector<std::string> words;
  std::set<std::vector<int>> prons;
  long attempts = 0;
  while (static_cast<int>(words.size()) < spec.num_words) {
    if (++attempts > 1000000) throw ConfigError("toy task: cannot generate enough distinct words");
    const int len = uniform_int(rng, spec.min_word_len, spec.max_word_len);
    std::string w;
    int prev = -1;
    while (static_cast<int>(w.size()) < len) {
      const char ch = static_cast<char>('a' + uniform_int(rng, 0, 25));
      const int ph = c.letter_to_phoneme.at(ch);
      if (ph == prev) continue;
      w.push_back(ch);
      prev = ph;
    }
    std::vector<int> pron = toy_pronounce(c, w);
    if (!prons.insert(pron).second) continue;
    c.words.emplace(w, std::move(pron));
    words.push_back(w);
  }

  // Zipfian start and successor distributions over per-word permutations.
  const std::vector<double> cdf = zipf_cdf(spec.num_words, spec.zipf_exponent);
  std::vector<int> start(static_cast<std::size_t>(spec.num_words));
  std::iota(start.begin(), start.end(), 0);
  fisher_yates(start, rng);
  std::vector<std::vector<int>> successors(static_cast<std::size_t>(spec.num_words), start);
  for (auto& s : successors) fisher_yates(s, rng);

  auto sentence = [&]() {
    const int n = uniform_int(rng, spec.min_words, spec.max_words);
    int w = start[static_cast<std::size_t>(sample_cdf(cdf, rng))];
    std::string text = words[static_cast<std::size_t>(w)];
    for (int k = 1; k < n; ++k) {
      w = successors[static_cast<std::size_t>(w)][static_cast<std::size_t>(sample_cdf(cdf, rng))];
      text += ' ';
      text += words[static_cast<std::size_t>(w)];
    }
    return text;
  };

  const int wb = np;
  auto render = [&](const std::string& text) {
    std::vector<int> seq;
    const std::vector<std::string> ws = split_words(text);
    for (std::size_t i = 0; i < ws.size(); ++i) {
      if (i > 0) seq.push_back(wb);
      const std::vector<int>& p = c.words.at(ws[i]);
      seq.insert(seq.end(), p.begin(), p.end());
    }
    std::vector<int> frames;
    for (int ph : seq) {
      const double d = spec.duration_mean + spec.duration_stddev * gaussian(rng);
      const int dur = std::max(1, static_cast<int>(std::lround(d)));
      frames.insert(frames.end(), static_cast<std::size_t>(dur), ph);
    }
    Matrix<float> x(static_cast<Eigen::Index>(frames.size()), spec.feat_dim);
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      x.row(t) = c.emissions.row(frames[static_cast<std::size_t>(t)]);
      if (spec.noise_std > 0) {
        for (Eigen::Index k = 0; k < x.cols(); ++k) {
          x(t, k) += static_cast<float>(spec.noise_std * gaussian(rng));
        }
      }
    }
    return x;
  };

  std::set<std::string> speech_text;
  auto speech = [&](const char* prefix, int n, std::vector<Utterance>& out) {
    for (int i = 0; i < n; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "%s-%05d", prefix, i);
      std::string text = sentence();
      speech_text.insert(text);
      out.push_back({id, render(text), text, "toy"});
    }
  };
  speech("train", n_train, c.train);
  speech("dev", n_dev, c.dev);

  std::set<std::string> seen = speech_text;
  attempts = 0;
  while (static_cast<int>(c.augmenting.size()) < n_aug) {
    if (++attempts > 100L * n_aug + 1000) {
      throw ConfigError("toy task: cannot draw enough distinct augmenting sentences");
    }
    std::string text = sentence();
    if (seen.insert(text).second) c.augmenting.push_back(std::move(text));
  }
  return c;
}

std::string toy_lexicon_tsv(const ToyCorpus& corpus) {
  std::ostringstream out;
  for (const auto& [word, pron] : corpus.words) {
    out << word << '\t';
    for (std::size_t i = 0; i < pron.size(); ++i) {
      if (i > 0) out << ' ';
      out << corpus.phonemes[static_cast<std::size_t>(pron[i])];
    }
    out << '\n';
  }
  return out.str();
}

Lexicon toy_lexicon(const ToyCorpus& corpus) {
  std::istringstream in(toy_lexicon_tsv(corpus));
  return read_lexicon(in);
}

void write_toy_corpus(const ToyCorpus& corpus, const std::string& dir, bool force) {
  const fs::path root(dir);
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!force) throw ConfigError("output directory " + dir + " exists; pass --force to overwrite");
    fs::remove_all(root);
  }
  fs::create_directories(root / "feats");
  auto write_split = [&](const char* name, const std::vector<Utterance>& utts) {
    std::vector<ManifestEntry> entries;
    for (const Utterance& u : utts) {
      const std::string rel = "feats/" + u.id + ".feat";
      write_feature_file((root / rel).string(), u.frames);
      entries.push_back({u.id, rel, u.text, u.lang});
    }
    write_manifest((root / name).string(), entries);
  };
  write_split("train.jsonl", corpus.train);
  write_split("dev.jsonl", corpus.dev);
  std::string aug;
  for (const std::string& s : corpus.augmenting) aug += s + "\n";
  write_file_bytes((root / "aug.txt").string(), aug);
  write_file_bytes((root / "lexicon.tsv").string(), toy_lexicon_tsv(corpus));
  write_file_bytes((root / "toy.json").string(), corpus.spec.to_json().dump(2) + "\n");
}

}  // namespace mmda
