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

#ifndef MMDA_TESTS_TEST_UTIL_H_
#define MMDA_TESTS_TEST_UTIL_H_

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mmda/autodiff.h"
#include "mmda/model.h"

namespace mmda::testing {

template <typename T>
Matrix<T> random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                        double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

inline std::vector<int> random_ids(std::size_t n, int lo, int hi, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(lo, hi);
  std::vector<int> ids(n);
  for (int& id : ids) id = dist(rng);
  return ids;
}

// sos, `n` random symbols, eos.
inline std::vector<int> random_target(std::size_t n, int vocab, std::mt19937_64& rng) {
  std::vector<int> t{Vocab::kSos};
  for (int id : random_ids(n, Vocab::kNumReserved, vocab - 1, rng)) t.push_back(id);
  t.push_back(Vocab::kEos);
  return t;
}

inline ModelConfig tiny_config(ModelKind kind, std::uint64_t seed = 1) {
  ModelConfig c;
  c.kind = kind;
  c.feat_dim = 3;
  c.vocab_size = 7;
  c.num_phonemes = kind == ModelKind::kBaseline ? 0 : 5;
  c.phone_emb = 3;
  c.enc_hidden = 2;
  c.proj_dim = 3;
  c.aug_hidden = 2;
  c.dec_emb = 3;
  c.dec_hidden = 3;
  c.att_dim = 3;
  c.conv_channels = 2;
  c.conv_width = 3;
  c.seed = seed;
  return c;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mmda-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& child = "") const { return (path_ / child).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace mmda::testing

#endif  // MMDA_TESTS_TEST_UTIL_H_
