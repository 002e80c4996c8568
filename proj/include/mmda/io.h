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

// On-disk formats.
//
// Feature file (all integers little-endian):
//   bytes 0..3   "FEAT"
//   bytes 4..7   u32 format version (1)
//   bytes 8..11  u32 L (frames)
//   bytes 12..15 u32 D (feature dim)
//   then L*D float32, row-major frames
//
// Manifest: JSON lines {"id", "feat", "text", "lang"}; relative feat paths are
// resolved against the manifest's directory.
//
// Augmenting corpus: JSON lines {"id", "phoneme_ids", "text"}; phoneme ids are
// duration-expanded only when the corpus was prepared with expansion.

#ifndef MMDA_IO_H_
#define MMDA_IO_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mmda/autodiff.h"

namespace mmda {

inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

std::string encode_feature_file(const Matrix<float>& frames);
Matrix<float> decode_feature_file(std::string_view bytes);
void write_feature_file(const std::string& path, const Matrix<float>& frames);
Matrix<float> read_feature_file(const std::string& path);

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::string_view bytes);

struct ManifestEntry {
  std::string id;
  std::string feat;
  std::string text;
  std::string lang;
};

// Validates unique ids and nonempty text. With `check_feats`, every feature
// path must exist; paths are returned resolved.
std::vector<ManifestEntry> read_manifest(const std::string& path, bool check_feats = true);
void write_manifest(const std::string& path, std::span<const ManifestEntry> entries);

struct Utterance {
  std::string id;
  Matrix<float> frames;
  std::string text;
  std::string lang;
};

std::vector<Utterance> load_utterances(const std::string& manifest_path);

// Seeded random subset of round(fraction * N) entries in original order.
// Subsets drawn with one seed are nested across fractions.
std::vector<std::size_t> subset_indices(std::size_t n, double fraction, std::uint64_t seed);

template <typename Entry>
std::vector<Entry> subset_manifest(std::span<const Entry> entries, double fraction,
                                   std::uint64_t seed) {
  std::vector<Entry> out;
  for (std::size_t i : subset_indices(entries.size(), fraction, seed)) out.push_back(entries[i]);
  return out;
}

struct AugmentingRecord {
  std::string id;
  std::vector<int> phoneme_ids;
  std::string text;
};

std::vector<AugmentingRecord> read_augmenting_corpus(const std::string& path);
void write_augmenting_corpus(const std::string& path, std::span<const AugmentingRecord> records);

// Plain text, one sentence per line (empty lines kept).
std::vector<std::string> read_lines(const std::string& path);

// Audio duration at a 10 ms frame shift.
double training_hours(std::span<const Utterance> utts, double frame_shift_sec = 0.01);

// One point of a CER-versus-training-data curve.
struct RunSummary {
  std::string system;
  double hours = 0.0;
  double dev_cer = 0.0;
  double eval_cer = 0.0;

  nlohmann::json to_json() const;
  static RunSummary from_json(const nlohmann::json& j);
};

RunSummary read_summary(const std::string& path);
void write_summary(const std::string& path, const RunSummary& s);

// CSV with header "hours,system,dev_cer,eval_cer", rows sorted by hours, then
// system.
std::string export_curve_csv(std::vector<RunSummary> runs);

}  // namespace mmda

#endif  // MMDA_IO_H_
