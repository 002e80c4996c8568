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

#include "mmda/io.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "mmda/errors.h"

namespace mmda {

namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string encode_feature_file(const Matrix<float>& frames) {
  if (frames.rows() < 1 || frames.cols() < 1) {
    throw FormatError("feature matrix must be at least 1x1, got " + shape_string(frames));
  }
  std::string out = "FEAT";
  put_u32(out, kFeatureFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(frames.rows()));
  put_u32(out, static_cast<std::uint32_t>(frames.cols()));
  out.reserve(kFeatureHeaderBytes + 4 * static_cast<std::size_t>(frames.size()));
  for (Eigen::Index i = 0; i < frames.size(); ++i) {
    put_u32(out, std::bit_cast<std::uint32_t>(frames.data()[i]));
  }
  return out;
}

Matrix<float> decode_feature_file(std::string_view bytes) {
  if (bytes.size() < kFeatureHeaderBytes) {
    throw FormatError("feature file truncated in header: expected at least 16 bytes, got " +
                      std::to_string(bytes.size()));
  }
  if (bytes.substr(0, 4) != "FEAT") throw FormatError("feature file: bad magic at byte offset 0");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFeatureFormatVersion) {
    throw FormatError("feature file: unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  }
  const std::uint32_t len = get_u32(bytes, 8), dim = get_u32(bytes, 12);
  if (len < 1) throw FormatError("feature file: L must be >= 1 (byte offset 8)");
  if (dim < 1) throw FormatError("feature file: D must be >= 1 (byte offset 12)");
  const std::size_t expected = kFeatureHeaderBytes + 4ull * len * dim;
  if (bytes.size() != expected) {
    throw FormatError("feature file length mismatch: expected " + std::to_string(expected) +
                      " bytes for " + std::to_string(len) + "x" + std::to_string(dim) +
                      ", got " + std::to_string(bytes.size()));
  }
  Matrix<float> frames(len, dim);
  for (Eigen::Index i = 0; i < frames.size(); ++i) {
    frames.data()[i] =
        std::bit_cast<float>(get_u32(bytes, kFeatureHeaderBytes + 4 * static_cast<std::size_t>(i)));
  }
  return frames;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

void write_feature_file(const std::string& path, const Matrix<float>& frames) {
  write_file_bytes(path, encode_feature_file(frames));
}

Matrix<float> read_feature_file(const std::string& path) {
  try {
    return decode_feature_file(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::vector<ManifestEntry> read_manifest(const std::string& path, bool check_feats) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::set<std::string> ids;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ManifestEntry e;
    try {
      e.id = j.at("id").get<std::string>();
      e.feat = j.at("feat").get<std::string>();
      e.text = j.at("text").get<std::string>();
      e.lang = j.value("lang", std::string());
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + ex.what());
    }
    if (!ids.insert(e.id).second) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": duplicate id " + e.id);
    }
    if (e.text.empty()) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": empty text for " + e.id);
    }
    fs::path feat(e.feat);
    if (feat.is_relative()) feat = base / feat;
    if (check_feats && !fs::exists(feat)) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": feature file not found: " +
                        feat.string());
    }
    e.feat = feat.string();
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::string& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write manifest " + path);
  for (const ManifestEntry& e : entries) {
    nlohmann::json j = {{"id", e.id}, {"feat", e.feat}, {"text", e.text}, {"lang", e.lang}};
    out << j.dump() << '\n';
  }
}

std::vector<Utterance> load_utterances(const std::string& manifest_path) {
  std::vector<Utterance> utts;
  for (ManifestEntry& e : read_manifest(manifest_path)) {
    utts.push_back({std::move(e.id), read_feature_file(e.feat), std::move(e.text), std::move(e.lang)});
  }
  return utts;
}

std::vector<std::size_t> subset_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ContractError("subset fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<AugmentingRecord> read_augmenting_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open augmenting corpus " + path);
  std::vector<AugmentingRecord> out;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("phoneme_ids").get<std::vector<int>>(),
                     j.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_augmenting_corpus(const std::string& path, std::span<const AugmentingRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  for (const AugmentingRecord& r : records) {
    nlohmann::json j = {{"id", r.id}, {"phoneme_ids", r.phoneme_ids}, {"text", r.text}};
    out << j.dump() << '\n';
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

double training_hours(std::span<const Utterance> utts, double frame_shift_sec) {
  double frames = 0;
  for (const Utterance& u : utts) frames += static_cast<double>(u.frames.rows());
  return frames * frame_shift_sec / 3600.0;
}

nlohmann::json RunSummary::to_json() const {
  return {{"system", system}, {"hours", hours}, {"dev_cer", dev_cer}, {"eval_cer", eval_cer}};
}

RunSummary RunSummary::from_json(const nlohmann::json& j) {
  RunSummary s;
  s.system = j.at("system").get<std::string>();
  s.hours = j.at("hours").get<double>();
  s.dev_cer = j.at("dev_cer").get<double>();
  s.eval_cer = j.value("eval_cer", s.dev_cer);
  return s;
}

RunSummary read_summary(const std::string& path) {
  try {
    return RunSummary::from_json(nlohmann::json::parse(read_file_bytes(path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_summary(const std::string& path, const RunSummary& s) {
  write_file_bytes(path, s.to_json().dump(2) + "\n");
}

std::string export_curve_csv(std::vector<RunSummary> runs) {
  std::stable_sort(runs.begin(), runs.end(), [](const RunSummary& a, const RunSummary& b) {
    if (a.hours != b.hours) return a.hours < b.hours;
    return a.system < b.system;
  });
  std::ostringstream out;
  out << "hours,system,dev_cer,eval_cer\n";
  out << std::setprecision(6) << std::fixed;
  for (const RunSummary& r : runs) {
    std::string system = r.system;
    if (system.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char ch : system) {
        if (ch == '"') quoted += '"';
        quoted += ch;
      }
      system = quoted + "\"";
    }
    out << r.hours << ',' << system << ',' << r.dev_cer << ',' << r.eval_cer << '\n';
  }
  return out.str();
}

}  // namespace mmda
