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

#include "mmda/checkpoint.h"

#include <bit>

#include "mmda/errors.h"
#include "mmda/io.h"

namespace mmda {

namespace {

constexpr std::string_view kMagic = "MMDACKPT";
constexpr char kAdamM[] = "adam.m/";
constexpr char kAdamV[] = "adam.v/";
constexpr char kBest[] = "best/";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw LoadError("checkpoint truncated reading " + std::string(what) + " at byte offset " +
                      std::to_string(pos_) + ": need " + std::to_string(n) + " bytes, have " +
                      std::to_string(bytes_.size() - pos_));
    }
    std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint32_t u32(const char* what) {
    std::string_view b = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[static_cast<std::size_t>(i)]))
           << (8 * i);
    }
    return v;
  }

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

const nlohmann::json& header_field(const nlohmann::json& header, const char* name) {
  if (!header.contains(name)) {
    throw LoadError(std::string("checkpoint header: missing field '") + name + "'");
  }
  return header.at(name);
}

template <typename F>
auto parse_field(const nlohmann::json& header, const char* name, F&& parse) {
  const nlohmann::json& j = header_field(header, name);
  try {
    return parse(j);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint header field '") + name + "': " + e.what());
  } catch (const LoadError&) {
    throw;
  } catch (const Error& e) {
    throw LoadError(std::string("checkpoint header field '") + name + "': " + e.what());
  }
}

void check_hash(const nlohmann::json& header, const char* name, std::uint64_t actual) {
  const auto stored = parse_field(header, name, [](const nlohmann::json& j) {
    return j.get<std::uint64_t>();
  });
  if (stored != actual) {
    throw LoadError(std::string("checkpoint header field '") + name + "' mismatch: stored " +
                    std::to_string(stored) + ", recomputed " + std::to_string(actual));
  }
}

const Matrix<float>& expect_tensor(const Checkpoint& ckpt, const std::string& name,
                                   Eigen::Index rows, Eigen::Index cols) {
  auto it = ckpt.tensors.find(name);
  if (it == ckpt.tensors.end()) throw LoadError("checkpoint: missing tensor '" + name + "'");
  if (it->second.rows() != rows || it->second.cols() != cols) {
    throw LoadError("checkpoint: tensor '" + name + "' has shape " + shape_string(it->second) +
                    ", expected " + shape_string(rows, cols));
  }
  return it->second;
}

template <typename Store>
void load_params(const Checkpoint& ckpt, Store& store) {
  for (auto* p : store.all()) {
    p->value = expect_tensor(ckpt, p->name, p->value.rows(), p->value.cols());
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic);
  put_u32(out, kCheckpointVersion);
  out.push_back(static_cast<char>(ckpt.kind));
  const std::string header = ckpt.header.dump();
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rows()));
    put_u32(out, static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(t.data()[i]));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size(), "magic") != kMagic) {
    throw LoadError("checkpoint: bad magic at byte offset 0");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw LoadError("checkpoint field 'version': found " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  ckpt.kind = static_cast<std::uint8_t>(r.take(1, "kind")[0]);
  if (ckpt.kind > kLmKind) {
    throw LoadError("checkpoint field 'kind': unknown value " + std::to_string(ckpt.kind));
  }
  const std::uint32_t header_len = r.u32("header length");
  const std::string_view header = r.take(header_len, "header");
  try {
    ckpt.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint header: ") + e.what());
  }
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t name_len = r.u32("tensor name length");
    std::string name(r.take(name_len, "tensor name"));
    const std::uint32_t rows = r.u32("tensor rows");
    const std::uint32_t cols = r.u32("tensor cols");
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    if (n > (bytes.size() - r.offset()) / 4) {
      throw LoadError("checkpoint truncated in tensor '" + name + "' at byte offset " +
                      std::to_string(r.offset()) + ": need " + std::to_string(4 * n) +
                      " bytes, have " + std::to_string(bytes.size() - r.offset()));
    }
    Matrix<float> t(rows, cols);
    for (std::size_t i = 0; i < n; ++i) t.data()[i] = std::bit_cast<float>(r.u32("tensor data"));
    if (!ckpt.tensors.emplace(std::move(name), std::move(t)).second) {
      throw LoadError("checkpoint: duplicate tensor name");
    }
  }
  if (!r.at_end()) {
    throw LoadError("checkpoint: trailing bytes at offset " + std::to_string(r.offset()));
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const FormatError& e) {
    throw LoadError(e.what());
  }
  return decode_checkpoint(bytes);
}

Checkpoint make_checkpoint(const Seq2Seq<float>& model, const Vocab& vocab,
                           const PhonemeInventory* inventory, const DurationModel* durations) {
  Checkpoint ckpt;
  ckpt.kind = static_cast<std::uint8_t>(model.kind());
  ckpt.header["model"] = model.config().to_json();
  ckpt.header["vocab"] = vocab.to_json();
  ckpt.header["vocab_hash"] = vocab.hash();
  if (inventory != nullptr) {
    ckpt.header["inventory"] = inventory->to_json();
    ckpt.header["inventory_hash"] = inventory->hash();
  }
  if (durations != nullptr) {
    ckpt.header["durations"] = {{"mean", durations->mean}, {"stddev", durations->stddev}};
  }
  for (const Parameter<float>* p : model.params().all()) ckpt.tensors.emplace(p->name, p->value);
  return ckpt;
}

void attach_trainer(Checkpoint& ckpt, const Trainer& trainer) {
  ckpt.header["train_config"] = trainer.config().to_json();
  ckpt.header["state"] = trainer.state().to_json();
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& [name, slot] : trainer.optimizer().slots()) {
    steps[name] = slot.steps;
    ckpt.tensors[kAdamM + name] = slot.m;
    ckpt.tensors[kAdamV + name] = slot.v;
  }
  ckpt.header["adam_steps"] = steps;
  for (const auto& [name, value] : trainer.best_params()) ckpt.tensors[kBest + name] = value;
}

Vocab checkpoint_vocab(const Checkpoint& ckpt) {
  Vocab vocab = parse_field(ckpt.header, "vocab",
                            [](const nlohmann::json& j) { return Vocab::from_json(j); });
  check_hash(ckpt.header, "vocab_hash", vocab.hash());
  return vocab;
}

std::optional<PhonemeInventory> checkpoint_inventory(const Checkpoint& ckpt) {
  if (!ckpt.header.contains("inventory")) return std::nullopt;
  PhonemeInventory inv = parse_field(ckpt.header, "inventory", [](const nlohmann::json& j) {
    return PhonemeInventory::from_json(j);
  });
  check_hash(ckpt.header, "inventory_hash", inv.hash());
  return inv;
}

std::optional<DurationModel> checkpoint_durations(const Checkpoint& ckpt) {
  if (!ckpt.header.contains("durations")) return std::nullopt;
  return parse_field(ckpt.header, "durations", [](const nlohmann::json& j) {
    return DurationModel{j.at("mean").get<double>(), j.at("stddev").get<double>()};
  });
}

std::optional<TrainConfig> checkpoint_train_config(const Checkpoint& ckpt) {
  if (!ckpt.header.contains("train_config")) return std::nullopt;
  return parse_field(ckpt.header, "train_config",
                     [](const nlohmann::json& j) { return TrainConfig::from_json(j); });
}

Seq2Seq<float> checkpoint_model(const Checkpoint& ckpt) {
  if (ckpt.kind == kLmKind) throw LoadError("checkpoint field 'kind': file holds a language model");
  ModelConfig cfg = parse_field(ckpt.header, "model",
                                [](const nlohmann::json& j) { return ModelConfig::from_json(j); });
  if (static_cast<std::uint8_t>(cfg.kind) != ckpt.kind) {
    throw LoadError("checkpoint field 'kind' disagrees with header model kind");
  }
  const Vocab vocab = checkpoint_vocab(ckpt);
  if (vocab.size() != cfg.vocab_size) {
    throw LoadError("checkpoint field 'model.vocab_size': " + std::to_string(cfg.vocab_size) +
                    " but vocabulary has " + std::to_string(vocab.size()) + " entries");
  }
  if (auto inv = checkpoint_inventory(ckpt); inv && cfg.kind != ModelKind::kBaseline &&
                                             inv->size() != cfg.num_phonemes) {
    throw LoadError("checkpoint field 'model.num_phonemes': " + std::to_string(cfg.num_phonemes) +
                    " but inventory has " + std::to_string(inv->size()) + " symbols");
  }
  Seq2Seq<float> model(cfg);
  load_params(ckpt, model.params());
  return model;
}

void restore_trainer(Trainer& trainer, const Checkpoint& ckpt) {
  TrainState state = parse_field(ckpt.header, "state",
                                 [](const nlohmann::json& j) { return TrainState::from_json(j); });
  const nlohmann::json& steps = header_field(ckpt.header, "adam_steps");
  for (auto& [name, slot] : trainer.optimizer().slots()) {
    if (!steps.contains(name)) throw LoadError("checkpoint field 'adam_steps': missing " + name);
    slot.steps = steps.at(name).get<long>();
    slot.m = expect_tensor(ckpt, kAdamM + name, slot.m.rows(), slot.m.cols());
    slot.v = expect_tensor(ckpt, kAdamV + name, slot.v.rows(), slot.v.cols());
  }
  trainer.best_params().clear();
  for (const Parameter<float>* p : trainer.model().params().all()) {
    const std::string key = kBest + p->name;
    if (ckpt.tensors.count(key) != 0) {
      trainer.best_params().emplace(p->name,
                                    expect_tensor(ckpt, key, p->value.rows(), p->value.cols()));
    }
  }
  trainer.state() = state;
  trainer.sync_samplers();
}

Checkpoint make_lm_checkpoint(const RnnLm<float>& lm, const Vocab& vocab) {
  Checkpoint ckpt;
  ckpt.kind = kLmKind;
  ckpt.header["lm"] = lm.config().to_json();
  ckpt.header["vocab"] = vocab.to_json();
  ckpt.header["vocab_hash"] = vocab.hash();
  for (const Parameter<float>* p : lm.params().all()) ckpt.tensors.emplace(p->name, p->value);
  return ckpt;
}

RnnLm<float> checkpoint_lm(const Checkpoint& ckpt) {
  if (ckpt.kind != kLmKind) throw LoadError("checkpoint field 'kind': file holds an ASR model");
  RnnLmConfig cfg = parse_field(ckpt.header, "lm",
                                [](const nlohmann::json& j) { return RnnLmConfig::from_json(j); });
  const Vocab vocab = checkpoint_vocab(ckpt);
  if (vocab.size() != cfg.vocab_size) {
    throw LoadError("checkpoint field 'lm.vocab_size' disagrees with the stored vocabulary");
  }
  RnnLm<float> lm(cfg);
  load_params(ckpt, lm.params());
  return lm;
}

}  // namespace mmda
