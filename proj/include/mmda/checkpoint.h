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

// Named-tensor checkpoint container. All integers little-endian.
//
//   8 bytes  "MMDACKPT"
//   u32      format version
//   u8       kind: 0 baseline, 1 MMDA, 2 PSDA, 3 RNNLM
//   u32      header length, then a UTF-8 JSON header (configs, vocabularies
//            and their hashes, training state)
//   u32      tensor count, then per tensor in name order:
//            u32 name length, name, u32 rows, u32 cols, rows*cols float32
//
// Optimizer moments are stored as "adam.m/<param>" and "adam.v/<param>",
// the best-dev snapshot as "best/<param>".

#ifndef MMDA_CHECKPOINT_H_
#define MMDA_CHECKPOINT_H_

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"
#include "mmda/augmentation.h"
#include "mmda/model.h"
#include "mmda/training.h"
#include "mmda/vocab.h"

namespace mmda {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kLmKind = 3;

struct Checkpoint {
  std::uint8_t kind = 0;
  nlohmann::json header;
  std::map<std::string, Matrix<float>> tensors;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
// Throws LoadError naming the offending field or byte offset.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const Seq2Seq<float>& model, const Vocab& vocab,
                           const PhonemeInventory* inventory = nullptr,
                           const DurationModel* durations = nullptr);
// Adds optimizer moments, training state and the best-dev snapshot.
void attach_trainer(Checkpoint& ckpt, const Trainer& trainer);

// Rebuilds the model, checking every expected tensor name and shape.
Seq2Seq<float> checkpoint_model(const Checkpoint& ckpt);
Vocab checkpoint_vocab(const Checkpoint& ckpt);
std::optional<PhonemeInventory> checkpoint_inventory(const Checkpoint& ckpt);
std::optional<DurationModel> checkpoint_durations(const Checkpoint& ckpt);
std::optional<TrainConfig> checkpoint_train_config(const Checkpoint& ckpt);

// Restores optimizer, state and best snapshot into a trainer built over the
// checkpoint's model.
void restore_trainer(Trainer& trainer, const Checkpoint& ckpt);

Checkpoint make_lm_checkpoint(const RnnLm<float>& lm, const Vocab& vocab);
RnnLm<float> checkpoint_lm(const Checkpoint& ckpt);

}  // namespace mmda

#endif  // MMDA_CHECKPOINT_H_
