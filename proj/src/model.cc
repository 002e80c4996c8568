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

#include "mmda/model.h"

#include <cmath>

namespace mmda {

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kEncoder:
      return "enc";
    case ParamGroup::kAttention:
      return "att";
    case ParamGroup::kDecoder:
      return "dec";
    case ParamGroup::kAugmenting:
      return "da";
  }
  return "?";
}

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kBaseline:
      return "baseline";
    case ModelKind::kMmda:
      return "mmda";
    case ModelKind::kPsda:
      return "psda";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "baseline") return ModelKind::kBaseline;
  if (name == "mmda" || name == "MMDA") return ModelKind::kMmda;
  if (name == "psda" || name == "PSDA") return ModelKind::kPsda;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (baseline|mmda|psda)");
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* field) {
    if (v < 1) throw ConfigError(std::string("model config: ") + field + " must be >= 1");
  };
  positive(feat_dim, "feat_dim");
  positive(phone_emb, "phone_emb");
  positive(enc_hidden, "enc_hidden");
  positive(proj_dim, "proj_dim");
  positive(aug_hidden, "aug_hidden");
  positive(dec_emb, "dec_emb");
  positive(dec_hidden, "dec_hidden");
  positive(att_dim, "att_dim");
  positive(conv_channels, "conv_channels");
  if (vocab_size <= Vocab::kNumReserved) throw ConfigError("model config: empty output vocabulary");
  if (kind != ModelKind::kBaseline && num_phonemes < 2) {
    throw ConfigError("model config: augmenting encoder needs a phoneme inventory");
  }
  if (conv_width < 1 || conv_width % 2 == 0) {
    throw ConfigError("model config: conv_width must be odd, got " + std::to_string(conv_width));
  }
  if (!(init_scale > 0.0) || !std::isfinite(init_scale)) {
    throw ConfigError("model config: init_scale must be positive");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"kind", std::string(model_kind_name(kind))},
          {"feat_dim", feat_dim},
          {"vocab_size", vocab_size},
          {"num_phonemes", num_phonemes},
          {"phone_emb", phone_emb},
          {"enc_hidden", enc_hidden},
          {"proj_dim", proj_dim},
          {"aug_hidden", aug_hidden},
          {"dec_emb", dec_emb},
          {"dec_hidden", dec_hidden},
          {"att_dim", att_dim},
          {"conv_channels", conv_channels},
          {"conv_width", conv_width},
          {"init_scale", init_scale},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kind = parse_model_kind(j.at("kind").get<std::string>());
  c.feat_dim = j.at("feat_dim").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.num_phonemes = j.at("num_phonemes").get<int>();
  c.phone_emb = j.at("phone_emb").get<int>();
  c.enc_hidden = j.at("enc_hidden").get<int>();
  c.proj_dim = j.at("proj_dim").get<int>();
  c.aug_hidden = j.at("aug_hidden").get<int>();
  c.dec_emb = j.at("dec_emb").get<int>();
  c.dec_hidden = j.at("dec_hidden").get<int>();
  c.att_dim = j.at("att_dim").get<int>();
  c.conv_channels = j.at("conv_channels").get<int>();
  c.conv_width = j.at("conv_width").get<int>();
  c.init_scale = j.value("init_scale", kInitScale);
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

nlohmann::json RnnLmConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"emb_dim", emb_dim}, {"hidden_dim", hidden_dim},
          {"seed", seed}};
}

RnnLmConfig RnnLmConfig::from_json(const nlohmann::json& j) {
  RnnLmConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.emb_dim = j.at("emb_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

GroupMask trainable_mask(TrainPhase phase) {
  GroupMask m;
  auto allow = [&m](ParamGroup g) { m.allowed[static_cast<std::size_t>(g)] = true; };
  switch (phase) {
    case TrainPhase::kPretrainMmda:
      allow(ParamGroup::kAugmenting);
      allow(ParamGroup::kAttention);
      allow(ParamGroup::kDecoder);
      break;
    case TrainPhase::kPretrainPsda:
    case TrainPhase::kMain:
      for (ParamGroup g : kAllGroups) allow(g);
      break;
  }
  return m;
}

}  // namespace mmda
