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

// mmda-asr: command-line front end.
//
// Exit status: 0 success, 2 usage or configuration error, 1 runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mmda/augmentation.h"
#include "mmda/checkpoint.h"
#include "mmda/decoding.h"
#include "mmda/errors.h"
#include "mmda/io.h"
#include "mmda/metrics.h"
#include "mmda/toy_task.h"
#include "mmda/training.h"
#include "mmda/vocab.h"

namespace fs = std::filesystem;
using namespace mmda;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_json(const std::string& path, const nlohmann::json& j) {
  write_file_bytes(path, j.dump(2) + "\n");
}

std::string child(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// ---------------------------------------------------------------------------
// gen-toy

struct GenToyArgs {
  std::string out;
  int n_train = 200;
  int n_dev = 100;
  int n_aug = 5000;
  bool force = false;
  ToyTaskSpec spec;
};

int run_gen_toy(const GenToyArgs& a) {
  a.spec.validate();
  if (a.n_train < 1 || a.n_dev < 1 || a.n_aug < 1) {
    throw ConfigError("--train, --dev and --aug must be >= 1");
  }
  const ToyCorpus c = make_toy_corpus(a.spec, a.n_train, a.n_dev, a.n_aug);
  write_toy_corpus(c, a.out, a.force);
  std::cout << "wrote " << c.train.size() << " train, " << c.dev.size() << " dev utterances and "
            << c.augmenting.size() << " augmenting sentences to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// prepare

struct PrepareArgs {
  std::string text;
  std::string lexicon;
  std::vector<std::string> manifests;
  std::string out;
  std::size_t min_len = 4;
  std::size_t max_len = 300;
  bool expand = false;
  std::uint64_t seed = 1;
};

int run_prepare(const PrepareArgs& a) {
  if (a.min_len > a.max_len) throw ConfigError("--min-len exceeds --max-len");
  std::vector<std::string> texts;
  std::vector<UtteranceStats> stats;
  for (const std::string& m : a.manifests) {
    for (const Utterance& u : load_utterances(m)) {
      texts.push_back(u.text);
      stats.push_back({static_cast<long>(u.frames.rows()), static_cast<long>(utf8_length(u.text))});
    }
  }
  if (texts.empty()) throw ConfigError("speech manifests are empty");
  const Vocab vocab = Vocab::from_texts(texts);
  Lexicon lex = load_lexicon(a.lexicon);
  const std::vector<std::string> sentences = read_lines(a.text);
  const PreparedCorpus pc = prepare_augmenting(sentences, lex, vocab.symbol_set(), stats,
                                               FilterOptions{a.min_len, a.max_len});

  std::mt19937_64 rng(a.seed);
  std::vector<AugmentingRecord> records;
  records.reserve(pc.sentences.size());
  for (std::size_t i = 0; i < pc.sentences.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "aug-%07zu", i);
    std::vector<int> ids = pc.sentences[i].phonemes;
    if (a.expand) ids = expand_durations(ids, sample_durations(ids, pc.durations, rng));
    records.push_back({id, std::move(ids), pc.sentences[i].text});
  }
  fs::create_directories(a.out);
  write_augmenting_corpus(child(a.out, "aug.jsonl"), records);
  write_json(child(a.out, "inventory.json"), lex.inventory.to_json());
  write_json(child(a.out, "vocab.json"), vocab.to_json());
  write_json(child(a.out, "durations.json"), {{"mean", pc.durations.mean},
                                               {"stddev", pc.durations.stddev},
                                               {"expanded", a.expand},
                                               {"seed", a.seed}});
  std::cout << "kept " << records.size() << " sentences, dropped " << pc.dropped
            << "; duration mean " << pc.durations.mean << " frames per symbol\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// lm-train

struct LmArgs {
  std::vector<std::string> texts;
  std::string vocab;
  std::string out;
  LmTrainConfig train;
  RnnLmConfig model;
};

int run_lm_train(LmArgs a) {
  a.train.validate();
  if (a.model.emb_dim < 1 || a.model.hidden_dim < 1) throw ConfigError("LM dimensions must be >= 1");
  const Vocab vocab = Vocab::from_json(read_json(a.vocab));
  std::vector<std::vector<int>> sentences;
  for (const std::string& path : a.texts) {
    for (const std::string& line : read_lines(path)) {
      if (!split_words(line).empty()) sentences.push_back(vocab.encode(line));
    }
  }
  if (sentences.empty()) throw ConfigError("no training sentences for the language model");
  a.model.vocab_size = vocab.size();
  a.model.seed = a.train.seed;
  RnnLm<float> lm(a.model);
  train_rnnlm(lm, sentences, a.train, [](long epoch, double loss) {
    std::cerr << "lm epoch " << epoch << " loss " << loss << "\n";
  });
  save_checkpoint(a.out, make_lm_checkpoint(lm, vocab));
  std::cout << "wrote " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // shorthand options, applied last
  std::string out;
  std::string system;
  bool resume = false;
  long checkpoint_every = 0;
  long stop_after = 0;
};

struct AugmentingData {
  std::vector<AugmentingRecord> records;
  PhonemeInventory inventory;
  DurationModel durations;
};

AugmentingData load_augmenting_dir(const std::string& dir) {
  AugmentingData d;
  d.records = read_augmenting_corpus(child(dir, "aug.jsonl"));
  d.inventory = PhonemeInventory::from_json(read_json(child(dir, "inventory.json")));
  const nlohmann::json dj = read_json(child(dir, "durations.json"));
  d.durations = {dj.at("mean").get<double>(), dj.at("stddev").get<double>()};
  // Pre-expanded inputs are consumed as is: every duration draw is 1.
  if (dj.value("expanded", false)) d.durations = {1.0, 0.0};
  return d;
}

void save_run(const std::string& out, const Seq2Seq<float>& model, const Vocab& vocab,
              const AugmentingData* aug, const Trainer& trainer, const std::string& file) {
  Checkpoint c = make_checkpoint(model, vocab, aug ? &aug->inventory : nullptr,
                                 aug ? &aug->durations : nullptr);
  attach_trainer(c, trainer);
  const std::string tmp = child(out, file + ".tmp");
  save_checkpoint(tmp, c);
  fs::rename(tmp, child(out, file));
}

int run_train(const TrainArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : TrainConfig::load(a.config);
  for (const std::string& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [key, value] : a.flags) cfg.set(key, value);
  cfg.validate();
  if (cfg.languages.empty()) throw ConfigError("no training manifests (languages)");
  const bool augmenting = cfg.mode != ModelKind::kBaseline;
  if (augmenting && cfg.aug_dir.empty()) {
    throw ConfigError("mode " + std::string(model_kind_name(cfg.mode)) + " needs aug_dir");
  }

  MixedCorpus corpus = mix_corpora(cfg.languages);
  const int feat_dim = static_cast<int>(corpus.utterances.front().frames.cols());
  std::optional<AugmentingData> aug;
  if (augmenting) aug = load_augmenting_dir(cfg.aug_dir);
  std::vector<Utterance> dev;
  if (!cfg.dev_manifest.empty()) dev = load_utterances(cfg.dev_manifest);

  fs::create_directories(a.out);
  const std::string last = child(a.out, "last.ckpt");
  std::optional<Checkpoint> resume_from;
  if (a.resume && fs::exists(last)) resume_from = load_checkpoint(last);

  Seq2Seq<float> model =
      resume_from ? checkpoint_model(*resume_from)
                  : Seq2Seq<float>(cfg.model_config(corpus.vocab.size(),
                                                    aug ? aug->inventory.size() : 0, feat_dim));
  if (resume_from) {
    cfg = *checkpoint_train_config(*resume_from);
    if (!(checkpoint_vocab(*resume_from) == corpus.vocab)) {
      throw ConfigError("resumed checkpoint vocabulary differs from the training manifests");
    }
  }
  Trainer trainer(model, cfg, make_speech_examples(corpus.utterances, corpus.vocab),
                  aug ? make_text_examples(aug->records, corpus.vocab) : std::vector<TextExample>{},
                  aug ? aug->durations : DurationModel{}, dev, &corpus.vocab);
  if (resume_from) restore_trainer(trainer, *resume_from);
  write_json(child(a.out, "config.json"), cfg.to_json());

  std::ofstream log(child(a.out, "train_log.jsonl"), resume_from ? std::ios::app : std::ios::trunc);
  std::size_t reported = trainer.dev_history().size();
  while (auto rec = trainer.advance()) {
    log << rec->to_json().dump() << "\n";
    if (trainer.dev_history().size() != reported) {
      const DevRecord& d = trainer.dev_history().back();
      std::cerr << "epoch " << d.epoch << " step " << d.step << " dev CER " << d.dev_cer
                << (d.improved ? " *" : "") << "\n";
      reported = trainer.dev_history().size();
    }
    if (a.checkpoint_every > 0 && rec->step % a.checkpoint_every == 0) {
      log.flush();
      save_run(a.out, model, corpus.vocab, aug ? &*aug : nullptr, trainer, "last.ckpt");
    }
    if (a.stop_after > 0 && rec->step >= a.stop_after && !trainer.done()) {
      save_run(a.out, model, corpus.vocab, aug ? &*aug : nullptr, trainer, "last.ckpt");
      std::cout << "stopped after step " << rec->step << "; continue with --resume\n";
      return kExitOk;
    }
  }
  save_run(a.out, model, corpus.vocab, aug ? &*aug : nullptr, trainer, "last.ckpt");
  save_checkpoint(child(a.out, "model.ckpt"),
                  make_checkpoint(model, corpus.vocab, aug ? &aug->inventory : nullptr,
                                  aug ? &aug->durations : nullptr));

  RunSummary summary;
  summary.system = a.system.empty() ? std::string(model_kind_name(cfg.mode)) +
                                          (augmenting && cfg.pretrain_batches > 0 ? "+P" : "")
                                    : a.system;
  summary.hours = training_hours(corpus.utterances);
  const bool scored = trainer.state().dev_evals > 0;
  summary.dev_cer = scored ? trainer.state().best_dev_cer : 0.0;
  summary.eval_cer = summary.dev_cer;
  if (scored) write_summary(child(a.out, "summary.json"), summary);
  std::cout << summary.system << " steps " << trainer.state().step;
  if (scored) std::cout << " best dev CER " << summary.dev_cer;
  std::cout << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// decode

struct DecodeArgs {
  std::string model;
  std::string manifest;
  std::string lm;
  std::string out;
  DecodeConfig cfg;
};

int run_decode(const DecodeArgs& a) {
  a.cfg.validate();
  const Checkpoint ckpt = load_checkpoint(a.model);
  const Seq2Seq<float> model = checkpoint_model(ckpt);
  const Vocab vocab = checkpoint_vocab(ckpt);
  std::optional<RnnLm<float>> lm;
  if (!a.lm.empty()) {
    const Checkpoint lc = load_checkpoint(a.lm);
    if (!(checkpoint_vocab(lc) == vocab)) {
      throw ConfigError("language model vocabulary differs from the ASR vocabulary");
    }
    lm = checkpoint_lm(lc);
  }
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::trunc);
    if (!file) throw Error("cannot write " + a.out);
  }
  std::ostream& os = a.out.empty() ? std::cout : file;
  long unfinished = 0;
  for (const Utterance& u : load_utterances(a.manifest)) {
    const DecodeResult r = decode_utterance<float>(model, u.frames, lm ? &*lm : nullptr, a.cfg);
    unfinished += r.unfinished ? 1 : 0;
    os << u.id << '\t' << vocab.decode(r.output()) << '\n';
  }
  if (unfinished > 0) std::cerr << unfinished << " utterance(s) hit max_output_len\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// score

// "id<TAB>text" lines, or a JSON-lines manifest.
std::vector<std::pair<std::string, std::string>> read_transcripts(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  long lineno = 0;
  for (const std::string& raw : read_lines(path)) {
    ++lineno;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '{') {
      try {
        const nlohmann::json j = nlohmann::json::parse(line);
        out.emplace_back(j.at("id").get<std::string>(), j.at("text").get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      out.emplace_back(std::to_string(lineno), line);
    } else {
      out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
  }
  return out;
}

struct ScoreArgs {
  std::string ref;
  std::string hyp;
  std::string summary;
  std::string system = "system";
  double hours = 0.0;
};

int run_score(const ScoreArgs& a) {
  const auto refs = read_transcripts(a.ref);
  std::map<std::string, std::string> hyps;
  for (auto& [id, text] : read_transcripts(a.hyp)) {
    if (!hyps.emplace(id, text).second) throw FormatError(a.hyp + ": duplicate id " + id);
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& [id, text] : refs) {
    const auto it = hyps.find(id);
    if (it == hyps.end()) throw FormatError(a.hyp + ": no hypothesis for " + id);
    pairs.emplace_back(text, it->second);
  }
  const ErrorRates r = corpus_cer_wer(pairs);
  char line[96];
  std::snprintf(line, sizeof(line), "CER %.4f\nWER %.4f\n", r.cer, r.wer);
  std::cout << line;
  if (!a.summary.empty()) write_summary(a.summary, {a.system, a.hours, r.cer, r.cer});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// export-curve

int run_export_curve(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<RunSummary> runs;
  for (const std::string& in : inputs) {
    runs.push_back(read_summary(fs::is_directory(in) ? child(in, "summary.json") : in));
  }
  const std::string csv = export_curve_csv(runs);
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_file_bytes(out, csv);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-based speech recognition with multi-modal data augmentation"};
  app.require_subcommand(1);

  GenToyArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-toy", "Write a synthetic speech-like corpus");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--train", gen.n_train, "Training utterances");
  gen_cmd->add_option("--dev", gen.n_dev, "Dev utterances");
  gen_cmd->add_option("--aug", gen.n_aug, "Augmenting sentences");
  gen_cmd->add_option("--seed", gen.spec.seed, "Random seed");
  gen_cmd->add_option("--noise", gen.spec.noise_std, "Frame noise std");
  gen_cmd->add_option("--num-words", gen.spec.num_words, "Word list size");
  gen_cmd->add_option("--min-words", gen.spec.min_words, "Shortest sentence in words");
  gen_cmd->add_option("--max-words", gen.spec.max_words, "Longest sentence in words");
  gen_cmd->add_flag("--force", gen.force, "Overwrite an existing directory");

  PrepareArgs prep;
  CLI::App* prep_cmd = app.add_subcommand("prepare", "Build the augmenting corpus from raw text");
  prep_cmd->add_option("--text", prep.text, "Raw text, one sentence per line")->required();
  prep_cmd->add_option("--lexicon", prep.lexicon, "word<TAB>phonemes lexicon")->required();
  prep_cmd->add_option("--manifest", prep.manifests, "Speech training manifest(s)")->required();
  prep_cmd->add_option("--out", prep.out, "Output directory")->required();
  prep_cmd->add_option("--min-len", prep.min_len, "Shortest kept sentence in characters");
  prep_cmd->add_option("--max-len", prep.max_len, "Longest kept sentence in characters");
  prep_cmd->add_flag("--expand", prep.expand, "Store duration-expanded phoneme ids");
  prep_cmd->add_option("--seed", prep.seed, "Seed for --expand");

  LmArgs lm;
  CLI::App* lm_cmd = app.add_subcommand("lm-train", "Train the character RNN language model");
  lm_cmd->add_option("--text", lm.texts, "Training text file(s)")->required();
  lm_cmd->add_option("--vocab", lm.vocab, "vocab.json written by prepare")->required();
  lm_cmd->add_option("--out", lm.out, "Output checkpoint")->required();
  lm_cmd->add_option("--epochs", lm.train.epochs, "Passes over the text");
  lm_cmd->add_option("--batch-size", lm.train.batch_size, "Sentences per update");
  lm_cmd->add_option("--lr", lm.train.learning_rate, "Adam learning rate");
  lm_cmd->add_option("--emb-dim", lm.model.emb_dim, "Embedding size");
  lm_cmd->add_option("--hidden-dim", lm.model.hidden_dim, "LSTM size");
  lm_cmd->add_option("--seed", lm.train.seed, "Random seed");

  TrainArgs tr;
  CLI::App* tr_cmd = app.add_subcommand("train", "Pretrain and train an ASR model");
  tr_cmd->add_option("--config", tr.config, "JSON or key = value config file");
  tr_cmd->add_option("--set", tr.sets, "Override one config key (key=value)");
  tr_cmd->add_option("--out", tr.out, "Run directory")->required();
  tr_cmd->add_option("--system", tr.system, "System name in summary.json");
  tr_cmd->add_flag("--resume", tr.resume, "Continue from <out>/last.ckpt");
  tr_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Save last.ckpt every N updates");
  tr_cmd->add_option("--stop-after", tr.stop_after, "Save state and exit after N updates");
  const std::vector<std::pair<std::string, std::string>> shorthands{
      {"--mode", "mode"},           {"--rho", "rho"},
      {"--pretrain", "pretrain_batches"}, {"--batch-size", "batch_size"},
      {"--lr", "learning_rate"},    {"--epochs", "max_epochs"},
      {"--patience", "patience"},   {"--seed", "seed"},
      {"--train", "languages"},     {"--dev", "dev_manifest"},
      {"--aug-dir", "aug_dir"}};
  std::map<std::string, std::string> shorthand_values;
  for (const auto& [flag, key] : shorthands) {
    tr_cmd->add_option(flag, shorthand_values[key], "Sets config key " + key);
  }

  DecodeArgs dec;
  CLI::App* dec_cmd = app.add_subcommand("decode", "Beam search with optional shallow fusion");
  dec_cmd->add_option("--model", dec.model, "ASR checkpoint")->required();
  dec_cmd->add_option("--manifest", dec.manifest, "Utterances to decode")->required();
  dec_cmd->add_option("--lm", dec.lm, "RNNLM checkpoint");
  dec_cmd->add_option("--beam", dec.cfg.beam_size, "Beam size");
  dec_cmd->add_option("--lm-weight", dec.cfg.lm_weight, "Fusion weight lambda");
  dec_cmd->add_option("--max-len", dec.cfg.max_output_len, "Longest output in tokens");
  dec_cmd->add_option("--out", dec.out, "Hypothesis file (default stdout)");

  ScoreArgs sc;
  CLI::App* sc_cmd = app.add_subcommand("score", "Corpus CER and WER");
  sc_cmd->add_option("--ref", sc.ref, "Reference transcripts")->required();
  sc_cmd->add_option("--hyp", sc.hyp, "Hypothesis transcripts")->required();
  sc_cmd->add_option("--summary", sc.summary, "Also write a run summary JSON");
  sc_cmd->add_option("--system", sc.system, "System name for --summary");
  sc_cmd->add_option("--hours", sc.hours, "Training hours for --summary");

  std::vector<std::string> curve_inputs;
  std::string curve_out;
  CLI::App* cv_cmd = app.add_subcommand("export-curve", "CSV of CER against training hours");
  cv_cmd->add_option("inputs", curve_inputs, "summary.json files or run directories")->required();
  cv_cmd->add_option("--out", curve_out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_toy(gen);
    if (*prep_cmd) return run_prepare(prep);
    if (*lm_cmd) return run_lm_train(lm);
    if (*tr_cmd) {
      for (const auto& [flag, key] : shorthands) {
        if (tr_cmd->count(flag) > 0) tr.flags[key] = shorthand_values[key];
      }
      return run_train(tr);
    }
    if (*dec_cmd) return run_decode(dec);
    if (*sc_cmd) return run_score(sc);
    if (*cv_cmd) return run_export_curve(curve_inputs, curve_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
