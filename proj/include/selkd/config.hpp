// selkd/config.hpp

// Copyright 2026  The selkd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selkd/data.hpp"
#include "selkd/diagnostics.hpp"
#include "selkd/model.hpp"
#include "selkd/optim.hpp"
#include "selkd/selection.hpp"

namespace selkd {

enum class KdMode { kNone, kWordKd, kSeqKd, kBatchSelect, kGlobalSelect, kPartition };

inline const std::vector<std::pair<KdMode, std::string>>& kd_mode_names() {
  static const std::vector<std::pair<KdMode, std::string>> names = {
      {KdMode::kNone, "none"},
      {KdMode::kWordKd, "word_kd"},
      {KdMode::kSeqKd, "seq_kd"},
      {KdMode::kBatchSelect, "batch_select"},
      {KdMode::kGlobalSelect, "global_select"},
      {KdMode::kPartition, "partition"},
  };
  return names;
}

inline std::string to_string(KdMode m) {
  for (const auto& [id, name] : kd_mode_names())
    if (id == m) return name;
  return "?";
}

inline KdMode kd_mode_from_string(const std::string& s) {
  for (const auto& [id, name] : kd_mode_names())
    if (name == s) return id;
  throw ConfigError("kd_mode: unknown mode '" + s + "'");
}

struct ExperimentConfig {
  TaskSpec task{TaskKind::kLexiconReorder, 40, 4, 12, 1.0, 0.1, 1};
  std::size_t n_train = 20000;
  std::size_t n_valid = 500;
  std::size_t n_test = 500;

  TransformerConfig teacher;
  TransformerConfig student;

  KdMode kd_mode = KdMode::kNone;
  std::optional<PartitionSpec> partition;
  double alpha = 1.0;
  double r = 0.5;
  std::size_t q_size = 3000;
  std::size_t teacher_top_k = 0;

  std::size_t batch_tokens = 300;
  std::size_t grad_accum = 1;
  LrSchedule schedule;
  std::size_t train_steps = 4000;
  std::size_t teacher_steps = 8000;
  std::size_t eval_every = 500;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  std::size_t valid_beam = 1;
  std::size_t beam = 4;
  double length_penalty = 1.0;
  bool bleu_smoothing = true;

  std::size_t diag_batches = 4;
  std::size_t entropy_bins = 20;
  std::size_t entropy_samples = 10000;
  AgreementRule agreement_rule = AgreementRule::kCosine;

  std::string out_dir;
  std::string teacher_ckpt;

  void validate() const {
    task.validate(teacher.max_len);
    teacher.validate();
    student.validate();
    for (const auto* m : {&teacher, &student}) {
      if (m->src_vocab != task.vocab_size || m->tgt_vocab != task.vocab_size) {
        throw ConfigError("model vocab (" + std::to_string(m->src_vocab) + "/" +
                          std::to_string(m->tgt_vocab) +
                          ") does not match task.vocab_size " +
                          std::to_string(task.vocab_size));
      }
      if (m->max_len < task.len_max + 2) {
        throw ConfigError("model.max_len must be at least task.len_max + 2");
      }
    }
    if (n_train == 0 || n_valid == 0 || n_test == 0) {
      throw ConfigError("n_train, n_valid and n_test must be positive");
    }
    if ((kd_mode == KdMode::kPartition) != partition.has_value()) {
      throw ConfigError(
          "partition: must be present exactly when kd_mode is partition");
    }
    if (!(alpha >= 0.0)) throw ConfigError("alpha: must be >= 0");
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("r: must be in [0, 1]");
    if (kd_mode == KdMode::kGlobalSelect && q_size == 0) {
      throw ConfigError("q_size: must be positive for global_select");
    }
    if (grad_accum == 0) throw ConfigError("grad_accum: must be positive");
    if (train_steps == 0 || teacher_steps == 0) {
      throw ConfigError("train_steps and teacher_steps must be positive");
    }
    if (eval_every == 0) throw ConfigError("eval_every: must be positive");
    if (seeds.empty()) throw ConfigError("seeds: need at least one seed");
    if (valid_beam == 0 || beam == 0) throw ConfigError("beam: must be >= 1");
    if (batch_tokens < task.len_max + 2) {
      throw ConfigError("batch_tokens: must fit the longest sentence");
    }
    if (!(schedule.peak_lr > 0.0)) throw ConfigError("lr: must be positive");
    if (entropy_bins == 0) throw ConfigError("entropy_bins: must be >= 1");
  }
};

// JSON mapping. Missing keys keep their defaults; unknown keys are errors.

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& dst,
                const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + key + ": " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j,
                           std::initializer_list<const char*> known,
                           const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw ConfigError("unknown config key '" + where + item.key() + "'");
  }
}

inline nlohmann::json model_to_json(const TransformerConfig& m) {
  return {{"enc_layers", m.enc_layers}, {"dec_layers", m.dec_layers},
          {"d_model", m.d_model},       {"d_ff", m.d_ff},
          {"n_heads", m.n_heads},       {"src_vocab", m.src_vocab},
          {"tgt_vocab", m.tgt_vocab},   {"dropout", m.dropout},
          {"max_len", m.max_len}};
}

inline TransformerConfig model_from_json(const nlohmann::json& j,
                                         const std::string& where,
                                         TransformerConfig m) {
  reject_unknown(j, {"enc_layers", "dec_layers", "d_model", "d_ff", "n_heads",
                     "src_vocab", "tgt_vocab", "dropout", "max_len"},
                 where);
  read_field(j, "enc_layers", m.enc_layers, where);
  read_field(j, "dec_layers", m.dec_layers, where);
  read_field(j, "d_model", m.d_model, where);
  read_field(j, "d_ff", m.d_ff, where);
  read_field(j, "n_heads", m.n_heads, where);
  read_field(j, "src_vocab", m.src_vocab, where);
  read_field(j, "tgt_vocab", m.tgt_vocab, where);
  read_field(j, "dropout", m.dropout, where);
  read_field(j, "max_len", m.max_len, where);
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["task"] = {{"kind", to_string(c.task.kind)},
               {"vocab_size", c.task.vocab_size},
               {"len_min", c.task.len_min},
               {"len_max", c.task.len_max},
               {"zipf_s", c.task.zipf_s},
               {"noise_rate", c.task.noise_rate},
               {"seed", c.task.seed}};
  j["n_train"] = c.n_train;
  j["n_valid"] = c.n_valid;
  j["n_test"] = c.n_test;
  j["teacher"] = detail::model_to_json(c.teacher);
  j["student"] = detail::model_to_json(c.student);
  j["kd_mode"] = to_string(c.kd_mode);
  if (c.partition) {
    j["partition"] = {{"criterion", to_string(c.partition->criterion)},
                      {"half", to_string(c.partition->half)}};
  }
  j["alpha"] = c.alpha;
  j["r"] = c.r;
  j["q_size"] = c.q_size;
  j["teacher_top_k"] = c.teacher_top_k;
  j["batch_tokens"] = c.batch_tokens;
  j["grad_accum"] = c.grad_accum;
  j["lr"] = c.schedule.peak_lr;
  j["warmup_steps"] = c.schedule.warmup_steps;
  j["train_steps"] = c.train_steps;
  j["teacher_steps"] = c.teacher_steps;
  j["eval_every"] = c.eval_every;
  j["seeds"] = c.seeds;
  j["valid_beam"] = c.valid_beam;
  j["beam"] = c.beam;
  j["length_penalty"] = c.length_penalty;
  j["bleu_smoothing"] = c.bleu_smoothing;
  j["diag_batches"] = c.diag_batches;
  j["entropy_bins"] = c.entropy_bins;
  j["entropy_samples"] = c.entropy_samples;
  j["agreement_rule"] =
      c.agreement_rule == AgreementRule::kCosine ? "cosine" : "sign_vote";
  j["out_dir"] = c.out_dir;
  j["teacher_ckpt"] = c.teacher_ckpt;
  return j;
}

/// Applies `j` on top of `base`; the result is validated.
inline ExperimentConfig config_from_json(const nlohmann::json& j,
                                         ExperimentConfig c = {}) {
  using detail::read_field;
  detail::reject_unknown(
      j,
      {"task", "n_train", "n_valid", "n_test", "teacher", "student", "model",
       "kd_mode", "partition", "alpha", "r", "q_size", "teacher_top_k",
       "batch_tokens", "grad_accum", "lr", "warmup_steps", "train_steps",
       "teacher_steps", "eval_every", "seeds", "valid_beam", "beam",
       "length_penalty", "bleu_smoothing", "diag_batches", "entropy_bins",
       "entropy_samples", "agreement_rule", "out_dir", "teacher_ckpt"},
      "");
  if (j.contains("task")) {
    const auto& t = j["task"];
    detail::reject_unknown(t, {"kind", "vocab_size", "len_min", "len_max",
                               "zipf_s", "noise_rate", "seed"},
                           "task.");
    std::string kind = to_string(c.task.kind);
    read_field(t, "kind", kind, "task.");
    c.task.kind = task_kind_from_string(kind);
    read_field(t, "vocab_size", c.task.vocab_size, "task.");
    read_field(t, "len_min", c.task.len_min, "task.");
    read_field(t, "len_max", c.task.len_max, "task.");
    read_field(t, "zipf_s", c.task.zipf_s, "task.");
    read_field(t, "noise_rate", c.task.noise_rate, "task.");
    read_field(t, "seed", c.task.seed, "task.");
  }
  // "model" sets both architectures; "teacher"/"student" refine either one.
  if (j.contains("model")) {
    c.teacher = detail::model_from_json(j["model"], "model.", c.teacher);
    c.student = detail::model_from_json(j["model"], "model.", c.student);
  }
  if (j.contains("teacher"))
    c.teacher = detail::model_from_json(j["teacher"], "teacher.", c.teacher);
  if (j.contains("student"))
    c.student = detail::model_from_json(j["student"], "student.", c.student);
  read_field(j, "n_train", c.n_train, "");
  read_field(j, "n_valid", c.n_valid, "");
  read_field(j, "n_test", c.n_test, "");
  if (j.contains("kd_mode")) {
    std::string m;
    read_field(j, "kd_mode", m, "");
    c.kd_mode = kd_mode_from_string(m);
  }
  if (j.contains("partition")) {
    if (j["partition"].is_null()) {
      c.partition.reset();
    } else {
      const auto& p = j["partition"];
      detail::reject_unknown(p, {"criterion", "half"}, "partition.");
      PartitionSpec spec = c.partition.value_or(PartitionSpec{});
      std::string crit = to_string(spec.criterion), half = to_string(spec.half);
      read_field(p, "criterion", crit, "partition.");
      read_field(p, "half", half, "partition.");
      spec.criterion = criterion_from_string(crit);
      spec.half = half_from_string(half);
      c.partition = spec;
    }
  }
  read_field(j, "alpha", c.alpha, "");
  read_field(j, "r", c.r, "");
  read_field(j, "q_size", c.q_size, "");
  read_field(j, "teacher_top_k", c.teacher_top_k, "");
  read_field(j, "batch_tokens", c.batch_tokens, "");
  read_field(j, "grad_accum", c.grad_accum, "");
  read_field(j, "lr", c.schedule.peak_lr, "");
  read_field(j, "warmup_steps", c.schedule.warmup_steps, "");
  read_field(j, "train_steps", c.train_steps, "");
  read_field(j, "teacher_steps", c.teacher_steps, "");
  read_field(j, "eval_every", c.eval_every, "");
  read_field(j, "seeds", c.seeds, "");
  read_field(j, "valid_beam", c.valid_beam, "");
  read_field(j, "beam", c.beam, "");
  read_field(j, "length_penalty", c.length_penalty, "");
  read_field(j, "bleu_smoothing", c.bleu_smoothing, "");
  read_field(j, "diag_batches", c.diag_batches, "");
  read_field(j, "entropy_bins", c.entropy_bins, "");
  read_field(j, "entropy_samples", c.entropy_samples, "");
  if (j.contains("agreement_rule")) {
    std::string rule;
    read_field(j, "agreement_rule", rule, "");
    if (rule == "cosine") {
      c.agreement_rule = AgreementRule::kCosine;
    } else if (rule == "sign_vote") {
      c.agreement_rule = AgreementRule::kSignVote;
    } else {
      throw ConfigError("agreement_rule: expected cosine or sign_vote");
    }
  }
  read_field(j, "out_dir", c.out_dir, "");
  read_field(j, "teacher_ckpt", c.teacher_ckpt, "");
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path,
                                    ExperimentConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

inline void save_config(const std::string& path, const ExperimentConfig& c) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write config " + path);
  os << to_json(c).dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path);
}

/// FNV-1a over the canonical JSON text (sorted keys, no whitespace).
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace selkd
