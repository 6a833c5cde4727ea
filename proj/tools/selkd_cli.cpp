// tools/selkd_cli.cpp

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

// Command-line driver. Every subcommand reads an optional JSON config file,
// applies flag overrides on top, and writes its outputs under --out-dir.
//
// Exit codes: 0 success, 1 other failure, 2 configuration error, 3 numerical
// abort (non-finite training loss).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "selkd/selkd.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace selkd;

namespace {

// Flags shared by all subcommands. Unset optionals leave the config alone.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::string> task, kd_mode, out_dir, teacher_ckpt, criterion, half;
  std::optional<std::size_t> vocab_size, n_train, train_steps, teacher_steps, eval_every,
      q_size, batch_tokens, beam, warmup_steps;
  std::optional<double> noise_rate, r, alpha, lr;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> sets;  // key=json, dotted keys for nested objects

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON config file");
    app->add_option("--task", task, "copy | reverse | lexicon_reorder");
    app->add_option("--vocab-size", vocab_size);
    app->add_option("--noise-rate", noise_rate);
    app->add_option("--n-train", n_train);
    app->add_option("--kd-mode", kd_mode,
                    "none | word_kd | seq_kd | batch_select | global_select | partition");
    app->add_option("--criterion", criterion, "partition criterion");
    app->add_option("--half", half, "partition half: high | low");
    app->add_option("--r", r, "distillation rate for the select modes");
    app->add_option("--alpha", alpha);
    app->add_option("--q-size", q_size);
    app->add_option("--train-steps", train_steps);
    app->add_option("--teacher-steps", teacher_steps);
    app->add_option("--eval-every", eval_every);
    app->add_option("--batch-tokens", batch_tokens);
    app->add_option("--lr", lr);
    app->add_option("--warmup-steps", warmup_steps);
    app->add_option("--beam", beam);
    app->add_option("--seeds", seeds)->delimiter(',');
    app->add_option("--out-dir", out_dir);
    app->add_option("--teacher-ckpt", teacher_ckpt);
    app->add_option("--set", sets, "override any field, e.g. --set task.zipf_s=1.2");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig base;
    if (!config_path.empty()) base = load_config(config_path);
    json o = json::object();
    auto put = [&](const char* key, const auto& v) {
      if (v) o[key] = *v;
    };
    json t = json::object();
    if (task) t["kind"] = *task;
    if (vocab_size) t["vocab_size"] = *vocab_size;
    if (noise_rate) t["noise_rate"] = *noise_rate;
    if (!t.empty()) o["task"] = t;
    put("n_train", n_train);
    put("kd_mode", kd_mode);
    put("r", r);
    put("alpha", alpha);
    put("q_size", q_size);
    put("train_steps", train_steps);
    put("teacher_steps", teacher_steps);
    put("eval_every", eval_every);
    put("batch_tokens", batch_tokens);
    put("lr", lr);
    put("warmup_steps", warmup_steps);
    put("beam", beam);
    put("out_dir", out_dir);
    put("teacher_ckpt", teacher_ckpt);
    if (!seeds.empty()) o["seeds"] = seeds;
    if (criterion || half) {
      o["partition"] = {{"criterion", criterion.value_or("word_ce")},
                        {"half", half.value_or("high")}};
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      json value;
      try {
        value = json::parse(s.substr(eq + 1));
      } catch (const json::parse_error&) {
        value = s.substr(eq + 1);  // bare strings need no quotes
      }
      json* node = &o;
      std::string key = s.substr(0, eq);
      for (auto dot = key.find('.'); dot != std::string::npos; dot = key.find('.')) {
        node = &(*node)[key.substr(0, dot)];
        key = key.substr(dot + 1);
      }
      (*node)[key] = value;
    }
    return config_from_json(o, base);
  }
};

fs::path out_root(const ExperimentConfig& c) {
  const fs::path p = c.out_dir.empty() ? fs::path("runs") : fs::path(c.out_dir);
  fs::create_directories(p);
  return p;
}

void log_line(const std::string& m) { std::cerr << m << '\n'; }

ModelParams load_teacher(const ExperimentConfig& c) {
  if (c.teacher_ckpt.empty()) throw ConfigError("this command needs --teacher-ckpt");
  return load_model(c.teacher_ckpt, c.teacher);
}

void print_record(const RunRecord& r) {
  std::cout << summary_json(r).dump() << '\n';
}

int gen_data(const ExperimentConfig& c) {
  const auto root = out_root(c);
  const auto data = make_datasets(c);
  save_corpus((root / "train.txt").string(), data.splits.train);
  save_corpus((root / "valid.txt").string(), data.splits.valid);
  save_corpus((root / "test.txt").string(), data.splits.test);
  save_config((root / "config.json").string(), c);
  std::cout << "wrote " << data.splits.train.pairs.size() << "/" << data.splits.valid.pairs.size()
            << "/" << data.splits.test.pairs.size() << " pairs to " << root.string() << '\n';
  return 0;
}

int train_teacher_cmd(ExperimentConfig c) {
  const auto root = out_root(c);
  c.out_dir = root.string();
  const auto data = make_datasets(c);
  TrainOptions o;
  o.log = log_line;
  const auto r = train_teacher(c, c.seeds.front(), data, o);
  emit_report((root / "teacher").string(), r.record, r.diagnostics);
  save_config((root / "config.json").string(), c);
  print_record(r.record);
  return 0;
}

int train_student_cmd(const ExperimentConfig& c) {
  const auto root = out_root(c);
  const auto data = make_datasets(c);
  std::optional<ModelParams> teacher;
  if (c.kd_mode != KdMode::kNone) teacher = load_teacher(c);
  TrainOptions o;
  o.log = log_line;
  for (auto seed : c.seeds) {
    auto run_cfg = c;
    const auto dir = root / (to_string(c.kd_mode) + "_s" + std::to_string(seed));
    run_cfg.out_dir = dir.string();
    fs::create_directories(dir);
    const auto r = train_student(run_cfg, teacher ? &*teacher : nullptr, seed, data, o);
    emit_report(dir.string(), r.record, r.diagnostics);
    print_record(r.record);
  }
  return 0;
}

int distill_seq_cmd(const ExperimentConfig& c) {
  const auto root = out_root(c);
  const auto data = make_datasets(c);
  const auto teacher = load_teacher(c);
  const auto distilled = seq_kd_distill(teacher, data.splits.train, c.beam, c.length_penalty,
                                        log_line);
  const auto path = root / "train.seqkd.txt";
  save_corpus(path.string(), distilled);
  std::cout << "wrote " << distilled.pairs.size() << " distilled pairs to " << path.string()
            << '\n';
  return 0;
}

int partition_cmd(const ExperimentConfig& c, const std::string& criterion) {
  const auto root = out_root(c);
  const auto data = make_datasets(c);
  const auto teacher = load_teacher(c);
  const auto rep = run_partition_experiment(c, teacher, criterion_from_string(criterion), data,
                                            log_line);
  json j;
  j["criterion"] = criterion;
  j["mean_delta_bleu"] = rep.mean_delta_bleu;
  j["mean_delta_accuracy"] = rep.mean_delta_accuracy;
  for (const auto& r : rep.high) j["high"].push_back(summary_json(r));
  for (const auto& r : rep.low) j["low"].push_back(summary_json(r));
  std::ofstream((root / ("partition_" + criterion + ".json")).string()) << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return 0;
}

int sweep_cmd(const ExperimentConfig& c, const std::string& param,
              const std::vector<double>& values) {
  SweepParam p;
  if (param == "r") {
    p = SweepParam::kR;
  } else if (param == "q_size") {
    p = SweepParam::kQSize;
  } else {
    throw ConfigError("sweep parameter must be r or q_size, got '" + param + "'");
  }
  const auto root = out_root(c);
  const auto data = make_datasets(c);
  std::optional<ModelParams> teacher;
  if (c.kd_mode != KdMode::kNone) teacher = load_teacher(c);
  const auto rows = sweep(c, p, values, teacher ? &*teacher : nullptr, data, log_line);
  std::ofstream os(root / ("sweep_" + param + ".csv"));
  write_sweep_csv(os, rows);
  write_sweep_csv(std::cout, rows);
  return 0;
}

int eval_cmd(const ExperimentConfig& c, const std::string& ckpt, const std::string& split,
             bool teacher_arch) {
  const auto data = make_datasets(c);
  const ParallelCorpus* corpus = split == "train"   ? &data.splits.train
                                 : split == "valid" ? &data.splits.valid
                                 : split == "test"  ? &data.splits.test
                                                    : nullptr;
  if (!corpus) throw ConfigError("--split must be train, valid or test");
  const auto model = load_model(ckpt, teacher_arch ? c.teacher : c.student);
  const auto e = evaluate(model, *corpus, c.beam, c.length_penalty, c.bleu_smoothing,
                          c.batch_tokens);
  json j;
  j["checkpoint"] = ckpt;
  j["split"] = split;
  j["beam"] = c.beam;
  j["bleu"] = e.bleu.score;
  j["precisions"] = e.bleu.precisions;
  j["brevity_penalty"] = e.bleu.brevity_penalty;
  j["token_accuracy"] = e.token_accuracy;
  std::cout << j.dump(2) << '\n';
  return 0;
}

int diag_cmd(const ExperimentConfig& c, const std::string& ckpt) {
  const auto root = out_root(c);
  const auto data = make_datasets(c);
  const auto teacher = load_teacher(c);
  const auto student = load_model(ckpt, c.student);
  auto batches = make_batches(data.splits.train, c.batch_tokens, 0, false);
  batches.resize(std::min(batches.size(), c.diag_batches));
  Diagnostics d;
  detail::record_diagnostics(c, 0, c.seeds.front(), student, teacher, batches, d);
  const auto dir = root / "diag";
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "agreement.csv");
    write_agreement_csv(os, d.agreement);
  }
  {
    std::ofstream os(dir / "entropy_hist.csv");
    write_histogram_csv(os, d.entropy);
  }
  write_agreement_csv(std::cout, d.agreement);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective word-level knowledge distillation experiments"};
  app.require_subcommand(1);

  ConfigFlags flags;
  std::string ckpt, split = "test", criterion = "word_ce", sweep_param = "r";
  std::vector<double> sweep_values;
  bool teacher_arch = false;

  auto* gen = app.add_subcommand("gen-data", "generate and save the train/valid/test corpora");
  auto* tt = app.add_subcommand("train-teacher", "train the teacher with plain cross-entropy");
  auto* ts = app.add_subcommand("train-student", "train one student per seed under --kd-mode");
  auto* ds = app.add_subcommand("distill-seq", "write the teacher-decoded training corpus");
  auto* pe = app.add_subcommand("partition-exp", "High vs Low partition experiment");
  auto* sw = app.add_subcommand("sweep", "sweep r or q_size");
  auto* ev = app.add_subcommand("eval", "decode a split with a checkpoint and score it");
  auto* dg = app.add_subcommand("diag", "agreement and entropy probes for a student checkpoint");
  for (auto* sub : {gen, tt, ts, ds, pe, sw, ev, dg}) flags.attach(sub);

  pe->add_option("--partition-criterion", criterion, "criterion to partition by");
  sw->add_option("--param", sweep_param, "r | q_size");
  sw->add_option("--values", sweep_values, "comma-separated values")->delimiter(',')->required();
  for (auto* sub : {ev, dg}) sub->add_option("--ckpt", ckpt, "checkpoint to load")->required();
  ev->add_option("--split", split, "train | valid | test");
  ev->add_flag("--teacher-arch", teacher_arch, "checkpoint uses the teacher architecture");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto c = flags.resolve();
    if (*gen) return gen_data(c);
    if (*tt) return train_teacher_cmd(c);
    if (*ts) return train_student_cmd(c);
    if (*ds) return distill_seq_cmd(c);
    if (*pe) return partition_cmd(c, criterion);
    if (*sw) return sweep_cmd(c, sweep_param, sweep_values);
    if (*ev) return eval_cmd(c, ckpt, split, teacher_arch);
    if (*dg) return diag_cmd(c, ckpt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
