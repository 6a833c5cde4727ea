// selkd/trainer.hpp

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

// Teacher and student training loops, evaluation, the partition protocol,
// parameter sweeps and report files.
//
// A run is a pure function of (config, seed, data, teacher). Dropout masks are
// drawn from a stream derived from (seed, micro-batch index) and each epoch's
// batch order from (seed, epoch), so a resumed run only needs the step
// counter, epoch, batch cursor, parameters, Adam moments and the CE queue.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selkd/checkpoint.hpp"
#include "selkd/config.hpp"
#include "selkd/diagnostics.hpp"
#include "selkd/distill.hpp"
#include "selkd/metrics.hpp"
#include "selkd/optim.hpp"
#include "selkd/selection.hpp"

namespace selkd {

struct Datasets {
  DataSplits splits;
  Vocab vocab;  // training target side
};

inline Datasets make_datasets(const ExperimentConfig& c) {
  Datasets d;
  d.splits = generate_splits(c.task, c.n_train, c.n_valid, c.n_test,
                             c.student.max_len);
  d.vocab = build_vocab(d.splits.train);
  return d;
}

struct EvalRecord {
  std::int64_t step = 0;
  double valid_bleu = 0.0;
  double valid_accuracy = 0.0;
  double train_loss = 0.0;  // mean since the previous evaluation

  bool operator==(const EvalRecord&) const = default;
};

struct RunRecord {
  std::string config_hash;
  std::string role;  // "teacher" or "student"
  std::string kd_mode;
  std::uint64_t seed = 0;
  std::vector<EvalRecord> evals;
  std::int64_t best_step = -1;
  double best_valid_bleu = -1.0;
  std::string best_checkpoint;
  double test_bleu = 0.0;
  double test_accuracy = 0.0;
};

struct Diagnostics {
  std::vector<AgreementStats> agreement;
  EntropyHistogram entropy;
  ThresholdTrace thresholds;
};

struct RunResult {
  RunRecord record;
  Diagnostics diagnostics;
  ModelParams best;  // parameters at the best validation step
};

struct TrainOptions {
  /// Snapshot written by an earlier run with `save_state_at`.
  std::string resume_from;
  /// After this step completes, write a snapshot to `state_path`.
  std::int64_t save_state_at = -1;
  std::string state_path;
  /// Return right after writing the snapshot (no test evaluation).
  bool stop_after_save = false;
  /// Called after every optimizer update.
  std::function<void(std::int64_t step, const ModelParams& params, double loss)>
      on_step;
  std::function<void(const std::string&)> log;
};

struct CorpusEval {
  BleuReport bleu;
  double token_accuracy = 0.0;
  std::vector<TokenSeq> candidates;
};

/// Teacher-forced argmax accuracy over a corpus.
inline double corpus_token_accuracy(const ModelParams& P,
                                    const ParallelCorpus& corpus,
                                    std::size_t batch_tokens) {
  NoGradGuard no_grad;
  std::size_t hit = 0, total = 0;
  for (const auto& b : make_batches(corpus, batch_tokens, 0, false)) {
    const auto enc = encode(P, b.src_ids, b.src_valid);
    const auto logits = decode_logits(P, b.tgt_in, b.tgt_valid, enc);
    const std::size_t n = b.valid_tokens();
    // token_accuracy returns hit/n; recover the integer count.
    hit += static_cast<std::size_t>(
        std::llround(token_accuracy(logits, b.tgt_out, b.tgt_valid) *
                     static_cast<double>(n)));
    total += n;
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

inline std::vector<TokenSeq> decode_corpus(const ModelParams& P,
                                           const ParallelCorpus& corpus,
                                           std::size_t beam,
                                           double length_penalty) {
  std::vector<TokenSeq> out;
  out.reserve(corpus.pairs.size());
  if (beam == 1) {
    constexpr std::size_t kChunk = 256;
    for (std::size_t i = 0; i < corpus.pairs.size(); i += kChunk) {
      std::vector<TokenSeq> srcs;
      for (std::size_t k = i; k < std::min(i + kChunk, corpus.pairs.size()); ++k)
        srcs.push_back(corpus.pairs[k].src);
      for (auto& h : greedy_decode_batch(P, srcs))
        out.push_back(strip_eos(h.tokens));
    }
  } else {
    for (const auto& p : corpus.pairs)
      out.push_back(strip_eos(beam_search(P, p.src, beam, length_penalty).tokens));
  }
  return out;
}

inline CorpusEval evaluate(const ModelParams& P, const ParallelCorpus& corpus,
                           std::size_t beam, double length_penalty = 1.0,
                           bool smoothing = true, std::size_t batch_tokens = 300) {
  CorpusEval e;
  e.candidates = decode_corpus(P, corpus, beam, length_penalty);
  std::vector<TokenSeq> refs;
  for (const auto& p : corpus.pairs) refs.push_back(p.tgt);
  e.bleu = bleu(e.candidates, refs, 4, smoothing);
  e.token_accuracy = corpus_token_accuracy(P, corpus, batch_tokens);
  return e;
}

inline ModelParams load_model(const std::string& path,
                              const TransformerConfig& config) {
  ModelParams P = init_params(config, 0);
  P.assign(load_checkpoint(path));
  return P.clone(false);
}

/// Both halves of the partition protocol for one batch. Static criteria use
/// the corpus-wide masks (indexed by pair); the others split at the batch
/// median.
inline PartitionMasks partition_halves(
    CriterionId criterion, const ScoringInputs& in,
    const std::vector<std::vector<std::uint8_t>>* static_high) {
  const TokenBatch& b = *in.batch;
  if (is_static(criterion)) {
    if (!static_high) {
      throw ContractError("partition_halves: static criterion needs corpus masks");
    }
    PartitionMasks m{Mask(b.batch_size(), b.tgt_len(), 0),
                     Mask(b.batch_size(), b.tgt_len(), 0)};
    for (std::size_t r = 0; r < b.batch_size(); ++r) {
      const auto& row = (*static_high).at(b.pair_index[r]);
      for (std::size_t j = 0; j < b.tgt_len(); ++j) {
        if (!b.tgt_valid(r, j)) continue;
        (row.at(j) ? m.high : m.low)(r, j) = 1;
      }
    }
    return m;
  }
  return median_partition(score_tokens(criterion, in), b.tgt_valid,
                          granularity(criterion));
}

namespace detail {

inline RealMatrix to_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  RealMatrix m(rows, cols);
  std::copy(t.values().begin(), t.values().end(), m.data().begin());
  return m;
}

inline Mask and_not(const Mask& a, const Mask& b) {
  Mask out(a.rows(), a.cols(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] && !b[i];
  return out;
}

// Agreement and entropy probes on a fixed set of training batches.
inline void record_diagnostics(const ExperimentConfig& cfg, std::int64_t step,
                               std::uint64_t seed, const ModelParams& student,
                               const ModelParams& teacher,
                               const std::vector<TokenBatch>& batches,
                               Diagnostics& diag) {
  NoGradGuard no_grad;
  AgreementStats hard{step, AgreementGroup::kHard, 0, 0, 0.0};
  AgreementStats easy{step, AgreementGroup::kEasy, 0, 0, 0.0};
  AgreementStats all{step, AgreementGroup::kAll, 0, 0, 0.0};
  const std::size_t per_batch =
      batches.empty() ? 0 : (cfg.entropy_samples + batches.size() - 1) / batches.size();
  for (std::size_t k = 0; k < batches.size(); ++k) {
    const auto& b = batches[k];
    const auto enc = encode(student, b.src_ids, b.src_valid);
    const auto logits = decode_logits(student, b.tgt_in, b.tgt_valid, enc);
    const auto probs = softmax_rows(logits.values(), logits.cols());
    const auto tdist = teacher_distribution(teacher, b, cfg.teacher_top_k);
    const auto ce = token_ce_values(logits, b.tgt_out, b.tgt_valid);
    const Mask h = batch_level_select(ce, b.tgt_valid, cfg.r).mask;
    const Mask e = and_not(b.tgt_valid, h);
    auto add = [&](AgreementStats& acc, const Mask& m) {
      if (count_true(m) == 0) return;
      try {
        const auto s = direction_agreement_rate(probs, b.tgt_out, tdist, m,
                                                cfg.agreement_rule, step, acc.group);
        acc.agree_count += s.agree_count;
        acc.total_count += s.total_count;
      } catch (const ContractError&) {
        // every token in this group had a vanishing gradient
      }
    };
    add(hard, h);
    add(easy, e);
    add(all, b.tgt_valid);
    accumulate(diag.entropy,
               entropy_histogram(tdist, {{"S_Hard", h}, {"S_Easy", e}},
                                 cfg.entropy_bins, per_batch,
                                 derive_seed(seed, 0xe7, static_cast<std::uint64_t>(step) * 64 + k)));
  }
  for (auto* s : {&hard, &easy, &all}) {
    if (s->total_count == 0) continue;
    s->rate = static_cast<double>(s->agree_count) /
              static_cast<double>(s->total_count);
    diag.agreement.push_back(*s);
  }
}

// Resumable snapshot: everything lives in one tensor file.
struct LoopState {
  ModelParams params;
  AdamState adam;
  std::int64_t step = 0;
  std::uint64_t epoch = 0;
  std::size_t cursor = 0;
  std::optional<CEQueue> queue;
  RunRecord record;
  Diagnostics diag;
  ModelParams best;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
};

inline Tensor vec_tensor(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

inline void save_state(const std::string& path, const LoopState& s,
                       const std::string& hash) {
  ParamList out;
  for (const auto& p : s.params.list()) out.push_back({"param." + p.name, p.tensor.detach()});
  for (std::size_t i = 0; i < s.params.list().size(); ++i) {
    const auto& name = s.params.list()[i].name;
    out.push_back({"adam.m." + name, vec_tensor(s.adam.m[i])});
    out.push_back({"adam.v." + name, vec_tensor(s.adam.v[i])});
  }
  for (const auto& p : s.best.list()) out.push_back({"best." + p.name, p.tensor.detach()});
  std::vector<double> meta = {static_cast<double>(s.step),
                              static_cast<double>(s.epoch),
                              static_cast<double>(s.cursor),
                              static_cast<double>(s.adam.step),
                              s.loss_sum,
                              static_cast<double>(s.loss_count),
                              static_cast<double>(s.record.best_step),
                              s.record.best_valid_bleu};
  out.push_back({"state.meta", vec_tensor(meta)});
  out.push_back({"state.hash", vec_tensor({hash.begin(), hash.end()})});
  if (s.queue) {
    const auto qs = s.queue->state();
    out.push_back({"queue.meta", vec_tensor({static_cast<double>(qs.capacity),
                                             static_cast<double>(qs.head),
                                             static_cast<double>(qs.count)})});
    out.push_back({"queue.ring", vec_tensor(qs.ring)});
  }
  std::vector<double> ev;
  for (const auto& e : s.record.evals)
    ev.insert(ev.end(), {static_cast<double>(e.step), e.valid_bleu,
                         e.valid_accuracy, e.train_loss});
  out.push_back({"record.evals", vec_tensor(ev)});
  std::vector<double> ag;
  for (const auto& a : s.diag.agreement)
    ag.insert(ag.end(), {static_cast<double>(a.step),
                         static_cast<double>(static_cast<int>(a.group)),
                         static_cast<double>(a.agree_count),
                         static_cast<double>(a.total_count)});
  out.push_back({"diag.agreement", vec_tensor(ag)});
  std::vector<double> tr;
  for (const auto& r : s.diag.thresholds.records())
    tr.insert(tr.end(), {static_cast<double>(r.step),
                         r.strategy == "GLS" ? 1.0 : 0.0, r.threshold});
  out.push_back({"diag.thresholds", vec_tensor(tr)});
  out.push_back({"diag.entropy.edges", vec_tensor(s.diag.entropy.edges)});
  for (const auto& [name, c] : s.diag.entropy.counts)
    out.push_back({"diag.entropy." + name, vec_tensor({c.begin(), c.end()})});
  save_checkpoint(path, out);
}

inline void load_state(const std::string& path, LoopState& s,
                       const std::string& hash) {
  const ParamList in = load_checkpoint(path);
  auto find = [&](const std::string& name) -> const Tensor& {
    for (const auto& p : in)
      if (p.name == name) return p.tensor;
    throw DataError("resume: snapshot lacks " + name);
  };
  auto has = [&](const std::string& name) {
    return std::any_of(in.begin(), in.end(), [&](const auto& p) { return p.name == name; });
  };
  const auto h = find("state.hash").values();
  if (std::string(h.begin(), h.end()) != hash) {
    throw ConfigError("resume: snapshot was written under a different config");
  }
  auto strip = [&](const std::string& prefix) {
    ParamList l;
    for (const auto& p : in)
      if (p.name.rfind(prefix, 0) == 0) l.push_back({p.name.substr(prefix.size()), p.tensor});
    return l;
  };
  s.params.assign(strip("param."));
  s.best = s.params.clone(false);
  s.best.assign(strip("best."));
  for (std::size_t i = 0; i < s.params.list().size(); ++i) {
    const auto& name = s.params.list()[i].name;
    const auto m = find("adam.m." + name).values();
    const auto v = find("adam.v." + name).values();
    s.adam.m[i].assign(m.begin(), m.end());
    s.adam.v[i].assign(v.begin(), v.end());
  }
  const auto meta = find("state.meta").values();
  s.step = static_cast<std::int64_t>(meta[0]);
  s.epoch = static_cast<std::uint64_t>(meta[1]);
  s.cursor = static_cast<std::size_t>(meta[2]);
  s.adam.step = static_cast<std::size_t>(meta[3]);
  s.loss_sum = meta[4];
  s.loss_count = static_cast<std::size_t>(meta[5]);
  s.record.best_step = static_cast<std::int64_t>(meta[6]);
  s.record.best_valid_bleu = meta[7];
  if (has("queue.meta")) {
    const auto qm = find("queue.meta").values();
    const auto ring = find("queue.ring").values();
    s.queue = CEQueue::from_state({static_cast<std::size_t>(qm[0]),
                                   static_cast<std::size_t>(qm[1]),
                                   static_cast<std::size_t>(qm[2]),
                                   {ring.begin(), ring.end()}});
  }
  const auto ev = find("record.evals").values();
  s.record.evals.clear();
  for (std::size_t i = 0; i + 4 <= ev.size(); i += 4)
    s.record.evals.push_back({static_cast<std::int64_t>(ev[i]), ev[i + 1], ev[i + 2], ev[i + 3]});
  const auto ag = find("diag.agreement").values();
  s.diag.agreement.clear();
  for (std::size_t i = 0; i + 4 <= ag.size(); i += 4) {
    AgreementStats a{static_cast<std::int64_t>(ag[i]),
                     static_cast<AgreementGroup>(static_cast<int>(ag[i + 1])),
                     static_cast<std::size_t>(ag[i + 2]),
                     static_cast<std::size_t>(ag[i + 3]), 0.0};
    a.rate = static_cast<double>(a.agree_count) / static_cast<double>(a.total_count);
    s.diag.agreement.push_back(a);
  }
  const auto tr = find("diag.thresholds").values();
  s.diag.thresholds = ThresholdTrace();
  for (std::size_t i = 0; i + 3 <= tr.size(); i += 3)
    s.diag.thresholds.record(static_cast<std::int64_t>(tr[i]),
                             tr[i + 1] == 1.0 ? "GLS" : "BLS", tr[i + 2]);
  const auto edges = find("diag.entropy.edges").values();
  s.diag.entropy = EntropyHistogram();
  s.diag.entropy.edges.assign(edges.begin(), edges.end());
  for (const auto& p : strip("diag.entropy.")) {
    if (p.name == "edges") continue;
    auto& c = s.diag.entropy.counts[p.name];
    for (double x : p.tensor.values()) c.push_back(static_cast<std::size_t>(x));
  }
}

enum class Role { kTeacher, kStudent };

inline RunResult train_loop(const ExperimentConfig& cfg, Role role,
                            const ModelParams* teacher, std::uint64_t seed,
                            const Datasets& data, const TrainOptions& opts) {
  cfg.validate();
  const bool is_student = role == Role::kStudent;
  const KdMode mode = is_student ? cfg.kd_mode : KdMode::kNone;
  const bool needs_teacher = is_student && mode != KdMode::kNone;
  if (needs_teacher && !teacher) {
    throw ConfigError("train_student: kd_mode " + to_string(mode) +
                      " requires a teacher checkpoint");
  }
  if (teacher && teacher->config().tgt_vocab != cfg.student.tgt_vocab) {
    throw ConfigError("teacher vocabulary (" +
                      std::to_string(teacher->config().tgt_vocab) +
                      ") does not match the student (" +
                      std::to_string(cfg.student.tgt_vocab) + ")");
  }
  const TransformerConfig& mcfg = is_student ? cfg.student : cfg.teacher;
  const std::size_t total_steps = is_student ? cfg.train_steps : cfg.teacher_steps;
  const std::string hash = config_hash(cfg);
  auto log = [&](const std::string& m) {
    if (opts.log) opts.log(m);
  };

  ParallelCorpus train = data.splits.train;
  if (mode == KdMode::kSeqKd) {
    log("distilling training corpus with the teacher");
    train = seq_kd_distill(*teacher, train, cfg.beam, cfg.length_penalty, opts.log);
  }
  std::vector<std::vector<std::uint8_t>> static_high;
  if (mode == KdMode::kPartition && is_static(cfg.partition->criterion)) {
    static_high = static_partition({cfg.partition->criterion, PartitionHalf::kHigh},
                                   data.splits.train, data.vocab);
  }
  std::vector<TokenBatch> diag_batches;
  if (needs_teacher) {
    auto vb = make_batches(data.splits.train, cfg.batch_tokens, 0, false);
    vb.resize(std::min(vb.size(), cfg.diag_batches));
    diag_batches = std::move(vb);
  }

  LoopState s;
  s.params = init_params(mcfg, derive_seed(seed, is_student ? 0x5700 : 0x7eac));
  s.adam = make_adam(s.params.list(), cfg.schedule);
  s.best = s.params.clone(false);
  if (mode == KdMode::kGlobalSelect) s.queue.emplace(cfg.q_size);
  s.record.config_hash = hash;
  s.record.role = is_student ? "student" : "teacher";
  s.record.kd_mode = to_string(mode);
  s.record.seed = seed;
  if (!opts.resume_from.empty()) {
    load_state(opts.resume_from, s, hash);
    log("resumed at step " + std::to_string(s.step));
  }

  const std::string best_path =
      cfg.out_dir.empty() ? std::string()
                          : (std::filesystem::path(cfg.out_dir) /
                             (s.record.role + ".best.ckpt")).string();
  auto epoch_batches = [&](std::uint64_t epoch) {
    return make_batches(train, cfg.batch_tokens, derive_seed(seed, 0xba7c, epoch), true);
  };
  std::vector<TokenBatch> batches = epoch_batches(s.epoch);

  auto evaluate_now = [&]() {
    EvalRecord e;
    e.step = s.step;
    {
      const auto v = evaluate(s.params, data.splits.valid, cfg.valid_beam,
                              cfg.length_penalty, cfg.bleu_smoothing, cfg.batch_tokens);
      e.valid_bleu = v.bleu.score;
      e.valid_accuracy = v.token_accuracy;
    }
    e.train_loss = s.loss_count ? s.loss_sum / static_cast<double>(s.loss_count) : 0.0;
    s.loss_sum = 0.0;
    s.loss_count = 0;
    s.record.evals.push_back(e);
    if (e.valid_bleu > s.record.best_valid_bleu) {
      s.record.best_valid_bleu = e.valid_bleu;
      s.record.best_step = e.step;
      s.best = s.params.clone(false);
      if (!best_path.empty()) save_checkpoint(best_path, s.best.list());
    }
    if (needs_teacher && !diag_batches.empty())
      record_diagnostics(cfg, s.step, seed, s.params, *teacher, diag_batches, s.diag);
    log(s.record.role + " step " + std::to_string(e.step) + " loss " +
        format_real(e.train_loss) + " valid_bleu " + format_real(e.valid_bleu) +
        " valid_acc " + format_real(e.valid_accuracy));
  };

  while (s.step < static_cast<std::int64_t>(total_steps)) {
    double step_loss = 0.0;
    for (std::size_t micro = 0; micro < cfg.grad_accum; ++micro) {
      if (s.cursor >= batches.size()) {
        ++s.epoch;
        s.cursor = 0;
        batches = epoch_batches(s.epoch);
      }
      const TokenBatch& b = batches[s.cursor++];
      const std::uint64_t micro_index =
          static_cast<std::uint64_t>(s.step) * cfg.grad_accum + micro;
      Rng drop(derive_seed(seed, 0xd20b, micro_index));
      const ForwardMode fm{true, &drop};
      const auto enc = encode(s.params, b.src_ids, b.src_valid, fm);
      const Tensor logits = decode_logits(s.params, b.tgt_in, b.tgt_valid, enc, fm);
      const Tensor logp = log_softmax(logits);
      const PerTokenLoss ce = word_ce_from_log_probs(logp, b.tgt_out, b.tgt_valid);

      Mask selected(b.batch_size(), b.tgt_len(), 0);
      Tensor kd;
      if (mode != KdMode::kNone && mode != KdMode::kSeqKd) {
        const auto tdist = teacher_distribution(*teacher, b, cfg.teacher_top_k);
        kd = word_kd_from_log_probs(logp, tdist, b.tgt_valid);
        const RealMatrix scores = to_matrix(ce.ce, b.batch_size(), b.tgt_len());
        switch (mode) {
          case KdMode::kWordKd:
            selected = b.tgt_valid;
            break;
          case KdMode::kBatchSelect: {
            auto sel = batch_level_select(scores, b.tgt_valid, cfg.r);
            selected = std::move(sel.mask);
            if (micro == 0) s.diag.thresholds.record(s.step, "BLS", sel.threshold_used);
            break;
          }
          case KdMode::kGlobalSelect: {
            const double shadow = batch_level_select(scores, b.tgt_valid, cfg.r).threshold_used;
            auto sel = global_level_select(scores, b.tgt_valid, *s.queue, cfg.r);
            selected = std::move(sel.mask);
            if (micro == 0) {
              s.diag.thresholds.record(s.step, "BLS", shadow);
              s.diag.thresholds.record(s.step, "GLS", sel.threshold_used);
            }
            break;
          }
          case KdMode::kPartition: {
            const Tensor& emb = s.params["tgt_embed"];
            const ScoringInputs in{&b, &logits, &tdist, &emb, &data.vocab};
            auto halves = partition_halves(cfg.partition->criterion, in, &static_high);
            selected = cfg.partition->half == PartitionHalf::kHigh ? std::move(halves.high)
                                                                   : std::move(halves.low);
            break;
          }
          default:
            break;
        }
      }
      Tensor loss = combined_objective(ce, kd, selected, cfg.alpha);
      if (cfg.grad_accum > 1) loss = scale(loss, 1.0 / static_cast<double>(cfg.grad_accum));
      if (!std::isfinite(loss.item())) {
        throw NumericalError("training loss is not finite at step " +
                             std::to_string(s.step + 1) +
                             (best_path.empty() ? std::string()
                                                : "; last good checkpoint: " + best_path));
      }
      backward(loss);
      step_loss += loss.item();
    }
    adam_step(s.params.list(), s.adam);
    zero_grads(s.params.list());
    ++s.step;
    s.loss_sum += step_loss;
    ++s.loss_count;
    if (opts.on_step) opts.on_step(s.step, s.params, step_loss);

    if (s.step % static_cast<std::int64_t>(cfg.eval_every) == 0 ||
        s.step == static_cast<std::int64_t>(total_steps)) {
      evaluate_now();
    }
    if (s.step == opts.save_state_at && !opts.state_path.empty()) {
      save_state(opts.state_path, s, hash);
      log("saved resumable state at step " + std::to_string(s.step));
      if (opts.stop_after_save) {
        RunResult partial{s.record, s.diag, s.best};
        return partial;
      }
    }
  }

  const auto test = evaluate(s.best, data.splits.test, cfg.beam, cfg.length_penalty,
                             cfg.bleu_smoothing, cfg.batch_tokens);
  s.record.test_bleu = test.bleu.score;
  s.record.test_accuracy = test.token_accuracy;
  s.record.best_checkpoint = best_path;
  return {s.record, s.diag, s.best};
}

}  // namespace detail

inline RunResult train_teacher(const ExperimentConfig& cfg, std::uint64_t seed,
                               const Datasets& data, const TrainOptions& opts = {}) {
  return detail::train_loop(cfg, detail::Role::kTeacher, nullptr, seed, data, opts);
}

/// `teacher` may be null only for kd_mode none.
inline RunResult train_student(const ExperimentConfig& cfg,
                               const ModelParams* teacher, std::uint64_t seed,
                               const Datasets& data, const TrainOptions& opts = {}) {
  return detail::train_loop(cfg, detail::Role::kStudent, teacher, seed, data, opts);
}

struct PartitionReport {
  CriterionId criterion = CriterionId::kWordCe;
  std::vector<RunRecord> high;
  std::vector<RunRecord> low;
  double mean_delta_bleu = 0.0;      // High - Low
  double mean_delta_accuracy = 0.0;  // High - Low
};

inline PartitionReport run_partition_experiment(
    ExperimentConfig cfg, const ModelParams& teacher, CriterionId criterion,
    const Datasets& data, const std::function<void(const std::string&)>& log = {}) {
  PartitionReport rep;
  rep.criterion = criterion;
  cfg.kd_mode = KdMode::kPartition;
  TrainOptions opts;
  opts.log = log;
  for (auto seed : cfg.seeds) {
    for (auto half : {PartitionHalf::kHigh, PartitionHalf::kLow}) {
      cfg.partition = PartitionSpec{criterion, half};
      auto r = train_student(cfg, &teacher, seed, data, opts).record;
      (half == PartitionHalf::kHigh ? rep.high : rep.low).push_back(r);
    }
  }
  for (std::size_t i = 0; i < rep.high.size(); ++i) {
    rep.mean_delta_bleu += rep.high[i].test_bleu - rep.low[i].test_bleu;
    rep.mean_delta_accuracy += rep.high[i].test_accuracy - rep.low[i].test_accuracy;
  }
  rep.mean_delta_bleu /= static_cast<double>(rep.high.size());
  rep.mean_delta_accuracy /= static_cast<double>(rep.high.size());
  return rep;
}

enum class SweepParam { kR, kQSize };

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  double best_valid_bleu = 0.0;
  double test_bleu = 0.0;
  double test_accuracy = 0.0;
};

inline std::vector<SweepRow> sweep(ExperimentConfig cfg, SweepParam param,
                                   const std::vector<double>& values,
                                   const ModelParams* teacher, const Datasets& data,
                                   const std::function<void(const std::string&)>& log = {}) {
  if (values.size() < 2) throw ConfigError("sweep: need at least 2 values");
  std::vector<SweepRow> rows;
  TrainOptions opts;
  opts.log = log;
  for (double v : values) {
    if (param == SweepParam::kR) {
      cfg.r = v;
    } else {
      if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("sweep: q_size must be a positive integer");
      cfg.q_size = static_cast<std::size_t>(v);
    }
    for (auto seed : cfg.seeds) {
      const auto rec = train_student(cfg, teacher, seed, data, opts).record;
      rows.push_back({v, seed, rec.best_valid_bleu, rec.test_bleu, rec.test_accuracy});
    }
  }
  return rows;
}

inline constexpr const char* kSweepHeader =
    "value,seed,best_valid_bleu,test_bleu,test_accuracy";

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << kSweepHeader << '\n';
  for (const auto& r : rows)
    os << format_real(r.value) << ',' << r.seed << ',' << format_real(r.best_valid_bleu)
       << ',' << format_real(r.test_bleu) << ',' << format_real(r.test_accuracy) << '\n';
}

inline constexpr const char* kMetricsHeader = "step,valid_bleu,valid_accuracy,train_loss";

inline void write_metrics_csv(std::ostream& os, const std::vector<EvalRecord>& rows) {
  os << kMetricsHeader << '\n';
  for (const auto& e : rows)
    os << e.step << ',' << format_real(e.valid_bleu) << ','
       << format_real(e.valid_accuracy) << ',' << format_real(e.train_loss) << '\n';
}

inline std::vector<EvalRecord> read_metrics_csv(std::istream& is) {
  return detail::read_csv<EvalRecord>(
      is, kMetricsHeader, 4, +[](const std::vector<std::string>& f) {
        return EvalRecord{std::stoll(f[0]), std::stod(f[1]), std::stod(f[2]),
                          std::stod(f[3])};
      });
}

inline nlohmann::json summary_json(const RunRecord& r) {
  nlohmann::json j;
  j["config_hash"] = r.config_hash;
  j["role"] = r.role;
  j["kd_mode"] = r.kd_mode;
  j["seed"] = r.seed;
  j["best_step"] = r.best_step;
  j["best_valid_bleu"] = r.best_valid_bleu;
  j["best_checkpoint"] = r.best_checkpoint;
  j["test_bleu"] = r.test_bleu;
  j["test_accuracy"] = r.test_accuracy;
  j["evaluations"] = r.evals.size();
  return j;
}

namespace detail {
inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}
}  // namespace detail

/// Writes metrics.csv, agreement.csv, entropy_hist.csv, threshold_trace.csv
/// and summary.json under `dir`.
inline void emit_report(const std::string& dir, const RunRecord& record,
                        const Diagnostics& diag) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  const std::filesystem::path d(dir);
  {
    auto os = detail::open_out(d / "metrics.csv");
    write_metrics_csv(os, record.evals);
  }
  {
    auto os = detail::open_out(d / "agreement.csv");
    write_agreement_csv(os, diag.agreement);
  }
  {
    auto os = detail::open_out(d / "entropy_hist.csv");
    write_histogram_csv(os, diag.entropy);
  }
  {
    auto os = detail::open_out(d / "threshold_trace.csv");
    write_threshold_csv(os, diag.thresholds);
  }
  {
    auto os = detail::open_out(d / "summary.json");
    os << summary_json(record).dump(2) << '\n';
    if (!os) throw IoError("write failed: " + (d / "summary.json").string());
  }
}

}  // namespace selkd
