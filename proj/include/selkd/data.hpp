// selkd/data.hpp

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

// Synthetic parallel corpora, vocabulary statistics and token batching.

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "selkd/common.hpp"

namespace selkd {

enum class TaskKind { kCopy, kReverse, kLexiconReorder };

inline std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kCopy:
      return "copy";
    case TaskKind::kReverse:
      return "reverse";
    case TaskKind::kLexiconReorder:
      return "lexicon_reorder";
  }
  return "?";
}

inline TaskKind task_kind_from_string(const std::string& s) {
  if (s == "copy") return TaskKind::kCopy;
  if (s == "reverse") return TaskKind::kReverse;
  if (s == "lexicon_reorder") return TaskKind::kLexiconReorder;
  throw ConfigError("task.kind: unknown task kind '" + s + "'");
}

struct TaskSpec {
  TaskKind kind = TaskKind::kLexiconReorder;
  std::size_t vocab_size = 40;  // includes the three reserved ids
  std::size_t len_min = 4;
  std::size_t len_max = 12;
  double zipf_s = 1.0;
  double noise_rate = 0.0;
  std::uint64_t seed = 1;

  void validate(std::size_t max_len) const {
    if (vocab_size < 8) throw ConfigError("task.vocab_size: must be >= 8");
    if (len_min < 1) throw ConfigError("task.len_min: must be >= 1");
    if (len_max < len_min) throw ConfigError("task.len_max: must be >= len_min");
    if (max_len < 2 || len_max > max_len - 2) {
      throw ConfigError("task.len_max: must be <= max_len - 2 (max_len=" +
                        std::to_string(max_len) + ")");
    }
    if (!(zipf_s >= 0.0)) throw ConfigError("task.zipf_s: must be >= 0");
    if (!(noise_rate >= 0.0 && noise_rate < 1.0)) {
      throw ConfigError("task.noise_rate: must be in [0, 1)");
    }
  }
};

struct SentencePair {
  TokenSeq src;
  TokenSeq tgt;
  bool operator==(const SentencePair&) const = default;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  TaskSpec spec;

  std::size_t size() const { return pairs.size(); }
};

/// Bijective substitution over regular ids used by lexicon_reorder.
inline std::vector<std::int32_t> task_lexicon(const TaskSpec& spec) {
  const std::size_t regular = spec.vocab_size - kFirstRegularId;
  std::vector<std::int32_t> lex(regular);
  std::iota(lex.begin(), lex.end(), kFirstRegularId);
  Rng rng(derive_seed(spec.seed, 0x1e81c0));
  rng.shuffle(lex.begin(), lex.end());
  return lex;
}

/// Swaps positions (0,1), (2,3), ...; self-inverse.
inline TokenSeq swap_adjacent_pairs(TokenSeq s) {
  for (std::size_t i = 0; i + 1 < s.size(); i += 2) std::swap(s[i], s[i + 1]);
  return s;
}

/// Noise-free target for a source sentence.
inline TokenSeq task_target(const TaskSpec& spec,
                            const std::vector<std::int32_t>& lexicon,
                            const TokenSeq& src) {
  switch (spec.kind) {
    case TaskKind::kCopy:
      return src;
    case TaskKind::kReverse:
      return TokenSeq(src.rbegin(), src.rend());
    case TaskKind::kLexiconReorder: {
      TokenSeq t(src.size());
      for (std::size_t i = 0; i < src.size(); ++i)
        t[i] = lexicon[static_cast<std::size_t>(src[i] - kFirstRegularId)];
      return swap_adjacent_pairs(std::move(t));
    }
  }
  return src;
}

/// Zipf(s) sampler over ranks 1..n mapped to ids kFirstRegularId + rank - 1.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double s) : cdf_(n) {
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      total += 1.0 / std::pow(static_cast<double>(k + 1), s);
      cdf_[k] = total;
    }
    for (auto& c : cdf_) c /= total;
    cdf_.back() = 1.0;
  }

  std::int32_t operator()(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const auto rank = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(it - cdf_.begin(),
                                 static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
    return static_cast<std::int32_t>(kFirstRegularId + rank);
  }

 private:
  std::vector<double> cdf_;
};

/// Pure function of (spec, n_pairs).
inline ParallelCorpus generate_corpus(const TaskSpec& spec,
                                      std::size_t n_pairs,
                                      std::size_t max_len = 256) {
  spec.validate(max_len);
  if (n_pairs < 1) throw ConfigError("n_pairs: must be >= 1");
  const std::size_t regular = spec.vocab_size - kFirstRegularId;
  const auto lexicon = task_lexicon(spec);
  const ZipfSampler zipf(regular, spec.zipf_s);
  Rng rng(derive_seed(spec.seed, 0xda7a));
  ParallelCorpus corpus;
  corpus.spec = spec;
  corpus.pairs.reserve(n_pairs);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const std::size_t len =
        spec.len_min + rng.below(spec.len_max - spec.len_min + 1);
    TokenSeq src(len);
    for (auto& tok : src) tok = zipf(rng);
    TokenSeq tgt = task_target(spec, lexicon, src);
    for (auto& tok : tgt) {
      if (rng.uniform() < spec.noise_rate) {
        tok = static_cast<std::int32_t>(kFirstRegularId + rng.below(regular));
      }
    }
    corpus.pairs.push_back({std::move(src), std::move(tgt)});
  }
  return corpus;
}

struct DataSplits {
  ParallelCorpus train;
  ParallelCorpus valid;
  ParallelCorpus test;
};

/// Consecutive split of one generated corpus, so every split shares the
/// task's lexicon.
inline DataSplits generate_splits(const TaskSpec& spec, std::size_t n_train,
                                  std::size_t n_valid, std::size_t n_test,
                                  std::size_t max_len = 256) {
  auto all = generate_corpus(spec, n_train + n_valid + n_test, max_len);
  DataSplits s;
  s.train.spec = s.valid.spec = s.test.spec = spec;
  auto it = all.pairs.begin();
  s.train.pairs.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  it += static_cast<std::ptrdiff_t>(n_train);
  s.valid.pairs.assign(it, it + static_cast<std::ptrdiff_t>(n_valid));
  it += static_cast<std::ptrdiff_t>(n_valid);
  s.test.pairs.assign(it, all.pairs.end());
  return s;
}

/// Token ids are their own surface forms; frequencies come from the
/// training target side.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::size_t size) : freq_(size, 0) {}

  std::size_t size() const { return freq_.size(); }
  std::size_t frequency(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= freq_.size()) return 0;
    return freq_[static_cast<std::size_t>(id)];
  }
  std::size_t total() const {
    return std::accumulate(freq_.begin(), freq_.end(), std::size_t{0});
  }
  void count(std::int32_t id) {
    if (id < 0) return;
    if (static_cast<std::size_t>(id) >= freq_.size())
      freq_.resize(static_cast<std::size_t>(id) + 1, 0);
    ++freq_[static_cast<std::size_t>(id)];
  }

  static std::string token(std::int32_t id) { return std::to_string(id); }
  static std::int32_t id(const std::string& token) {
    try {
      std::size_t pos = 0;
      const int v = std::stoi(token, &pos);
      if (pos != token.size() || v < 0) throw std::invalid_argument(token);
      return v;
    } catch (const std::exception&) {
      throw DataError("vocab: malformed token '" + token + "'");
    }
  }

 private:
  std::vector<std::size_t> freq_;
};

inline Vocab build_vocab(const ParallelCorpus& corpus) {
  if (corpus.pairs.empty()) throw ContractError("build_vocab: empty corpus");
  Vocab v(corpus.spec.vocab_size);
  for (const auto& p : corpus.pairs)
    for (auto tok : p.tgt) v.count(tok);
  return v;
}

/// Padded batch. `*_valid` is 1 on real tokens and 0 on padding.
struct TokenBatch {
  IdMatrix src_ids;
  IdMatrix tgt_in;
  IdMatrix tgt_out;
  Mask src_valid;
  Mask tgt_valid;
  std::vector<std::size_t> sentence_lengths;  // target length without EOS
  std::vector<std::size_t> pair_index;        // position in the corpus

  std::size_t batch_size() const { return src_ids.rows(); }
  std::size_t tgt_len() const { return tgt_in.cols(); }
  std::size_t valid_tokens() const { return count_true(tgt_valid); }
};

inline std::size_t padded_cost(const SentencePair& p) {
  return std::max(p.src.size(), p.tgt.size() + 1);
}

inline TokenBatch make_batch(const ParallelCorpus& corpus,
                             const std::vector<std::size_t>& indices) {
  std::size_t S = 0;
  std::size_t T = 0;
  for (auto i : indices) {
    S = std::max(S, corpus.pairs[i].src.size());
    T = std::max(T, corpus.pairs[i].tgt.size() + 1);
  }
  const std::size_t B = indices.size();
  TokenBatch b;
  b.src_ids = IdMatrix(B, S, kPad);
  b.tgt_in = IdMatrix(B, T, kPad);
  b.tgt_out = IdMatrix(B, T, kPad);
  b.src_valid = Mask(B, S, 0);
  b.tgt_valid = Mask(B, T, 0);
  for (std::size_t r = 0; r < B; ++r) {
    const auto& p = corpus.pairs[indices[r]];
    for (std::size_t j = 0; j < p.src.size(); ++j) {
      b.src_ids(r, j) = p.src[j];
      b.src_valid(r, j) = 1;
    }
    b.tgt_in(r, 0) = kBos;
    for (std::size_t j = 0; j < p.tgt.size(); ++j) {
      b.tgt_in(r, j + 1) = p.tgt[j];
      b.tgt_out(r, j) = p.tgt[j];
    }
    b.tgt_out(r, p.tgt.size()) = kEos;
    for (std::size_t j = 0; j <= p.tgt.size(); ++j) b.tgt_valid(r, j) = 1;
    b.sentence_lengths.push_back(p.tgt.size());
    b.pair_index.push_back(indices[r]);
  }
  return b;
}

/// Length-bucketed batches with (sentences x padded length) <= max_tokens.
/// Every pair appears exactly once.
inline std::vector<TokenBatch> make_batches(const ParallelCorpus& corpus,
                                            std::size_t max_tokens,
                                            std::uint64_t seed, bool shuffle) {
  if (max_tokens < corpus.spec.len_max + 2) {
    throw ContractError("make_batches: max_tokens " +
                        std::to_string(max_tokens) + " below len_max + 2");
  }
  std::vector<std::size_t> order(corpus.pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  if (shuffle) rng.shuffle(order.begin(), order.end());
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return padded_cost(corpus.pairs[a]) < padded_cost(corpus.pairs[b]);
  });
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> cur;
  std::size_t cur_len = 0;
  for (auto i : order) {
    const std::size_t c = padded_cost(corpus.pairs[i]);
    if (c > max_tokens) {
      throw ContractError("make_batches: pair " + std::to_string(i) +
                          " needs " + std::to_string(c) +
                          " tokens, budget is " + std::to_string(max_tokens));
    }
    const std::size_t len = std::max(cur_len, c);
    if (!cur.empty() && (cur.size() + 1) * len > max_tokens) {
      groups.push_back(std::move(cur));
      cur.clear();
      cur_len = 0;
    }
    cur.push_back(i);
    cur_len = std::max(cur_len, c);
  }
  if (!cur.empty()) groups.push_back(std::move(cur));
  if (shuffle) rng.shuffle(groups.begin(), groups.end());
  std::vector<TokenBatch> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(make_batch(corpus, g));
  return out;
}

// Text format: one pair per line, "src tokens<TAB>tgt tokens", tokens
// separated by single spaces.
inline void write_corpus(std::ostream& os, const ParallelCorpus& corpus) {
  for (const auto& p : corpus.pairs) {
    for (std::size_t i = 0; i < p.src.size(); ++i)
      os << (i ? " " : "") << p.src[i];
    os << '\t';
    for (std::size_t i = 0; i < p.tgt.size(); ++i)
      os << (i ? " " : "") << p.tgt[i];
    os << '\n';
  }
}

inline ParallelCorpus read_corpus(std::istream& is, TaskSpec spec = {}) {
  ParallelCorpus corpus;
  corpus.spec = spec;
  std::string line;
  std::size_t lineno = 0;
  std::int32_t max_id = 0;
  std::size_t max_len = 0;
  auto parse = [&](const std::string& field) {
    TokenSeq out;
    std::istringstream ss(field);
    std::string tok;
    while (ss >> tok) {
      out.push_back(Vocab::id(tok));
      max_id = std::max(max_id, out.back());
    }
    if (out.empty()) {
      throw DataError("corpus line " + std::to_string(lineno) +
                      ": empty sequence");
    }
    max_len = std::max(max_len, out.size());
    return out;
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("corpus line " + std::to_string(lineno) +
                      ": missing tab separator");
    }
    corpus.pairs.push_back(
        {parse(line.substr(0, tab)), parse(line.substr(tab + 1))});
  }
  corpus.spec.vocab_size =
      std::max(corpus.spec.vocab_size, static_cast<std::size_t>(max_id) + 1);
  corpus.spec.len_max = std::max(corpus.spec.len_max, max_len);
  return corpus;
}

inline void save_corpus(const std::string& path, const ParallelCorpus& c) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_corpus(os, c);
}

inline ParallelCorpus load_corpus(const std::string& path, TaskSpec spec = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_corpus(is, spec);
}

}  // namespace selkd
