// selkd/model.hpp

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

// Pre-norm encoder-decoder transformer with sinusoidal positions, plus
// teacher-forced scoring, greedy decoding and beam search.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "selkd/ops.hpp"
#include "selkd/tensor.hpp"

namespace selkd {

struct TransformerConfig {
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t d_model = 64;
  std::size_t d_ff = 128;
  std::size_t n_heads = 4;
  std::size_t src_vocab = 40;
  std::size_t tgt_vocab = 40;
  double dropout = 0.1;
  std::size_t max_len = 32;

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string("model.") + name + ": must be positive");
    };
    positive(enc_layers, "enc_layers");
    positive(dec_layers, "dec_layers");
    positive(d_model, "d_model");
    positive(d_ff, "d_ff");
    positive(n_heads, "n_heads");
    positive(src_vocab, "src_vocab");
    positive(tgt_vocab, "tgt_vocab");
    positive(max_len, "max_len");
    if (d_model % n_heads != 0) {
      throw ConfigError("model.n_heads: d_model " + std::to_string(d_model) +
                        " is not divisible by n_heads " +
                        std::to_string(n_heads));
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
      throw ConfigError("model.dropout: must be in [0, 1)");
    }
    if (src_vocab <= static_cast<std::size_t>(kFirstRegularId) ||
        tgt_vocab <= static_cast<std::size_t>(kFirstRegularId)) {
      throw ConfigError("model.tgt_vocab: must exceed the reserved ids");
    }
  }

  bool operator==(const TransformerConfig&) const = default;
};

/// Named parameter collection. Copies share storage; use clone() for a deep
/// copy.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(TransformerConfig config, ParamList params)
      : config_(config), params_(std::move(params)) {
    reindex();
  }

  const TransformerConfig& config() const { return config_; }
  ParamList& list() { return params_; }
  const ParamList& list() const { return params_; }

  const Tensor& operator[](const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("model: no parameter " + name);
    return params_[it->second].tensor;
  }
  bool contains(const std::string& name) const {
    return index_.count(name) != 0;
  }

  ModelParams clone(bool requires_grad) const {
    ParamList copy;
    for (const auto& p : params_) {
      copy.push_back({p.name, Tensor(p.tensor.shape(),
                                     {p.tensor.values().begin(),
                                      p.tensor.values().end()},
                                     requires_grad)});
    }
    return ModelParams(config_, std::move(copy));
  }

  /// Overwrites values from a checkpoint list; names and shapes must match.
  void assign(const ParamList& from) {
    for (const auto& src : from) {
      auto it = index_.find(src.name);
      if (it == index_.end()) continue;
      auto& dst = params_[it->second].tensor;
      if (dst.shape() != src.tensor.shape()) {
        throw DataError("checkpoint: shape mismatch for " + src.name + ": " +
                        shape_str(src.tensor.shape()) + " vs " +
                        shape_str(dst.shape()));
      }
      std::copy(src.tensor.values().begin(), src.tensor.values().end(),
                dst.mutable_values().begin());
    }
    for (const auto& p : params_) {
      bool found = std::any_of(from.begin(), from.end(),
                               [&](const auto& s) { return s.name == p.name; });
      if (!found) throw DataError("checkpoint: missing parameter " + p.name);
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < params_.size(); ++i)
      index_[params_[i].name] = i;
  }

  TransformerConfig config_;
  ParamList params_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

struct ParamSpec {
  std::string name;
  Shape shape;
  enum Init { kWeight, kEmbedding, kZero, kOne } init;
};

inline void attention_specs(std::vector<ParamSpec>& out, const std::string& p,
                            std::size_t d) {
  // Keys carry no bias term.
  for (const char* w : {"q", "k", "v", "o"}) {
    out.push_back({p + ".w" + w, {d, d}, ParamSpec::kWeight});
    if (std::string(w) != "k") out.push_back({p + ".b" + w, {d}, ParamSpec::kZero});
  }
}

inline void norm_specs(std::vector<ParamSpec>& out, const std::string& p,
                       std::size_t d) {
  out.push_back({p + ".g", {d}, ParamSpec::kOne});
  out.push_back({p + ".b", {d}, ParamSpec::kZero});
}

inline void ff_specs(std::vector<ParamSpec>& out, const std::string& p,
                     std::size_t d, std::size_t ff) {
  out.push_back({p + ".w1", {d, ff}, ParamSpec::kWeight});
  out.push_back({p + ".b1", {ff}, ParamSpec::kZero});
  out.push_back({p + ".w2", {ff, d}, ParamSpec::kWeight});
  out.push_back({p + ".b2", {d}, ParamSpec::kZero});
}

inline std::vector<ParamSpec> param_specs(const TransformerConfig& c) {
  std::vector<ParamSpec> s;
  const auto d = c.d_model;
  s.push_back({"src_embed", {c.src_vocab, d}, ParamSpec::kEmbedding});
  s.push_back({"tgt_embed", {c.tgt_vocab, d}, ParamSpec::kEmbedding});
  for (std::size_t l = 0; l < c.enc_layers; ++l) {
    const auto p = "enc." + std::to_string(l);
    norm_specs(s, p + ".ln1", d);
    attention_specs(s, p + ".self", d);
    norm_specs(s, p + ".ln2", d);
    ff_specs(s, p + ".ff", d, c.d_ff);
  }
  norm_specs(s, "enc.ln_f", d);
  for (std::size_t l = 0; l < c.dec_layers; ++l) {
    const auto p = "dec." + std::to_string(l);
    norm_specs(s, p + ".ln1", d);
    attention_specs(s, p + ".self", d);
    norm_specs(s, p + ".ln2", d);
    attention_specs(s, p + ".cross", d);
    norm_specs(s, p + ".ln3", d);
    ff_specs(s, p + ".ff", d, c.d_ff);
  }
  norm_specs(s, "dec.ln_f", d);
  s.push_back({"out.w", {d, c.tgt_vocab}, ParamSpec::kWeight});
  s.push_back({"out.b", {c.tgt_vocab}, ParamSpec::kZero});
  return s;
}

}  // namespace detail

/// Deterministic given the seed. Weights ~ U(-a, a) with variance 1/fan_in;
/// embeddings ~ N(0, 1/d_model) (rescaled by sqrt(d_model) at lookup).
inline ModelParams init_params(const TransformerConfig& config,
                               std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, 0x1417));
  ParamList params;
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  for (const auto& spec : detail::param_specs(config)) {
    std::vector<double> v(shape_size(spec.shape), 0.0);
    switch (spec.init) {
      case detail::ParamSpec::kWeight: {
        const double a = std::sqrt(3.0 / static_cast<double>(spec.shape[0]));
        for (auto& x : v) x = rng.uniform(-a, a);
        break;
      }
      case detail::ParamSpec::kEmbedding:
        for (auto& x : v) x = emb_std * rng.normal();
        break;
      case detail::ParamSpec::kOne:
        std::fill(v.begin(), v.end(), 1.0);
        break;
      case detail::ParamSpec::kZero:
        break;
    }
    params.push_back({spec.name, Tensor(spec.shape, std::move(v), true)});
  }
  return ModelParams(config, std::move(params));
}

/// Evaluation mode disables dropout; training mode draws masks from `rng`.
struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;
};

inline constexpr double kLayerNormEps = 1e-5;

namespace detail {

inline Tensor positional_encoding(std::size_t batch, std::size_t len,
                                  std::size_t d) {
  std::vector<double> pe(batch * len * d);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, expo);
      const double val = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
      for (std::size_t b = 0; b < batch; ++b) pe[(b * len + pos) * d + i] = val;
    }
  }
  return Tensor({batch, len, d}, std::move(pe));
}

inline Tensor maybe_dropout(const Tensor& x, const TransformerConfig& c,
                            const ForwardMode& mode) {
  if (!mode.training || c.dropout == 0.0) return x;
  if (!mode.rng) throw ContractError("training forward requires a dropout rng");
  return dropout(x, c.dropout, *mode.rng);
}

inline Tensor norm(const ModelParams& P, const std::string& p, const Tensor& x) {
  return layer_norm(x, P[p + ".g"], P[p + ".b"], kLayerNormEps);
}

inline Tensor linear(const ModelParams& P, const std::string& w,
                     const std::string& b, const Tensor& x) {
  return add_bias(matmul(x, P[w]), P[b]);
}

inline Tensor mha(const ModelParams& P, const std::string& p, const Tensor& xq,
                  const Tensor& xkv, const AttentionSpec& spec) {
  const Tensor q = linear(P, p + ".wq", p + ".bq", xq);
  const Tensor k = matmul(xkv, P[p + ".wk"]);
  const Tensor v = linear(P, p + ".wv", p + ".bv", xkv);
  return linear(P, p + ".wo", p + ".bo", attention(q, k, v, spec));
}

inline Tensor feed_forward(const ModelParams& P, const std::string& p,
                           const Tensor& x) {
  return linear(P, p + ".w2", p + ".b2",
                relu(linear(P, p + ".w1", p + ".b1", x)));
}

inline Tensor embed(const ModelParams& P, const std::string& table,
                    const IdMatrix& ids, const ForwardMode& mode) {
  const auto& c = P.config();
  Tensor x = embedding_lookup(P[table], ids.data(), {ids.rows(), ids.cols()});
  x = scale(x, std::sqrt(static_cast<double>(c.d_model)));
  x = add(x, positional_encoding(ids.rows(), ids.cols(), c.d_model));
  return maybe_dropout(x, c, mode);
}

}  // namespace detail

struct EncoderOutput {
  Tensor states;  // [batch x src_len x d_model]
  Mask src_valid;
};

inline EncoderOutput encode(const ModelParams& P, const IdMatrix& src_ids,
                            const Mask& src_valid, const ForwardMode& mode = {}) {
  const auto& c = P.config();
  if (src_ids.cols() > c.max_len) {
    throw ContractError("encode: source length " +
                        std::to_string(src_ids.cols()) + " exceeds max_len " +
                        std::to_string(c.max_len));
  }
  if (src_valid.rows() != src_ids.rows() || src_valid.cols() != src_ids.cols()) {
    throw DimensionError("encode: source mask shape mismatch");
  }
  AttentionSpec spec{src_ids.rows(), src_ids.cols(), src_ids.cols(),
                     c.n_heads,      src_valid,      src_valid,
                     false};
  Tensor x = detail::embed(P, "src_embed", src_ids, mode);
  for (std::size_t l = 0; l < c.enc_layers; ++l) {
    const auto p = "enc." + std::to_string(l);
    Tensor h = detail::norm(P, p + ".ln1", x);
    x = add(x, detail::maybe_dropout(detail::mha(P, p + ".self", h, h, spec), c,
                                     mode));
    h = detail::norm(P, p + ".ln2", x);
    x = add(x, detail::maybe_dropout(detail::feed_forward(P, p + ".ff", h), c,
                                     mode));
  }
  return {detail::norm(P, "enc.ln_f", x), src_valid};
}

/// Logits [batch x tgt_len x tgt_vocab] for a teacher-forced prefix. Position
/// j sees target positions <= j of `tgt_in` (i.e. gold tokens < j+1).
inline Tensor decode_logits(const ModelParams& P, const IdMatrix& tgt_in,
                            const Mask& tgt_valid, const EncoderOutput& enc,
                            const ForwardMode& mode = {}) {
  const auto& c = P.config();
  if (tgt_in.cols() > c.max_len) {
    throw ContractError("decode_logits: prefix length " +
                        std::to_string(tgt_in.cols()) + " exceeds max_len " +
                        std::to_string(c.max_len));
  }
  const std::size_t B = tgt_in.rows();
  const std::size_t T = tgt_in.cols();
  if (enc.src_valid.rows() != B) {
    throw DimensionError("decode_logits: encoder batch " +
                         std::to_string(enc.src_valid.rows()) +
                         " vs target batch " + std::to_string(B));
  }
  const std::size_t S = enc.src_valid.cols();
  AttentionSpec self{B, T, T, c.n_heads, tgt_valid, tgt_valid, true};
  AttentionSpec cross{B, T, S, c.n_heads, tgt_valid, enc.src_valid, false};
  Tensor y = detail::embed(P, "tgt_embed", tgt_in, mode);
  for (std::size_t l = 0; l < c.dec_layers; ++l) {
    const auto p = "dec." + std::to_string(l);
    Tensor h = detail::norm(P, p + ".ln1", y);
    y = add(y, detail::maybe_dropout(detail::mha(P, p + ".self", h, h, self), c,
                                     mode));
    h = detail::norm(P, p + ".ln2", y);
    y = add(y, detail::maybe_dropout(
                   detail::mha(P, p + ".cross", h, enc.states, cross), c, mode));
    h = detail::norm(P, p + ".ln3", y);
    y = add(y, detail::maybe_dropout(detail::feed_forward(P, p + ".ff", h), c,
                                     mode));
  }
  y = detail::norm(P, "dec.ln_f", y);
  return detail::linear(P, "out.w", "out.b", y);
}

struct Hypothesis {
  TokenSeq tokens;  // ends with kEos
  double log_prob = 0.0;
};

inline TokenSeq strip_eos(const TokenSeq& t) {
  TokenSeq out = t;
  if (!out.empty() && out.back() == kEos) out.pop_back();
  return out;
}

namespace detail {

inline bool decodable(std::int32_t id) { return id != kBos && id != kPad; }

inline void source_matrix(const std::vector<TokenSeq>& srcs, IdMatrix& ids,
                          Mask& valid) {
  std::size_t S = 1;
  for (const auto& s : srcs) S = std::max(S, s.size());
  ids = IdMatrix(srcs.size(), S, kPad);
  valid = Mask(srcs.size(), S, 0);
  for (std::size_t r = 0; r < srcs.size(); ++r) {
    for (std::size_t j = 0; j < srcs[r].size(); ++j) {
      ids(r, j) = srcs[r][j];
      valid(r, j) = 1;
    }
  }
}

// Encoder states of row `row` repeated `times` times, detached.
inline EncoderOutput repeat_row(const EncoderOutput& enc, std::size_t row,
                                std::size_t times) {
  const std::size_t S = enc.src_valid.cols();
  const std::size_t d = enc.states.cols();
  std::vector<double> vals(times * S * d);
  Mask valid(times, S, 0);
  const auto src = enc.states.values();
  for (std::size_t t = 0; t < times; ++t) {
    std::copy_n(src.data() + row * S * d, S * d, vals.data() + t * S * d);
    for (std::size_t j = 0; j < S; ++j) valid(t, j) = enc.src_valid(row, j);
  }
  return {Tensor({times, S, d}, std::move(vals)), std::move(valid)};
}

// Row-wise log-probabilities at the last prefix position.
inline std::vector<double> last_step_log_probs(const ModelParams& P,
                                               const IdMatrix& prefix,
                                               const EncoderOutput& enc) {
  const Mask valid(prefix.rows(), prefix.cols(), 1);
  const Tensor logits = decode_logits(P, prefix, valid, enc);
  const std::size_t V = logits.cols();
  const std::size_t T = prefix.cols();
  const auto lv = logits.values();
  std::vector<double> out(prefix.rows() * V);
  for (std::size_t r = 0; r < prefix.rows(); ++r) {
    const double* row = lv.data() + (r * T + T - 1) * V;
    double mx = row[0];
    for (std::size_t c = 1; c < V; ++c) mx = std::max(mx, row[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < V; ++c) s += std::exp(row[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < V; ++c) out[r * V + c] = row[c] - lse;
  }
  return out;
}

}  // namespace detail

/// Greedy decoding of several sources in lockstep. Each hypothesis ends in
/// EOS; EOS is forced once the prefix reaches max_len.
inline std::vector<Hypothesis> greedy_decode_batch(
    const ModelParams& P, const std::vector<TokenSeq>& srcs) {
  NoGradGuard no_grad;
  const auto& c = P.config();
  std::vector<Hypothesis> hyps(srcs.size());
  if (srcs.empty()) return hyps;
  IdMatrix src_ids;
  Mask src_valid;
  detail::source_matrix(srcs, src_ids, src_valid);
  const EncoderOutput enc = encode(P, src_ids, src_valid);
  const std::size_t B = srcs.size();
  const std::size_t V = c.tgt_vocab;
  std::vector<bool> done(B, false);
  std::size_t remaining = B;
  for (std::size_t t = 1; t < c.max_len && remaining > 0; ++t) {
    IdMatrix prefix(B, t, kPad);
    for (std::size_t r = 0; r < B; ++r) {
      prefix(r, 0) = kBos;
      for (std::size_t j = 0; j + 1 < t; ++j) {
        prefix(r, j + 1) =
            j < hyps[r].tokens.size() ? hyps[r].tokens[j] : kEos;
      }
    }
    const auto lp = detail::last_step_log_probs(P, prefix, enc);
    const bool force_eos = (t + 1 == c.max_len);
    for (std::size_t r = 0; r < B; ++r) {
      if (done[r]) continue;
      std::int32_t best = kEos;
      if (!force_eos) {
        double best_lp = -std::numeric_limits<double>::infinity();
        for (std::size_t w = 0; w < V; ++w) {
          const auto id = static_cast<std::int32_t>(w);
          if (!detail::decodable(id)) continue;
          if (lp[r * V + w] > best_lp) {
            best_lp = lp[r * V + w];
            best = id;
          }
        }
      }
      hyps[r].tokens.push_back(best);
      hyps[r].log_prob += lp[r * V + static_cast<std::size_t>(best)];
      if (best == kEos) {
        done[r] = true;
        --remaining;
      }
    }
  }
  return hyps;
}

inline Hypothesis greedy_decode(const ModelParams& P, const TokenSeq& src) {
  return greedy_decode_batch(P, {src}).front();
}

/// Beam search ranked by log_prob / len^length_penalty (len counts EOS).
inline Hypothesis beam_search(const ModelParams& P, const TokenSeq& src,
                              std::size_t beam, double length_penalty) {
  if (beam < 1) throw ContractError("beam_search: beam must be >= 1");
  NoGradGuard no_grad;
  const auto& c = P.config();
  IdMatrix src_ids;
  Mask src_valid;
  detail::source_matrix({src}, src_ids, src_valid);
  const EncoderOutput enc = encode(P, src_ids, src_valid);
  const std::size_t V = c.tgt_vocab;

  struct Live {
    TokenSeq tokens;
    double log_prob;
  };
  struct Candidate {
    std::size_t parent;
    std::int32_t token;
    double log_prob;
  };
  std::vector<Live> live{{{}, 0.0}};
  std::vector<Hypothesis> finished;
  auto normalized = [&](const Hypothesis& h) {
    if (length_penalty == 0.0) return h.log_prob;
    return h.log_prob /
           std::pow(static_cast<double>(h.tokens.size()), length_penalty);
  };

  for (std::size_t t = 1; t < c.max_len && !live.empty(); ++t) {
    IdMatrix prefix(live.size(), t, kPad);
    for (std::size_t r = 0; r < live.size(); ++r) {
      prefix(r, 0) = kBos;
      for (std::size_t j = 0; j < live[r].tokens.size(); ++j)
        prefix(r, j + 1) = live[r].tokens[j];
    }
    const auto states = detail::repeat_row(enc, 0, live.size());
    const auto lp = detail::last_step_log_probs(P, prefix, states);
    const bool force_eos = (t + 1 == c.max_len);
    std::vector<Candidate> cands;
    for (std::size_t r = 0; r < live.size(); ++r) {
      for (std::size_t w = 0; w < V; ++w) {
        const auto id = static_cast<std::int32_t>(w);
        if (!detail::decodable(id) || (force_eos && id != kEos)) continue;
        cands.push_back({r, id, live[r].log_prob + lp[r * V + w]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) {
                       return a.log_prob > b.log_prob;
                     });
    std::vector<Live> next;
    for (std::size_t rank = 0; rank < cands.size(); ++rank) {
      if (next.size() >= beam && rank >= beam) break;
      const auto& cand = cands[rank];
      TokenSeq toks = live[cand.parent].tokens;
      toks.push_back(cand.token);
      if (cand.token == kEos) {
        if (rank < beam) finished.push_back({std::move(toks), cand.log_prob});
      } else if (next.size() < beam) {
        next.push_back({std::move(toks), cand.log_prob});
      }
    }
    live = std::move(next);
    // Log-probs only decrease, so without a length penalty no live prefix can
    // overtake a finished hypothesis that already scores at least as high.
    if (length_penalty == 0.0 && !finished.empty() && !live.empty()) {
      double best_done = finished.front().log_prob;
      for (const auto& h : finished) best_done = std::max(best_done, h.log_prob);
      if (live.front().log_prob <= best_done) break;
    }
  }
  if (finished.empty()) return {};
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i)
    if (normalized(finished[i]) > normalized(finished[best])) best = i;
  return finished[best];
}

/// Teacher-forced log p(tgt | src); `tgt` must end with EOS.
inline double sequence_log_prob(const ModelParams& P, const TokenSeq& src,
                                const TokenSeq& tgt) {
  NoGradGuard no_grad;
  IdMatrix src_ids;
  Mask src_valid;
  detail::source_matrix({src}, src_ids, src_valid);
  const EncoderOutput enc = encode(P, src_ids, src_valid);
  IdMatrix tgt_in(1, tgt.size(), kPad);
  tgt_in(0, 0) = kBos;
  for (std::size_t j = 0; j + 1 < tgt.size(); ++j) tgt_in(0, j + 1) = tgt[j];
  const Tensor logits = decode_logits(P, tgt_in, Mask(1, tgt.size(), 1), enc);
  const Tensor lp = log_softmax(logits);
  const std::size_t V = lp.cols();
  double total = 0.0;
  for (std::size_t j = 0; j < tgt.size(); ++j)
    total += lp.values()[j * V + static_cast<std::size_t>(tgt[j])];
  return total;
}

}  // namespace selkd
