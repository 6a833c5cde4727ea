// selkd/diagnostics.hpp

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

// Training-time probes: agreement between the cross-entropy and distillation
// gradients at the logits, teacher entropy histograms and selection-threshold
// traces, plus their CSV forms.

#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "selkd/distill.hpp"
#include "selkd/selection.hpp"

namespace selkd {

/// d(word_ce)/d(logits) = p - onehot(gold).
inline std::vector<double> logit_grad_ce(std::span<const double> p,
                                         std::int32_t gold) {
  if (gold < 0 || static_cast<std::size_t>(gold) >= p.size()) {
    throw IndexError("logit_grad_ce: gold id " + std::to_string(gold) +
                     " outside vocabulary of " + std::to_string(p.size()));
  }
  std::vector<double> g(p.begin(), p.end());
  g[static_cast<std::size_t>(gold)] -= 1.0;
  return g;
}

/// d(word_kd)/d(logits) = p - q.
inline std::vector<double> logit_grad_kd(std::span<const double> p,
                                         std::span<const double> q) {
  if (p.size() != q.size()) {
    throw DimensionError("logit_grad_kd: distributions differ in size");
  }
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) g[k] = p[k] - q[k];
  return g;
}

enum class AgreementGroup { kHard, kEasy, kAll };

inline std::string to_string(AgreementGroup g) {
  switch (g) {
    case AgreementGroup::kHard: return "S_Hard";
    case AgreementGroup::kEasy: return "S_Easy";
    case AgreementGroup::kAll: return "All";
  }
  return "?";
}

inline AgreementGroup agreement_group_from_string(const std::string& s) {
  if (s == "S_Hard") return AgreementGroup::kHard;
  if (s == "S_Easy") return AgreementGroup::kEasy;
  if (s == "All") return AgreementGroup::kAll;
  throw DataError("unknown agreement group '" + s + "'");
}

/// kCosine: positive cosine similarity. kSignVote: more components with
/// matching sign than with opposite sign.
enum class AgreementRule { kCosine, kSignVote };

struct AgreementStats {
  std::int64_t step = 0;
  AgreementGroup group = AgreementGroup::kAll;
  std::size_t agree_count = 0;
  std::size_t total_count = 0;
  double rate = 0.0;

  bool operator==(const AgreementStats&) const = default;
};

inline constexpr double kGradNormFloor = 1e-12;

/// `student_probs` is laid out like the teacher distribution,
/// [batch x len x vocab].
inline AgreementStats direction_agreement_rate(
    std::span<const double> student_probs, const IdMatrix& gold,
    const TeacherDistribution& teacher, const Mask& group_mask,
    AgreementRule rule = AgreementRule::kCosine, std::int64_t step = 0,
    AgreementGroup group = AgreementGroup::kAll) {
  const std::size_t V = teacher.vocab;
  if (student_probs.size() != gold.size() * V ||
      teacher.probs.size() != student_probs.size() ||
      group_mask.size() != gold.size()) {
    throw DimensionError("direction_agreement_rate: shape mismatch");
  }
  AgreementStats st{step, group, 0, 0, 0.0};
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!group_mask[i]) continue;
    std::span<const double> p = student_probs.subspan(i * V, V);
    std::span<const double> q(teacher.probs.data() + i * V, V);
    const auto gc = logit_grad_ce(p, gold[i]);
    const auto gk = logit_grad_kd(p, q);
    double dot = 0.0, nc = 0.0, nk = 0.0;
    std::ptrdiff_t votes = 0;
    for (std::size_t k = 0; k < V; ++k) {
      dot += gc[k] * gk[k];
      nc += gc[k] * gc[k];
      nk += gk[k] * gk[k];
      const double prod = gc[k] * gk[k];
      votes += (prod > 0.0) - (prod < 0.0);
    }
    if (std::sqrt(nc) < kGradNormFloor || std::sqrt(nk) < kGradNormFloor)
      continue;
    ++st.total_count;
    const bool agree = rule == AgreementRule::kCosine ? dot > 0.0 : votes > 0;
    if (agree) ++st.agree_count;
  }
  if (st.total_count == 0) {
    throw ContractError("direction_agreement_rate: group " + to_string(group) +
                        " has no tokens with non-zero gradients");
  }
  st.rate = static_cast<double>(st.agree_count) /
            static_cast<double>(st.total_count);
  return st;
}

struct EntropyHistogram {
  std::vector<double> edges;  // bins + 1 ascending values
  std::map<std::string, std::vector<std::size_t>> counts;

  std::size_t bins() const { return edges.empty() ? 0 : edges.size() - 1; }

  std::size_t bin_of(double h) const {
    const std::size_t n = bins();
    if (h <= edges.front()) return 0;
    if (h >= edges.back()) return n - 1;
    const double w = (edges.back() - edges.front()) / static_cast<double>(n);
    return std::min(n - 1, static_cast<std::size_t>((h - edges.front()) / w));
  }
};

/// Histograms per-token teacher entropy for each named group over
/// [0, ln vocab]. Groups larger than `sample_limit` are subsampled without
/// replacement (0 keeps every token).
inline EntropyHistogram entropy_histogram(
    const TeacherDistribution& teacher,
    const std::vector<std::pair<std::string, Mask>>& groups, std::size_t bins,
    std::size_t sample_limit = 0, std::uint64_t seed = 0) {
  if (bins == 0) throw ContractError("entropy_histogram: bins must be >= 1");
  EntropyHistogram h;
  const double hi = std::log(static_cast<double>(std::max<std::size_t>(teacher.vocab, 2)));
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b)
    h.edges[b] = hi * static_cast<double>(b) / static_cast<double>(bins);
  h.edges.back() = hi;
  Rng rng(seed);
  for (const auto& [name, mask] : groups) {
    if (mask.size() != teacher.batch * teacher.len) {
      throw DimensionError("entropy_histogram: mask for " + name +
                           " does not match the teacher distribution");
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) idx.push_back(i);
    if (sample_limit > 0 && idx.size() > sample_limit) {
      rng.shuffle(idx.begin(), idx.end());
      idx.resize(sample_limit);
    }
    auto& c = h.counts[name];
    c.assign(bins, 0);
    for (auto i : idx) {
      std::span<const double> q(teacher.probs.data() + i * teacher.vocab,
                                teacher.vocab);
      ++c[h.bin_of(entropy(q))];
    }
  }
  return h;
}

/// Merges counts of `b` into `a`; bin edges must agree.
inline void accumulate(EntropyHistogram& a, const EntropyHistogram& b) {
  if (a.edges.empty()) {
    a = b;
    return;
  }
  if (a.edges != b.edges) throw ContractError("accumulate: bin edges differ");
  for (const auto& [name, c] : b.counts) {
    auto& dst = a.counts[name];
    if (dst.empty()) dst.assign(c.size(), 0);
    for (std::size_t i = 0; i < c.size(); ++i) dst[i] += c[i];
  }
}

struct ThresholdRecord {
  std::int64_t step = 0;
  std::string strategy;  // "BLS" or "GLS"
  double threshold = 0.0;

  bool operator==(const ThresholdRecord&) const = default;
};

inline double population_std(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

class ThresholdTrace {
 public:
  void record(std::int64_t step, const std::string& strategy, double threshold) {
    auto it = last_step_.find(strategy);
    if (it != last_step_.end() && step <= it->second) {
      throw ContractError("threshold trace: step " + std::to_string(step) +
                          " for " + strategy + " is not after step " +
                          std::to_string(it->second));
    }
    last_step_[strategy] = step;
    records_.push_back({step, strategy, threshold});
  }

  const std::vector<ThresholdRecord>& records() const { return records_; }

  std::vector<double> values(const std::string& strategy) const {
    std::vector<double> v;
    for (const auto& r : records_)
      if (r.strategy == strategy) v.push_back(r.threshold);
    return v;
  }

  /// Standard deviation over the last `window` records of each strategy.
  std::map<std::string, double> summary(std::size_t window = 200) const {
    std::map<std::string, double> out;
    for (const auto& [s, _] : last_step_) {
      const auto v = values(s);
      const std::size_t n = std::min(window, v.size());
      out[s] = population_std(std::span<const double>(v).last(n));
    }
    return out;
  }

  /// Standard deviations over consecutive non-overlapping windows, aligned
  /// to the end of the trace (a partial leading window is dropped).
  std::vector<double> window_stds(const std::string& strategy,
                                  std::size_t window) const {
    if (window == 0) throw ContractError("window_stds: window must be positive");
    const auto v = values(strategy);
    std::vector<double> out;
    const std::size_t n = v.size() / window;
    const std::size_t start = v.size() - n * window;
    for (std::size_t w = 0; w < n; ++w)
      out.push_back(population_std(
          std::span<const double>(v).subspan(start + w * window, window)));
    return out;
  }

 private:
  std::vector<ThresholdRecord> records_;
  std::map<std::string, std::int64_t> last_step_;
};

// CSV output. Reals use 17 significant digits so values round-trip exactly.

inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

namespace detail {
template <class Row>
std::vector<Row> read_csv(std::istream& is, const std::string& header,
                          std::size_t n_fields,
                          Row (*parse)(const std::vector<std::string>&)) {
  std::string line;
  if (!std::getline(is, line) || line != header) {
    throw DataError("csv: expected header '" + header + "'");
  }
  std::vector<Row> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != n_fields) {
      throw DataError("csv line " + std::to_string(lineno) + ": expected " +
                      std::to_string(n_fields) + " fields");
    }
    try {
      rows.push_back(parse(f));
    } catch (const std::logic_error&) {
      throw DataError("csv line " + std::to_string(lineno) + ": bad number");
    }
  }
  return rows;
}
}  // namespace detail

inline constexpr const char* kAgreementHeader =
    "step,group,value,agree_count,total_count";

inline void write_agreement_csv(std::ostream& os,
                                const std::vector<AgreementStats>& rows) {
  os << kAgreementHeader << '\n';
  for (const auto& r : rows) {
    os << r.step << ',' << to_string(r.group) << ',' << format_real(r.rate)
       << ',' << r.agree_count << ',' << r.total_count << '\n';
  }
}

inline std::vector<AgreementStats> read_agreement_csv(std::istream& is) {
  return detail::read_csv<AgreementStats>(
      is, kAgreementHeader, 5, +[](const std::vector<std::string>& f) {
        AgreementStats s;
        s.step = std::stoll(f[0]);
        s.group = agreement_group_from_string(f[1]);
        s.rate = std::stod(f[2]);
        s.agree_count = std::stoull(f[3]);
        s.total_count = std::stoull(f[4]);
        return s;
      });
}

inline constexpr const char* kThresholdHeader = "step,group,value";

inline void write_threshold_csv(std::ostream& os, const ThresholdTrace& trace) {
  os << kThresholdHeader << '\n';
  for (const auto& r : trace.records())
    os << r.step << ',' << r.strategy << ',' << format_real(r.threshold) << '\n';
}

inline ThresholdTrace read_threshold_csv(std::istream& is) {
  const auto rows = detail::read_csv<ThresholdRecord>(
      is, kThresholdHeader, 3, +[](const std::vector<std::string>& f) {
        return ThresholdRecord{std::stoll(f[0]), f[1], std::stod(f[2])};
      });
  ThresholdTrace t;
  for (const auto& r : rows) t.record(r.step, r.strategy, r.threshold);
  return t;
}

inline constexpr const char* kHistogramHeader = "bin_lo,bin_hi,group,count";

inline void write_histogram_csv(std::ostream& os, const EntropyHistogram& h) {
  os << kHistogramHeader << '\n';
  for (const auto& [name, c] : h.counts)
    for (std::size_t b = 0; b < c.size(); ++b)
      os << format_real(h.edges[b]) << ',' << format_real(h.edges[b + 1]) << ','
         << name << ',' << c[b] << '\n';
}

inline EntropyHistogram read_histogram_csv(std::istream& is) {
  struct Row {
    double lo, hi;
    std::string group;
    std::size_t count;
  };
  const auto rows = detail::read_csv<Row>(
      is, kHistogramHeader, 4, +[](const std::vector<std::string>& f) {
        return Row{std::stod(f[0]), std::stod(f[1]), f[2], std::stoull(f[3])};
      });
  EntropyHistogram h;
  std::string first;
  for (const auto& r : rows) {
    if (first.empty()) first = r.group;
    if (r.group == first) {
      if (h.edges.empty()) h.edges.push_back(r.lo);
      h.edges.push_back(r.hi);
    }
    h.counts[r.group].push_back(r.count);
  }
  return h;
}

}  // namespace selkd
