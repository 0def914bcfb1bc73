#ifndef PCHECK_WEIGHTING_HPP
#define PCHECK_WEIGHTING_HPP

// Preference-contrastive criterion weighting.
//
// A criterion's saliency is how much the negative pool catches up with the
// chosen response when that criterion is dropped from the checklist:
//
//   ratio(C)       = mean_{y in pool} s(C, y) / (s(C, chosen) + eps)
//   saliency(c_k)  = ratio(C without c_k) - ratio(C)
//
// with s(C, y) the sum of the judge's criterion scores. Ablated sums come
// from the same score vectors with entry k removed; nothing is re-scored.
// Saliencies are rectified, rescaled to sum to one, and verbalized into
// Essential / Important / Optional by walking the cumulative weight.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcheck/corpus.hpp"
#include "pcheck/error.hpp"
#include "pcheck/util.hpp"

namespace pcheck {

inline constexpr double kDefaultEpsilon = 1e-6;
// Absorbs rounding in the cumulative sum when it lands on a threshold.
inline constexpr double kThresholdSlack = 1e-12;

struct SaliencyTable {
  std::vector<double> raw;
  std::vector<double> rectified;
  std::vector<double> normalized;
  double epsilon = kDefaultEpsilon;
};

struct ThresholdConfig {
  double tau1 = 0.4;
  double tau2 = 0.9;

  void validate() const {
    if (!(tau1 > 0.0 && tau1 < tau2 && tau2 <= 1.0)) {
      throw ValidationError("thresholds must satisfy 0 < tau1 < tau2 <= 1, got tau1=" +
                            std::to_string(tau1) + " tau2=" + std::to_string(tau2));
    }
  }
};

inline double aggregate_score(const ScoreVector& v) {
  if (v.scores.empty()) throw ValidationError("aggregate_score of an empty score vector");
  long long total = 0;
  for (int s : v.scores) total += s;
  return static_cast<double>(total);
}

inline double pool_mean(std::span<const ScoreVector> pool) {
  if (pool.empty()) throw ValidationError("pool_mean of an empty pool");
  const std::size_t n = pool.front().size();
  long long total = 0;
  for (const auto& v : pool) {
    if (v.size() != n) throw ValidationError("pool score vectors differ in length");
    total += static_cast<long long>(aggregate_score(v));
  }
  return static_cast<double>(total) / static_cast<double>(pool.size());
}

/// Single-pass ablation saliency of every criterion.
inline SaliencyTable saliency(const ScoreVector& chosen, std::span<const ScoreVector> pool,
                              double epsilon = kDefaultEpsilon) {
  const std::size_t n = chosen.size();
  if (n == 0) throw ValidationError("saliency needs at least one criterion");
  if (pool.empty()) throw ValidationError("saliency needs a non-empty negative pool");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
  for (const auto& v : pool) {
    if (v.size() != n) throw ValidationError("pool score vector length differs from chosen");
  }

  const double pool_size = static_cast<double>(pool.size());
  const double chosen_total = aggregate_score(chosen);
  const double pool_total_mean = pool_mean(pool);
  const double full_ratio = pool_total_mean / (chosen_total + epsilon);

  SaliencyTable table;
  table.epsilon = epsilon;
  table.raw.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    long long pool_ablated = 0;
    for (const auto& v : pool) {
      pool_ablated += static_cast<long long>(aggregate_score(v)) - v[k];
    }
    const double chosen_ablated = chosen_total - chosen[k];
    const double pool_ablated_mean = static_cast<double>(pool_ablated) / pool_size;
    table.raw[k] = pool_ablated_mean / (chosen_ablated + epsilon) - full_ratio;
  }

  table.rectified.resize(n);
  std::transform(table.raw.begin(), table.raw.end(), table.rectified.begin(),
                 [](double r) { return std::max(0.0, r); });
  const double total = std::accumulate(table.rectified.begin(), table.rectified.end(), 0.0);
  table.normalized.resize(n);
  if (total > 0.0) {
    std::transform(table.rectified.begin(), table.rectified.end(), table.normalized.begin(),
                   [total](double r) { return r / total; });
  } else {
    std::fill(table.normalized.begin(), table.normalized.end(), 1.0 / static_cast<double>(n));
  }
  return table;
}

/// Cumulative-threshold labeling. Criteria are ranked by weight (ties by
/// index); the running sum including the current criterion decides its
/// label. The top-ranked criterion is always Essential.
inline std::vector<Label> verbalize(std::span<const double> weights,
                                    const ThresholdConfig& thresholds = {}) {
  thresholds.validate();
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  std::vector<Label> labels(weights.size(), Label::kOptional);
  double cumulative = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    cumulative += weights[order[rank]];
    Label l = Label::kOptional;
    if (rank == 0 || cumulative <= thresholds.tau1 + kThresholdSlack) {
      l = Label::kEssential;
    } else if (cumulative <= thresholds.tau2 + kThresholdSlack) {
      l = Label::kImportant;
    }
    labels[order[rank]] = l;
  }
  return labels;
}

inline std::vector<Label> verbalize(const SaliencyTable& table,
                                    const ThresholdConfig& thresholds = {}) {
  return verbalize(std::span<const double>(table.normalized), thresholds);
}

// ---------------------------------------------------------------------------
// Training targets.
//
// A labeled checklist renders as one line per criterion:
//   - [Essential] <criterion> | evidence: <evidence>
// Backslash, '|' and line breaks inside fields are backslash-escaped.

namespace detail {

inline std::string escape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\':
        out += "\\\\";
        break;
      case '|':
        out += "\\|";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\r':
        out += "\\r";
        break;
      default:
        out.push_back(c);
    }
  }
  return out;
}

inline std::string unescape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char n = s[++i];
      out.push_back(n == 'n' ? '\n' : n == 'r' ? '\r' : n);
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

/// Position of the first '|' not preceded by an escaping backslash.
inline std::size_t find_unescaped_pipe(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\') {
      ++i;
    } else if (s[i] == '|') {
      return i;
    }
  }
  return std::string_view::npos;
}

}  // namespace detail

inline std::string render_training_target(const Checklist& checklist) {
  std::string out;
  for (std::size_t i = 0; i < checklist.criteria.size(); ++i) {
    const Criterion& c = checklist.criteria[i];
    if (!c.label) {
      throw ValidationError("criterion " + std::to_string(i) + " has no label to render");
    }
    if (i > 0) out += '\n';
    out += "- [" + std::string(to_string(*c.label)) + "] " + detail::escape_field(c.text) +
           " | evidence: " + detail::escape_field(c.evidence);
  }
  return out;
}

/// Inverse of render_training_target. Lines that are not `- [...]` bullets
/// are ignored so surrounding prose from a generator is tolerated; a missing
/// evidence field yields empty evidence.
inline std::vector<Criterion> parse_training_target(std::string_view text) {
  std::vector<Criterion> criteria;
  for (const auto& raw_line : split(text, '\n')) {
    const std::string line = trim(raw_line);
    if (line.rfind("- [", 0) != 0 && line.rfind("* [", 0) != 0) continue;
    const std::size_t close = line.find(']', 3);
    if (close == std::string::npos) {
      throw ChecklistParseError("unterminated label tag in line: " + line);
    }
    const std::string tag = trim(std::string_view(line).substr(3, close - 3));
    const auto label = label_from_string(tag);
    if (!label) throw ChecklistParseError("unknown label tag '" + tag + "'");
    const std::string_view rest = std::string_view(line).substr(close + 1);
    const std::size_t pipe = detail::find_unescaped_pipe(rest);
    Criterion c;
    c.index = criteria.size();
    c.label = label;
    c.text = detail::unescape_field(trim(rest.substr(0, pipe)));
    if (pipe != std::string_view::npos) {
      std::string_view ev = rest.substr(pipe + 1);
      const std::string trimmed = trim(ev);
      constexpr std::string_view kPrefix = "evidence:";
      std::string_view body = trimmed;
      if (body.rfind(kPrefix, 0) == 0) body.remove_prefix(kPrefix.size());
      c.evidence = detail::unescape_field(trim(body));
    }
    if (trim(c.text).empty()) {
      throw ChecklistParseError("criterion " + std::to_string(c.index) + " has empty text");
    }
    criteria.push_back(std::move(c));
  }
  if (criteria.empty()) throw ChecklistParseError("no labeled criteria found");
  return criteria;
}

/// Attaches labels (and optionally the normalized weights) to a checklist.
inline TrainingExample build_training_example(std::string gp, std::string query,
                                              Checklist checklist, std::span<const Label> labels,
                                              std::span<const double> weights = {}) {
  if (labels.size() != checklist.criteria.size()) {
    throw ValidationError("label count " + std::to_string(labels.size()) +
                          " != criterion count " + std::to_string(checklist.criteria.size()));
  }
  if (!weights.empty() && weights.size() != labels.size()) {
    throw ValidationError("weight count differs from criterion count");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    checklist.criteria[i].label = labels[i];
    if (!weights.empty()) checklist.criteria[i].weight = weights[i];
  }
  TrainingExample t{std::move(gp), std::move(query), std::move(checklist)};
  validate(t);
  return t;
}

struct LabelDistribution {
  std::array<std::size_t, 3> counts{};

  void add(Label l) { ++counts[static_cast<std::size_t>(l)]; }
  std::size_t total() const { return counts[0] + counts[1] + counts[2]; }
  double fraction(Label l) const {
    return total() == 0 ? 0.0
                        : static_cast<double>(counts[static_cast<std::size_t>(l)]) /
                              static_cast<double>(total());
  }
};

}  // namespace pcheck

#endif  // PCHECK_WEIGHTING_HPP
