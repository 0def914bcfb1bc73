#ifndef PCHECK_COLLECTOR_HPP
#define PCHECK_COLLECTOR_HPP

// Raw checklist collection from (GP, query, chosen, rejected), gated so that
// the judge's summed checklist score of chosen strictly exceeds rejected.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pcheck/corpus.hpp"
#include "pcheck/error.hpp"
#include "pcheck/judge.hpp"
#include "pcheck/parallel.hpp"
#include "pcheck/prompts.hpp"
#include "pcheck/providers.hpp"
#include "pcheck/util.hpp"

namespace pcheck {

struct CollectorOptions {
  std::string model_id = "gpt-4o-mini";
  double temperature = 1.0;
  int max_attempts = 3;
  // Operator-supplied few-shot block for the collection prompt.
  std::string few_shot_examples;
  JudgeOptions judge;
  std::uint64_t seed = 0;
};

struct CollectResult {
  Checklist checklist;
  RejectionGateReport report;
};

class ChecklistGateExhausted : public GateExhausted {
 public:
  ChecklistGateExhausted(std::string message, std::optional<Checklist> best,
                         RejectionGateReport report)
      : GateExhausted(std::move(message)), best_(std::move(best)), report_(report) {}

  /// Parsed candidate with the largest chosen-minus-rejected margin, if any
  /// attempt produced a parseable checklist.
  const std::optional<Checklist>& best_candidate() const { return best_; }
  const RejectionGateReport& report() const { return report_; }

 private:
  std::optional<Checklist> best_;
  RejectionGateReport report_;
};

namespace detail {

inline std::string text_field(const json& item, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (!item.contains(k)) continue;
    const json& v = item[k];
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array()) {
      std::vector<std::string> parts;
      for (const auto& p : v) {
        if (p.is_string()) parts.push_back(p.get<std::string>());
      }
      return join(parts, "; ");
    }
  }
  return {};
}

inline const json* criteria_array(const json& root) {
  if (root.is_array()) return &root;
  if (!root.is_object()) return nullptr;
  for (const char* key : {"checklist", "criteria", "Personalized Checklist", "items"}) {
    if (root.contains(key) && root[key].is_array()) return &root[key];
  }
  for (const auto& [_, v] : root.items()) {
    if (v.is_array()) return &v;
  }
  return nullptr;
}

}  // namespace detail

/// Extracts the criteria of the first JSON value in `raw`. Criterion order
/// follows the document; checklists longer than 12 are truncated.
inline Checklist parse_checklist(std::string_view raw) {
  const auto root = extract_first_json(raw);
  if (!root) throw ChecklistParseError("no JSON found in checklist output");
  const json* items = detail::criteria_array(*root);
  if (items == nullptr) throw ChecklistParseError("checklist JSON has no criteria array");
  if (items->empty()) throw ChecklistParseError("criteria array is empty");
  Checklist out;
  for (const auto& item : *items) {
    Criterion c;
    c.index = out.criteria.size();
    if (item.is_string()) {
      c.text = item.get<std::string>();
    } else if (item.is_object()) {
      c.text = detail::text_field(item, {"criterion", "text", "item", "criteria"});
      c.evidence = detail::text_field(item, {"evidence", "evidences"});
    }
    c.text = trim(c.text);
    c.evidence = trim(c.evidence);
    if (c.text.empty()) {
      throw ChecklistParseError("criterion " + std::to_string(c.index) + " is missing its text");
    }
    out.criteria.push_back(std::move(c));
  }
  if (out.criteria.size() > kMaxChecklistSize) {
    warn("checklist has " + std::to_string(out.criteria.size()) + " criteria; keeping the first " +
         std::to_string(kMaxChecklistSize));
    out.criteria.resize(kMaxChecklistSize);
  }
  return out;
}

/// Summed judge scores of chosen and rejected under `checklist`.
inline std::pair<double, double> gate_sums(ChatProvider& provider, const Checklist& checklist,
                                           const std::string& gp, const PreferenceInstance& p,
                                           const JudgeOptions& judge) {
  const JudgeContext ctx{gp, p.query};
  const ScoreVector chosen = score_checklist(provider, checklist, p.chosen, ctx, judge);
  const ScoreVector rejected = score_checklist(provider, checklist, p.rejected, ctx, judge);
  double sc = 0.0;
  double sr = 0.0;
  for (int s : chosen.scores) sc += s;
  for (int s : rejected.scores) sr += s;
  return {sc, sr};
}

inline CollectResult collect_checklist(ChatProvider& provider, const std::string& gp,
                                       const PreferenceInstance& instance,
                                       const CollectorOptions& options = {}) {
  if (trim(gp).empty()) throw ValidationError("collect_checklist needs a general preference");
  const int max_attempts = std::max(1, options.max_attempts);
  ChatRequest req;
  req.template_id = std::string(prompt_id::kCollect);
  req.variables = {{"gp", gp},
                   {"query", instance.query},
                   {"chosen", instance.chosen},
                   {"rejected", instance.rejected},
                   {"examples", options.few_shot_examples}};
  req.temperature = options.temperature;
  req.model_id = options.model_id;

  std::optional<Checklist> best;
  double best_margin = 0.0;
  std::string last_parse_error;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    req.sample_id = derive_seed(options.seed, "collect", instance.user_id, instance.query,
                                instance.chosen, attempt);
    Checklist candidate;
    try {
      candidate = parse_checklist(provider.chat(req));
      for (const auto& c : candidate.criteria) {
        if (c.evidence.empty()) {
          throw ChecklistParseError("criterion " + std::to_string(c.index) + " has no evidence");
        }
      }
    } catch (const ChecklistParseError& e) {
      last_parse_error = e.what();
      continue;
    }
    candidate.user_id = instance.user_id;
    candidate.query = instance.query;
    candidate.provenance = Provenance::kCollected;
    const auto [chosen, rejected] = gate_sums(provider, candidate, gp, instance, options.judge);
    const double margin = chosen - rejected;
    if (!best || margin > best_margin) {
      best = candidate;
      best_margin = margin;
    }
    if (chosen > rejected) {
      RejectionGateReport report{attempt, true, 1};
      candidate.gate = report;
      return {std::move(candidate), report};
    }
  }
  RejectionGateReport report{max_attempts, false, 1};
  if (!best) {
    throw ChecklistParseError("no parseable checklist after " + std::to_string(max_attempts) +
                              " attempts: " + last_parse_error);
  }
  best->gate = report;
  throw ChecklistGateExhausted("checklist gate for user '" + instance.user_id + "' failed after " +
                                   std::to_string(max_attempts) + " attempts",
                               best, report);
}

struct CorpusCollection {
  // Accepted checklists, in pair order.
  std::vector<Checklist> checklists;
  // Pair index -> reason, for instances without an accepted checklist.
  std::map<std::size_t, std::string> rejected;
};

/// Collects a checklist for every pair of a train-split user with a summary.
/// Instances whose gate never passes are left out, so every emitted
/// checklist is decision-consistent.
inline CorpusCollection collect_corpus(ChatProvider& provider, const std::vector<UserRecord>& users,
                                       const std::vector<PreferenceInstance>& pairs,
                                       const CollectorOptions& options = {},
                                       std::size_t concurrency = 1) {
  const auto by_id = index_users(users);
  std::vector<std::optional<Checklist>> slots(pairs.size());
  std::vector<std::string> reasons(pairs.size());
  parallel_for(pairs.size(), concurrency, [&](std::size_t i) {
    const auto it = by_id.find(pairs[i].user_id);
    if (it == by_id.end()) {
      reasons[i] = "unknown user";
      return;
    }
    const UserRecord& user = *it->second;
    if (user.split != Split::kTrain) {
      reasons[i] = "user is not in the train split";
      return;
    }
    if (!user.general_preference) {
      reasons[i] = "user has no general preference";
      return;
    }
    try {
      slots[i] = collect_checklist(provider, *user.general_preference, pairs[i], options).checklist;
    } catch (const Error& e) {
      reasons[i] = e.what();
    }
  });
  CorpusCollection out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (slots[i]) {
      out.checklists.push_back(std::move(*slots[i]));
    } else {
      out.rejected.emplace(i, reasons[i]);
    }
  }
  return out;
}

}  // namespace pcheck

#endif  // PCHECK_COLLECTOR_HPP
