#ifndef PCHECK_SUMMARIZER_HPP
#define PCHECK_SUMMARIZER_HPP

// General-preference summaries with a rejection-sampling gate.
//
// A candidate summary passes when the judge, given only the summary as
// context, prefers chosen over rejected on a strict majority of validation
// pairs drawn (seeded) from the user's own history. The summary stands in as
// the single criterion of the judged checklist.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pcheck/corpus.hpp"
#include "pcheck/error.hpp"
#include "pcheck/judge.hpp"
#include "pcheck/parallel.hpp"
#include "pcheck/prompts.hpp"
#include "pcheck/providers.hpp"
#include "pcheck/util.hpp"

namespace pcheck {

struct SummarizerOptions {
  std::string model_id = "gpt-4o-mini";
  double temperature = 1.0;
  int max_attempts = 3;
  std::size_t validation_pairs = 4;
  JudgeOptions judge;
  std::uint64_t seed = 0;
};

struct SummaryResult {
  std::string general_preference;
  RejectionGateReport report;
};

class GpGateExhausted : public GateExhausted {
 public:
  GpGateExhausted(std::string user_id, std::string best, RejectionGateReport report)
      : GateExhausted("summary gate for user '" + user_id + "' failed after " +
                      std::to_string(report.attempts) + " attempts"),
        user_id_(std::move(user_id)),
        best_(std::move(best)),
        report_(report) {}

  const std::string& user_id() const { return user_id_; }
  /// Candidate with the highest validation pass count (earliest on ties).
  const std::string& best_candidate() const { return best_; }
  const RejectionGateReport& report() const { return report_; }

 private:
  std::string user_id_;
  std::string best_;
  RejectionGateReport report_;
};

/// Seeded choice of min(count, |history|) distinct history indices.
inline std::vector<std::size_t> validation_indices(const UserRecord& user, std::size_t count,
                                                   std::uint64_t seed) {
  std::vector<std::size_t> idx(user.history.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "gp-validation", user.user_id));
  // Fisher-Yates with explicit draws keeps the order identical across
  // standard library implementations.
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  idx.resize(std::min(count, idx.size()));
  return idx;
}

/// The one-criterion checklist used to judge responses by a raw summary.
inline Checklist summary_checklist(const UserRecord& user, const std::string& gp) {
  Checklist c;
  c.user_id = user.user_id;
  c.query = "(general preference gate)";
  c.criteria.push_back(
      {0, "The response matches this user's general preference: " + single_line(gp), gp, {}, {}});
  return c;
}

/// Number of validation pairs on which the judge strictly prefers chosen.
inline std::size_t summary_gate_passes(ChatProvider& provider, const UserRecord& user,
                                       const std::string& gp,
                                       const std::vector<std::size_t>& pairs,
                                       const JudgeOptions& judge) {
  const Checklist checklist = summary_checklist(user, gp);
  std::size_t passes = 0;
  for (std::size_t i : pairs) {
    const HistoryItem& h = user.history[i];
    const JudgeContext ctx{gp, h.query};
    const double chosen = score_checklist(provider, checklist, h.chosen, ctx, judge)[0];
    const double rejected = score_checklist(provider, checklist, h.rejected, ctx, judge)[0];
    if (chosen > rejected) ++passes;
  }
  return passes;
}

inline SummaryResult summarize_user(ChatProvider& provider, const UserRecord& user,
                                    const SummarizerOptions& options = {}) {
  if (user.history.empty()) {
    throw ValidationError("user '" + user.user_id + "' has no history to summarize");
  }
  const int max_attempts = std::max(1, options.max_attempts);
  const auto pairs = validation_indices(user, options.validation_pairs, options.seed);
  ChatRequest req;
  req.template_id = std::string(prompt_id::kSummarize);
  req.variables = {{"history", render_history(user.history)}};
  req.temperature = options.temperature;
  req.model_id = options.model_id;

  std::string best;
  std::size_t best_passes = 0;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    req.sample_id = derive_seed(options.seed, "gp", user.user_id, attempt);
    const std::string gp = trim(provider.chat(req));
    if (gp.empty()) continue;
    const std::size_t passes = summary_gate_passes(provider, user, gp, pairs, options.judge);
    if (best.empty() || passes > best_passes) {
      best = gp;
      best_passes = passes;
    }
    if (2 * passes > pairs.size()) {
      return {gp, {attempt, true, static_cast<int>(pairs.size())}};
    }
  }
  throw GpGateExhausted(user.user_id, best.empty() ? std::string() : best,
                        {max_attempts, false, static_cast<int>(pairs.size())});
}

struct CorpusSummary {
  // Only users that were summarized in this run.
  std::map<std::string, SummaryResult> summaries;
  // Users whose gate never passed; their best candidate is in `summaries`.
  std::vector<std::string> flagged;
  // Users that failed outright (provider errors, empty output).
  std::map<std::string, std::string> failures;
};

/// Summarizes every user lacking a general preference. Results are keyed by
/// user id, so the outcome does not depend on `concurrency`.
inline CorpusSummary summarize_corpus(ChatProvider& provider, const std::vector<UserRecord>& users,
                                      const SummarizerOptions& options = {},
                                      std::size_t concurrency = 1) {
  std::vector<const UserRecord*> todo;
  for (const auto& u : users) {
    if (!u.general_preference && !u.history.empty()) todo.push_back(&u);
  }
  struct Slot {
    std::optional<SummaryResult> result;
    bool flagged = false;
    std::string failure;
  };
  std::vector<Slot> slots(todo.size());
  parallel_for(todo.size(), concurrency, [&](std::size_t i) {
    try {
      slots[i].result = summarize_user(provider, *todo[i], options);
    } catch (const GpGateExhausted& e) {
      if (e.best_candidate().empty()) {
        slots[i].failure = e.what();
      } else {
        slots[i].result = SummaryResult{e.best_candidate(), e.report()};
        slots[i].flagged = true;
      }
    } catch (const Error& e) {
      slots[i].failure = e.what();
    }
  });
  CorpusSummary out;
  for (std::size_t i = 0; i < todo.size(); ++i) {
    const std::string& id = todo[i]->user_id;
    if (slots[i].result) out.summaries.emplace(id, *slots[i].result);
    if (slots[i].flagged) out.flagged.push_back(id);
    if (!slots[i].failure.empty()) out.failures.emplace(id, slots[i].failure);
  }
  return out;
}

/// Writes summaries back into the user records.
inline void apply_summaries(std::vector<UserRecord>& users, const CorpusSummary& summary) {
  for (auto& u : users) {
    const auto it = summary.summaries.find(u.user_id);
    if (it == summary.summaries.end()) continue;
    u.general_preference = it->second.general_preference;
    u.gp_gate = it->second.report;
  }
}

}  // namespace pcheck

#endif  // PCHECK_SUMMARIZER_HPP
