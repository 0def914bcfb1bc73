#ifndef PCHECK_REWARD_HPP
#define PCHECK_REWARD_HPP

// Checklist-guided reward: r(y) = sum_k w(label_k) * f_k(y).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pcheck/corpus.hpp"
#include "pcheck/error.hpp"
#include "pcheck/judge.hpp"
#include "pcheck/prompts.hpp"
#include "pcheck/providers.hpp"
#include "pcheck/util.hpp"
#include "pcheck/weighting.hpp"

namespace pcheck {

struct WeightMap {
  double essential = 1.0;
  double important = 0.7;
  double optional_ = 0.3;

  void validate() const {
    if (!(essential >= important && important >= optional_ && optional_ > 0.0)) {
      throw ValidationError("weight map must satisfy essential >= important >= optional > 0");
    }
  }
  double operator()(Label l) const {
    switch (l) {
      case Label::kEssential:
        return essential;
      case Label::kImportant:
        return important;
      case Label::kOptional:
        return optional_;
    }
    return optional_;
  }
  WeightMap scaled(double lambda) const {
    return {essential * lambda, important * lambda, optional_ * lambda};
  }
};

enum class GeneratorMode { kTrained, kPrompted };

inline std::string_view to_string(GeneratorMode m) {
  return m == GeneratorMode::kTrained ? "trained" : "prompted";
}

inline GeneratorMode generator_mode_from_string(std::string_view s) {
  if (s == "trained") return GeneratorMode::kTrained;
  if (s == "prompted") return GeneratorMode::kPrompted;
  throw ValidationError("generator.mode must be 'trained' or 'prompted', got '" + std::string(s) + "'");
}

struct GeneratorOptions {
  GeneratorMode mode = GeneratorMode::kPrompted;
  std::string model_id = "gpt-4o-mini";
  double temperature = 1.0;
  int retries = 3;
  std::string few_shot_examples;
  std::uint64_t seed = 0;
};

/// Asks the checklist generator for a labeled checklist. A trained generator
/// sees only GP and query; the prompted fallback also gets instructions.
inline Checklist infer_checklist(ChatProvider& provider, const std::string& gp,
                                 const std::string& query, const GeneratorOptions& opts = {}) {
  ChatRequest req;
  req.model_id = opts.model_id;
  req.temperature = opts.temperature;
  if (opts.mode == GeneratorMode::kTrained) {
    req.template_id = std::string(prompt_id::kGenerateChecklist);
    req.variables = {{"gp", gp}, {"query", query}};
  } else {
    req.template_id = std::string(prompt_id::kInferChecklist);
    req.variables = {{"gp", gp}, {"query", query}, {"examples", opts.few_shot_examples}};
  }
  std::string last_error;
  for (int attempt = 0; attempt <= std::max(0, opts.retries); ++attempt) {
    req.sample_id = derive_seed(opts.seed, "infer", gp, query, attempt);
    try {
      Checklist c;
      c.criteria = parse_training_target(provider.chat(req));
      c.query = query;
      c.provenance = Provenance::kGenerated;
      if (c.criteria.size() > kMaxChecklistSize) c.criteria.resize(kMaxChecklistSize);
      return c;
    } catch (const ChecklistParseError& e) {
      last_error = e.what();
    }
  }
  throw ChecklistParseError("checklist generator output unparseable after " +
                            std::to_string(std::max(0, opts.retries) + 1) + " attempts: " + last_error);
}

inline std::vector<double> weights_for(const Checklist& checklist, const WeightMap& map) {
  std::vector<double> w;
  w.reserve(checklist.criteria.size());
  for (const auto& c : checklist.criteria) {
    if (!c.label) {
      throw ValidationError("criterion " + std::to_string(c.index) + " has no label");
    }
    w.push_back(map(*c.label));
  }
  return w;
}

/// Reward from already-computed scores; no provider involved.
inline RewardResult reward_from_scores(const Checklist& checklist, const ScoreVector& scores,
                                       const WeightMap& map) {
  map.validate();
  if (scores.size() != checklist.criteria.size()) {
    throw ValidationError("score vector length differs from checklist length");
  }
  RewardResult r;
  r.weights = weights_for(checklist, map);
  r.per_criterion_scores = scores;
  for (std::size_t k = 0; k < scores.size(); ++k) r.reward += r.weights[k] * scores[k];
  r.checklist_id = checklist_id(checklist);
  return r;
}

inline RewardResult compute_reward(ChatProvider& judge, const std::string& gp, const std::string& query,
                                   const std::string& candidate, const Checklist& checklist,
                                   const WeightMap& map, const JudgeOptions& judge_opts = {}) {
  weights_for(checklist, map);
  const ScoreVector scores = score_checklist(judge, checklist, candidate, {gp, query}, judge_opts);
  return reward_from_scores(checklist, scores, map);
}

enum class Winner { kA, kB, kTie };

inline std::string_view to_string(Winner w) {
  return w == Winner::kA ? "A" : (w == Winner::kB ? "B" : "tie");
}

struct PairDecision {
  RewardResult reward_a;
  RewardResult reward_b;
  Winner winner = Winner::kTie;
};

inline Winner compare_rewards(double a, double b) {
  if (std::abs(a - b) <= kRewardTolerance) return Winner::kTie;
  return a > b ? Winner::kA : Winner::kB;
}

inline PairDecision decide_from_results(RewardResult a, RewardResult b) {
  const Winner w = compare_rewards(a.reward, b.reward);
  return {std::move(a), std::move(b), w};
}

inline PairDecision decide_pair(ChatProvider& judge, const std::string& gp, const std::string& query,
                                const std::string& a, const std::string& b,
                                const Checklist& checklist, const WeightMap& map,
                                const JudgeOptions& judge_opts = {}) {
  return decide_from_results(compute_reward(judge, gp, query, a, checklist, map, judge_opts),
                             compute_reward(judge, gp, query, b, checklist, map, judge_opts));
}

}  // namespace pcheck

#endif  // PCHECK_REWARD_HPP
