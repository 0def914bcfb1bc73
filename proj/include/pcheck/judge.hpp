#ifndef PCHECK_JUDGE_HPP
#define PCHECK_JUDGE_HPP

// Checklist-guided LLM judge: one criterion-wise 1-10 score vector per
// (checklist, response).

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pcheck/corpus.hpp"
#include "pcheck/error.hpp"
#include "pcheck/prompts.hpp"
#include "pcheck/providers.hpp"
#include "pcheck/util.hpp"

namespace pcheck {

struct JudgeContext {
  std::string general_preference;
  std::string query;
};

struct JudgeOptions {
  std::string model_id = "llama-3.1-8b-instruct";
  double temperature = 1.0;
  // Re-asks after the first malformed answer.
  int retries = 3;
  std::uint64_t sample_id = 0;
};

namespace detail {

inline std::optional<int> integral_score(const json& v) {
  double d = 0.0;
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float()) {
    d = v.get<double>();
  } else if (v.is_string()) {
    try {
      std::size_t used = 0;
      const std::string s = trim(v.get<std::string>());
      d = std::stod(s, &used);
      if (used != s.size()) return std::nullopt;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  } else {
    return std::nullopt;
  }
  if (!std::isfinite(d) || d != std::floor(d)) return std::nullopt;
  return static_cast<int>(d);
}

}  // namespace detail

/// Parses a judge answer of the shape {"results": [{index, criterion,
/// reasoning, score}, ...]} found anywhere in `raw`. Returns the scores in
/// checklist order, or nullopt with the reason in `why`.
inline std::optional<std::vector<int>> parse_judge_scores(std::string_view raw, std::size_t n,
                                                          std::string* why = nullptr) {
  const auto fail = [why](std::string reason) -> std::optional<std::vector<int>> {
    if (why != nullptr) *why = std::move(reason);
    return std::nullopt;
  };
  const auto parsed = extract_first_json(raw);
  if (!parsed) return fail("no JSON found in judge output");
  const json* results = nullptr;
  if (parsed->is_array()) {
    results = &*parsed;
  } else if (parsed->contains("results") && (*parsed)["results"].is_array()) {
    results = &(*parsed)["results"];
  } else {
    return fail("judge output lacks a 'results' array");
  }
  if (results->size() != n) {
    return fail("length mismatch: judge returned " + std::to_string(results->size()) +
                " scores for " + std::to_string(n) + " criteria");
  }
  std::vector<int> scores(n, 0);
  std::vector<bool> filled(n, false);
  bool indexed = true;
  for (const auto& item : *results) {
    if (!item.is_object() || !item.contains("index")) {
      indexed = false;
      break;
    }
    const auto idx = detail::integral_score(item["index"]);
    if (!idx || *idx < 1 || static_cast<std::size_t>(*idx) > n || filled[*idx - 1]) {
      indexed = false;
      break;
    }
    filled[*idx - 1] = true;
  }
  for (std::size_t pos = 0; pos < n; ++pos) {
    const json& item = (*results)[pos];
    if (!item.is_object() || !item.contains("score")) {
      return fail("result " + std::to_string(pos + 1) + " has no score");
    }
    const auto score = detail::integral_score(item["score"]);
    if (!score) return fail("result " + std::to_string(pos + 1) + " score is not an integer");
    if (*score < kMinScore || *score > kMaxScore) {
      return fail("result " + std::to_string(pos + 1) + " score " + std::to_string(*score) +
                  " outside [1,10]");
    }
    const std::size_t slot = indexed ? detail::integral_score(item["index"]).value() - 1 : pos;
    scores[slot] = *score;
  }
  return scores;
}

inline ChatRequest judge_request(const Checklist& checklist, std::string_view response,
                                 const JudgeContext& context, const JudgeOptions& options) {
  ChatRequest req;
  req.template_id = std::string(prompt_id::kJudge);
  req.variables = {{"gp", context.general_preference},
                   {"query", context.query},
                   {"response", std::string(response)},
                   {"checklist", render_checklist_numbered(checklist)}};
  req.temperature = options.temperature;
  req.model_id = options.model_id;
  req.sample_id = options.sample_id;
  return req;
}

/// Scores `response` against every criterion. Malformed answers are re-asked
/// up to `options.retries` times; the result always has one score per
/// criterion.
inline ScoreVector score_checklist(ChatProvider& provider, const Checklist& checklist,
                                   std::string_view response, const JudgeContext& context,
                                   const JudgeOptions& options = {}) {
  if (checklist.criteria.empty()) throw ValidationError("cannot score an empty checklist");
  const std::size_t n = checklist.criteria.size();
  ChatRequest req = judge_request(checklist, response, context, options);
  std::string why;
  for (int attempt = 0; attempt <= std::max(0, options.retries); ++attempt) {
    req.sample_id = attempt == 0 ? options.sample_id : derive_seed(options.sample_id, "reask", attempt);
    const std::string raw = provider.chat(req);
    if (auto scores = parse_judge_scores(raw, n, &why)) {
      return ScoreVector{std::move(*scores), n};
    }
  }
  throw JudgeOutputError("judge output unusable after " + std::to_string(options.retries + 1) +
                         " attempts: " + why);
}

}  // namespace pcheck

#endif  // PCHECK_JUDGE_HPP
