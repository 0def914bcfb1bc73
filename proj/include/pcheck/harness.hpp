#ifndef PCHECK_HARNESS_HPP
#define PCHECK_HARNESS_HPP

// Evaluation front-end: pairwise accuracy over repeated runs, sparse-history
// buckets, best-of-N selection, checklist-guided refinement and weight-map
// sweeps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "pcheck/corpus.hpp"
#include "pcheck/error.hpp"
#include "pcheck/judge.hpp"
#include "pcheck/parallel.hpp"
#include "pcheck/prompts.hpp"
#include "pcheck/providers.hpp"
#include "pcheck/reward.hpp"
#include "pcheck/util.hpp"

namespace pcheck {

// ---------------------------------------------------------------------------
// Decision methods.

class DecisionMethod {
 public:
  virtual ~DecisionMethod() = default;
  virtual std::string name() const = 0;
  /// Compares chosen (A) against rejected (B). `run_seed` selects the
  /// sampling stream of this run.
  virtual Winner decide(const UserRecord& user, const PreferenceInstance& pair,
                        std::uint64_t run_seed) = 0;
};

/// Supplies the checklist a pair is judged with.
using ChecklistSource =
    std::function<Checklist(const UserRecord&, const PreferenceInstance&, std::uint64_t run_seed)>;

/// Checklists from a generator (trained or prompted).
inline ChecklistSource generated_checklists(ChatProvider& generator, GeneratorOptions opts) {
  return [&generator, opts](const UserRecord& user, const PreferenceInstance& pair,
                            std::uint64_t run_seed) {
    if (!user.general_preference) {
      throw ValidationError("user '" + user.user_id + "' has no general preference");
    }
    GeneratorOptions o = opts;
    o.seed = derive_seed(opts.seed, run_seed);
    Checklist c = infer_checklist(generator, *user.general_preference, pair.query, o);
    c.user_id = user.user_id;
    return c;
  };
}

/// Precomputed checklists keyed by (user_id, query).
inline ChecklistSource fixed_checklists(std::map<std::pair<std::string, std::string>, Checklist> table) {
  return [table = std::move(table)](const UserRecord& user, const PreferenceInstance& pair,
                                    std::uint64_t) {
    const auto it = table.find({user.user_id, pair.query});
    if (it == table.end()) {
      throw ValidationError("no checklist for user '" + user.user_id + "' and query '" +
                            single_line(pair.query) + "'");
    }
    return it->second;
  };
}

/// Weighted checklist reward; a (1,1,1) map gives the unweighted variant.
class ChecklistRewardMethod : public DecisionMethod {
 public:
  ChecklistRewardMethod(ChatProvider& judge, ChecklistSource source, WeightMap map = {},
                        JudgeOptions judge_opts = {}, std::string name = "checklist")
      : judge_(judge),
        source_(std::move(source)),
        map_(map),
        judge_opts_(std::move(judge_opts)),
        name_(std::move(name)) {
    map_.validate();
  }

  std::string name() const override { return name_; }

  Winner decide(const UserRecord& user, const PreferenceInstance& pair,
                std::uint64_t run_seed) override {
    const Checklist checklist = source_(user, pair, run_seed);
    JudgeOptions j = judge_opts_;
    j.sample_id = derive_seed(judge_opts_.sample_id, run_seed);
    const std::string gp = user.general_preference.value_or("");
    return decide_pair(judge_, gp, pair.query, pair.chosen, pair.rejected, checklist, map_, j).winner;
  }

 private:
  ChatProvider& judge_;
  ChecklistSource source_;
  WeightMap map_;
  JudgeOptions judge_opts_;
  std::string name_;
};

// ---------------------------------------------------------------------------
// Pairwise evaluation.

struct EvalOptions {
  int runs = 5;
  std::uint64_t seed = 0;
  std::size_t concurrency = 1;
};

struct EvalReport {
  std::string method;
  std::vector<double> per_run_accuracy;
  double mean = 0.0;
  double ci95_halfwidth = 0.0;
  // Mean credit per user over all runs and pairs.
  std::map<std::string, double> per_user_accuracy;
  double user_macro_accuracy = 0.0;
  std::size_t n_pairs = 0;
  std::size_t ties = 0;
};

inline double credit(Winner w) {
  return w == Winner::kA ? 1.0 : (w == Winner::kTie ? 0.5 : 0.0);
}

/// Half-width of the two-sided 95% Student-t interval of the mean; 0 for a
/// single run.
inline double ci95_halfwidth(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  if (n < 2) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  return boost::math::quantile(boost::math::complement(dist, 0.025)) * sd /
         std::sqrt(static_cast<double>(n));
}

/// Rejects pairs of unknown or train-split users.
inline void check_test_split(const std::map<std::string, const UserRecord*>& users,
                             const std::vector<PreferenceInstance>& pairs) {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto it = users.find(pairs[i].user_id);
    if (it == users.end()) {
      throw SchemaError("user_id", "pair " + std::to_string(i) + " references unknown user '" +
                                       pairs[i].user_id + "'");
    }
    if (it->second->split != Split::kTest) {
      throw SplitLeakError("pair " + std::to_string(i) + " belongs to train user '" +
                           pairs[i].user_id + "'");
    }
  }
}

inline EvalReport evaluate(const std::vector<UserRecord>& users,
                           const std::vector<PreferenceInstance>& pairs, DecisionMethod& method,
                           const EvalOptions& opts = {}) {
  if (opts.runs < 1) throw ValidationError("runs must be >= 1");
  if (pairs.empty()) throw ValidationError("no pairs to evaluate");
  const auto by_id = index_users(users);
  check_test_split(by_id, pairs);

  EvalReport report;
  report.method = method.name();
  report.n_pairs = pairs.size();
  std::map<std::string, std::pair<double, std::size_t>> per_user;
  for (int run = 0; run < opts.runs; ++run) {
    const std::uint64_t run_seed = derive_seed(opts.seed, "run", run);
    std::vector<Winner> winners(pairs.size());
    parallel_for(pairs.size(), opts.concurrency, [&](std::size_t i) {
      winners[i] = method.decide(*by_id.at(pairs[i].user_id), pairs[i], run_seed);
    });
    double total = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const double c = credit(winners[i]);
      total += c;
      if (winners[i] == Winner::kTie) ++report.ties;
      auto& [sum, count] = per_user[pairs[i].user_id];
      sum += c;
      ++count;
    }
    report.per_run_accuracy.push_back(total / static_cast<double>(pairs.size()));
  }
  report.mean = std::accumulate(report.per_run_accuracy.begin(), report.per_run_accuracy.end(), 0.0) /
                static_cast<double>(report.per_run_accuracy.size());
  report.ci95_halfwidth = ci95_halfwidth(report.per_run_accuracy);
  double macro = 0.0;
  for (const auto& [id, sc] : per_user) {
    const double acc = sc.first / static_cast<double>(sc.second);
    report.per_user_accuracy[id] = acc;
    macro += acc;
  }
  report.user_macro_accuracy = macro / static_cast<double>(per_user.size());
  return report;
}

inline json to_json(const EvalReport& r) {
  return {{"method", r.method},
          {"per_run_accuracy", r.per_run_accuracy},
          {"mean", r.mean},
          {"ci95_halfwidth", r.ci95_halfwidth},
          {"per_user_accuracy", r.per_user_accuracy},
          {"user_macro_accuracy", r.user_macro_accuracy},
          {"n_pairs", r.n_pairs},
          {"ties", r.ties}};
}

// ---------------------------------------------------------------------------
// Sparse-history buckets.

struct Bucket {
  double lo_percentile = 0.0;
  double hi_percentile = 100.0;
  // History-length range (lo_edge, hi_edge]; the first bucket is closed below.
  double lo_edge = 0.0;
  double hi_edge = 0.0;
  std::size_t user_count = 0;
  std::optional<double> user_macro_accuracy;
};

struct BucketReport {
  std::vector<Bucket> buckets;
};

/// Linear-interpolated percentile (p in [0, 100]) of sorted values.
inline double percentile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ValidationError("percentile of an empty sample");
  const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Buckets the users in `per_user_accuracy` by history length at the given
/// percentiles and macro-averages accuracy within each bucket.
inline BucketReport bucket_by_sparsity(const std::vector<UserRecord>& users,
                                       const std::map<std::string, double>& per_user_accuracy,
                                       std::vector<double> percentiles = {25, 50, 75}) {
  std::sort(percentiles.begin(), percentiles.end());
  for (double p : percentiles) {
    if (!(p > 0.0 && p < 100.0)) throw ValidationError("percentiles must lie in (0, 100)");
  }
  percentiles.erase(std::unique(percentiles.begin(), percentiles.end()), percentiles.end());
  const auto by_id = index_users(users);
  std::vector<std::pair<double, double>> points;  // (history length, accuracy)
  for (const auto& [id, acc] : per_user_accuracy) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw SchemaError("user_id", "unknown user '" + id + "'");
    points.emplace_back(static_cast<double>(it->second->history.size()), acc);
  }
  if (points.empty()) throw ValidationError("no users to bucket");
  std::vector<double> lengths;
  for (const auto& [len, _] : points) lengths.push_back(len);
  std::sort(lengths.begin(), lengths.end());

  BucketReport report;
  std::vector<double> bounds{0.0};
  bounds.insert(bounds.end(), percentiles.begin(), percentiles.end());
  bounds.push_back(100.0);
  for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
    Bucket bucket;
    bucket.lo_percentile = bounds[b];
    bucket.hi_percentile = bounds[b + 1];
    bucket.lo_edge = percentile(lengths, bounds[b]);
    bucket.hi_edge = percentile(lengths, bounds[b + 1]);
    double sum = 0.0;
    for (const auto& [len, acc] : points) {
      const bool above = b == 0 ? true : len > bucket.lo_edge;
      const bool below = b + 2 == bounds.size() ? true : len <= bucket.hi_edge;
      if (above && below) {
        sum += acc;
        ++bucket.user_count;
      }
    }
    if (bucket.user_count > 0) bucket.user_macro_accuracy = sum / static_cast<double>(bucket.user_count);
    report.buckets.push_back(bucket);
  }
  return report;
}

inline json to_json(const BucketReport& r) {
  json out = json::array();
  for (const auto& b : r.buckets) {
    out.push_back({{"percentile_range", {b.lo_percentile, b.hi_percentile}},
                   {"history_length_range", {b.lo_edge, b.hi_edge}},
                   {"user_count", b.user_count},
                   {"user_macro_accuracy",
                    b.user_macro_accuracy ? json(*b.user_macro_accuracy) : json(nullptr)}});
  }
  return {{"buckets", out}};
}

// ---------------------------------------------------------------------------
// Best-of-N.

struct BestOfNResult {
  std::size_t selected = 0;
  std::vector<RewardResult> rewards;
  // Candidate indices by reward, best first; ties by index.
  std::vector<std::size_t> ranking;
};

/// Ranking of rewards, best first, ties (within tolerance) by lower index.
inline std::vector<std::size_t> rank_rewards(const std::vector<double>& rewards) {
  std::vector<std::size_t> order(rewards.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return compare_rewards(rewards[a], rewards[b]) == Winner::kA;
  });
  return order;
}

/// Index of the best reward; the lowest index wins ties.
inline std::size_t argmax_reward(const std::vector<double>& rewards) {
  if (rewards.empty()) throw ValidationError("best-of-N needs at least one candidate");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rewards.size(); ++i) {
    if (compare_rewards(rewards[i], rewards[best]) == Winner::kA) best = i;
  }
  return best;
}

inline BestOfNResult best_of_n(ChatProvider& judge, const std::string& gp, const std::string& query,
                               const std::vector<std::string>& candidates, const Checklist& checklist,
                               const WeightMap& map = {}, const JudgeOptions& judge_opts = {},
                               std::size_t concurrency = 1) {
  if (candidates.empty()) throw ValidationError("best-of-N needs at least one candidate");
  BestOfNResult out;
  out.rewards.resize(candidates.size());
  parallel_for(candidates.size(), concurrency, [&](std::size_t i) {
    out.rewards[i] = compute_reward(judge, gp, query, candidates[i], checklist, map, judge_opts);
  });
  std::vector<double> r;
  for (const auto& x : out.rewards) r.push_back(x.reward);
  out.selected = argmax_reward(r);
  out.ranking = rank_rewards(r);
  return out;
}

// ---------------------------------------------------------------------------
// Checklist-as-feedback refinement.

struct RefineOptions {
  std::string model_id = "llama-3.1-8b-instruct";
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

inline std::string refine_with_checklist(ChatProvider& policy, const std::string& query,
                                         const std::string& initial_response,
                                         const Checklist& checklist, const RefineOptions& opts = {}) {
  if (checklist.criteria.empty()) throw ValidationError("refinement needs at least one criterion");
  ChatRequest req;
  req.template_id = std::string(prompt_id::kRefine);
  req.variables = {{"query", query},
                   {"response", initial_response},
                   {"checklist", render_checklist_numbered(checklist)}};
  req.model_id = opts.model_id;
  req.temperature = opts.temperature;
  req.sample_id = derive_seed(opts.seed, "refine");
  return trim(policy.chat(req));
}

struct RefineReport {
  std::string initial;
  std::string refined;
  RewardResult initial_reward;
  RewardResult refined_reward;
  double delta = 0.0;
};

inline RefineReport refine_and_score(ChatProvider& policy, ChatProvider& judge, const std::string& gp,
                                     const std::string& query, const std::string& initial,
                                     const Checklist& checklist, const WeightMap& map = {},
                                     const RefineOptions& refine_opts = {},
                                     const JudgeOptions& judge_opts = {}) {
  RefineReport r;
  r.initial = initial;
  r.refined = refine_with_checklist(policy, query, initial, checklist, refine_opts);
  r.initial_reward = compute_reward(judge, gp, query, initial, checklist, map, judge_opts);
  r.refined_reward = compute_reward(judge, gp, query, r.refined, checklist, map, judge_opts);
  r.delta = r.refined_reward.reward - r.initial_reward.reward;
  return r;
}

// ---------------------------------------------------------------------------
// Weight-map sweep.

/// Judge scores of one pair under one labeled checklist, reusable across
/// weight maps.
struct ScoredPair {
  Checklist checklist;
  ScoreVector chosen;
  ScoreVector rejected;
};

inline std::vector<WeightMap> default_weight_grid() {
  return {{1.0, 0.9, 0.7}, {1.0, 0.9, 0.5}, {1.0, 0.9, 0.3}, {1.0, 0.8, 0.6},
          {1.0, 0.8, 0.4}, {1.0, 0.8, 0.2}, {1.0, 0.7, 0.5}, {1.0, 0.7, 0.3},
          {1.0, 0.7, 0.1}, {1.0, 0.6, 0.4}, {1.0, 0.6, 0.2}, {1.0, 0.5, 0.3}};
}

struct SweepRow {
  WeightMap map;
  double accuracy = 0.0;
};

inline double accuracy_under(const std::vector<ScoredPair>& pairs, const WeightMap& map) {
  if (pairs.empty()) throw ValidationError("no scored pairs");
  double total = 0.0;
  for (const auto& p : pairs) {
    total += credit(compare_rewards(reward_from_scores(p.checklist, p.chosen, map).reward,
                                    reward_from_scores(p.checklist, p.rejected, map).reward));
  }
  return total / static_cast<double>(pairs.size());
}

inline std::vector<SweepRow> sweep_weights(const std::vector<ScoredPair>& pairs,
                                           const std::vector<WeightMap>& grid = default_weight_grid()) {
  std::vector<SweepRow> rows;
  for (const auto& m : grid) rows.push_back({m, accuracy_under(pairs, m)});
  return rows;
}

// ---------------------------------------------------------------------------
// Run directories.

/// Creates `<base>/<UTC timestamp>[-n]/` and writes the config snapshot.
inline std::filesystem::path make_run_dir(const std::filesystem::path& base,
                                          const std::string& config_snapshot) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &tm);
  std::filesystem::create_directories(base);
  std::filesystem::path dir = base / stamp;
  for (int n = 1; !std::filesystem::create_directory(dir); ++n) {
    dir = base / (std::string(stamp) + "-" + std::to_string(n));
  }
  std::ofstream(dir / "config.toml") << config_snapshot;
  return dir;
}

}  // namespace pcheck

#endif  // PCHECK_HARNESS_HPP
