// Randomized invariants. Every generator is seeded so failures replay.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pcheck/pcheck.hpp"
#include "test_support.hpp"

namespace pcheck {
namespace {

using mock::tag;
using oracle::Gen;

/// Non-empty text with no surrounding whitespace; mixes the characters the
/// codecs and the training-target format have to escape.
std::string text(Gen& g, int max_pieces = 6) {
  static const std::vector<std::string> pieces = {
      "alpha", "beta",  "Zoë",       "日本語", "naïve", "|",    "\\",     "\"",  "\n", " ",  "\t",
      "[x]",   "{}",    "evidence:", "- ",     "emoji 😀", "a|b", "back\\n", "42",  " "};
  std::string out = "w" + std::to_string(g.integer(0, 999));
  const int n = g.integer(0, max_pieces);
  for (int i = 0; i < n; ++i) out += pieces[static_cast<std::size_t>(g.integer(0, pieces.size() - 1))];
  return out + "z";
}

Checklist random_checklist(Gen& g, bool labeled, bool weighted) {
  Checklist c;
  c.user_id = text(g, 1);
  c.query = text(g);
  const std::size_t n = static_cast<std::size_t>(g.integer(1, 12));
  const auto w = g.simplex(n);
  for (std::size_t i = 0; i < n; ++i) {
    Criterion k{i, text(g), g.coin(0.2) ? "" : text(g), std::nullopt, std::nullopt};
    if (weighted) k.weight = w[i];
    if (labeled) k.label = g.label();
    c.criteria.push_back(k);
  }
  c.provenance = g.coin() ? Provenance::kCollected : Provenance::kGenerated;
  if (g.coin()) c.gate = RejectionGateReport{g.integer(1, 3), g.coin(), g.integer(0, 4)};
  return c;
}

UserRecord random_user(Gen& g) {
  UserRecord u;
  u.user_id = text(g, 1);
  u.split = g.coin() ? Split::kTrain : Split::kTest;
  const int h = g.integer(u.split == Split::kTrain ? 1 : 0, 5);
  for (int i = 0; i < h; ++i) u.history.push_back({text(g), "c" + text(g), "r" + text(g)});
  if (g.coin()) u.general_preference = text(g);
  if (g.coin()) u.gp_gate = RejectionGateReport{g.integer(1, 3), g.coin(), g.integer(0, 4)};
  return u;
}

NegativeRecord random_negative(Gen& g) {
  NegativeRecord n;
  n.user_id = text(g, 1);
  n.query = text(g);
  n.chosen = text(g);
  n.pool.original_rejected = text(g);
  const int k = g.integer(0, 4);
  for (int i = 0; i < k; ++i) {
    n.pool.synthetic.push_back({text(g, 1), g.coin() ? "m1" : "m2", text(g)});
    n.selection.selected_users.push_back(text(g, 1));
    n.selection.distances.push_back(g.real(0.0, 2.0));
  }
  n.selection.target_user = n.user_id;
  n.selection.candidate_cluster = static_cast<std::size_t>(g.integer(0, 5));
  n.selection.global_fallback = g.coin(0.2);
  n.flagged = g.coin(0.2);
  if (n.flagged) n.notes.push_back(text(g));
  return n;
}

template <typename T>
void expect_round_trip(const T& x) {
  const std::string line = to_json_line(x);
  const T back = from_json_line<T>(line);
  EXPECT_EQ(back, x) << line;
  EXPECT_EQ(to_json_line(back), line);
}

TEST(CodecProperty, RoundTripIsIdentity) {
  Gen g(1001);
  for (int i = 0; i < 300; ++i) {
    expect_round_trip(random_checklist(g, g.coin(), g.coin()));
    expect_round_trip(random_user(g));
    expect_round_trip(random_negative(g));
    expect_round_trip(PreferenceInstance{text(g, 1), text(g), text(g), text(g)});
    expect_round_trip(TrainingExample{text(g), text(g), random_checklist(g, true, true)});
  }
}

TEST(CodecProperty, ChecklistMutationsRejected) {
  Gen g(1002);
  for (int i = 0; i < 200; ++i) {
    Checklist c = random_checklist(g, true, true);
    validate(c);
    Checklist bad = c;
    switch (g.integer(0, 3)) {
      case 0:
        bad.criteria.back().index += 1;
        break;
      case 1:
        bad.criteria[static_cast<std::size_t>(g.integer(0, bad.size() - 1))].text = " \t ";
        break;
      case 2:
        *bad.criteria[0].weight += 1e-6;
        break;
      default:
        bad.criteria.clear();
        break;
    }
    EXPECT_THROW(validate(bad), SchemaError);
  }
}

TEST(CorpusProperty, HistoryReuseAlwaysDetected) {
  Gen g(1003);
  for (int i = 0; i < 100; ++i) {
    UserRecord u = random_user(g);
    if (u.history.empty()) continue;
    for (const auto& h : u.history) {
      EXPECT_TRUE(leaks_history({u.user_id, h.query, h.chosen, h.rejected}, u));
      EXPECT_TRUE(leaks_history({u.user_id, "  " + h.query + "\n", h.chosen + " ", h.rejected}, u));
      EXPECT_FALSE(leaks_history({u.user_id, h.query, h.chosen + "!", h.rejected}, u));
    }
  }
}

TEST(TargetProperty, RenderParseRoundTrip) {
  Gen g(1004);
  for (int i = 0; i < 300; ++i) {
    const Checklist c = random_checklist(g, true, false);
    const auto back = parse_training_target(render_training_target(c));
    ASSERT_EQ(back.size(), c.size());
    for (std::size_t k = 0; k < c.size(); ++k) {
      EXPECT_EQ(back[k].text, c.criteria[k].text);
      EXPECT_EQ(back[k].evidence, c.criteria[k].evidence);
      EXPECT_EQ(back[k].label, c.criteria[k].label);
    }
  }
}

TEST(CollectorProperty, ParsePreservesOrder) {
  Gen g(1005);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 12));
    json items = json::array();
    std::vector<std::string> texts;
    for (std::size_t k = 0; k < n; ++k) {
      texts.push_back(text(g));
      items.push_back({{"criterion", texts.back()}, {"evidence", "e"}});
    }
    const std::string raw = (g.coin() ? "Preamble.\n" : "") + json{{"checklist", items}}.dump(g.coin() ? 2 : -1);
    const auto c = parse_checklist(raw);
    ASSERT_EQ(c.size(), n);
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_EQ(c.criteria[k].index, k);
      EXPECT_EQ(c.criteria[k].text, texts[k]);
    }
  }
}

// ---------------------------------------------------------------------------
// saliency and labels

struct SaliencyFixture {
  ScoreVector chosen;
  std::vector<ScoreVector> pool;
  std::vector<std::vector<int>> rows;  // chosen first, then pool
};

SaliencyFixture random_saliency_fixture(Gen& g) {
  SaliencyFixture f;
  const std::size_t n = static_cast<std::size_t>(g.integer(1, 12));
  const std::size_t m = static_cast<std::size_t>(g.integer(1, 7));
  f.rows.push_back(g.scores(n));
  f.chosen = testing_support::sv(f.rows[0]);
  for (std::size_t j = 0; j < m; ++j) {
    f.rows.push_back(g.scores(n));
    f.pool.push_back(testing_support::sv(f.rows.back()));
  }
  return f;
}

TEST(SaliencyProperty, MatchesAblationOracleExactly) {
  Gen g(2001);
  for (int i = 0; i < 1000; ++i) {
    const auto f = random_saliency_fixture(g);
    const auto t = saliency(f.chosen, f.pool, kDefaultEpsilon);
    EXPECT_EQ(t.normalized, oracle::saliency_normalized(f.rows, kDefaultEpsilon));
  }
}

TEST(SaliencyProperty, NormalizedIsADistribution) {
  Gen g(2002);
  for (int i = 0; i < 1000; ++i) {
    const auto f = random_saliency_fixture(g);
    const auto t = saliency(f.chosen, f.pool);
    double sum = 0.0;
    for (std::size_t k = 0; k < t.normalized.size(); ++k) {
      EXPECT_GE(t.normalized[k], 0.0);
      EXPECT_LE(t.normalized[k], 1.0);
      EXPECT_GE(t.rectified[k], 0.0);
      EXPECT_EQ(t.rectified[k], std::max(0.0, t.raw[k]));
      sum += t.normalized[k];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(SaliencyProperty, LabelsStableAcrossEpsilon) {
  Gen g(2003);
  for (int i = 0; i < 500; ++i) {
    const auto f = random_saliency_fixture(g);
    const auto base = verbalize(saliency(f.chosen, f.pool, 1e-6).normalized);
    for (double eps : {1e-8, 1e-4}) {
      EXPECT_EQ(verbalize(saliency(f.chosen, f.pool, eps).normalized), base) << "eps " << eps;
    }
  }
}

TEST(SaliencyProperty, DecisiveCriterionHasPositiveRawScore) {
  // Criterion k is maxed on chosen and floored across the pool; every other
  // criterion favours the pool, so ablating k must raise the ratio.
  mock::MockWorld world(2004);
  mock::MockChatProvider judge(world);
  Gen g(2004);
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = static_cast<std::size_t>(g.integer(2, 5));
    const std::size_t k = static_cast<std::size_t>(g.integer(0, n - 1));
    std::vector<std::string> texts;
    for (std::size_t c = 0; c < n; ++c) texts.push_back("Shows " + tag("x" + std::to_string(c)));
    const Checklist checklist = testing_support::checklist(texts);
    std::vector<double> chosen_q(n);
    std::string chosen = "chosen " + std::to_string(i);
    for (std::size_t c = 0; c < n; ++c) {
      chosen_q[c] = c == k ? 1.0 : g.real(0.0, 0.6);
      chosen += " " + tag("x" + std::to_string(c), chosen_q[c]);
    }
    std::vector<std::string> pool;
    for (int j = 0; j < g.integer(1, 4); ++j) {
      std::string r = "negative " + std::to_string(j);
      for (std::size_t c = 0; c < n; ++c) {
        r += " " + tag("x" + std::to_string(c), c == k ? 0.0 : g.real(chosen_q[c] + 0.06, 1.0));
      }
      pool.push_back(r);
    }
    const JudgeContext ctx{"gp", "q"};
    const ScoreVector sc = score_checklist(judge, checklist, chosen, ctx);
    std::vector<ScoreVector> ps;
    for (const auto& r : pool) ps.push_back(score_checklist(judge, checklist, r, ctx));
    ASSERT_EQ(sc[k], 10);
    const auto t = saliency(sc, ps);
    EXPECT_GT(t.raw[k], 0.0) << "fixture " << i;
    EXPECT_GT(t.normalized[k], 0.0) << "fixture " << i;
  }
}

TEST(LabelProperty, MatchesRankOracle) {
  Gen g(2101);
  for (int i = 0; i < 2000; ++i) {
    const auto w = g.simplex(static_cast<std::size_t>(g.integer(1, 12)), g.coin());
    EXPECT_EQ(verbalize(w), oracle::verbalize(w, 0.4, 0.9));
  }
}

TEST(LabelProperty, HeavierNeverLessSevere) {
  Gen g(2102);
  for (int i = 0; i < 2000; ++i) {
    const auto w = g.simplex(static_cast<std::size_t>(g.integer(1, 12)), g.coin());
    const auto labels = verbalize(w);
    const auto top = std::max_element(w.begin(), w.end()) - w.begin();
    EXPECT_EQ(labels[static_cast<std::size_t>(top)], Label::kEssential);
    for (std::size_t a = 0; a < w.size(); ++a) {
      for (std::size_t b = 0; b < w.size(); ++b) {
        if (w[a] > w[b]) EXPECT_LE(static_cast<int>(labels[a]), static_cast<int>(labels[b]));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// reward

Checklist labeled(Gen& g, std::size_t n) {
  std::vector<std::string> texts(n, "c");
  std::vector<Label> labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back(g.label());
  return testing_support::checklist(texts, labels);
}

int order(Winner w) { return w == Winner::kA ? 1 : (w == Winner::kB ? -1 : 0); }

TEST(RewardProperty, ScalingInvariance) {
  Gen g(3001);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 8));
    const Checklist c = labeled(g, n);
    const auto a = testing_support::sv(g.scores(n));
    const auto b = testing_support::sv(g.scores(n));
    const WeightMap base{1.0, g.real(0.3, 1.0), g.real(0.01, 0.3)};
    const Winner w = decide_from_results(reward_from_scores(c, a, base), reward_from_scores(c, b, base)).winner;
    for (double lambda : {0.5, 2.0, 10.0}) {
      const WeightMap s = base.scaled(lambda);
      EXPECT_EQ(decide_from_results(reward_from_scores(c, a, s), reward_from_scores(c, b, s)).winner, w);
    }
  }
}

TEST(RewardProperty, RaisingAScoreNeverHurts) {
  Gen g(3002);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 8));
    const Checklist c = labeled(g, n);
    auto a = g.scores(n);
    const auto b = testing_support::sv(g.scores(n));
    const Winner before = decide_from_results(reward_from_scores(c, testing_support::sv(a), {}),
                                              reward_from_scores(c, b, {})).winner;
    const std::size_t k = static_cast<std::size_t>(g.integer(0, n - 1));
    a[k] = g.integer(a[k], 10);
    const Winner after = decide_from_results(reward_from_scores(c, testing_support::sv(a), {}),
                                             reward_from_scores(c, b, {})).winner;
    EXPECT_GE(order(after), order(before));
  }
}

TEST(RewardProperty, SwappingCandidatesMirrorsDecision) {
  Gen g(3003);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 8));
    const Checklist c = labeled(g, n);
    const auto ra = reward_from_scores(c, testing_support::sv(g.scores(n)), {});
    const auto rb = reward_from_scores(c, testing_support::sv(g.scores(n)), {});
    EXPECT_EQ(order(decide_from_results(ra, rb).winner), -order(decide_from_results(rb, ra).winner));
  }
  mock::MockWorld world(3003);
  mock::MockChatProvider judge(world);
  for (int i = 0; i < 20; ++i) {
    const Checklist c = testing_support::checklist({"Has " + tag("a"), "Has " + tag("b")},
                                                   {g.label(), g.label()});
    const std::string x = "x " + tag("a", g.real(0, 1)) + " " + tag("b", g.real(0, 1));
    const std::string y = "y " + tag("a", g.real(0, 1)) + " " + tag("b", g.real(0, 1));
    EXPECT_EQ(order(decide_pair(judge, "gp", "q", x, y, c, {}).winner),
              -order(decide_pair(judge, "gp", "q", y, x, c, {}).winner));
  }
}

TEST(RewardProperty, UniformMapReducesToAggregate) {
  Gen g(3004);
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 12));
    const auto s = testing_support::sv(g.scores(n));
    EXPECT_EQ(reward_from_scores(labeled(g, n), s, {1.0, 1.0, 1.0}).reward, aggregate_score(s));
  }
}

TEST(BestOfNProperty, PermutationKeepsWinningReward) {
  mock::MockWorld world(3005);
  mock::MockChatProvider judge(world);
  Gen g(3005);
  const Checklist c = testing_support::checklist({"Has " + tag("a"), "Has " + tag("b"), "Has " + tag("c")},
                                                 {Label::kEssential, Label::kImportant, Label::kOptional});
  for (int i = 0; i < 20; ++i) {
    std::vector<std::string> cands;
    const int n = g.integer(2, 6);
    for (int j = 0; j < n; ++j) {
      cands.push_back("cand " + std::to_string(j) + " " + tag("a", g.integer(0, 3) / 3.0) + " " +
                      tag("b", g.integer(0, 3) / 3.0) + " " + tag("c", g.integer(0, 3) / 3.0));
    }
    const auto base = best_of_n(judge, "gp", "q", cands, c);
    const double best = base.rewards[base.selected].reward;
    for (const auto& r : base.rewards) EXPECT_LE(r.reward, best);
    auto perm = cands;
    std::shuffle(perm.begin(), perm.end(), g.engine());
    const auto shuffled = best_of_n(judge, "gp", "q", perm, c);
    EXPECT_EQ(shuffled.rewards[shuffled.selected].reward, best) << "fixture " << i;
    const auto unique = std::count_if(base.rewards.begin(), base.rewards.end(),
                                      [&](const RewardResult& r) { return r.reward == best; });
    if (unique == 1) EXPECT_EQ(perm[shuffled.selected], cands[base.selected]);
  }
}

// ---------------------------------------------------------------------------
// providers

TEST(CacheProperty, TransparentUnderConcurrency) {
  testing_support::TempDir dir;
  mock::MockWorld world(4001);
  mock::MockChatProvider direct(world);
  mock::MockChatProvider backend(world);
  CachedChatProvider cached(backend, dir.path());
  std::vector<ChatRequest> reqs;
  for (int i = 0; i < 48; ++i) {
    ChatRequest r;
    r.template_id = std::string(prompt_id::kRespond);
    r.variables = {{"gp", "Likes " + tag("t" + std::to_string(i % 12))}, {"query", "q" + std::to_string(i % 12)}};
    r.model_id = i % 2 == 0 ? "m1" : "m2";
    r.temperature = 1.0;
    reqs.push_back(r);
  }
  std::vector<std::string> got(reqs.size());
  parallel_for(reqs.size(), 8, [&](std::size_t i) { got[i] = cached.chat(reqs[i]); });
  for (std::size_t i = 0; i < reqs.size(); ++i) EXPECT_EQ(got[i], direct.chat(reqs[i]));
  const std::size_t backend_calls = backend.calls();
  EXPECT_LE(backend_calls, reqs.size());
  parallel_for(reqs.size(), 8, [&](std::size_t i) { EXPECT_EQ(cached.chat(reqs[i]), got[i]); });
  EXPECT_EQ(backend.calls(), backend_calls);
}

// ---------------------------------------------------------------------------
// clustering and selection

TEST(ClusterProperty, DeterministicAndSilhouetteMatchesOracle) {
  Gen g(5001);
  for (int i = 0; i < 15; ++i) {
    const std::size_t n = static_cast<std::size_t>(g.integer(4, 30));
    const std::size_t dim = static_cast<std::size_t>(g.integer(2, 6));
    std::vector<std::string> ids;
    std::vector<Vec> x;
    for (std::size_t j = 0; j < n; ++j) {
      ids.push_back("u" + std::to_string(1000 + j));
      Vec v(dim);
      for (double& c : v) c = g.real(-1.0, 1.0);
      x.push_back(v);
    }
    const ClusterOptions opts{2, 6, static_cast<std::uint64_t>(i), 5, 1};
    ClusterOptions par = opts;
    par.concurrency = 3;
    const auto a = cluster_vectors(ids, x, opts);
    const auto b = cluster_vectors(ids, x, par);
    EXPECT_EQ(a.assignments, b.assignments);
    EXPECT_EQ(a.silhouette, b.silhouette);
    std::vector<Vec> normalized;
    std::vector<std::size_t> labels;
    for (std::size_t j = 0; j < n; ++j) {
      normalized.push_back(l2_normalized(x[j]));
      labels.push_back(a.assignments.at(ids[j]));
    }
    EXPECT_NEAR(a.silhouette, oracle::silhouette(normalized, labels), 1e-9);
    for (const auto& [k, s] : a.silhouette_by_k) EXPECT_LE(s, a.silhouette + 1e-12) << "k " << k;
  }
}

TEST(SelectionProperty, MatchesBruteForce) {
  mock::MockWorld world(5002);
  mock::MockEmbeddingProvider emb(world);
  Gen g(5002);
  for (int i = 0; i < 40; ++i) {
    const std::size_t n = static_cast<std::size_t>(g.integer(2, 50));
    UserClustering cl;
    cl.k = std::min<std::size_t>(n, static_cast<std::size_t>(g.integer(1, 5)));
    for (std::size_t c = 0; c < cl.k; ++c) {
      // Coarse integer coordinates create centroid-distance ties.
      cl.centroids.push_back({static_cast<double>(g.integer(-2, 2)), static_cast<double>(g.integer(-2, 2)), 1.0});
    }
    std::map<std::string, std::string> gps;
    std::vector<std::string> ids;
    for (std::size_t j = 0; j < n; ++j) {
      const std::string id = "u" + std::to_string(100 + j);
      ids.push_back(id);
      // The first k users seed every cluster so none is empty.
      cl.assignments[id] = j < cl.k ? j : static_cast<std::size_t>(g.integer(0, cl.k - 1));
      gps[id] = "Preference " + std::to_string(g.integer(0, 5)) + " " + tag("a" + std::to_string(g.integer(0, 3)));
    }
    const std::string target = ids[static_cast<std::size_t>(g.integer(0, n - 1))];
    const std::size_t K = static_cast<std::size_t>(g.integer(1, 6));
    const std::string query = "query " + std::to_string(i);
    const auto got = select_contrastive_users(target, query, cl, gps, emb, K);
    const auto want = oracle::select(target, query, cl, gps, emb, K, "qwen3-embedding-0.6b");
    EXPECT_EQ(got.selected_users, want.users) << "fixture " << i;
    EXPECT_EQ(got.global_fallback, want.global);
    if (!want.global) EXPECT_EQ(got.candidate_cluster, want.candidate_cluster);
    const std::set<std::string> unique(got.selected_users.begin(), got.selected_users.end());
    EXPECT_EQ(unique.size(), got.selected_users.size());
    EXPECT_FALSE(unique.contains(target));
  }
}

}  // namespace
}  // namespace pcheck
