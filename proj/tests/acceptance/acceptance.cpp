// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles.hpp"
#include "pcheck/pcheck.hpp"

namespace fs = std::filesystem;
using namespace pcheck;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

ScoreVector sv(const std::vector<int>& v) { return {v, v.size()}; }

Checklist labeled(const std::vector<std::string>& texts, const std::vector<Label>& labels) {
  Checklist c;
  c.user_id = "u";
  c.query = "q";
  for (std::size_t i = 0; i < texts.size(); ++i) {
    c.criteria.push_back({i, texts[i], "", std::nullopt, labels[i]});
  }
  return c;
}

// 1. Saliency oracle equivalence.
Outcome saliency_oracle() {
  Outcome o;
  oracle::Gen gen(101);
  for (int f = 0; f < 500 && o.ok; ++f) {
    const std::size_t n = static_cast<std::size_t>(gen.integer(1, 8));
    const std::size_t m = static_cast<std::size_t>(gen.integer(1, 7));
    std::vector<std::vector<int>> all;
    for (std::size_t j = 0; j <= m; ++j) all.push_back(gen.scores(n));
    std::vector<ScoreVector> pool;
    for (std::size_t j = 1; j <= m; ++j) pool.push_back(sv(all[j]));
    const auto table = saliency(sv(all[0]), pool, kDefaultEpsilon);
    const auto expect = oracle::saliency_normalized(all, kDefaultEpsilon);
    o.require(table.normalized == expect, "fixture " + std::to_string(f) + " differs from oracle");
    const double sum = std::accumulate(table.normalized.begin(), table.normalized.end(), 0.0);
    o.require(std::abs(sum - 1.0) <= 1e-9, "fixture " + std::to_string(f) + " does not sum to 1");
  }
  return o;
}

// 2. Hand-computed case.
Outcome saliency_hand_case() {
  Outcome o;
  const std::vector<ScoreVector> pool{sv({2, 2})};
  const auto t = saliency(sv({10, 2}), pool, 1e-6);
  o.require(std::abs(t.normalized[0] - 1.0) <= 1e-4 && std::abs(t.normalized[1]) <= 1e-4,
            "normalized weights not [1, 0]");
  return o;
}

// 3. Verbalization walks and properties.
Outcome verbalization() {
  Outcome o;
  using L = Label;
  const std::vector<double> w1{0.5, 0.3, 0.15, 0.05};
  o.require(verbalize(w1) == std::vector<L>{L::kEssential, L::kImportant, L::kOptional, L::kOptional},
            "walk [0.5,0.3,0.15,0.05] wrong");
  const std::vector<double> w2(4, 0.25);
  o.require(verbalize(w2) == std::vector<L>{L::kEssential, L::kImportant, L::kImportant, L::kOptional},
            "uniform walk wrong");
  oracle::Gen gen(303);
  for (int f = 0; f < 1000 && o.ok; ++f) {
    const auto w = gen.simplex(static_cast<std::size_t>(gen.integer(1, 10)), gen.coin(0.3));
    const auto labels = verbalize(w);
    o.require(labels == oracle::verbalize(w, 0.4, 0.9), "oracle disagreement");
    const auto top = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
    o.require(labels[top] == L::kEssential, "top criterion not Essential");
    for (std::size_t i = 0; i < w.size(); ++i) {
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (w[i] > w[j]) o.require(label_rank(labels[i]) <= label_rank(labels[j]), "non-monotone labels");
      }
    }
  }
  return o;
}

// 4. Reward reduction, scaling invariance, monotonicity.
Outcome reward_properties() {
  Outcome o;
  oracle::Gen gen(404);
  const WeightMap defaults{};
  for (int f = 0; f < 1000 && o.ok; ++f) {
    const std::size_t n = static_cast<std::size_t>(gen.integer(1, 8));
    std::vector<std::string> texts;
    std::vector<Label> labels;
    for (std::size_t i = 0; i < n; ++i) {
      texts.push_back("c" + std::to_string(i));
      labels.push_back(gen.label());
    }
    const Checklist c = labeled(texts, labels);
    const auto a = sv(gen.scores(n));
    const auto b = sv(gen.scores(n));
    o.require(reward_from_scores(c, a, {1.0, 1.0, 1.0}).reward == aggregate_score(a), "uniform map != aggregate");
    const Winner base = compare_rewards(reward_from_scores(c, a, defaults).reward,
                                        reward_from_scores(c, b, defaults).reward);
    for (double lambda : {0.1, 3.7}) {
      const WeightMap s = defaults.scaled(lambda);
      o.require(compare_rewards(reward_from_scores(c, a, s).reward, reward_from_scores(c, b, s).reward) == base,
                "winner changed under scaling");
    }
    if (base == Winner::kA) {
      auto up = a;
      const std::size_t k = static_cast<std::size_t>(gen.integer(0, static_cast<int>(n) - 1));
      up.scores[k] = std::min(10, up.scores[k] + gen.integer(1, 9));
      o.require(compare_rewards(reward_from_scores(c, up, defaults).reward,
                                reward_from_scores(c, b, defaults).reward) == Winner::kA,
                "raising a score of the winner flipped the decision");
    }
  }
  return o;
}

std::string random_gp(oracle::Gen& gen, const std::vector<std::string>& aspects) {
  std::vector<std::string> picked;
  const int n = gen.integer(1, 2);
  for (int i = 0; i < n; ++i) picked.push_back(mock::tag(aspects[static_cast<std::size_t>(gen.integer(0, static_cast<int>(aspects.size()) - 1))]));
  return "Prefers " + join(picked, " and ");
}

// 5. Contrastive selection against brute force.
Outcome selection_oracle() {
  Outcome o;
  oracle::Gen gen(505);
  const std::vector<std::string> aspects{"concise", "formal", "examples", "humor", "empathy", "technical"};
  std::size_t backfills = 0;
  std::size_t ties = 0;
  std::size_t globals = 0;
  for (int f = 0; f < 200 && o.ok; ++f) {
    mock::MockWorld world(static_cast<std::uint64_t>(f));
    mock::MockEmbeddingProvider emb(world);
    const std::size_t n = static_cast<std::size_t>(gen.integer(3, 50));
    std::vector<UserRecord> users;
    std::map<std::string, std::string> gps;
    for (std::size_t u = 0; u < n; ++u) {
      UserRecord r;
      r.user_id = "user" + std::to_string(gen.integer(0, 999)) + "_" + std::to_string(u);
      r.split = Split::kTrain;
      r.history.push_back({"q", "a", "b"});
      r.general_preference = random_gp(gen, aspects);
      gps[r.user_id] = *r.general_preference;
      users.push_back(r);
    }
    ContrastOptions opts;
    opts.k_min = 2;
    opts.k_max = 6;
    opts.seed = static_cast<std::uint64_t>(f);
    opts.n_init = 3;
    const auto clustering = cluster_users(users, emb, opts);
    const std::string target = users[static_cast<std::size_t>(gen.integer(0, static_cast<int>(n) - 1))].user_id;
    const std::string query = "query " + std::to_string(gen.integer(0, 3));
    const std::size_t K = static_cast<std::size_t>(gen.integer(1, 8));
    const auto sel = select_contrastive_users(target, query, clustering, gps, emb, K, opts.embedding_model);
    const auto ref = oracle::select(target, query, clustering, gps, emb, K, opts.embedding_model);
    o.require(sel.selected_users == ref.users, "fixture " + std::to_string(f) + ": selected users differ");
    o.require(sel.candidate_cluster == ref.candidate_cluster, "fixture " + std::to_string(f) + ": candidate cluster differs");
    o.require(sel.global_fallback == ref.global, "fixture " + std::to_string(f) + ": fallback flag differs");
    for (std::size_t i = 0; o.ok && i < sel.distances.size(); ++i) {
      o.require(std::abs(sel.distances[i] - ref.distances[i]) <= 1e-12, "distances differ");
    }
    const auto cand = clustering.members(sel.candidate_cluster);
    for (const auto& u : sel.selected_users) {
      if (std::find(cand.begin(), cand.end(), u) == cand.end()) {
        ++backfills;
        break;
      }
    }
    for (std::size_t i = 1; i < sel.distances.size(); ++i) {
      if (sel.distances[i] == sel.distances[i - 1]) {
        ++ties;
        break;
      }
    }
    if (sel.global_fallback) ++globals;
  }
  o.require(backfills > 0, "no fixture exercised backfill");
  o.require(ties > 0, "no fixture exercised a distance tie");
  if (o.ok) {
    o.detail = std::to_string(backfills) + " backfill, " + std::to_string(ties) + " tie, " +
               std::to_string(globals) + " global-fallback fixtures";
  }
  return o;
}

// 6. Three-blob clustering.
Outcome clustering_blobs() {
  Outcome o;
  mock::MockWorld world(6);
  mock::MockEmbeddingProvider emb(world);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<UserRecord> users;
  std::vector<std::size_t> truth;
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t i = 0; i < 10; ++i) {
      std::vector<double> v(mock::kEmbeddingDim, 0.0);
      for (auto& x : v) x = noise(rng);
      v[b] += 1.0;
      UserRecord r;
      r.user_id = "b" + std::to_string(b) + "_" + std::to_string(i);
      r.history.push_back({"q", "a", "b"});
      r.general_preference = "blob member " + r.user_id;
      world.set_embedding(*r.general_preference, v);
      users.push_back(r);
      truth.push_back(b);
    }
  }
  ContrastOptions opts;
  opts.k_min = 2;
  opts.k_max = 5;
  opts.seed = 42;
  const auto c1 = cluster_users(users, emb, opts);
  const auto c2 = cluster_users(users, emb, opts);
  o.require(c1.k == 3, "k=" + std::to_string(c1.k));
  o.require(c1.silhouette > 0.5, "silhouette " + std::to_string(c1.silhouette));
  std::vector<std::vector<double>> xs;
  std::vector<std::size_t> labels;
  for (const auto& [id, c] : c1.assignments) {
    for (const auto& u : users) {
      if (u.user_id == id) xs.push_back(l2_normalized(*world.embedding_for(*u.general_preference)));
    }
    labels.push_back(c);
  }
  const double ref = oracle::silhouette(xs, labels);
  o.require(std::abs(ref - c1.silhouette) <= 1e-9, "silhouette oracle disagrees");
  o.require(c1.assignments == c2.assignments && c1.centroids == c2.centroids && c1.silhouette == c2.silhouette,
            "same seed gave a different clustering");
  std::vector<std::size_t> got;
  for (const auto& u : users) got.push_back(c1.assignments.at(u.user_id));
  o.require(oracle::same_partition(got, truth), "blobs not recovered");
  if (o.ok) o.detail = "silhouette " + std::to_string(c1.silhouette);
  return o;
}

std::map<std::pair<std::string, std::string>, Checklist> checklists_for(
    const mock::SyntheticCorpus& corpus, bool scrambled) {
  std::map<std::pair<std::string, std::string>, Checklist> table;
  for (const auto& p : corpus.pairs) {
    Checklist c;
    c.user_id = p.user_id;
    c.query = p.query;
    const auto& hidden = corpus.hidden.at(p.user_id);
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      const std::string text = scrambled ? "The response handles point " + std::to_string(i) + " well."
                                         : mock::detail::criterion_for(hidden[i]);
      c.criteria.push_back({i, text, "", std::nullopt,
                            i == 0 ? Label::kEssential : (i == 1 ? Label::kImportant : Label::kOptional)});
    }
    table[{p.user_id, p.query}] = c;
  }
  return table;
}

// 7. Synthetic end-to-end evaluation.
Outcome synthetic_end_to_end() {
  Outcome o;
  mock::SyntheticSpec spec;
  spec.users = 20;
  spec.test_users = 20;
  spec.pairs_per_user = 10;
  spec.seed = 77;
  auto corpus = mock::make_synthetic_corpus(spec);
  for (auto& u : corpus.users) u.general_preference = "General preference of " + u.user_id;
  mock::MockWorld world(77);
  mock::MockChatProvider judge(world);

  ChecklistRewardMethod oracle_method(judge, fixed_checklists(checklists_for(corpus, false)));
  const auto a = evaluate(corpus.users, corpus.pairs, oracle_method, {5, 1, 1});
  o.require(a.mean == 1.0 && a.ci95_halfwidth == 0.0, "oracle checklists accuracy " + std::to_string(a.mean));

  ChecklistRewardMethod scrambled(judge, fixed_checklists(checklists_for(corpus, true)));
  const auto b = evaluate(corpus.users, corpus.pairs, scrambled, {5, 2, 1});
  const double sigma = std::sqrt(0.25 / static_cast<double>(5 * corpus.pairs.size()));
  o.require(std::abs(b.mean - 0.5) <= 3.0 * sigma,
            "scrambled accuracy " + std::to_string(b.mean) + " outside 0.5 +/- " + std::to_string(3 * sigma));

  // Only the Essential criterion separates chosen from rejected; the two
  // other criteria favor rejected.
  mock::SyntheticCorpus fx;
  std::map<std::pair<std::string, std::string>, Checklist> table;
  for (int u = 0; u < 10; ++u) {
    UserRecord r;
    r.user_id = "w" + std::to_string(u);
    r.split = Split::kTest;
    r.history.push_back({"h", "x", "y"});
    r.general_preference = "gp " + r.user_id;
    fx.users.push_back(r);
    for (int q = 0; q < 5; ++q) {
      const std::string query = "fixture query " + std::to_string(q);
      const std::string chosen = "chosen " + mock::tag("key", 1.0) + " " + mock::tag("style", 2.0 / 9.0) +
                                 " " + mock::tag("length", 2.0 / 9.0) + " " + r.user_id + query;
      const std::string rejected = "rejected " + mock::tag("key", 2.0 / 9.0) + " " + mock::tag("style", 6.0 / 9.0) +
                                   " " + mock::tag("length", 6.0 / 9.0) + " " + r.user_id + query;
      fx.pairs.push_back({r.user_id, query, chosen, rejected});
      table[{r.user_id, query}] = labeled({mock::detail::criterion_for("key"), mock::detail::criterion_for("style"),
                                           mock::detail::criterion_for("length")},
                                          {Label::kEssential, Label::kImportant, Label::kOptional});
    }
  }
  ChecklistRewardMethod weighted(judge, fixed_checklists(table), WeightMap{});
  ChecklistRewardMethod uniform(judge, fixed_checklists(table), WeightMap{1.0, 1.0, 1.0});
  const auto cw = evaluate(fx.users, fx.pairs, weighted, {5, 3, 1});
  const auto cu = evaluate(fx.users, fx.pairs, uniform, {5, 3, 1});
  o.require(cw.mean > cu.mean, "weighted " + std::to_string(cw.mean) + " not above uniform " + std::to_string(cu.mean));
  if (o.ok) {
    std::ostringstream s;
    s << "oracle " << a.mean << ", scrambled " << b.mean << ", weighted " << cw.mean << " vs uniform " << cu.mean;
    o.detail = s.str();
  }
  return o;
}

std::string judge_json(const std::vector<int>& scores) {
  json results = json::array();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    results.push_back({{"index", i + 1}, {"criterion", "c"}, {"reasoning", "r"}, {"score", scores[i]}});
  }
  return json{{"results", results}}.dump();
}

// 8. Rejection gates under scripted judges.
Outcome rejection_gates() {
  Outcome o;
  mock::MockWorld world(8);
  UserRecord user;
  user.user_id = "g";
  user.split = Split::kTrain;
  user.history = {{"q1", "c1", "r1"}, {"q2", "c2", "r2"}, {"q3", "c3", "r3"}};
  {
    // GP gate over 3 validation pairs: a strict majority needs 2 wins.
    mock::MockChatProvider chat(world);
    chat.script(prompt_id::kSummarize, {"first summary", "second summary"});
    // Candidate 1: one win, one tie, one loss.
    chat.script(prompt_id::kJudge, {judge_json({7}), judge_json({3}), judge_json({5}), judge_json({5}),
                                    judge_json({2}), judge_json({6})});
    // Candidate 2: two wins.
    chat.script(prompt_id::kJudge, {judge_json({8}), judge_json({2}), judge_json({6}), judge_json({5}),
                                    judge_json({1}), judge_json({9})});
    SummarizerOptions opts;
    opts.validation_pairs = 4;
    const auto r = summarize_user(chat, user, opts);
    o.require(r.general_preference == "second summary" && r.report.attempts == 2 && r.report.accepted,
              "GP gate accepted the wrong candidate");
    o.require(r.report.validation_pairs_used == 3, "validation pair count should be min(4, |H|)");
  }
  {
    mock::MockChatProvider chat(world);
    chat.script(prompt_id::kSummarize, {"only ties", "one win"});
    chat.script(prompt_id::kJudge, std::vector<std::string>(6, judge_json({5})));
    chat.script(prompt_id::kJudge, {judge_json({6}), judge_json({5}), judge_json({5}), judge_json({5}),
                                    judge_json({5}), judge_json({5})});
    SummarizerOptions opts;
    opts.max_attempts = 2;
    try {
      summarize_user(chat, user, opts);
      o.require(false, "GP gate accepted ties");
    } catch (const GpGateExhausted& e) {
      o.require(e.best_candidate() == "one win", "GP gate best candidate wrong");
      o.require(!e.report().accepted && e.report().attempts == 2, "GP gate report wrong");
    }
  }
  const PreferenceInstance inst{"g", "target q", "target chosen", "target rejected"};
  const std::string cl1 = R"({"checklist":[{"criterion":"A","evidence":"e"},{"criterion":"B","evidence":"e"}]})";
  const std::string cl2 = R"({"checklist":[{"criterion":"C","evidence":"e"},{"criterion":"D","evidence":"e"}]})";
  const std::string cl3 = R"({"checklist":[{"criterion":"E","evidence":"e"}]})";
  {
    mock::MockChatProvider chat(world);
    chat.script(prompt_id::kCollect, {cl1, cl2});
    chat.script(prompt_id::kJudge, {judge_json({5, 5}), judge_json({5, 5}),    // equal sums: reject
                                    judge_json({6, 5}), judge_json({5, 5})});  // strict win: accept
    const auto r = collect_checklist(chat, "gp", inst);
    o.require(r.report.attempts == 2 && r.checklist.criteria.front().text == "C", "checklist gate accepted a tie");
  }
  {
    mock::MockChatProvider chat(world);
    chat.script(prompt_id::kCollect, {cl1, cl2, cl3});
    chat.script(prompt_id::kJudge, {judge_json({3, 3}), judge_json({5, 5}),   // margin -4
                                    judge_json({5, 5}), judge_json({5, 5}),   // margin 0
                                    judge_json({2}), judge_json({9})});       // margin -7
    try {
      collect_checklist(chat, "gp", inst);
      o.require(false, "checklist gate accepted without a strict win");
    } catch (const ChecklistGateExhausted& e) {
      o.require(e.best_candidate() && e.best_candidate()->criteria.front().text == "C",
                "checklist gate best candidate wrong");
    }
  }
  return o;
}

// 9. Pipeline round trip with cache idempotence.
Outcome pipeline_round_trip() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / ("pcheck-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  mock::SyntheticSpec spec;
  spec.users = 5;
  spec.seed = 9;
  const auto corpus = mock::make_synthetic_corpus(spec);
  save_corpus(corpus.users, dir / "users.jsonl");
  save_corpus(corpus.pairs, dir / "pairs.jsonl");
  Config config;
  config.mock = true;
  config.set("seed", std::uint64_t{9});
  config.cache_dir = (dir / "cache").string();
  config.concurrency = 2;

  const auto run_all = [&](Providers& p) {
    run_summarize(config, p, dir / "users.jsonl", dir / "users_gp.jsonl");
    run_collect(config, p, dir / "users_gp.jsonl", dir / "pairs.jsonl", dir / "checklists.jsonl");
    run_contrast(config, p, dir / "users_gp.jsonl", dir / "pairs.jsonl", dir / "negatives.jsonl");
    run_weight(config, p, dir / "users_gp.jsonl", dir / "checklists.jsonl", dir / "negatives.jsonl",
               dir / "training.jsonl");
    return run_export_training(dir / "training.jsonl", dir / "sft.jsonl");
  };
  auto first = Providers::make(config);
  const std::size_t exported = run_all(*first);
  o.require(first->backend_calls() > 0, "first run made no provider calls");
  const std::string training_bytes = read_text_file(dir / "training.jsonl");

  const auto examples = load_corpus<TrainingExample>(dir / "training.jsonl");
  o.require(!examples.empty() && examples.size() == exported, "training export is empty or incomplete");
  const auto users = load_corpus<UserRecord>(dir / "users_gp.jsonl");
  const auto by_id = index_users(users);
  std::map<std::pair<std::string, std::string>, const PreferenceInstance*> pairs;
  for (const auto& p : corpus.pairs) pairs[{p.user_id, p.query}] = &p;
  for (const auto& line : split(read_text_file(dir / "sft.jsonl"), '\n')) {
    if (line.empty()) continue;
    const auto crit = parse_training_target(json::parse(line)["completion"].get<std::string>());
    o.require(!crit.empty(), "empty label set");
  }
  for (const auto& t : examples) {
    const auto parsed = parse_training_target(render_training_target(t.labeled_checklist));
    o.require(parsed.size() == t.labeled_checklist.criteria.size(), "inverse parser lost criteria");
    for (std::size_t i = 0; o.ok && i < parsed.size(); ++i) {
      o.require(parsed[i].text == t.labeled_checklist.criteria[i].text &&
                    parsed[i].label == t.labeled_checklist.criteria[i].label &&
                    parsed[i].evidence == t.labeled_checklist.criteria[i].evidence,
                "inverse parser changed a criterion");
    }
    const auto& c = t.labeled_checklist;
    o.require(c.gate && c.gate->accepted, "checklist without an accepted gate report");
    const PreferenceInstance& p = *pairs.at({c.user_id, c.query});
    const auto [sc, sr] = gate_sums(first->chat(), c, *by_id.at(c.user_id)->general_preference, p, config.judge);
    o.require(sc > sr, "checklist is not gate-consistent");
  }

  auto second = Providers::make(config);
  run_all(*second);
  o.require(second->backend_calls() == 0,
            "second run made " + std::to_string(second->backend_calls()) + " provider calls");
  o.require(read_text_file(dir / "training.jsonl") == training_bytes, "second run changed training.jsonl");
  if (o.ok) o.detail = std::to_string(examples.size()) + " training examples";
  fs::remove_all(dir);
  return o;
}

// 10. Best-of-N and refinement.
Outcome best_of_n_and_refine() {
  Outcome o;
  oracle::Gen gen(1010);
  mock::MockWorld world(10);
  mock::MockChatProvider judge(world);
  const std::vector<std::string> aspects{"a1", "a2", "a3"};
  const Checklist cl = labeled({mock::detail::criterion_for("a1"), mock::detail::criterion_for("a2"),
                                mock::detail::criterion_for("a3")},
                               {Label::kEssential, Label::kImportant, Label::kOptional});
  for (int f = 0; f < 20 && o.ok; ++f) {
    std::vector<std::string> cands;
    for (int i = 0; i < 10; ++i) {
      std::string text = "candidate " + std::to_string(f) + "-" + std::to_string(i);
      // Coarse qualities produce frequent reward ties.
      for (const auto& a : aspects) text += " " + mock::tag(a, gen.integer(0, 3) / 3.0);
      cands.push_back(text);
    }
    const auto base = best_of_n(judge, "gp", "q", cands, cl);
    std::vector<double> rewards;
    for (const auto& r : base.rewards) rewards.push_back(r.reward);
    std::vector<std::size_t> perm(cands.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen.engine());
    std::vector<std::string> shuffled;
    for (std::size_t i : perm) shuffled.push_back(cands[i]);
    const auto again = best_of_n(judge, "gp", "q", shuffled, cl);
    const std::size_t picked = perm[again.selected];
    o.require(compare_rewards(rewards[picked], rewards[base.selected]) == Winner::kTie,
              "permutation changed the selected reward");
    std::size_t lowest_tied = cands.size();
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (compare_rewards(rewards[i], rewards[base.selected]) == Winner::kTie) lowest_tied = std::min(lowest_tied, i);
    }
    o.require(lowest_tied == base.selected, "tie not broken toward the lowest index");

    auto dominant = cands;
    const std::size_t d = static_cast<std::size_t>(gen.integer(0, 9));
    dominant[d] = "dominant " + std::to_string(f) + " " + mock::tag("a1", 1.0) + " " + mock::tag("a2", 1.0) + " " +
                  mock::tag("a3", 1.0);
    for (std::size_t i = 0; i < dominant.size(); ++i) {
      if (i != d) dominant[i] = mock::with_quality(mock::with_quality(dominant[i], "a1", 0.5), "a2", 0.5);
    }
    o.require(best_of_n(judge, "gp", "q", dominant, cl).selected == d, "dominant candidate not selected");
  }
  world.refine_identity = true;
  const auto r = refine_and_score(judge, judge, "gp", "q", "initial " + mock::tag("a1", 0.4), cl);
  o.require(r.delta == 0.0 && r.refined == r.initial, "identity refinement changed the reward");
  world.refine_identity = false;
  const auto up = refine_and_score(judge, judge, "gp", "q", "initial " + mock::tag("a1", 0.4), cl);
  o.require(up.delta > 0.0, "checklist-following refinement did not raise the reward");
  return o;
}

}  // namespace

int main() {
  warnings_enabled() = false;
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "saliency matches per-ablation oracle on 500 fixtures", 5, saliency_oracle},
      {2, "hand-computed saliency case [10,2] vs {[2,2]}", 1, saliency_hand_case},
      {3, "verbalization walks and 1000 random label properties", 5, verbalization},
      {4, "reward reduction, scaling invariance, monotonicity", 5, reward_properties},
      {5, "contrastive selection matches brute force on 200 corpora", 30, selection_oracle},
      {6, "three-blob clustering, silhouette oracle, reproducibility", 10, clustering_blobs},
      {7, "synthetic end-to-end evaluation", 120, synthetic_end_to_end},
      {8, "rejection gates under scripted judges", 5, rejection_gates},
      {9, "pipeline round trip with cache idempotence", 60, pipeline_round_trip},
      {10, "best-of-N permutation/dominance and identity refinement", 10, best_of_n_and_refine},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.ok && secs > c.budget_s) {
      o.ok = false;
      o.detail = "exceeded " + std::to_string(c.budget_s) + " s budget";
    }
    if (!o.ok) ++failures;
    std::printf("[%s] %2d %s (%.2f s)%s%s\n", o.ok ? "PASS" : "FAIL", c.id, c.name, secs,
                o.detail.empty() ? "" : ": ", o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
