// pcheck command-line front-end.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pcheck/pcheck.hpp"

namespace fs = std::filesystem;
using namespace pcheck;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool mock = false;
  bool quiet = false;
};

Config make_config(const Globals& g) {
  Config c = load_config(g.config_path.empty() ? std::nullopt
                                                : std::optional<fs::path>(g.config_path));
  if (g.seed) c.set("seed", *g.seed);
  if (g.mock) c.mock = true;
  c.validate();
  return c;
}

std::pair<double, double> parse_range(const std::string& s, const char* what) {
  const auto parts = split(s, ':');
  if (parts.size() != 2) throw ValidationError(std::string(what) + " must look like a:b");
  try {
    return {std::stod(parts[0]), std::stod(parts[1])};
  } catch (const std::exception&) {
    throw ValidationError(std::string(what) + " must look like a:b, got '" + s + "'");
  }
}

/// Candidates file: one JSON string, JSON object with "text", or raw line
/// per line.
std::vector<std::string> read_candidates(const fs::path& path) {
  std::vector<std::string> out;
  for (const auto& line : split(read_text_file(path), '\n')) {
    if (trim(line).empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_string()) {
      out.push_back(j.get<std::string>());
    } else if (j.is_object() && j.contains("text") && j["text"].is_string()) {
      out.push_back(j["text"].get<std::string>());
    } else {
      out.push_back(line);
    }
  }
  if (out.empty()) throw ValidationError("no candidates in " + path.string());
  return out;
}

/// A rendered labeled checklist from a file, or one inferred by the generator.
Checklist obtain_checklist(Providers& providers, const Config& config, const std::string& gp,
                           const std::string& query, const std::string& checklist_path) {
  Checklist c;
  if (!checklist_path.empty()) {
    c.criteria = parse_training_target(read_text_file(checklist_path));
    c.query = query;
    c.provenance = Provenance::kGenerated;
    return c;
  }
  return infer_checklist(providers.generator(), gp, query, config.generator);
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

json reward_json(const RewardResult& r) {
  return json::parse(to_json_line(r));
}

void write_lines(const fs::path& path, const std::vector<json>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (const auto& j : lines) out << j.dump(-1, ' ', false, json::error_handler_t::strict) << "\n";
}

json checklist_text_json(const Checklist& c) {
  json items = json::array();
  for (const auto& cr : c.criteria) {
    items.push_back({{"text", cr.text},
                     {"evidence", cr.evidence},
                     {"label", cr.label ? json(std::string(to_string(*cr.label))) : json(nullptr)}});
  }
  return items;
}

std::map<std::pair<std::string, std::string>, Checklist> checklist_table(const fs::path& path) {
  std::map<std::pair<std::string, std::string>, Checklist> table;
  for (auto& t : load_corpus<TrainingExample>(path)) {
    const std::string user = t.labeled_checklist.user_id;
    table[{user, t.query}] = std::move(t.labeled_checklist);
  }
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized checklist reward pipeline"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "TOML config file");
  app.add_option("--seed", g.seed, "Base seed (overrides config)");
  app.add_flag("--mock", g.mock, "Use deterministic mock providers");
  app.add_flag("--quiet", g.quiet, "Suppress warnings");

  std::function<void()> action;

  // summarize
  std::string users, pairs, out, checklists, negatives, training, gp_file, query, candidates,
      checklist_file, response_file, a_text, b_text, report_file, kind, file;
  int max_attempts = 0;
  auto* summarize = app.add_subcommand("summarize", "Write general preferences into users.jsonl");
  summarize->add_option("--users", users)->required();
  summarize->add_option("--out", out)->required();
  summarize->add_option("--max-attempts", max_attempts);
  summarize->callback([&] {
    action = [&] {
      Config c = make_config(g);
      if (max_attempts > 0) c.summarizer.max_attempts = max_attempts;
      auto p = Providers::make(c);
      const auto s = run_summarize(c, *p, users, out);
      std::cerr << "summarized " << s.summaries.size() << " users (" << s.flagged.size()
                << " gate-exhausted, " << s.failures.size() << " failed)\n";
    };
  });

  auto* collect = app.add_subcommand("collect", "Collect gated raw checklists");
  collect->add_option("--users", users)->required();
  collect->add_option("--pairs", pairs)->required();
  collect->add_option("--out", out)->required();
  collect->add_option("--max-attempts", max_attempts);
  collect->callback([&] {
    action = [&] {
      Config c = make_config(g);
      if (max_attempts > 0) c.collector.max_attempts = max_attempts;
      auto p = Providers::make(c);
      const auto r = run_collect(c, *p, users, pairs, out);
      std::cerr << "collected " << r.checklists.size() << " checklists (" << r.rejected.size()
                << " pairs without one)\n";
    };
  });

  std::string k_range = "2:12";
  std::size_t top_k = 0;
  auto* contrast = app.add_subcommand("contrast", "Build contrastive negative pools");
  contrast->add_option("--users", users)->required();
  contrast->add_option("--pairs", pairs)->required();
  contrast->add_option("--out", out)->required();
  contrast->add_option("--k-range", k_range);
  contrast->add_option("--top-k", top_k);
  contrast->callback([&] {
    action = [&] {
      Config c = make_config(g);
      const auto [lo, hi] = parse_range(k_range, "--k-range");
      if (contrast->count("--k-range") > 0) {
        c.contrast.k_min = static_cast<std::size_t>(lo);
        c.contrast.k_max = static_cast<std::size_t>(hi);
      }
      if (top_k > 0) c.contrast.top_k = top_k;
      c.validate();
      auto p = Providers::make(c);
      const auto r = run_contrast(c, *p, users, pairs, out);
      std::cerr << "clustered into k=" << r.clustering.k << " (silhouette " << r.clustering.silhouette
                << (r.clustering.degenerate ? ", degenerate" : "") << "); wrote " << r.records.size()
                << " negative pools\n";
    };
  });

  std::string tau = "0.4:0.9";
  auto* weight = app.add_subcommand("weight", "Saliency weights and labels -> training.jsonl");
  weight->add_option("--users", users)->required();
  weight->add_option("--checklists", checklists)->required();
  weight->add_option("--negatives", negatives)->required();
  weight->add_option("--tau", tau);
  weight->add_option("--out", out)->required();
  weight->callback([&] {
    action = [&] {
      Config c = make_config(g);
      if (weight->count("--tau") > 0) {
        const auto [t1, t2] = parse_range(tau, "--tau");
        c.thresholds = {t1, t2};
      }
      c.validate();
      auto p = Providers::make(c);
      const auto r = run_weight(c, *p, users, checklists, negatives, out);
      std::printf("training examples: %zu (skipped %zu)\n", r.examples.size(), r.skipped.size());
      for (Label l : {Label::kEssential, Label::kImportant, Label::kOptional}) {
        std::printf("  %-9s %6zu  %5.1f%%\n", std::string(to_string(l)).c_str(),
                    r.labels.counts[static_cast<std::size_t>(l)], 100.0 * r.labels.fraction(l));
      }
    };
  });

  auto* export_training = app.add_subcommand("export-training", "Prompt/completion JSONL for generator training");
  export_training->add_option("--training", training)->required();
  export_training->add_option("--out", out)->required();
  export_training->callback([&] {
    action = [&] {
      make_config(g);
      const std::size_t n = run_export_training(training, out);
      std::cerr << "exported " << n << " records\n";
    };
  });

  auto* score = app.add_subcommand("score", "Checklist rewards for candidate responses");
  score->add_option("--gp-file", gp_file)->required();
  score->add_option("--query", query)->required();
  score->add_option("--candidates", candidates)->required();
  score->add_option("--checklist", checklist_file, "Rendered labeled checklist (else generated)");
  score->add_option("--out", out)->required();
  score->callback([&] {
    action = [&] {
      const Config c = make_config(g);
      auto p = Providers::make(c);
      const std::string gp = trim(read_text_file(gp_file));
      const Checklist cl = obtain_checklist(*p, c, gp, query, checklist_file);
      std::vector<json> lines;
      for (const auto& cand : read_candidates(candidates)) {
        lines.push_back(reward_json(compute_reward(p->chat(), gp, query, cand, cl, c.weight_map, c.judge)));
      }
      write_lines(out, lines);
    };
  });

  auto* judge_pair = app.add_subcommand("judge-pair", "Pairwise decision between two responses");
  judge_pair->add_option("--gp-file", gp_file)->required();
  judge_pair->add_option("--query", query)->required();
  judge_pair->add_option("--a", a_text, "Response A (text, or @file)")->required();
  judge_pair->add_option("--b", b_text, "Response B (text, or @file)")->required();
  judge_pair->add_option("--checklist", checklist_file);
  judge_pair->callback([&] {
    action = [&] {
      const Config c = make_config(g);
      auto p = Providers::make(c);
      const auto text = [](const std::string& s) {
        return s.rfind('@', 0) == 0 ? read_text_file(s.substr(1)) : s;
      };
      const std::string gp = trim(read_text_file(gp_file));
      const Checklist cl = obtain_checklist(*p, c, gp, query, checklist_file);
      const auto d = decide_pair(p->chat(), gp, query, text(a_text), text(b_text), cl, c.weight_map, c.judge);
      print_json({{"winner", to_string(d.winner)},
                  {"reward_a", reward_json(d.reward_a)},
                  {"reward_b", reward_json(d.reward_b)},
                  {"checklist", checklist_text_json(cl)}});
    };
  });

  int runs = 0;
  std::string method = "weighted";
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Pairwise accuracy on test users");
  evaluate_cmd->add_option("--users", users)->required();
  evaluate_cmd->add_option("--pairs", pairs)->required();
  evaluate_cmd->add_option("--runs", runs);
  evaluate_cmd->add_option("--method", method)->check(CLI::IsMember({"weighted", "uniform"}));
  evaluate_cmd->add_option("--checklists", checklists, "training.jsonl-style fixed checklists");
  evaluate_cmd->add_option("--out", out, "Report path (default: run directory)");
  evaluate_cmd->callback([&] {
    action = [&] {
      Config c = make_config(g);
      if (runs > 0) c.eval_runs = runs;
      auto p = Providers::make(c);
      const auto u = load_corpus<UserRecord>(users);
      const auto ps = load_pairs(pairs, u);
      ChecklistSource source = checklists.empty() ? generated_checklists(p->generator(), c.generator)
                                                  : fixed_checklists(checklist_table(checklists));
      const WeightMap map = method == "uniform" ? WeightMap{1.0, 1.0, 1.0} : c.weight_map;
      ChecklistRewardMethod m(p->chat(), source, map, c.judge, method);
      const auto report = evaluate(u, ps, m, {c.eval_runs, c.seed, c.concurrency});
      const fs::path dir = make_run_dir(c.runs_dir, c.to_toml());
      const fs::path target = out.empty() ? dir / "eval.json" : fs::path(out);
      std::ofstream(target) << to_json(report).dump(2) << "\n";
      std::printf("accuracy %.4f +/- %.4f over %d runs, %zu pairs (user-macro %.4f)\n", report.mean,
                  report.ci95_halfwidth, c.eval_runs, report.n_pairs, report.user_macro_accuracy);
      std::cerr << "report: " << target.string() << "\n";
    };
  });

  std::vector<double> percentiles;
  auto* buckets = app.add_subcommand("buckets", "User-macro accuracy by history-length percentile");
  buckets->add_option("--users", users)->required();
  buckets->add_option("--report", report_file, "eval.json from evaluate")->required();
  buckets->add_option("--percentiles", percentiles)->delimiter(',');
  buckets->callback([&] {
    action = [&] {
      const Config c = make_config(g);
      const auto u = load_corpus<UserRecord>(users);
      const json rep = json::parse(read_text_file(report_file), nullptr, false);
      if (!rep.is_object() || !rep.contains("per_user_accuracy")) {
        throw ValidationError(report_file + " has no per_user_accuracy");
      }
      const auto acc = rep["per_user_accuracy"].get<std::map<std::string, double>>();
      print_json(to_json(bucket_by_sparsity(u, acc, percentiles.empty() ? c.bucket_percentiles : percentiles)));
    };
  });

  auto* bon = app.add_subcommand("bon", "Best-of-N selection by checklist reward");
  bon->add_option("--gp-file", gp_file)->required();
  bon->add_option("--query", query)->required();
  bon->add_option("--candidates", candidates)->required();
  bon->add_option("--checklist", checklist_file);
  bon->callback([&] {
    action = [&] {
      const Config c = make_config(g);
      auto p = Providers::make(c);
      const std::string gp = trim(read_text_file(gp_file));
      const auto cands = read_candidates(candidates);
      if (cands.size() != c.bon_n) {
        warn("got " + std::to_string(cands.size()) + " candidates; eval.bon_n is " + std::to_string(c.bon_n));
      }
      const Checklist cl = obtain_checklist(*p, c, gp, query, checklist_file);
      const auto r = best_of_n(p->chat(), gp, query, cands, cl, c.weight_map, c.judge, c.concurrency);
      json ranking = json::array();
      for (std::size_t i : r.ranking) ranking.push_back({{"index", i}, {"reward", r.rewards[i].reward}});
      print_json({{"selected", r.selected}, {"text", cands[r.selected]}, {"ranking", ranking}});
    };
  });

  auto* refine = app.add_subcommand("refine", "Rewrite a response with the checklist as feedback");
  refine->add_option("--gp-file", gp_file)->required();
  refine->add_option("--query", query)->required();
  refine->add_option("--response-file", response_file)->required();
  refine->add_option("--checklist", checklist_file);
  refine->callback([&] {
    action = [&] {
      const Config c = make_config(g);
      auto p = Providers::make(c);
      const std::string gp = trim(read_text_file(gp_file));
      const Checklist cl = obtain_checklist(*p, c, gp, query, checklist_file);
      const auto r = refine_and_score(p->chat(), p->chat(), gp, query, trim(read_text_file(response_file)),
                                      cl, c.weight_map, c.policy, c.judge);
      print_json({{"refined", r.refined},
                  {"reward_initial", r.initial_reward.reward},
                  {"reward_refined", r.refined_reward.reward},
                  {"delta", r.delta}});
    };
  });

  auto* sweep = app.add_subcommand("sweep-weights", "Accuracy over a grid of label weight maps");
  sweep->add_option("--users", users)->required();
  sweep->add_option("--pairs", pairs)->required();
  sweep->add_option("--checklists", checklists, "training.jsonl-style fixed checklists");
  sweep->callback([&] {
    action = [&] {
      const Config c = make_config(g);
      auto p = Providers::make(c);
      const auto u = load_corpus<UserRecord>(users);
      const auto ps = load_pairs(pairs, u);
      const auto by_id = index_users(u);
      ChecklistSource source = checklists.empty() ? generated_checklists(p->generator(), c.generator)
                                                  : fixed_checklists(checklist_table(checklists));
      std::vector<ScoredPair> scored(ps.size());
      parallel_for(ps.size(), c.concurrency, [&](std::size_t i) {
        const UserRecord& user = *by_id.at(ps[i].user_id);
        const std::string gp = user.general_preference.value_or("");
        Checklist cl = source(user, ps[i], c.seed);
        const JudgeContext ctx{gp, ps[i].query};
        scored[i] = {cl, score_checklist(p->chat(), cl, ps[i].chosen, ctx, c.judge),
                     score_checklist(p->chat(), cl, ps[i].rejected, ctx, c.judge)};
      });
      std::printf("%-9s %-9s %-9s %s\n", "essential", "important", "optional", "accuracy");
      for (const auto& row : sweep_weights(scored)) {
        std::printf("%-9.1f %-9.1f %-9.1f %.4f\n", row.map.essential, row.map.important,
                    row.map.optional_, row.accuracy);
      }
    };
  });

  std::string out_dir;
  std::size_t n_users = 20, n_test = 0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic tagged corpus for mock runs");
  synth->add_option("--out-dir", out_dir)->required();
  synth->add_option("--users", n_users);
  synth->add_option("--test-users", n_test);
  synth->callback([&] {
    action = [&] {
      const Config c = make_config(g);
      mock::SyntheticSpec spec;
      spec.users = n_users;
      spec.test_users = std::min(n_test, n_users);
      spec.seed = c.seed;
      const auto corpus = mock::make_synthetic_corpus(spec);
      fs::create_directories(out_dir);
      save_corpus(corpus.users, fs::path(out_dir) / "users.jsonl");
      save_corpus(corpus.pairs, fs::path(out_dir) / "pairs.jsonl");
      std::cerr << "wrote " << corpus.users.size() << " users and " << corpus.pairs.size() << " pairs\n";
    };
  });

  auto* validate_cmd = app.add_subcommand("validate", "Schema-check a corpus file");
  validate_cmd->add_option("--kind", kind)
      ->required()
      ->check(CLI::IsMember({"users", "pairs", "checklists", "negatives", "training", "rewards"}));
  validate_cmd->add_option("--file", file)->required();
  validate_cmd->add_option("--users", users, "users.jsonl for pair leak checks");
  validate_cmd->callback([&] {
    action = [&] {
      std::size_t n = 0;
      if (kind == "users") n = load_corpus<UserRecord>(file).size();
      if (kind == "pairs") {
        n = users.empty() ? load_corpus<PreferenceInstance>(file).size()
                          : load_pairs(file, load_corpus<UserRecord>(users)).size();
      }
      if (kind == "checklists") n = load_corpus<Checklist>(file).size();
      if (kind == "negatives") n = load_corpus<NegativeRecord>(file).size();
      if (kind == "training") n = load_corpus<TrainingExample>(file).size();
      if (kind == "rewards") n = load_corpus<RewardResult>(file).size();
      std::cout << file << ": " << n << " valid records\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (g.quiet) warnings_enabled() = false;
  try {
    action();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}
