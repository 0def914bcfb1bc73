#ifndef PCHECK_PIPELINE_HPP
#define PCHECK_PIPELINE_HPP

// File-level stage runners shared by the CLI and end-to-end tests.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pcheck/collector.hpp"
#include "pcheck/config.hpp"
#include "pcheck/contrast.hpp"
#include "pcheck/corpus.hpp"
#include "pcheck/http_provider.hpp"
#include "pcheck/judge.hpp"
#include "pcheck/mock.hpp"
#include "pcheck/summarizer.hpp"
#include "pcheck/util.hpp"
#include "pcheck/weighting.hpp"

namespace pcheck {

/// Backends plus their cache wrappers.
class Providers {
 public:
  ChatProvider& chat() { return chat_cache_ ? *chat_cache_ : *chat_backend_; }
  EmbeddingProvider& embedder() { return embed_cache_ ? *embed_cache_ : *embed_backend_; }
  ChatProvider& generator() {
    if (generator_cache_) return *generator_cache_;
    return generator_backend_ ? *generator_backend_ : chat();
  }
  mock::MockWorld* world() { return world_.get(); }

  /// Requests that reached a backend (cache misses).
  std::size_t backend_calls() const {
    std::size_t n = chat_backend_->calls() + embed_backend_->calls();
    if (generator_backend_) n += generator_backend_->calls();
    return n;
  }

  static std::unique_ptr<Providers> make(const Config& config) {
    auto p = std::unique_ptr<Providers>(new Providers());
    if (config.mock) {
      p->world_ = std::make_unique<mock::MockWorld>(config.seed);
      p->chat_backend_ = std::make_unique<mock::MockChatProvider>(*p->world_);
      p->embed_backend_ = std::make_unique<mock::MockEmbeddingProvider>(*p->world_);
    } else {
      HttpConfig http;
      http.api_base = config.api_base;
      http.api_key = config.api_key;
      p->chat_backend_ = std::make_unique<HttpChatProvider>(http);
      p->embed_backend_ = std::make_unique<HttpEmbeddingProvider>(http);
      if (!config.generator_endpoint.empty()) {
        HttpConfig gen = http;
        gen.api_base = config.generator_endpoint;
        p->generator_backend_ = std::make_unique<HttpChatProvider>(gen);
      }
    }
    p->chat_backend_->set_concurrency_limit(config.concurrency);
    p->embed_backend_->set_concurrency_limit(config.concurrency);
    if (!config.cache_dir.empty()) {
      p->chat_cache_ = std::make_unique<CachedChatProvider>(*p->chat_backend_, config.cache_dir);
      p->embed_cache_ = std::make_unique<CachedEmbeddingProvider>(*p->embed_backend_, config.cache_dir);
      if (p->generator_backend_) {
        p->generator_cache_ =
            std::make_unique<CachedChatProvider>(*p->generator_backend_, config.cache_dir);
      }
    }
    return p;
  }

 private:
  Providers() = default;

  std::unique_ptr<mock::MockWorld> world_;
  std::unique_ptr<ChatProvider> chat_backend_;
  std::unique_ptr<EmbeddingProvider> embed_backend_;
  std::unique_ptr<ChatProvider> generator_backend_;
  std::unique_ptr<CachedChatProvider> chat_cache_;
  std::unique_ptr<CachedEmbeddingProvider> embed_cache_;
  std::unique_ptr<CachedChatProvider> generator_cache_;
};

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CollectorOptions collector_options(const Config& c) {
  CollectorOptions o = c.collector;
  o.judge = c.judge;
  if (!c.collector_examples_file.empty()) o.few_shot_examples = read_text_file(c.collector_examples_file);
  return o;
}

inline SummarizerOptions summarizer_options(const Config& c) {
  SummarizerOptions o = c.summarizer;
  o.judge = c.judge;
  return o;
}

// ---------------------------------------------------------------------------
// Stages.

inline CorpusSummary run_summarize(const Config& config, Providers& providers,
                                   const std::filesystem::path& users_path,
                                   const std::filesystem::path& out_path) {
  auto users = load_corpus<UserRecord>(users_path);
  auto summary = summarize_corpus(providers.chat(), users, summarizer_options(config), config.concurrency);
  apply_summaries(users, summary);
  for (const auto& id : summary.flagged) warn("user '" + id + "': summary gate exhausted, kept best candidate");
  for (const auto& [id, why] : summary.failures) warn("user '" + id + "': " + why);
  save_corpus(users, out_path);
  return summary;
}

inline CorpusCollection run_collect(const Config& config, Providers& providers,
                                    const std::filesystem::path& users_path,
                                    const std::filesystem::path& pairs_path,
                                    const std::filesystem::path& out_path) {
  const auto users = load_corpus<UserRecord>(users_path);
  const auto pairs = load_pairs(pairs_path, users);
  auto result = collect_corpus(providers.chat(), users, pairs, collector_options(config), config.concurrency);
  for (const auto& [i, why] : result.rejected) {
    warn("pair " + std::to_string(i) + " (" + pairs[i].user_id + "): " + why);
  }
  save_corpus(result.checklists, out_path);
  return result;
}

inline ContrastRun run_contrast(const Config& config, Providers& providers,
                                const std::filesystem::path& users_path,
                                const std::filesystem::path& pairs_path,
                                const std::filesystem::path& out_path) {
  const auto users = load_corpus<UserRecord>(users_path);
  auto pairs = load_pairs(pairs_path, users);
  const auto by_id = index_users(users);
  std::erase_if(pairs, [&](const PreferenceInstance& p) { return by_id.at(p.user_id)->split != Split::kTrain; });
  ContrastOptions opts = config.contrast;
  opts.concurrency = config.concurrency;
  auto run = contrast_corpus(users, pairs, providers.chat(), providers.embedder(), opts);
  if (run.clustering.degenerate) warn("all general preferences embed identically; clustering is degenerate");
  for (const auto& r : run.records) {
    if (r.flagged) warn("negative pool for user '" + r.user_id + "' has fewer than two responses");
  }
  save_corpus(run.records, out_path);
  return run;
}

struct WeightRun {
  std::vector<TrainingExample> examples;
  LabelDistribution labels;
  std::vector<std::string> skipped;
};

/// Scores chosen and every pool response with each checklist, turns the
/// scores into saliency weights and labels, and assembles training examples.
inline WeightRun weight_checklists(ChatProvider& judge, const std::vector<UserRecord>& users,
                                   const std::vector<Checklist>& checklists,
                                   const std::vector<NegativeRecord>& negatives,
                                   const ThresholdConfig& thresholds, double epsilon,
                                   const JudgeOptions& judge_opts, std::size_t concurrency = 1) {
  thresholds.validate();
  const auto by_id = index_users(users);
  std::map<std::pair<std::string, std::string>, const NegativeRecord*> neg_index;
  for (const auto& n : negatives) neg_index[{n.user_id, n.query}] = &n;

  std::vector<std::optional<TrainingExample>> slots(checklists.size());
  std::vector<std::string> reasons(checklists.size());
  parallel_for(checklists.size(), concurrency, [&](std::size_t i) {
    const Checklist& c = checklists[i];
    const auto user = by_id.find(c.user_id);
    if (user == by_id.end() || !user->second->general_preference) {
      reasons[i] = "no general preference for user '" + c.user_id + "'";
      return;
    }
    const auto neg = neg_index.find({c.user_id, c.query});
    if (neg == neg_index.end()) {
      reasons[i] = "no negative pool for user '" + c.user_id + "'";
      return;
    }
    const std::string& gp = *user->second->general_preference;
    const JudgeContext ctx{gp, c.query};
    const ScoreVector chosen = score_checklist(judge, c, neg->second->chosen, ctx, judge_opts);
    std::vector<ScoreVector> pool;
    for (const auto& y : neg->second->pool.responses()) {
      pool.push_back(score_checklist(judge, c, y, ctx, judge_opts));
    }
    const SaliencyTable table = saliency(chosen, pool, epsilon);
    const auto labels = verbalize(table, thresholds);
    slots[i] = build_training_example(gp, c.query, c, labels, table.normalized);
  });

  WeightRun out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) {
      out.skipped.push_back(reasons[i]);
      continue;
    }
    for (const auto& cr : slots[i]->labeled_checklist.criteria) out.labels.add(*cr.label);
    out.examples.push_back(std::move(*slots[i]));
  }
  return out;
}

inline WeightRun run_weight(const Config& config, Providers& providers,
                            const std::filesystem::path& users_path,
                            const std::filesystem::path& checklists_path,
                            const std::filesystem::path& negatives_path,
                            const std::filesystem::path& out_path) {
  const auto users = load_corpus<UserRecord>(users_path);
  const auto checklists = load_corpus<Checklist>(checklists_path);
  const auto negatives = load_corpus<NegativeRecord>(negatives_path);
  auto run = weight_checklists(providers.chat(), users, checklists, negatives, config.thresholds,
                               config.epsilon, config.judge, config.concurrency);
  for (const auto& why : run.skipped) warn("skipped checklist: " + why);
  save_corpus(run.examples, out_path);
  return run;
}

/// Prompt/completion pair for supervised generator training.
struct SftRecord {
  std::string prompt;
  std::string completion;
};

inline SftRecord to_sft(const TrainingExample& t) {
  const PromptTemplate& tmpl = prompt_template(prompt_id::kGenerateChecklist);
  return {tmpl.render({{"gp", t.general_preference}, {"query", t.query}}),
          render_training_target(t.labeled_checklist)};
}

inline std::size_t run_export_training(const std::filesystem::path& training_path,
                                       const std::filesystem::path& out_path) {
  const auto examples = load_corpus<TrainingExample>(training_path);
  const auto tmp = std::filesystem::path(out_path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + out_path.string());
    for (const auto& t : examples) {
      const SftRecord r = to_sft(t);
      out << json{{"prompt", r.prompt}, {"completion", r.completion}}.dump(
                 -1, ' ', false, json::error_handler_t::strict)
          << '\n';
    }
  }
  std::filesystem::rename(tmp, out_path);
  return examples.size();
}

}  // namespace pcheck

#endif  // PCHECK_PIPELINE_HPP
