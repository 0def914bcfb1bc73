#ifndef PCHECK_CONTRAST_HPP
#define PCHECK_CONTRAST_HPP

// Inter-user contrastive negatives.
//
// Users are clustered on their general-preference embeddings. For a target
// (user, query) the cluster whose centroid is farthest from the target's
// centroid is searched with query-conditioned embeddings, and the K most
// distant members answer the query in their own style. Those answers join the
// original rejected response to form the negative pool.

#include <algorithm>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pcheck/cluster.hpp"
#include "pcheck/corpus.hpp"
#include "pcheck/error.hpp"
#include "pcheck/parallel.hpp"
#include "pcheck/prompts.hpp"
#include "pcheck/providers.hpp"
#include "pcheck/util.hpp"

namespace pcheck {

inline constexpr std::string_view kQuerySeparator = "\n[QUERY]\n";

/// Text embedded for the fine stage.
inline std::string query_conditioned_text(std::string_view gp, std::string_view query) {
  return std::string(gp) + std::string(kQuerySeparator) + std::string(query);
}

struct ContrastOptions {
  std::size_t k_min = 2;
  std::size_t k_max = 12;
  std::size_t top_k = 3;
  int n_init = 10;
  std::string embedding_model = "qwen3-embedding-0.6b";
  std::vector<std::string> generator_models = {"qwen3-13b", "gpt-4o"};
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::size_t concurrency = 1;
};

/// Clusters every user that has a general preference.
inline UserClustering cluster_users(const std::vector<UserRecord>& users, EmbeddingProvider& embedder,
                                    const ContrastOptions& opts = {}) {
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  for (const auto& u : users) {
    if (u.general_preference && !trim(*u.general_preference).empty()) {
      ids.push_back(u.user_id);
      texts.push_back(*u.general_preference);
    }
  }
  std::vector<Vec> vectors(ids.size());
  parallel_for(ids.size(), opts.concurrency, [&](std::size_t i) {
    vectors[i] = embedder.embed({texts[i], opts.embedding_model});
  });
  // Order by id so the clustering does not depend on file order.
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  std::vector<std::string> sorted_ids;
  std::vector<Vec> sorted_vectors;
  for (std::size_t i : order) {
    sorted_ids.push_back(ids[i]);
    sorted_vectors.push_back(std::move(vectors[i]));
  }
  return cluster_vectors(sorted_ids, std::move(sorted_vectors),
                         {opts.k_min, opts.k_max, opts.seed, opts.n_init, opts.concurrency});
}

/// Other non-empty clusters, farthest centroid from `own` first (ties by
/// cluster index).
inline std::vector<std::size_t> clusters_by_centroid_distance(const UserClustering& clustering,
                                                              std::size_t own) {
  std::vector<std::size_t> counts(clustering.k, 0);
  for (const auto& [_, c] : clustering.assignments) ++counts[c];
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t c = 0; c < clustering.k; ++c) {
    if (c == own || counts[c] == 0) continue;
    ranked.emplace_back(cosine_distance(clustering.centroids[c], clustering.centroids[own]), c);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> out;
  for (const auto& [_, c] : ranked) out.push_back(c);
  return out;
}

inline ContrastSelection select_contrastive_users(const std::string& target, const std::string& query,
                                                  const UserClustering& clustering,
                                                  const std::map<std::string, std::string>& gps,
                                                  EmbeddingProvider& embedder, std::size_t top_k,
                                                  const std::string& embedding_model = "qwen3-embedding-0.6b") {
  if (top_k < 1) throw ValidationError("top_k must be >= 1");
  const auto own_it = clustering.assignments.find(target);
  if (own_it == clustering.assignments.end()) {
    throw ValidationError("user '" + target + "' is not clustered");
  }
  const auto gp_of = [&gps](const std::string& id) -> const std::string& {
    const auto it = gps.find(id);
    if (it == gps.end()) throw ValidationError("user '" + id + "' has no general preference");
    return it->second;
  };
  const Vec anchor = embedder.embed({query_conditioned_text(gp_of(target), query), embedding_model});
  using Scored = std::pair<double, std::string>;
  const auto by_distance = [](const Scored& a, const Scored& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  const auto score_members = [&](const std::vector<std::string>& ids) {
    std::vector<Scored> out;
    for (const auto& id : ids) {
      if (id == target) continue;
      const Vec v = embedder.embed({query_conditioned_text(gp_of(id), query), embedding_model});
      out.emplace_back(cosine_distance(anchor, v), id);
    }
    std::sort(out.begin(), out.end(), by_distance);
    return out;
  };

  ContrastSelection sel;
  sel.target_user = target;
  const auto order = clusters_by_centroid_distance(clustering, own_it->second);
  std::vector<Scored> picked;
  if (order.empty()) {
    sel.global_fallback = true;
    sel.candidate_cluster = own_it->second;
    std::vector<std::string> everyone;
    for (const auto& [id, _] : clustering.assignments) everyone.push_back(id);
    picked = score_members(everyone);
    if (picked.size() > top_k) picked.resize(top_k);
  } else {
    sel.candidate_cluster = order.front();
    for (std::size_t c : order) {
      if (picked.size() >= top_k) break;
      auto members = score_members(clustering.members(c));
      const std::size_t take = std::min(members.size(), top_k - picked.size());
      picked.insert(picked.end(), members.begin(), members.begin() + static_cast<long>(take));
    }
    std::stable_sort(picked.begin(), picked.end(), by_distance);
  }
  for (auto& [d, id] : picked) {
    sel.selected_users.push_back(std::move(id));
    sel.distances.push_back(d);
  }
  return sel;
}

struct NegativeOutcome {
  NegativePool pool;
  std::vector<std::string> notes;
  // The pool ended with fewer than two responses.
  bool flagged = false;
};

/// One response per (selected user, generator model), in selection order.
/// Failed or empty generations are skipped and noted.
inline NegativeOutcome generate_negatives(const ContrastSelection& selection, const std::string& query,
                                          const std::string& original_rejected,
                                          const std::map<std::string, std::string>& gps,
                                          ChatProvider& chat,
                                          const std::vector<std::string>& generator_models,
                                          double temperature = 1.0, std::uint64_t seed = 0) {
  NegativeOutcome out;
  out.pool.original_rejected = original_rejected;
  for (const auto& user : selection.selected_users) {
    const auto gp = gps.find(user);
    if (gp == gps.end()) {
      out.notes.push_back("user '" + user + "' has no general preference");
      continue;
    }
    for (const auto& model : generator_models) {
      ChatRequest req;
      req.template_id = std::string(prompt_id::kRespond);
      req.variables = {{"gp", gp->second}, {"query", query}};
      req.temperature = temperature;
      req.model_id = model;
      req.sample_id = derive_seed(seed, "negative", selection.target_user, user);
      try {
        std::string text = trim(chat.chat(req));
        if (text.empty()) {
          out.notes.push_back("empty response from " + model + " for user '" + user + "'");
          continue;
        }
        out.pool.synthetic.push_back({user, model, std::move(text)});
      } catch (const ProviderError& e) {
        warn("negative generation failed (" + model + ", " + user + "): " + e.what());
        out.notes.push_back("generation failed for " + model + " / '" + user + "': " + e.what());
      }
    }
  }
  out.flagged = out.pool.size() < 2;
  return out;
}

struct ContrastRun {
  UserClustering clustering;
  std::vector<NegativeRecord> records;
};

/// Builds negative pools for every pair whose user has a general preference.
inline ContrastRun contrast_corpus(const std::vector<UserRecord>& users,
                                   const std::vector<PreferenceInstance>& pairs, ChatProvider& chat,
                                   EmbeddingProvider& embedder, const ContrastOptions& opts = {}) {
  ContrastRun run;
  run.clustering = cluster_users(users, embedder, opts);
  std::map<std::string, std::string> gps;
  for (const auto& u : users) {
    if (u.general_preference) gps.emplace(u.user_id, *u.general_preference);
  }
  std::vector<std::optional<NegativeRecord>> slots(pairs.size());
  parallel_for(pairs.size(), opts.concurrency, [&](std::size_t i) {
    const PreferenceInstance& p = pairs[i];
    if (!run.clustering.assignments.contains(p.user_id)) return;
    NegativeRecord rec;
    rec.user_id = p.user_id;
    rec.query = p.query;
    rec.chosen = p.chosen;
    rec.selection = select_contrastive_users(p.user_id, p.query, run.clustering, gps, embedder,
                                             opts.top_k, opts.embedding_model);
    auto neg = generate_negatives(rec.selection, p.query, p.rejected, gps, chat,
                                  opts.generator_models, opts.temperature, opts.seed);
    rec.pool = std::move(neg.pool);
    rec.notes = std::move(neg.notes);
    rec.flagged = neg.flagged;
    if (rec.selection.global_fallback) rec.notes.push_back("single cluster; global fallback");
    slots[i] = std::move(rec);
  });
  for (auto& s : slots) {
    if (s) run.records.push_back(std::move(*s));
  }
  return run;
}

}  // namespace pcheck

#endif  // PCHECK_CONTRAST_HPP
