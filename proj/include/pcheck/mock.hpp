#ifndef PCHECK_MOCK_HPP
#define PCHECK_MOCK_HPP

// Deterministic stand-ins for model providers.
//
// The mock world is driven by aspect tags embedded in text. A criterion or a
// general preference names aspects as `[[name]]`; a response states its
// hidden quality on an aspect as `[[name=0.8]]`. The mock judge scores a
// criterion on a response as clamp(round(q * 9) + 1, 1, 10) where q is
//   1. an explicit override registered with MockWorld::set_quality, else
//   2. the mean tag value of the criterion's aspects in the response (an
//      aspect the response does not mention counts as 0), else
//   3. a seeded hash of (seed, sample_id, criterion, response) for criteria
//      without aspect tags.
// Every other template (summaries, checklists, negatives, refinements) is
// answered by reading and writing the same tags, so a whole pipeline run is a
// pure function of its inputs and the seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pcheck/corpus.hpp"
#include "pcheck/prompts.hpp"
#include "pcheck/providers.hpp"
#include "pcheck/util.hpp"

namespace pcheck::mock {

inline constexpr std::size_t kEmbeddingDim = 64;

struct AspectTag {
  std::string name;
  std::optional<double> value;
};

inline std::vector<AspectTag> find_tags(std::string_view text) {
  static const std::regex tag_re(R"(\[\[([A-Za-z0-9_\-]+)(?:=([0-9]*\.?[0-9]+))?\]\])");
  std::vector<AspectTag> out;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), tag_re); it != std::sregex_iterator();
       ++it) {
    AspectTag tag{(*it)[1].str(), std::nullopt};
    if ((*it)[2].matched) tag.value = std::stod((*it)[2].str());
    out.push_back(std::move(tag));
  }
  return out;
}

/// Aspect names mentioned in `text`, unique, in order of first appearance.
inline std::vector<std::string> aspects_in(std::string_view text) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto& t : find_tags(text)) {
    if (seen.insert(t.name).second) out.push_back(std::move(t.name));
  }
  return out;
}

/// Valued tags of a response; the last occurrence of an aspect wins.
inline std::map<std::string, double> qualities_in(std::string_view response) {
  std::map<std::string, double> out;
  for (const auto& t : find_tags(response)) {
    if (t.value) out[t.name] = std::clamp(*t.value, 0.0, 1.0);
  }
  return out;
}

inline std::string tag(std::string_view name) { return "[[" + std::string(name) + "]]"; }

inline std::string tag(std::string_view name, double value) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << std::clamp(value, 0.0, 1.0);
  return "[[" + std::string(name) + "=" + os.str() + "]]";
}

/// Rewrites (or appends) the valued tag of `aspect` in `response`.
inline std::string with_quality(std::string response, std::string_view aspect, double value) {
  const std::regex re("\\[\\[" + std::string(aspect) + R"(=[0-9]*\.?[0-9]+\]\])");
  const std::string replacement = tag(aspect, value);
  if (std::regex_search(response, re)) return std::regex_replace(response, re, replacement);
  return response + " " + replacement;
}

inline int score_from_quality(double q) {
  const long s = std::lround(q * 9.0) + 1;
  return static_cast<int>(std::clamp<long>(s, kMinScore, kMaxScore));
}

class MockWorld {
 public:
  explicit MockWorld(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  void set_quality(std::string_view criterion, std::string_view response, double q) {
    overrides_[{single_line(criterion), std::string(response)}] = std::clamp(q, 0.0, 1.0);
  }

  /// Registers a fixed embedding for an exact text.
  void set_embedding(std::string_view text, std::vector<double> v) {
    embeddings_[std::string(text)] = std::move(v);
  }

  const std::vector<double>* embedding_for(std::string_view text) const {
    const auto it = embeddings_.find(std::string(text));
    return it == embeddings_.end() ? nullptr : &it->second;
  }

  double quality(std::string_view criterion, std::string_view response,
                 std::uint64_t sample_id = 0) const {
    const std::string key = single_line(criterion);
    if (!random_judge) {
      if (const auto it = overrides_.find({key, std::string(response)}); it != overrides_.end()) {
        return it->second;
      }
      const auto aspects = aspects_in(key);
      if (!aspects.empty()) {
        const auto q = qualities_in(response);
        double total = 0.0;
        for (const auto& a : aspects) {
          const auto it = q.find(a);
          total += it == q.end() ? 0.0 : it->second;
        }
        return total / static_cast<double>(aspects.size());
      }
    }
    return unit_double(derive_seed(seed_, "quality", sample_id, key, response));
  }

  int judge_score(std::string_view criterion, std::string_view response,
                  std::uint64_t sample_id = 0) const {
    return score_from_quality(quality(criterion, response, sample_id));
  }

  // Hidden ground-truth criteria per user, ordered by importance. Used by
  // synthetic fixtures to build oracle checklists.
  std::map<std::string, std::vector<std::string>> hidden_criteria;

  // The refine template returns its input unchanged.
  bool refine_identity = false;
  // Every judge score comes from the seeded hash, ignoring tags (coin-flip
  // judge).
  bool random_judge = false;

 private:
  std::uint64_t seed_;
  std::map<std::pair<std::string, std::string>, double> overrides_;
  std::map<std::string, std::vector<double>> embeddings_;
};

namespace detail {

inline std::string criterion_for(std::string_view aspect) {
  return "The response demonstrates " + tag(aspect) + ".";
}

/// Per-aspect mean of (chosen - rejected) quality over a rendered history.
inline std::map<std::string, double> history_gains(std::string_view history) {
  static constexpr std::string_view kChosen = "[Chosen Model Response]:";
  static constexpr std::string_view kRejected = "[Rejected Model Response]:";
  static constexpr std::string_view kItem = "### Interaction";
  std::map<std::string, double> gains;
  std::size_t items = 0;
  std::size_t pos = 0;
  while (true) {
    const std::size_t c = history.find(kChosen, pos);
    if (c == std::string_view::npos) break;
    const std::size_t r = history.find(kRejected, c);
    if (r == std::string_view::npos) break;
    std::size_t end = history.find(kItem, r);
    if (end == std::string_view::npos) end = history.size();
    const auto chosen = qualities_in(history.substr(c, r - c));
    const auto rejected = qualities_in(history.substr(r, end - r));
    std::set<std::string> names;
    for (const auto& [a, _] : chosen) names.insert(a);
    for (const auto& [a, _] : rejected) names.insert(a);
    for (const auto& a : names) {
      const double qc = chosen.contains(a) ? chosen.at(a) : 0.0;
      const double qr = rejected.contains(a) ? rejected.at(a) : 0.0;
      gains[a] += qc - qr;
    }
    ++items;
    pos = end;
  }
  for (auto& [_, g] : gains) g /= static_cast<double>(items);
  return gains;
}

inline std::vector<double> gaussian_vector(std::uint64_t seed, std::size_t dim) {
  std::vector<double> v(dim);
  std::uint64_t state = seed;
  for (std::size_t i = 0; i < dim; i += 2) {
    state = splitmix64(state);
    const double u1 = std::max(unit_double(state), 1e-300);
    state = splitmix64(state);
    const double u2 = unit_double(state);
    const double r = std::sqrt(-2.0 * std::log(u1));
    v[i] = r * std::cos(2.0 * M_PI * u2);
    if (i + 1 < dim) v[i + 1] = r * std::sin(2.0 * M_PI * u2);
  }
  return v;
}

inline void normalize_in_place(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v.assign(v.size(), 0.0);
    v[0] = 1.0;
    return;
  }
  for (double& x : v) x /= norm;
}

/// Criterion texts out of the judge's numbered listing.
inline std::vector<std::string> numbered_lines(std::string_view listing) {
  std::vector<std::string> out;
  for (const auto& line : split(listing, '\n')) {
    const std::string t = trim(line);
    const std::size_t dot = t.find(". ");
    if (dot == std::string::npos || dot == 0) continue;
    if (!std::all_of(t.begin(), t.begin() + static_cast<long>(dot),
                     [](unsigned char ch) { return std::isdigit(ch) != 0; })) {
      continue;
    }
    out.push_back(t.substr(dot + 2));
  }
  return out;
}

}  // namespace detail

class MockChatProvider : public ChatProvider {
 public:
  // Minimum mean chosen-minus-rejected quality for an aspect to enter a
  // mock summary.
  static constexpr double kGainThreshold = 0.3;

  explicit MockChatProvider(const MockWorld& world) : world_(world) {}

  std::string kind() const override { return "mock:" + std::to_string(world_.seed()); }

  /// Queues literal answers for a template; they are served in order before
  /// the world's own behavior resumes.
  void script(std::string_view template_id, std::vector<std::string> answers) {
    std::lock_guard<std::mutex> lock(mu_);
    auto& q = scripts_[std::string(template_id)];
    for (auto& a : answers) q.push_back(std::move(a));
  }

 protected:
  std::string complete(const ChatRequest& req) override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (auto it = scripts_.find(req.template_id); it != scripts_.end() && !it->second.empty()) {
        std::string out = std::move(it->second.front());
        it->second.pop_front();
        return out;
      }
    }
    const auto var = [&req](const char* name) -> const std::string& {
      return req.variables.at(name);
    };
    const std::string_view id = req.template_id;
    if (id == prompt_id::kSummarize) return summarize(var("history"));
    if (id == prompt_id::kCollect) return collect(var("gp"), var("chosen"), var("rejected"));
    if (id == prompt_id::kJudge) return judge(var("checklist"), var("response"), req.sample_id);
    if (id == prompt_id::kRespond) return respond(var("gp"), var("query"), req.model_id);
    if (id == prompt_id::kInferChecklist || id == prompt_id::kGenerateChecklist) {
      return generate(var("gp"));
    }
    if (id == prompt_id::kRefine) return refine(var("response"), var("checklist"));
    return "mock output " + std::to_string(derive_seed(world_.seed(), req.template_id, req.sample_id));
  }

 private:
  std::string summarize(std::string_view history) const {
    std::vector<std::pair<std::string, double>> ranked;
    for (const auto& [a, g] : detail::history_gains(history)) {
      if (g > kGainThreshold) ranked.emplace_back(a, g);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& x, const auto& y) { return x.second > y.second; });
    if (ranked.empty()) return "This user shows no consistent preference across the history.";
    std::vector<std::string> names;
    for (const auto& [a, _] : ranked) names.push_back(tag(a));
    return "This user consistently prefers responses that show " + join(names, ", ") +
           ", in decreasing order of importance.";
  }

  std::string collect(std::string_view gp, std::string_view chosen,
                      std::string_view rejected) const {
    const std::vector<std::string> gp_aspects = aspects_in(gp);
    std::vector<std::string> aspects = gp_aspects;
    const auto qc = qualities_in(chosen);
    const auto qr = qualities_in(rejected);
    std::set<std::string> have(aspects.begin(), aspects.end());
    for (const auto& [a, v] : qc) {
      const double other = qr.contains(a) ? qr.at(a) : 0.0;
      if (v > other && have.insert(a).second) aspects.push_back(a);
    }
    json items = json::array();
    for (const auto& a : aspects) {
      const bool from_gp = std::find(gp_aspects.begin(), gp_aspects.end(), a) != gp_aspects.end();
      items.push_back({{"evidence", from_gp ? "GP emphasizes " + a : "Q calls for " + a},
                       {"facet", a},
                       {"criterion", detail::criterion_for(a)}});
    }
    if (items.empty()) {
      items.push_back({{"evidence", "Q asks for a helpful answer"},
                       {"facet", "helpfulness"},
                       {"criterion", "The response answers the query helpfully."}});
    }
    return "Here is the checklist:\n" + json{{"checklist", items}}.dump(2);
  }

  std::string judge(std::string_view listing, std::string_view response,
                    std::uint64_t sample_id) const {
    json results = json::array();
    const auto criteria = detail::numbered_lines(listing);
    for (std::size_t i = 0; i < criteria.size(); ++i) {
      results.push_back({{"index", i + 1},
                         {"criterion", criteria[i]},
                         {"reasoning", "mock assessment"},
                         {"score", world_.judge_score(criteria[i], response, sample_id)}});
    }
    return json{{"results", results}}.dump();
  }

  std::string respond(std::string_view gp, std::string_view query,
                      std::string_view model_id) const {
    std::string out = "Response by " + std::string(model_id) + " to \"" + single_line(query) + "\":";
    for (const auto& a : aspects_in(gp)) {
      const double q = 0.75 + 0.25 * unit_double(derive_seed(world_.seed(), "respond", model_id, gp, a));
      out += " " + tag(a, q);
    }
    return out;
  }

  std::string generate(std::string_view gp) const {
    const auto aspects = aspects_in(gp);
    if (aspects.empty()) {
      return "- [Essential] The response answers the query helpfully. | evidence: Q asks for help";
    }
    std::string out;
    for (std::size_t i = 0; i < aspects.size(); ++i) {
      const char* label = i == 0 ? "Essential" : (i == 1 ? "Important" : "Optional");
      if (i > 0) out += "\n";
      out += "- [" + std::string(label) + "] " + detail::criterion_for(aspects[i]) +
             " | evidence: GP emphasizes " + aspects[i];
    }
    return out;
  }

  std::string refine(const std::string& response, std::string_view checklist) const {
    if (world_.refine_identity) return response;
    std::string out = response;
    for (const auto& a : aspects_in(checklist)) out = with_quality(out, a, 1.0);
    return out;
  }

  const MockWorld& world_;
  std::mutex mu_;
  std::map<std::string, std::deque<std::string>> scripts_;
};

/// Seeded hash-derived unit vectors. Texts carrying aspect tags embed near
/// the sum of their aspects' basis vectors, so users with similar tagged
/// preferences cluster together.
class MockEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit MockEmbeddingProvider(const MockWorld& world, std::size_t dim = kEmbeddingDim)
      : world_(world), dim_(dim) {}

  std::string kind() const override {
    return "mock:" + std::to_string(world_.seed()) + ":" + std::to_string(dim_);
  }

 protected:
  std::vector<double> compute(const EmbeddingRequest& req) override {
    if (const auto* fixed = world_.embedding_for(req.text)) {
      std::vector<double> v = *fixed;
      detail::normalize_in_place(v);
      return v;
    }
    std::vector<double> v = detail::gaussian_vector(derive_seed(world_.seed(), "text", req.text), dim_);
    const auto aspects = aspects_in(req.text);
    if (!aspects.empty()) {
      detail::normalize_in_place(v);
      for (double& x : v) x *= 0.15;
      for (const auto& a : aspects) {
        auto basis = detail::gaussian_vector(derive_seed(world_.seed(), "aspect", a), dim_);
        detail::normalize_in_place(basis);
        for (std::size_t i = 0; i < dim_; ++i) v[i] += basis[i];
      }
    }
    detail::normalize_in_place(v);
    return v;
  }

 private:
  const MockWorld& world_;
  std::size_t dim_;
};

// ---------------------------------------------------------------------------
// Synthetic corpora.

struct SyntheticSpec {
  std::size_t users = 20;
  std::size_t test_users = 0;
  std::size_t history_len = 6;
  std::size_t pairs_per_user = 2;
  std::size_t hidden_per_user = 3;
  std::vector<std::string> aspects = {"concise", "formal",   "examples", "stepwise",
                                      "empathy", "citations", "humor",   "technical"};
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::vector<UserRecord> users;
  std::vector<PreferenceInstance> pairs;
  // user_id -> hidden aspects, most important first.
  std::map<std::string, std::vector<std::string>> hidden;
};

/// Builds users whose chosen responses beat rejected ones on every hidden
/// aspect while distractor aspects are random.
inline SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
  SyntheticCorpus out;
  std::uint64_t state = spec.seed;
  const auto next = [&state] {
    state = splitmix64(state);
    return unit_double(state);
  };
  const auto make_response = [&](const std::vector<std::string>& hidden, bool chosen,
                                 const std::string& label) {
    std::string text = label;
    for (const auto& a : spec.aspects) {
      const bool is_hidden = std::find(hidden.begin(), hidden.end(), a) != hidden.end();
      double q = next();
      if (is_hidden) q = chosen ? 0.6 + 0.4 * next() : 0.3 * next();
      text += " " + tag(a, q);
    }
    return text;
  };
  for (std::size_t u = 0; u < spec.users; ++u) {
    char id[32];
    std::snprintf(id, sizeof(id), "u%03zu", u);
    std::vector<std::string> pool = spec.aspects;
    std::vector<std::string> hidden;
    for (std::size_t h = 0; h < std::min(spec.hidden_per_user, pool.size()); ++h) {
      const std::size_t pick = static_cast<std::size_t>(next() * static_cast<double>(pool.size())) % pool.size();
      hidden.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<long>(pick));
    }
    UserRecord user;
    user.user_id = id;
    user.split = u < spec.users - spec.test_users ? Split::kTrain : Split::kTest;
    for (std::size_t i = 0; i < spec.history_len; ++i) {
      const std::string q = "History question " + std::to_string(i) + " from " + user.user_id;
      user.history.push_back({q, make_response(hidden, true, "Answer A to " + q + ":"),
                              make_response(hidden, false, "Answer B to " + q + ":")});
    }
    for (std::size_t i = 0; i < spec.pairs_per_user; ++i) {
      const std::string q = "Target question " + std::to_string(i) + " from " + user.user_id;
      out.pairs.push_back({user.user_id, q, make_response(hidden, true, "Answer A to " + q + ":"),
                           make_response(hidden, false, "Answer B to " + q + ":")});
    }
    out.hidden[user.user_id] = hidden;
    out.users.push_back(std::move(user));
  }
  return out;
}

}  // namespace pcheck::mock

#endif  // PCHECK_MOCK_HPP
