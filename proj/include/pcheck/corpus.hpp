#ifndef PCHECK_CORPUS_HPP
#define PCHECK_CORPUS_HPP

// Domain records and their line-delimited JSON corpora.
//
// Every record kind has a Codec<T> specialization providing encode/decode and
// validation. Decoding is strict: unknown keys, missing required keys and
// wrongly typed values are schema violations. Encoding emits keys in sorted
// order (nlohmann::json objects are ordered maps), so serialization is
// canonical and byte-stable.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pcheck/error.hpp"
#include "pcheck/util.hpp"

namespace pcheck {

inline constexpr double kWeightSumTolerance = 1e-9;
// Rounding residue of the decimal boundary itself (1 - 0.999999999 > 1e-9).
inline constexpr double kWeightSumSlack = 1e-15;
inline constexpr double kRewardTolerance = 1e-9;
inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 10;
// Upper bound on criteria per checklist; longer outputs are truncated.
inline constexpr std::size_t kMaxChecklistSize = 12;

enum class Split { kTrain, kTest };
enum class Label { kEssential, kImportant, kOptional };
enum class Provenance { kCollected, kGenerated };

inline std::string_view to_string(Split s) {
  return s == Split::kTrain ? "train" : "test";
}

inline std::string_view to_string(Label l) {
  switch (l) {
    case Label::kEssential:
      return "Essential";
    case Label::kImportant:
      return "Important";
    case Label::kOptional:
      return "Optional";
  }
  return "?";
}

inline std::string_view to_string(Provenance p) {
  return p == Provenance::kCollected ? "collected" : "generated";
}

inline std::optional<Label> label_from_string(std::string_view s) {
  if (s == "Essential") return Label::kEssential;
  if (s == "Important") return Label::kImportant;
  if (s == "Optional") return Label::kOptional;
  return std::nullopt;
}

/// Rank used for monotone labeling checks: Essential < Important < Optional.
inline int label_rank(Label l) { return static_cast<int>(l); }

struct RejectionGateReport {
  int attempts = 0;
  bool accepted = false;
  int validation_pairs_used = 0;

  bool operator==(const RejectionGateReport&) const = default;
};

struct HistoryItem {
  std::string query;
  std::string chosen;
  std::string rejected;

  bool operator==(const HistoryItem&) const = default;
};

struct UserRecord {
  std::string user_id;
  std::vector<HistoryItem> history;
  std::optional<std::string> general_preference;
  Split split = Split::kTrain;
  // Outcome of the summary gate; present once the user was summarized.
  std::optional<RejectionGateReport> gp_gate;

  bool operator==(const UserRecord&) const = default;
};

struct PreferenceInstance {
  std::string user_id;
  std::string query;
  std::string chosen;
  std::string rejected;

  bool operator==(const PreferenceInstance&) const = default;
};

struct Criterion {
  std::size_t index = 0;
  std::string text;
  std::string evidence;
  std::optional<double> weight;
  std::optional<Label> label;

  bool operator==(const Criterion&) const = default;
};

struct Checklist {
  std::string user_id;
  std::string query;
  std::vector<Criterion> criteria;
  Provenance provenance = Provenance::kCollected;
  std::optional<RejectionGateReport> gate;

  std::size_t size() const { return criteria.size(); }
  bool operator==(const Checklist&) const = default;
};

struct TrainingExample {
  std::string general_preference;
  std::string query;
  Checklist labeled_checklist;

  bool operator==(const TrainingExample&) const = default;
};

struct ScoreVector {
  std::vector<int> scores;
  std::size_t checklist_len = 0;

  std::size_t size() const { return scores.size(); }
  int operator[](std::size_t k) const { return scores[k]; }
  bool operator==(const ScoreVector&) const = default;
};

struct RewardResult {
  double reward = 0.0;
  ScoreVector per_criterion_scores;
  std::vector<double> weights;
  std::string checklist_id;

  bool operator==(const RewardResult&) const = default;
};

struct ContrastSelection {
  std::string target_user;
  std::size_t candidate_cluster = 0;
  std::vector<std::string> selected_users;
  std::vector<double> distances;
  // Set when the clustering had no cluster besides the target's and the
  // selection scanned all users instead.
  bool global_fallback = false;

  bool operator==(const ContrastSelection&) const = default;
};

struct SyntheticNegative {
  std::string user_id;
  std::string generator_model_id;
  std::string text;

  bool operator==(const SyntheticNegative&) const = default;
};

struct NegativePool {
  std::string original_rejected;
  std::vector<SyntheticNegative> synthetic;

  std::size_t size() const { return 1 + synthetic.size(); }
  std::vector<std::string> responses() const {
    std::vector<std::string> out{original_rejected};
    for (const auto& s : synthetic) out.push_back(s.text);
    return out;
  }
  bool operator==(const NegativePool&) const = default;
};

/// One line of negatives.jsonl: a training instance with its augmented pool.
struct NegativeRecord {
  std::string user_id;
  std::string query;
  std::string chosen;
  NegativePool pool;
  ContrastSelection selection;
  bool flagged = false;
  std::vector<std::string> notes;

  bool operator==(const NegativeRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Validation.

namespace detail {

inline void require(bool ok, std::string_view field, const std::string& why) {
  if (!ok) throw SchemaError(std::string(field), why);
}

inline bool blank(std::string_view s) { return trim(s).empty(); }

}  // namespace detail

inline void validate(const RejectionGateReport& r) {
  detail::require(r.attempts >= 1, "attempts", "must be >= 1");
  detail::require(r.validation_pairs_used >= 0, "validation_pairs_used",
                  "must be >= 0");
}

inline void validate(const HistoryItem& h) {
  detail::require(!detail::blank(h.query), "history.query", "empty");
  detail::require(!detail::blank(h.chosen), "history.chosen", "empty");
  detail::require(!detail::blank(h.rejected), "history.rejected", "empty");
  detail::require(nfc_trim(h.chosen) != nfc_trim(h.rejected), "history",
                  "chosen equals rejected");
}

inline void validate(const UserRecord& u) {
  detail::require(!detail::blank(u.user_id), "user_id", "empty");
  detail::require(u.split == Split::kTest || !u.history.empty(), "history",
                  "train user '" + u.user_id + "' has an empty history");
  for (const auto& h : u.history) validate(h);
  if (u.general_preference) {
    detail::require(!detail::blank(*u.general_preference),
                    "general_preference", "present but empty");
  }
  if (u.gp_gate) validate(*u.gp_gate);
}

inline void validate(const PreferenceInstance& p) {
  detail::require(!detail::blank(p.user_id), "user_id", "empty");
  detail::require(!detail::blank(p.query), "query", "empty");
  detail::require(!detail::blank(p.chosen), "chosen", "empty");
  detail::require(!detail::blank(p.rejected), "rejected", "empty");
}

inline void validate(const Checklist& c) {
  detail::require(!c.criteria.empty(), "criteria", "checklist is empty");
  double weight_sum = 0.0;
  bool all_weighted = true;
  for (std::size_t i = 0; i < c.criteria.size(); ++i) {
    const Criterion& k = c.criteria[i];
    detail::require(k.index == i, "criteria.index",
                    "expected " + std::to_string(i) + ", found " +
                        std::to_string(k.index));
    detail::require(!detail::blank(k.text), "criteria.text",
                    "criterion " + std::to_string(i) + " has empty text");
    if (k.weight) {
      detail::require(std::isfinite(*k.weight) && *k.weight >= 0.0 &&
                          *k.weight <= 1.0,
                      "criteria.weight",
                      "criterion " + std::to_string(i) + " weight outside [0,1]");
      weight_sum += *k.weight;
    } else {
      all_weighted = false;
    }
  }
  if (all_weighted) {
    detail::require(std::abs(weight_sum - 1.0) <= kWeightSumTolerance + kWeightSumSlack,
                    "criteria.weight",
                    "weights sum to " + std::to_string(weight_sum) +
                        ", expected 1");
  }
  if (c.gate) validate(*c.gate);
}

inline void validate(const TrainingExample& t) {
  detail::require(!detail::blank(t.general_preference), "general_preference",
                  "empty");
  detail::require(!detail::blank(t.query), "query", "empty");
  validate(t.labeled_checklist);
  for (const auto& k : t.labeled_checklist.criteria) {
    detail::require(k.label.has_value(), "labeled_checklist.criteria.label",
                    "criterion " + std::to_string(k.index) + " is unlabeled");
  }
}

inline void validate(const ScoreVector& v) {
  detail::require(v.scores.size() == v.checklist_len, "scores",
                  "length " + std::to_string(v.scores.size()) +
                      " != checklist_len " + std::to_string(v.checklist_len));
  for (int s : v.scores) {
    detail::require(s >= kMinScore && s <= kMaxScore, "scores",
                    "score " + std::to_string(s) + " outside [1,10]");
  }
}

inline void validate(const RewardResult& r) {
  validate(r.per_criterion_scores);
  detail::require(r.weights.size() == r.per_criterion_scores.size(), "weights",
                  "length differs from scores");
  double dot = 0.0;
  for (std::size_t k = 0; k < r.weights.size(); ++k) {
    dot += r.weights[k] * r.per_criterion_scores[k];
  }
  detail::require(std::abs(dot - r.reward) <= kRewardTolerance, "reward",
                  "does not equal weights . scores");
}

inline void validate(const ContrastSelection& s) {
  detail::require(!detail::blank(s.target_user), "target_user", "empty");
  detail::require(s.selected_users.size() == s.distances.size(), "distances",
                  "length differs from selected_users");
}

inline void validate(const NegativeRecord& n) {
  detail::require(!detail::blank(n.user_id), "user_id", "empty");
  detail::require(!detail::blank(n.query), "query", "empty");
  detail::require(!detail::blank(n.chosen), "chosen", "empty");
  detail::require(!detail::blank(n.pool.original_rejected),
                  "pool.original_rejected", "empty");
  for (const auto& s : n.pool.synthetic) {
    detail::require(!detail::blank(s.text), "pool.synthetic.text", "empty");
  }
  validate(n.selection);
}

// ---------------------------------------------------------------------------
// JSON codecs.

namespace detail {

/// Reads fields out of a JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string scope) : j_(j), scope_(std::move(scope)) {
    if (!j_.is_object()) throw SchemaError(scope_.empty() ? "<record>" : scope_, "expected an object");
  }

  template <typename T>
  T required(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) throw SchemaError(path(key), "missing");
    return convert<T>(*it, key);
  }

  template <typename T>
  std::optional<T> optional(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return std::nullopt;
    return convert<T>(*it, key);
  }

  const json& required_value(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) throw SchemaError(path(key), "missing");
    return *it;
  }

  const json* optional_value(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw SchemaError(path(key), "unknown field");
    }
  }

  std::string path(const std::string& key) const {
    return scope_.empty() ? key : scope_ + "." + key;
  }

 private:
  template <typename T>
  T convert(const json& v, const std::string& key) const {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw SchemaError(path(key), "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw SchemaError(path(key), "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw SchemaError(path(key), "expected a number");
      return v.get<double>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) {
        throw SchemaError(path(key), "expected an integer");
      }
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) return v.get<T>();
        if (v.get<std::int64_t>() < 0) {
          throw SchemaError(path(key), "expected a non-negative integer");
        }
      }
      return v.get<T>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported field type");
    }
  }

  const json& j_;
  std::string scope_;
  std::set<std::string> seen_;
};

inline const json& require_array(const json& v, const std::string& field) {
  if (!v.is_array()) throw SchemaError(field, "expected an array");
  return v;
}

}  // namespace detail

template <typename T>
struct Codec;

template <>
struct Codec<RejectionGateReport> {
  static json encode(const RejectionGateReport& r) {
    return {{"attempts", r.attempts},
            {"accepted", r.accepted},
            {"validation_pairs_used", r.validation_pairs_used}};
  }
  static RejectionGateReport decode(const json& j, const std::string& scope = "") {
    detail::ObjectReader in(j, scope);
    RejectionGateReport r;
    r.attempts = in.required<int>("attempts");
    r.accepted = in.required<bool>("accepted");
    r.validation_pairs_used = in.required<int>("validation_pairs_used");
    in.finish();
    return r;
  }
};

template <>
struct Codec<HistoryItem> {
  static json encode(const HistoryItem& h) {
    return {{"query", h.query}, {"chosen", h.chosen}, {"rejected", h.rejected}};
  }
  static HistoryItem decode(const json& j, const std::string& scope = "") {
    detail::ObjectReader in(j, scope);
    HistoryItem h;
    h.query = in.required<std::string>("query");
    h.chosen = in.required<std::string>("chosen");
    h.rejected = in.required<std::string>("rejected");
    in.finish();
    return h;
  }
};

template <>
struct Codec<UserRecord> {
  static constexpr std::string_view kName = "users";

  static json encode(const UserRecord& u) {
    json history = json::array();
    for (const auto& h : u.history) history.push_back(Codec<HistoryItem>::encode(h));
    json j = {{"user_id", u.user_id},
              {"history", std::move(history)},
              {"split", std::string(to_string(u.split))}};
    if (u.general_preference) j["general_preference"] = *u.general_preference;
    if (u.gp_gate) j["gp_gate"] = Codec<RejectionGateReport>::encode(*u.gp_gate);
    return j;
  }
  static UserRecord decode(const json& j) {
    detail::ObjectReader in(j, "");
    UserRecord u;
    u.user_id = in.required<std::string>("user_id");
    const json& history = detail::require_array(in.required_value("history"), "history");
    for (const auto& h : history) u.history.push_back(Codec<HistoryItem>::decode(h, "history"));
    u.general_preference = in.optional<std::string>("general_preference");
    const auto split = in.required<std::string>("split");
    if (split == "train") {
      u.split = Split::kTrain;
    } else if (split == "test") {
      u.split = Split::kTest;
    } else {
      throw SchemaError("split", "expected 'train' or 'test', found '" + split + "'");
    }
    if (const json* g = in.optional_value("gp_gate")) {
      u.gp_gate = Codec<RejectionGateReport>::decode(*g, "gp_gate");
    }
    in.finish();
    return u;
  }
  static void check_collection(const std::vector<UserRecord>& users) {
    std::set<std::string> ids;
    for (const auto& u : users) {
      if (!ids.insert(u.user_id).second) {
        throw SchemaError("user_id", "duplicate user_id '" + u.user_id + "'");
      }
    }
  }
};

template <>
struct Codec<PreferenceInstance> {
  static constexpr std::string_view kName = "pairs";

  static json encode(const PreferenceInstance& p) {
    return {{"user_id", p.user_id},
            {"query", p.query},
            {"chosen", p.chosen},
            {"rejected", p.rejected}};
  }
  static PreferenceInstance decode(const json& j) {
    detail::ObjectReader in(j, "");
    PreferenceInstance p;
    p.user_id = in.required<std::string>("user_id");
    p.query = in.required<std::string>("query");
    p.chosen = in.required<std::string>("chosen");
    p.rejected = in.required<std::string>("rejected");
    in.finish();
    return p;
  }
  static void check_collection(const std::vector<PreferenceInstance>&) {}
};

template <>
struct Codec<Criterion> {
  static json encode(const Criterion& c) {
    json j = {{"index", c.index}, {"text", c.text}, {"evidence", c.evidence}};
    if (c.weight) j["weight"] = *c.weight;
    if (c.label) j["label"] = std::string(to_string(*c.label));
    return j;
  }
  static Criterion decode(const json& j, const std::string& scope) {
    detail::ObjectReader in(j, scope);
    Criterion c;
    c.index = in.required<std::size_t>("index");
    c.text = in.required<std::string>("text");
    c.evidence = in.required<std::string>("evidence");
    c.weight = in.optional<double>("weight");
    if (auto label = in.optional<std::string>("label")) {
      c.label = label_from_string(*label);
      if (!c.label) {
        throw SchemaError(in.path("label"), "expected Essential, Important or Optional, found '" + *label + "'");
      }
    }
    in.finish();
    return c;
  }
};

template <>
struct Codec<Checklist> {
  static constexpr std::string_view kName = "checklists";

  static json encode(const Checklist& c) {
    json criteria = json::array();
    for (const auto& k : c.criteria) criteria.push_back(Codec<Criterion>::encode(k));
    json j = {{"user_id", c.user_id},
              {"query", c.query},
              {"criteria", std::move(criteria)},
              {"provenance", std::string(to_string(c.provenance))}};
    if (c.gate) j["gate"] = Codec<RejectionGateReport>::encode(*c.gate);
    return j;
  }
  static Checklist decode(const json& j, const std::string& scope = "") {
    detail::ObjectReader in(j, scope);
    Checklist c;
    c.user_id = in.required<std::string>("user_id");
    c.query = in.required<std::string>("query");
    const json& criteria = detail::require_array(in.required_value("criteria"), in.path("criteria"));
    for (const auto& k : criteria) c.criteria.push_back(Codec<Criterion>::decode(k, in.path("criteria")));
    const auto provenance = in.required<std::string>("provenance");
    if (provenance == "collected") {
      c.provenance = Provenance::kCollected;
    } else if (provenance == "generated") {
      c.provenance = Provenance::kGenerated;
    } else {
      throw SchemaError(in.path("provenance"), "expected 'collected' or 'generated', found '" + provenance + "'");
    }
    if (const json* g = in.optional_value("gate")) {
      c.gate = Codec<RejectionGateReport>::decode(*g, in.path("gate"));
    }
    in.finish();
    return c;
  }
  static void check_collection(const std::vector<Checklist>&) {}
};

template <>
struct Codec<TrainingExample> {
  static constexpr std::string_view kName = "training";

  static json encode(const TrainingExample& t) {
    return {{"general_preference", t.general_preference},
            {"query", t.query},
            {"labeled_checklist", Codec<Checklist>::encode(t.labeled_checklist)}};
  }
  static TrainingExample decode(const json& j) {
    detail::ObjectReader in(j, "");
    TrainingExample t;
    t.general_preference = in.required<std::string>("general_preference");
    t.query = in.required<std::string>("query");
    t.labeled_checklist = Codec<Checklist>::decode(in.required_value("labeled_checklist"), "labeled_checklist");
    in.finish();
    return t;
  }
  static void check_collection(const std::vector<TrainingExample>&) {}
};

template <>
struct Codec<ScoreVector> {
  static json encode(const ScoreVector& v) {
    return {{"scores", v.scores}, {"checklist_len", v.checklist_len}};
  }
  static ScoreVector decode(const json& j, const std::string& scope = "") {
    detail::ObjectReader in(j, scope);
    ScoreVector v;
    const json& scores = detail::require_array(in.required_value("scores"), in.path("scores"));
    for (const auto& s : scores) {
      if (!s.is_number_integer()) throw SchemaError(in.path("scores"), "expected integers");
      v.scores.push_back(s.get<int>());
    }
    v.checklist_len = in.required<std::size_t>("checklist_len");
    in.finish();
    return v;
  }
};

template <>
struct Codec<RewardResult> {
  static constexpr std::string_view kName = "rewards";

  static json encode(const RewardResult& r) {
    return {{"reward", r.reward},
            {"per_criterion_scores", Codec<ScoreVector>::encode(r.per_criterion_scores)},
            {"weights", r.weights},
            {"checklist_id", r.checklist_id}};
  }
  static RewardResult decode(const json& j) {
    detail::ObjectReader in(j, "");
    RewardResult r;
    r.reward = in.required<double>("reward");
    r.per_criterion_scores = Codec<ScoreVector>::decode(in.required_value("per_criterion_scores"), "per_criterion_scores");
    const json& weights = detail::require_array(in.required_value("weights"), "weights");
    for (const auto& w : weights) {
      if (!w.is_number()) throw SchemaError("weights", "expected numbers");
      r.weights.push_back(w.get<double>());
    }
    r.checklist_id = in.required<std::string>("checklist_id");
    in.finish();
    return r;
  }
  static void check_collection(const std::vector<RewardResult>&) {}
};

template <>
struct Codec<NegativeRecord> {
  static constexpr std::string_view kName = "negatives";

  static json encode(const NegativeRecord& n) {
    json synthetic = json::array();
    for (const auto& s : n.pool.synthetic) {
      synthetic.push_back({{"user_id", s.user_id},
                           {"generator_model_id", s.generator_model_id},
                           {"text", s.text}});
    }
    return {{"user_id", n.user_id},
            {"query", n.query},
            {"chosen", n.chosen},
            {"pool", {{"original_rejected", n.pool.original_rejected},
                      {"synthetic", std::move(synthetic)}}},
            {"selection", {{"target_user", n.selection.target_user},
                           {"candidate_cluster", n.selection.candidate_cluster},
                           {"selected_users", n.selection.selected_users},
                           {"distances", n.selection.distances},
                           {"global_fallback", n.selection.global_fallback}}},
            {"flagged", n.flagged},
            {"notes", n.notes}};
  }
  static NegativeRecord decode(const json& j) {
    detail::ObjectReader in(j, "");
    NegativeRecord n;
    n.user_id = in.required<std::string>("user_id");
    n.query = in.required<std::string>("query");
    n.chosen = in.required<std::string>("chosen");
    {
      detail::ObjectReader pool(in.required_value("pool"), "pool");
      n.pool.original_rejected = pool.required<std::string>("original_rejected");
      for (const auto& s : detail::require_array(pool.required_value("synthetic"), "pool.synthetic")) {
        detail::ObjectReader item(s, "pool.synthetic");
        SyntheticNegative neg;
        neg.user_id = item.required<std::string>("user_id");
        neg.generator_model_id = item.required<std::string>("generator_model_id");
        neg.text = item.required<std::string>("text");
        item.finish();
        n.pool.synthetic.push_back(std::move(neg));
      }
      pool.finish();
    }
    {
      detail::ObjectReader sel(in.required_value("selection"), "selection");
      n.selection.target_user = sel.required<std::string>("target_user");
      n.selection.candidate_cluster = sel.required<std::size_t>("candidate_cluster");
      for (const auto& u : detail::require_array(sel.required_value("selected_users"), "selection.selected_users")) {
        if (!u.is_string()) throw SchemaError("selection.selected_users", "expected strings");
        n.selection.selected_users.push_back(u.get<std::string>());
      }
      for (const auto& d : detail::require_array(sel.required_value("distances"), "selection.distances")) {
        if (!d.is_number()) throw SchemaError("selection.distances", "expected numbers");
        n.selection.distances.push_back(d.get<double>());
      }
      n.selection.global_fallback = sel.required<bool>("global_fallback");
      sel.finish();
    }
    n.flagged = in.required<bool>("flagged");
    for (const auto& note : detail::require_array(in.required_value("notes"), "notes")) {
      if (!note.is_string()) throw SchemaError("notes", "expected strings");
      n.notes.push_back(note.get<std::string>());
    }
    in.finish();
    return n;
  }
  static void check_collection(const std::vector<NegativeRecord>&) {}
};

/// Serializes one record as a single canonical JSON line (no newline).
template <typename T>
std::string to_json_line(const T& record) {
  try {
    return Codec<T>::encode(record).dump(-1, ' ', /*ensure_ascii=*/false,
                                         json::error_handler_t::strict);
  } catch (const json::type_error& e) {
    throw ValidationError(std::string("cannot serialize record: ") + e.what());
  }
}

template <typename T>
T from_json_line(std::string_view line) {
  json j = json::parse(line);
  T record = Codec<T>::decode(j);
  validate(record);
  return record;
}

// ---------------------------------------------------------------------------
// Files.

/// Reads and validates a whole corpus. Errors carry the file and line.
template <typename T>
std::vector<T> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<T> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CorpusParseError(path.string(), line_no, e.what());
    }
    try {
      T record = Codec<T>::decode(j);
      validate(record);
      records.push_back(std::move(record));
    } catch (const SchemaError& e) {
      throw SchemaError(e.field(), path.string() + ":" + std::to_string(line_no) + ": " + e.reason());
    } catch (const json::exception& e) {
      throw SchemaError("<record>", path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  try {
    Codec<T>::check_collection(records);
  } catch (const SchemaError& e) {
    throw SchemaError(e.field(), path.string() + ": " + e.reason());
  }
  return records;
}

/// Writes a corpus atomically (temporary file, then rename).
template <typename T>
void save_corpus(const std::vector<T>& records, const std::filesystem::path& path) {
  for (const auto& r : records) validate(r);
  Codec<T>::check_collection(records);
  std::string body;
  for (const auto& r : records) {
    body += to_json_line(r);
    body += '\n';
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << body;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Cross-corpus checks.

inline std::map<std::string, const UserRecord*> index_users(const std::vector<UserRecord>& users) {
  std::map<std::string, const UserRecord*> out;
  for (const auto& u : users) out.emplace(u.user_id, &u);
  return out;
}

inline bool same_text(std::string_view a, std::string_view b) {
  return nfc_trim(a) == nfc_trim(b);
}

/// True when (query, chosen, rejected) equals an item of the user's history.
inline bool leaks_history(const PreferenceInstance& p, const UserRecord& user) {
  const std::string q = nfc_trim(p.query);
  const std::string c = nfc_trim(p.chosen);
  const std::string r = nfc_trim(p.rejected);
  for (const auto& h : user.history) {
    if (nfc_trim(h.query) == q && nfc_trim(h.chosen) == c && nfc_trim(h.rejected) == r) {
      return true;
    }
  }
  return false;
}

/// Every pair must reference a known user and must not repeat its history.
inline void check_pairs_against_users(const std::vector<PreferenceInstance>& pairs,
                                      const std::vector<UserRecord>& users) {
  const auto by_id = index_users(users);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto it = by_id.find(pairs[i].user_id);
    if (it == by_id.end()) {
      throw SchemaError("user_id", "pair " + std::to_string(i + 1) + " references unknown user '" +
                                       pairs[i].user_id + "'");
    }
    if (leaks_history(pairs[i], *it->second)) {
      throw HistoryLeakError("pair " + std::to_string(i + 1) + " of user '" + pairs[i].user_id +
                             "' appears verbatim in that user's history");
    }
  }
}

inline std::vector<PreferenceInstance> load_pairs(const std::filesystem::path& path,
                                                  const std::vector<UserRecord>& users) {
  auto pairs = load_corpus<PreferenceInstance>(path);
  check_pairs_against_users(pairs, users);
  return pairs;
}

/// Stable identifier of a checklist's content.
inline std::string checklist_id(const Checklist& c) {
  return sha256_hex(to_json_line(c)).substr(0, 16);
}

}  // namespace pcheck

#endif  // PCHECK_CORPUS_HPP
