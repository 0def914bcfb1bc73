#ifndef PCHECK_CONFIG_HPP
#define PCHECK_CONFIG_HPP

// Run configuration: defaults, a small TOML subset, and PCHECK_* environment
// overrides.
//
// Supported TOML: `[section]` headers, `key = value` lines, `#` comments.
// Values are strings ("..." with \" \\ \n \t escapes), integers, floats,
// booleans and single-line arrays of those. Keys are addressed as
// `section.key`. The environment variable for `a.b_c` is `PCHECK_A_B_C`.

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pcheck/collector.hpp"
#include "pcheck/contrast.hpp"
#include "pcheck/error.hpp"
#include "pcheck/harness.hpp"
#include "pcheck/judge.hpp"
#include "pcheck/reward.hpp"
#include "pcheck/summarizer.hpp"
#include "pcheck/util.hpp"
#include "pcheck/weighting.hpp"

namespace pcheck {

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

namespace toml_lite {

namespace detail {

struct Cursor {
  std::string_view s;
  std::size_t i = 0;
  int line = 0;

  void skip_ws() {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
  bool done() const { return i >= s.size(); }
  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("config line " + std::to_string(line) + ": " + why);
  }
};

inline json parse_value(Cursor& c);

inline json parse_string(Cursor& c) {
  ++c.i;
  std::string out;
  while (!c.done() && c.s[c.i] != '"') {
    char ch = c.s[c.i++];
    if (ch == '\\') {
      if (c.done()) c.fail("dangling escape");
      const char e = c.s[c.i++];
      switch (e) {
        case 'n':
          ch = '\n';
          break;
        case 't':
          ch = '\t';
          break;
        case '"':
        case '\\':
          ch = e;
          break;
        default:
          c.fail(std::string("unsupported escape \\") + e);
      }
    }
    out.push_back(ch);
  }
  if (c.done()) c.fail("unterminated string");
  ++c.i;
  return out;
}

inline json parse_scalar(Cursor& c) {
  const std::size_t start = c.i;
  while (!c.done() && c.s[c.i] != ',' && c.s[c.i] != ']' && c.s[c.i] != '#' && c.s[c.i] != ' ' &&
         c.s[c.i] != '\t') {
    ++c.i;
  }
  const std::string tok(c.s.substr(start, c.i - start));
  if (tok == "true") return true;
  if (tok == "false") return false;
  if (tok.empty()) c.fail("missing value");
  std::size_t used = 0;
  try {
    if (tok.find_first_of(".eE") == std::string::npos) {
      const long long v = std::stoll(tok, &used);
      if (used == tok.size()) return v;
    } else {
      const double v = std::stod(tok, &used);
      if (used == tok.size()) return v;
    }
  } catch (const std::exception&) {
  }
  c.fail("cannot parse value '" + tok + "'");
}

inline json parse_value(Cursor& c) {
  c.skip_ws();
  if (c.done()) c.fail("missing value");
  if (c.s[c.i] == '"') return parse_string(c);
  if (c.s[c.i] == '[') {
    ++c.i;
    json arr = json::array();
    for (;;) {
      c.skip_ws();
      if (c.done()) c.fail("unterminated array");
      if (c.s[c.i] == ']') {
        ++c.i;
        return arr;
      }
      arr.push_back(parse_value(c));
      c.skip_ws();
      if (!c.done() && c.s[c.i] == ',') ++c.i;
    }
  }
  return parse_scalar(c);
}

inline bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char ch : k) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.')) {
      return false;
    }
  }
  return true;
}

}  // namespace detail

/// Flattened `section.key -> value` map.
inline std::map<std::string, json> parse(std::string_view text) {
  std::map<std::string, json> out;
  std::string section;
  int line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') {
      const auto close = line.find(']');
      if (close == std::string::npos) {
        throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section");
      }
      section = trim(std::string_view(line).substr(1, close - 1));
      if (!detail::valid_key(section)) {
        throw ConfigError("config line " + std::to_string(line_no) + ": bad section name");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (!detail::valid_key(key)) {
      throw ConfigError("config line " + std::to_string(line_no) + ": bad key '" + key + "'");
    }
    detail::Cursor c{std::string_view(line).substr(eq + 1), 0, line_no};
    json value = detail::parse_value(c);
    c.skip_ws();
    if (!c.done() && c.s[c.i] != '#') c.fail("trailing characters after value");
    out[section.empty() ? key : section + "." + key] = std::move(value);
  }
  return out;
}

inline std::string format_value(const json& v) {
  if (v.is_string()) {
    std::string out = "\"";
    for (char ch : v.get<std::string>()) {
      if (ch == '"' || ch == '\\') out.push_back('\\');
      if (ch == '\n') {
        out += "\\n";
        continue;
      }
      if (ch == '\t') {
        out += "\\t";
        continue;
      }
      out.push_back(ch);
    }
    return out + "\"";
  }
  if (v.is_array()) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i > 0) out += ", ";
      out += format_value(v[i]);
    }
    return out + "]";
  }
  return v.dump();
}

}  // namespace toml_lite

struct Config {
  std::uint64_t seed = 0;
  bool mock = false;
  std::string cache_dir = ".pcheck-cache";
  std::string runs_dir = "runs";
  std::size_t concurrency = 4;

  std::string api_base = "https://api.openai.com/v1";
  std::string api_key;

  SummarizerOptions summarizer;
  CollectorOptions collector;
  std::string collector_examples_file;
  JudgeOptions judge;
  ContrastOptions contrast;
  ThresholdConfig thresholds;
  double epsilon = kDefaultEpsilon;
  WeightMap weight_map;
  GeneratorOptions generator;
  std::string generator_endpoint;
  RefineOptions policy;
  int eval_runs = 5;
  std::size_t bon_n = 10;
  std::vector<double> bucket_percentiles = {25, 50, 75};

  /// Applies one key. Unknown keys and ill-typed values raise ConfigError.
  void set(const std::string& key, const json& v);

  /// Every key with its current value, in the TOML subset.
  std::string to_toml() const;

  void validate() const {
    thresholds.validate();
    weight_map.validate();
    if (!(epsilon > 0.0)) throw ConfigError("weighting.epsilon must be > 0");
    if (contrast.top_k < 1) throw ConfigError("contrast.top_k must be >= 1");
    if (contrast.k_min < 1 || contrast.k_min > contrast.k_max) {
      throw ConfigError("contrast k range must satisfy 1 <= k_min <= k_max");
    }
    if (contrast.generator_models.empty()) throw ConfigError("contrast.generator_models is empty");
    if (eval_runs < 1) throw ConfigError("eval.runs must be >= 1");
    if (bon_n < 1) throw ConfigError("eval.bon_n must be >= 1");
  }
};

namespace detail {

struct ConfigField {
  std::function<void(Config&, const json&)> set;
  std::function<json(const Config&)> get;
};

template <typename T>
T expect(const std::string& key, const json& v) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw std::invalid_argument("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw std::invalid_argument("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw std::invalid_argument("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0)) {
        throw std::invalid_argument("");
      }
    } else {
      if (!v.is_array()) throw std::invalid_argument("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + v.dump());
  }
}

template <typename T, typename Getter>
ConfigField field(const std::string& key, Getter member) {
  return {[key, member](Config& c, const json& v) { member(c) = expect<T>(key, v); },
          [member](const Config& c) { return json(member(const_cast<Config&>(c))); }};
}

inline const std::map<std::string, ConfigField>& config_fields() {
  static const std::map<std::string, ConfigField> kFields = [] {
    std::map<std::string, ConfigField> m;
#define PCHECK_FIELD(KEY, TYPE, EXPR) \
  m.emplace(KEY, field<TYPE>(KEY, [](Config& c) -> TYPE& { return EXPR; }))
    PCHECK_FIELD("seed", std::uint64_t, c.seed);
    PCHECK_FIELD("mock", bool, c.mock);
    PCHECK_FIELD("cache_dir", std::string, c.cache_dir);
    PCHECK_FIELD("runs_dir", std::string, c.runs_dir);
    PCHECK_FIELD("concurrency", std::size_t, c.concurrency);
    PCHECK_FIELD("api.base", std::string, c.api_base);
    PCHECK_FIELD("api.key", std::string, c.api_key);
    PCHECK_FIELD("summarizer.model", std::string, c.summarizer.model_id);
    PCHECK_FIELD("summarizer.temperature", double, c.summarizer.temperature);
    PCHECK_FIELD("summarizer.max_attempts", int, c.summarizer.max_attempts);
    PCHECK_FIELD("summarizer.validation_pairs", std::size_t, c.summarizer.validation_pairs);
    PCHECK_FIELD("collector.model", std::string, c.collector.model_id);
    PCHECK_FIELD("collector.temperature", double, c.collector.temperature);
    PCHECK_FIELD("collector.max_attempts", int, c.collector.max_attempts);
    PCHECK_FIELD("collector.examples_file", std::string, c.collector_examples_file);
    PCHECK_FIELD("judge.model", std::string, c.judge.model_id);
    PCHECK_FIELD("judge.temperature", double, c.judge.temperature);
    PCHECK_FIELD("judge.retries", int, c.judge.retries);
    PCHECK_FIELD("embedding.model", std::string, c.contrast.embedding_model);
    PCHECK_FIELD("contrast.k_min", std::size_t, c.contrast.k_min);
    PCHECK_FIELD("contrast.k_max", std::size_t, c.contrast.k_max);
    PCHECK_FIELD("contrast.top_k", std::size_t, c.contrast.top_k);
    PCHECK_FIELD("contrast.n_init", int, c.contrast.n_init);
    PCHECK_FIELD("contrast.temperature", double, c.contrast.temperature);
    PCHECK_FIELD("contrast.generator_models", std::vector<std::string>, c.contrast.generator_models);
    PCHECK_FIELD("weighting.tau1", double, c.thresholds.tau1);
    PCHECK_FIELD("weighting.tau2", double, c.thresholds.tau2);
    PCHECK_FIELD("weighting.epsilon", double, c.epsilon);
    PCHECK_FIELD("weight_map.essential", double, c.weight_map.essential);
    PCHECK_FIELD("weight_map.important", double, c.weight_map.important);
    PCHECK_FIELD("weight_map.optional", double, c.weight_map.optional_);
    PCHECK_FIELD("generator.endpoint", std::string, c.generator_endpoint);
    PCHECK_FIELD("generator.model", std::string, c.generator.model_id);
    PCHECK_FIELD("generator.temperature", double, c.generator.temperature);
    PCHECK_FIELD("generator.retries", int, c.generator.retries);
    PCHECK_FIELD("policy.model", std::string, c.policy.model_id);
    PCHECK_FIELD("policy.temperature", double, c.policy.temperature);
    PCHECK_FIELD("eval.runs", int, c.eval_runs);
    PCHECK_FIELD("eval.bon_n", std::size_t, c.bon_n);
    PCHECK_FIELD("eval.percentiles", std::vector<double>, c.bucket_percentiles);
#undef PCHECK_FIELD
    m.emplace("generator.mode",
              ConfigField{[](Config& c, const json& v) {
                            c.generator.mode =
                                generator_mode_from_string(expect<std::string>("generator.mode", v));
                          },
                          [](const Config& c) { return json(std::string(to_string(c.generator.mode))); }});
    return m;
  }();
  return kFields;
}

/// Converts an environment string to the type the key currently holds.
inline json env_value(const json& current, const std::string& raw) {
  if (current.is_string()) return raw;
  if (current.is_array()) {
    json arr = json::array();
    for (const auto& part : split(raw, ',')) {
      const std::string t = trim(part);
      if (t.empty()) continue;
      if (!current.empty() && current.front().is_number()) {
        arr.push_back(std::stod(t));
      } else {
        arr.push_back(t);
      }
    }
    return arr;
  }
  toml_lite::detail::Cursor c{raw, 0, 0};
  return toml_lite::detail::parse_value(c);
}

}  // namespace detail

inline void Config::set(const std::string& key, const json& v) {
  const auto& fields = detail::config_fields();
  const auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(*this, v);
  if (key == "seed") {
    summarizer.seed = collector.seed = contrast.seed = generator.seed = policy.seed = seed;
  }
}

inline std::string Config::to_toml() const {
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& [key, f] : detail::config_fields()) {
    if (key == "api.key") continue;
    const auto dot = key.find('.');
    const std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
    sections[sec][name] = toml_lite::format_value(f.get(*this));
  }
  std::string out;
  for (const auto& [sec, kv] : sections) {
    if (!sec.empty()) out += "\n[" + sec + "]\n";
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  }
  return out;
}

inline std::string env_name(const std::string& key) {
  std::string out = "PCHECK_";
  for (char ch : key) {
    out.push_back(ch == '.' || ch == '-' ? '_'
                                         : static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  }
  return out;
}

/// Defaults, then the file (if any), then the environment.
inline Config load_config(const std::optional<std::filesystem::path>& path,
                          const std::map<std::string, std::string>* env = nullptr) {
  Config c;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot read config file " + path->string());
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& [k, v] : toml_lite::parse(ss.str())) c.set(k, v);
  }
  for (const auto& [key, f] : detail::config_fields()) {
    const std::string name = env_name(key);
    std::optional<std::string> raw;
    if (env != nullptr) {
      if (const auto it = env->find(name); it != env->end()) raw = it->second;
    } else if (const char* e = std::getenv(name.c_str())) {
      raw = e;
    }
    if (!raw) continue;
    try {
      c.set(key, detail::env_value(f.get(c), *raw));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("environment variable " + name + " has an invalid value");
    }
  }
  c.set("seed", c.seed);
  c.validate();
  return c;
}

}  // namespace pcheck

#endif  // PCHECK_CONFIG_HPP
