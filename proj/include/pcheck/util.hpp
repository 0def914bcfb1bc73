#ifndef PCHECK_UTIL_HPP
#define PCHECK_UTIL_HPP

#include <openssl/evp.h>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "pcheck/error.hpp"

namespace pcheck {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Text.

inline std::string trim(std::string_view s) {
  const auto is_space = [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
           c == '\v';
  };
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Unicode NFC normalization followed by whitespace trim. Used as the
/// equality key for history-leak detection.
inline std::string nfc_trim(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw Error(std::string("ICU NFC normalizer unavailable: ") +
                u_errorName(status));
  }
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(
      icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  icu::UnicodeString normalized = nfc->normalize(u, status);
  if (U_FAILURE(status)) {
    throw ValidationError(std::string("NFC normalization failed: ") +
                          u_errorName(status));
  }
  std::string out;
  normalized.toUTF8String(out);
  return trim(out);
}

/// Collapses line breaks so a text fits on one rendered line.
inline std::string single_line(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out.push_back(c == '\n' || c == '\r' ? ' ' : c);
  return out;
}

inline std::string join(const std::vector<std::string>& parts,
                        std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Returns the first complete JSON object or array embedded in `text`.
/// Models wrap structured answers in prose or code fences; every candidate
/// opening bracket is tried in order until one parses.
inline std::optional<json> extract_first_json(std::string_view text,
                                              bool objects_only = false) {
  for (std::size_t start = 0; start < text.size(); ++start) {
    const char open = text[start];
    if (open != '{' && !(open == '[' && !objects_only)) continue;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{' || c == '[') {
        ++depth;
      } else if (c == '}' || c == ']') {
        if (--depth == 0) {
          json parsed = json::parse(text.substr(start, i - start + 1), nullptr,
                                    /*allow_exceptions=*/false);
          if (!parsed.is_discarded()) return parsed;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Hashing and seeds.

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a base seed and a sequence of tags.
template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t base, const Tags&... tags) {
  std::uint64_t h = splitmix64(base);
  const auto mix = [&h](const auto& tag) {
    using T = std::decay_t<decltype(tag)>;
    if constexpr (std::is_integral_v<T>) {
      h = splitmix64(h ^ static_cast<std::uint64_t>(tag));
    } else {
      h = splitmix64(h ^ fnv1a64(std::string_view(tag)));
    }
  };
  (mix(tags), ...);
  return h;
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit word.
inline double unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logging. Warnings go to stderr unless silenced (tests silence them).

inline std::atomic<bool>& warnings_enabled() {
  static std::atomic<bool> enabled{true};
  return enabled;
}

inline void warn(std::string_view message) {
  if (!warnings_enabled().load()) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "warning: " << message << '\n';
}

}  // namespace pcheck

#endif  // PCHECK_UTIL_HPP
