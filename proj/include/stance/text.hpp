#pragma once

// UTF-8 text helpers backed by ICU.

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "stance/error.hpp"

namespace stance::text {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string nfc(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normaliser unavailable");
  icu::UnicodeString us = icu::UnicodeString::fromUTF8(
      icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  icu::UnicodeString out = norm->normalize(us, status);
  if (U_FAILURE(status)) throw DataError("NFC normalisation failed");
  std::string result;
  out.toUTF8String(result);
  return result;
}

/// Trim + NFC: the canonical form for labels and ids.
inline std::string canonical(std::string_view s) { return nfc(trim(s)); }

inline std::string lower(std::string_view s) {
  icu::UnicodeString us = icu::UnicodeString::fromUTF8(
      icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  us.toLower();
  std::string result;
  us.toUTF8String(result);
  return result;
}

enum class CharClass { space, word, punct };

/// One maximal run of word characters, or one punctuation code point.
struct Segment {
  std::string text;
  bool word_initial;  ///< preceded by whitespace (or start of input when requested)
  CharClass kind;
};

/// Splits UTF-8 text into word runs (letters, digits, marks) and single
/// punctuation/symbol code points. Whitespace is dropped but recorded via
/// `word_initial` on the following segment.
inline std::vector<Segment> segment(std::string_view s, bool start_of_word = true) {
  std::vector<Segment> out;
  bool after_space = start_of_word;
  int32_t i = 0;
  const auto* bytes = reinterpret_cast<const uint8_t*>(s.data());
  const auto len = static_cast<int32_t>(s.size());
  while (i < len) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(bytes, i, len, c);
    CharClass cls;
    if (c < 0) {
      cls = CharClass::punct;
    } else if (u_isUWhiteSpace(c)) {
      cls = CharClass::space;
    } else if (u_isalnum(c) || u_getCombiningClass(c) > 0 ||
               (U_GET_GC_MASK(c) & U_GC_M_MASK) != 0) {
      cls = CharClass::word;
    } else {
      cls = CharClass::punct;
    }
    if (cls == CharClass::space) {
      after_space = true;
      continue;
    }
    if (cls == CharClass::word && !out.empty() && out.back().kind == CharClass::word &&
        !after_space) {
      out.back().text.append(s.substr(start, i - start));
      continue;
    }
    out.push_back({std::string(s.substr(start, i - start)), after_space, cls});
    after_space = false;
  }
  return out;
}

/// Whitespace tokenisation into lowercase word runs; punctuation dropped.
inline std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  for (auto& seg : segment(lower(s))) {
    if (seg.kind == CharClass::word) out.push_back(std::move(seg.text));
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.emplace_back(s.substr(pos));
      break;
    }
    out.emplace_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

/// 64-bit FNV-1a, used for cheap content fingerprints.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace stance::text
