#ifndef LMKIT_UNICODE_HPP
#define LMKIT_UNICODE_HPP

// Thin wrappers over ICU for the handful of Unicode operations the toolkit
// needs: validation, NFC composition, case folding to lower, punctuation
// classification and code point splitting.

#include <string>
#include <string_view>
#include <vector>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "lmkit/util.hpp"

namespace lmkit::unicode {

inline bool is_valid_utf8(std::string_view s) {
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  int32_t i = 0;
  const auto n = static_cast<int32_t>(s.size());
  while (i < n) {
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c < 0) return false;
  }
  return true;
}

inline std::string to_utf8(const icu::UnicodeString& u) {
  std::string out;
  u.toUTF8String(out);
  return out;
}

inline std::string nfc(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  icu::UnicodeString out = norm->normalize(u, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");
  return to_utf8(out);
}

inline std::string to_lower(std::string_view s) {
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  u.toLower(icu::Locale::getRoot());
  return to_utf8(u);
}

/// Code points as individual UTF-8 strings. Input must be valid UTF-8.
inline std::vector<std::string> code_points(std::string_view s) {
  std::vector<std::string> out;
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  int32_t i = 0;
  const auto n = static_cast<int32_t>(s.size());
  while (i < n) {
    int32_t start = i;
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c < 0) throw Error("invalid UTF-8 sequence");
    out.emplace_back(s.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)));
  }
  return out;
}

/// Removes every code point in a Unicode punctuation category (P*).
inline std::string strip_punctuation(std::string_view s) {
  std::string out;
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  int32_t i = 0;
  const auto n = static_cast<int32_t>(s.size());
  while (i < n) {
    int32_t start = i;
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c < 0) throw Error("invalid UTF-8 sequence");
    if (!u_ispunct(c)) out.append(s.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)));
  }
  return out;
}

/// Splits on Unicode white space (including NBSP and ideographic space).
inline std::vector<std::string> split_unicode_whitespace(std::string_view s) {
  std::vector<std::string> out;
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  int32_t i = 0;
  const auto n = static_cast<int32_t>(s.size());
  std::string current;
  while (i < n) {
    int32_t start = i;
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c < 0) throw Error("invalid UTF-8 sequence");
    if (u_isUWhiteSpace(c) || c == 0xA0 || c == 0x2007 || c == 0x202F) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.append(s.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

}  // namespace lmkit::unicode

#endif  // LMKIT_UNICODE_HPP
