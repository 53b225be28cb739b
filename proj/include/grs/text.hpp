#pragma once

// Text utilities shared by DocID resolution and BM25 tokenization.

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "grs/error.hpp"

namespace grs::text {

inline constexpr char32_t kReplacementChar = 0xFFFD;

/// Decodes UTF-8; malformed sequences become U+FFFD.
inline std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  while (i < s.size()) {
    const unsigned char c = byte(i);
    char32_t cp = 0;
    std::size_t len = 0;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c & 0xE0) == 0xC0) {
      cp = c & 0x1F;
      len = 2;
    } else if ((c & 0xF0) == 0xE0) {
      cp = c & 0x0F;
      len = 3;
    } else if ((c & 0xF8) == 0xF0) {
      cp = c & 0x07;
      len = 4;
    } else {
      out.push_back(kReplacementChar);
      ++i;
      continue;
    }
    if (i + len > s.size()) {
      out.push_back(kReplacementChar);
      ++i;
      continue;
    }
    bool ok = true;
    for (std::size_t k = 1; k < len; ++k) {
      const unsigned char cc = byte(i + k);
      if ((cc & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Reject overlong forms, surrogates and out-of-range values.
    static constexpr char32_t kMinForLen[] = {0, 0, 0x80, 0x800, 0x10000};
    if (!ok || cp < kMinForLen[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      out.push_back(kReplacementChar);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode_utf8(std::u32string_view cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) append_utf8(out, cp);
  return out;
}

inline bool is_space(char32_t cp) {
  return u_isUWhiteSpace(static_cast<UChar32>(cp)) != 0;
}

/// Han ideographs, kana and Hangul syllables: scripts written without
/// inter-word spacing, which the tokenizer splits into bigrams.
inline bool is_cjk(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) ||    // unified ideographs
         (cp >= 0x3400 && cp <= 0x4DBF) ||    // extension A
         (cp >= 0x20000 && cp <= 0x2EBEF) ||  // extensions B-F
         (cp >= 0x30000 && cp <= 0x3134F) ||  // extension G
         (cp >= 0xF900 && cp <= 0xFAFF) ||    // compatibility ideographs
         (cp >= 0x2F800 && cp <= 0x2FA1F) ||
         (cp >= 0x3040 && cp <= 0x30FF) ||    // hiragana, katakana
         (cp >= 0x31F0 && cp <= 0x31FF) ||
         (cp >= 0xAC00 && cp <= 0xD7AF);      // hangul syllables
}

inline bool is_word_char(char32_t cp) {
  return u_isalnum(static_cast<UChar32>(cp)) != 0 ||
         u_charType(static_cast<UChar32>(cp)) == U_NON_SPACING_MARK ||
         u_charType(static_cast<UChar32>(cp)) == U_COMBINING_SPACING_MARK;
}

inline std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

/// Unicode-aware trim: strips any White_Space codepoint (including U+3000).
inline std::string trim_unicode(std::string_view s) {
  const std::u32string cps = decode_utf8(s);
  std::size_t lo = 0;
  std::size_t hi = cps.size();
  while (lo < hi && is_space(cps[lo])) ++lo;
  while (hi > lo && is_space(cps[hi - 1])) --hi;
  return encode_utf8(std::u32string_view(cps).substr(lo, hi - lo));
}

inline std::string to_nfc(std::string_view s) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw Error(ErrorCode::kInvalidArgument, "ICU NFC normalizer unavailable");
  }
  const icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
  icu::UnicodeString dst = nfc->normalize(src, status);
  if (U_FAILURE(status)) {
    throw Error(ErrorCode::kInvalidArgument, "NFC normalization failed");
  }
  std::string out;
  dst.toUTF8String(out);
  return out;
}

/// Canonical DocID form: NFC, trimmed, internal whitespace runs collapsed to
/// a single ASCII space.
inline std::string normalize_docid(std::string_view raw) {
  const std::u32string cps = decode_utf8(to_nfc(raw));
  std::u32string out;
  out.reserve(cps.size());
  bool pending_space = false;
  for (char32_t cp : cps) {
    if (is_space(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(U' ');
      pending_space = false;
    }
    out.push_back(cp);
  }
  return encode_utf8(out);
}

/// BM25 tokenizer. CJK runs emit overlapping character bigrams (a lone CJK
/// character emits itself); other alphanumeric runs are lowercased and split
/// on everything that is not a letter, digit or combining mark.
inline std::vector<std::string> tokenize(std::string_view input) {
  const std::u32string cps = decode_utf8(to_nfc(input));
  std::vector<std::string> terms;

  std::size_t i = 0;
  while (i < cps.size()) {
    const char32_t cp = cps[i];
    if (is_cjk(cp)) {
      std::size_t j = i;
      while (j < cps.size() && is_cjk(cps[j])) ++j;
      if (j - i == 1) {
        terms.push_back(encode_utf8(std::u32string_view(&cps[i], 1)));
      } else {
        for (std::size_t k = i; k + 1 < j; ++k) {
          terms.push_back(encode_utf8(std::u32string_view(&cps[k], 2)));
        }
      }
      i = j;
    } else if (is_word_char(cp)) {
      std::string word;
      while (i < cps.size() && !is_cjk(cps[i]) && is_word_char(cps[i])) {
        append_utf8(word, static_cast<char32_t>(u_tolower(static_cast<UChar32>(cps[i]))));
        ++i;
      }
      terms.push_back(std::move(word));
    } else {
      ++i;
    }
  }
  return terms;
}

/// Splits a model reply into items on newline, ASCII ';' and full-width
/// '；'. Items are trimmed and empties dropped; with `dedup`, repeated items
/// are removed keep-first.
inline std::vector<std::string> split_items(std::string_view text, bool dedup = true) {
  static constexpr std::string_view kFullWidthSemicolon = "\xEF\xBC\x9B";  // U+FF1B
  std::vector<std::string> pieces;
  std::string current;
  const auto flush = [&] {
    std::string item = trim_unicode(current);
    current.clear();
    if (item.empty()) return;
    if (dedup) {
      for (const auto& seen : pieces) {
        if (seen == item) return;
      }
    }
    pieces.push_back(std::move(item));
  };
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '\n' || text[i] == ';') {
      flush();
      ++i;
    } else if (text.substr(i, kFullWidthSemicolon.size()) == kFullWidthSemicolon) {
      flush();
      i += kFullWidthSemicolon.size();
    } else {
      current.push_back(text[i]);
      ++i;
    }
  }
  flush();
  return pieces;
}

}  // namespace grs::text
