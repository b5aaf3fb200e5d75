#include "promptguard/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "promptguard/error.hpp"
#include "utf8.hpp"

namespace promptguard {

namespace {

bool is_whitespace(char32_t c) {
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r') return true;
  return u_charType(static_cast<UChar32>(c)) == U_SPACE_SEPARATOR;
}

bool is_control(char32_t c) {
  if (c == '\t' || c == '\n' || c == '\r') return false;
  switch (u_charType(static_cast<UChar32>(c))) {
    case U_CONTROL_CHAR:
    case U_FORMAT_CHAR:
    case U_UNASSIGNED:
    case U_PRIVATE_USE_CHAR:
    case U_SURROGATE:
      return true;
    default:
      return false;
  }
}

bool is_punctuation(char32_t c) {
  if ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
      (c >= 123 && c <= 126)) {
    return true;
  }
  switch (u_charType(static_cast<UChar32>(c))) {
    case U_DASH_PUNCTUATION:
    case U_START_PUNCTUATION:
    case U_END_PUNCTUATION:
    case U_CONNECTOR_PUNCTUATION:
    case U_OTHER_PUNCTUATION:
    case U_INITIAL_PUNCTUATION:
    case U_FINAL_PUNCTUATION:
      return true;
    default:
      return false;
  }
}

// CJK Unified Ideographs blocks; Hangul, Hiragana and Katakana are
// deliberately not included.
bool is_cjk(char32_t c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) ||
         (c >= 0x20000 && c <= 0x2A6DF) || (c >= 0x2A700 && c <= 0x2B73F) ||
         (c >= 0x2B740 && c <= 0x2B81F) || (c >= 0x2B820 && c <= 0x2CEAF) ||
         (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x2F800 && c <= 0x2FA1F);
}

std::vector<char32_t> strip_accents_and_lower(const std::vector<char32_t>& cps) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfd = icu::Normalizer2::getNFDInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFD normalizer unavailable");

  icu::UnicodeString src;
  for (char32_t c : cps) src.append(static_cast<UChar32>(c));
  const icu::UnicodeString decomposed = nfd->normalize(src, status);
  if (U_FAILURE(status)) throw Error("ICU NFD normalization failed");

  std::vector<char32_t> out;
  out.reserve(cps.size());
  for (int32_t i = 0; i < decomposed.length();) {
    const UChar32 c = decomposed.char32At(i);
    i += U16_LENGTH(c);
    if (u_charType(c) == U_NON_SPACING_MARK) continue;
    out.push_back(static_cast<char32_t>(u_tolower(c)));
  }
  return out;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty()) throw FormatError("vocabulary is empty");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) {
      throw FormatError("duplicate vocabulary token '" + tokens_[i] + "' at line " +
                        std::to_string(i + 1));
    }
  }
  auto special = [this](std::string_view name) {
    const auto it = index_.find(name);
    if (it == index_.end()) {
      throw FormatError("vocabulary is missing special token " + std::string(name));
    }
    return it->second;
  };
  pad_ = special(kPadToken);
  unk_ = special(kUnkToken);
  cls_ = special(kClsToken);
  sep_ = special(kSepToken);
}

bool Vocab::contains(std::string_view token) const { return index_.find(token) != index_.end(); }

TokenId Vocab::id(std::string_view token) const {
  const auto it = index_.find(token);
  if (it == index_.end()) throw std::out_of_range("token not in vocabulary: " + std::string(token));
  return it->second;
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open vocabulary file: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocab(std::move(tokens));
}

std::size_t TokenSequence::real_length() const {
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
}

std::vector<std::string> basic_tokenize(std::string_view text, bool lowercase) {
  std::vector<char32_t> decoded;
  if (!utf8::decode(text, decoded)) throw FormatError("text is not valid UTF-8");

  std::vector<char32_t> cleaned;
  cleaned.reserve(decoded.size());
  for (char32_t c : decoded) {
    if (c == 0 || c == 0xFFFD || is_control(c)) continue;
    if (is_whitespace(c)) {
      cleaned.push_back(' ');
    } else if (is_cjk(c)) {
      cleaned.push_back(' ');
      cleaned.push_back(c);
      cleaned.push_back(' ');
    } else {
      cleaned.push_back(c);
    }
  }
  if (lowercase) cleaned = strip_accents_and_lower(cleaned);

  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (char32_t c : cleaned) {
    if (c == ' ' || u_isUWhiteSpace(static_cast<UChar32>(c))) {
      flush();
    } else if (is_punctuation(c)) {
      flush();
      utf8::append(current, c);
      flush();
    } else {
      utf8::append(current, c);
    }
  }
  flush();
  return tokens;
}

std::vector<std::string> wordpiece(std::string_view word, const Vocab& vocab,
                                   std::size_t max_word_chars) {
  std::vector<char32_t> chars;
  if (!utf8::decode(word, chars)) throw FormatError("word is not valid UTF-8");
  const std::vector<std::string> unk{std::string(kUnkToken)};
  if (chars.empty()) return {};
  if (chars.size() > max_word_chars) return unk;

  std::vector<std::string> pieces;
  std::size_t start = 0;
  std::string candidate;
  while (start < chars.size()) {
    bool found = false;
    for (std::size_t end = chars.size(); end > start; --end) {
      candidate.clear();
      if (start > 0) candidate = "##";
      for (std::size_t k = start; k < end; ++k) utf8::append(candidate, chars[k]);
      if (vocab.contains(candidate)) {
        pieces.push_back(candidate);
        start = end;
        found = true;
        break;
      }
    }
    if (!found) return unk;
  }
  return pieces;
}

namespace {

std::vector<std::string> tokenize_pieces(std::string_view text, const Vocab& vocab, bool lowercase,
                                         std::size_t max_word_chars) {
  std::vector<std::string> pieces;
  for (const auto& word : basic_tokenize(text, lowercase)) {
    auto p = wordpiece(word, vocab, max_word_chars);
    pieces.insert(pieces.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  return pieces;
}

TokenSequence frame(const std::vector<std::string>& pieces, const Vocab& vocab, std::size_t max_len) {
  if (max_len < 2) throw UsageError("max_len must be at least 2");
  const std::size_t body = std::min(pieces.size(), max_len - 2);
  TokenSequence seq;
  seq.ids.reserve(body + 2);
  seq.ids.push_back(vocab.cls_id());
  for (std::size_t i = 0; i < body; ++i) seq.ids.push_back(vocab.id(pieces[i]));
  seq.ids.push_back(vocab.sep_id());
  seq.attention_mask.assign(seq.ids.size(), 1);
  return seq;
}

}  // namespace

WordPieceTokenizer::WordPieceTokenizer(Vocab vocab, bool lowercase, std::size_t max_word_chars)
    : vocab_(std::move(vocab)), lowercase_(lowercase), max_word_chars_(max_word_chars) {}

std::vector<std::string> WordPieceTokenizer::tokenize(std::string_view text) const {
  return tokenize_pieces(text, vocab_, lowercase_, max_word_chars_);
}

TokenSequence WordPieceTokenizer::encode(std::string_view text, std::size_t max_len) const {
  return frame(tokenize(text), vocab_, max_len);
}

TokenSequence encode(std::string_view text, const Vocab& vocab, std::size_t max_len) {
  return frame(tokenize_pieces(text, vocab, true, kDefaultMaxWordChars), vocab, max_len);
}

TokenSequence pad_to(TokenSequence seq, std::size_t length, TokenId pad_id) {
  if (seq.ids.size() < length) {
    seq.ids.resize(length, pad_id);
    seq.attention_mask.resize(length, 0);
  }
  return seq;
}

}  // namespace promptguard
