#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace promptguard {

using TokenId = std::int32_t;

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";

inline constexpr std::size_t kDefaultMaxLen = 128;
inline constexpr std::size_t kMaxSupportedLen = 512;
inline constexpr std::size_t kDefaultMaxWordChars = 100;

// WordPiece vocabulary: token at line i has id i.
class Vocab {
 public:
  // Throws FormatError on duplicate tokens, an empty list, or a missing
  // special token.
  explicit Vocab(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;
  // Throws std::out_of_range for unknown tokens.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  TokenId pad_id() const { return pad_; }
  TokenId unk_id() const { return unk_; }
  TokenId cls_id() const { return cls_; }
  TokenId sep_id() const { return sep_; }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId, Hash, std::equal_to<>> index_;
  TokenId pad_ = 0, unk_ = 0, cls_ = 0, sep_ = 0;
};

// One token per line, LF terminated. A trailing '\r' is kept as part of the
// token, matching the reference loader.
Vocab load_vocab(const std::filesystem::path& path);

struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> attention_mask;

  std::size_t size() const { return ids.size(); }
  // Number of positions with mask 1.
  std::size_t real_length() const;

  bool operator==(const TokenSequence&) const = default;
};

// Whitespace/punctuation pre-tokenizer. With `lowercase`, applies Unicode
// lowercasing and strips combining marks after NFD. Control characters are
// dropped and CJK ideographs become single-character tokens.
std::vector<std::string> basic_tokenize(std::string_view text, bool lowercase = true);

// Greedy longest-match-first WordPiece over one pre-tokenized word.
std::vector<std::string> wordpiece(std::string_view word, const Vocab& vocab,
                                   std::size_t max_word_chars = kDefaultMaxWordChars);

class WordPieceTokenizer {
 public:
  explicit WordPieceTokenizer(Vocab vocab, bool lowercase = true,
                              std::size_t max_word_chars = kDefaultMaxWordChars);

  const Vocab& vocab() const { return vocab_; }

  std::vector<std::string> tokenize(std::string_view text) const;

  // [CLS] pieces... [SEP], truncated so the total never exceeds max_len.
  TokenSequence encode(std::string_view text, std::size_t max_len = kDefaultMaxLen) const;

 private:
  Vocab vocab_;
  bool lowercase_;
  std::size_t max_word_chars_;
};

TokenSequence encode(std::string_view text, const Vocab& vocab, std::size_t max_len = kDefaultMaxLen);

// Right-pads with [PAD] / mask 0 up to `length`. No-op when already that long.
TokenSequence pad_to(TokenSequence seq, std::size_t length, TokenId pad_id);

}  // namespace promptguard
