#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace promptguard {

enum class Split : std::uint8_t { kTrain = 0, kTest = 1 };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

enum class CorpusFormat { kCsv, kJsonl };

CorpusFormat parse_corpus_format(std::string_view name);
// Picks the format from the file extension (.csv / .jsonl / .json).
CorpusFormat infer_corpus_format(const std::filesystem::path& path);

// One labeled prompt. label 0 = legitimate, 1 = malicious.
struct PromptRecord {
  std::string text;
  std::uint8_t label = 0;
  std::optional<Split> split;

  bool operator==(const PromptRecord&) const = default;
};

struct CorpusCounts {
  std::size_t train_legitimate = 0;
  std::size_t train_malicious = 0;
  std::size_t test_legitimate = 0;
  std::size_t test_malicious = 0;
  std::size_t unsplit_legitimate = 0;
  std::size_t unsplit_malicious = 0;

  std::size_t train() const { return train_legitimate + train_malicious; }
  std::size_t test() const { return test_legitimate + test_malicious; }
  std::size_t total() const {
    return train() + test() + unsplit_legitimate + unsplit_malicious;
  }

  bool operator==(const CorpusCounts&) const = default;
};

CorpusCounts tally(const std::vector<PromptRecord>& records);

// Immutable, ordered collection of records. Counts are computed once at
// construction and always equal tally(records()).
class LabeledCorpus {
 public:
  LabeledCorpus() = default;
  explicit LabeledCorpus(std::vector<PromptRecord> records);

  const std::vector<PromptRecord>& records() const { return records_; }
  const CorpusCounts& counts() const { return counts_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const PromptRecord& operator[](std::size_t i) const { return records_[i]; }

  bool operator==(const LabeledCorpus& other) const {
    return records_ == other.records_;
  }

 private:
  std::vector<PromptRecord> records_;
  CorpusCounts counts_;
};

// Reads a CSV (RFC 4180, header `text,label[,split]`) or JSONL corpus.
// Rows are kept in file order. Any malformed row throws FormatError naming
// the line number; a missing file throws UsageError.
LabeledCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format);

// Two-file layout: every row of `train_path` is tagged train, every row of
// `test_path` test, regardless of any split column present.
LabeledCorpus load_corpus_pair(const std::filesystem::path& train_path,
                               const std::filesystem::path& test_path,
                               CorpusFormat format);

// Parse from in-memory text. `source` only decorates error messages.
LabeledCorpus parse_csv_corpus(std::string_view content, std::string_view source = "<csv>");
LabeledCorpus parse_jsonl_corpus(std::string_view content, std::string_view source = "<jsonl>");

void write_jsonl(const LabeledCorpus& corpus, const std::filesystem::path& path);
std::string to_jsonl(const LabeledCorpus& corpus);

struct SplitResult {
  std::vector<PromptRecord> train;
  std::vector<PromptRecord> test;
};

// Partitions by the stored split tag, preserving order. Throws FormatError
// if any record has no split tag.
SplitResult split(const LabeledCorpus& corpus);

}  // namespace promptguard
