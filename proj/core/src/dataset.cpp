#include "promptguard/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "promptguard/error.hpp"
#include "utf8.hpp"

namespace promptguard {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw UsageError("cannot open dataset file: " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string_view trim(std::string_view s) {
  constexpr std::string_view kWs = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(kWs);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(kWs);
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail_at(std::string_view source, std::size_t line, const std::string& what) {
  throw FormatError(what + " at line " + std::to_string(line) + " (" + std::string(source) + ")");
}

void check_text(std::string_view source, std::size_t line, const std::string& text) {
  if (!utf8::is_valid(text)) fail_at(source, line, "text is not valid UTF-8");
  if (trim(text).empty()) fail_at(source, line, "empty text");
}

std::uint8_t parse_csv_label(std::string_view source, std::size_t line, std::string_view raw) {
  const auto v = trim(raw);
  if (v == "0") return 0;
  if (v == "1") return 1;
  if (v.empty() || !std::all_of(v.begin(), v.end(), [](char c) {
        return (c >= '0' && c <= '9') || c == '-' || c == '+';
      })) {
    fail_at(source, line, "label is not an integer");
  }
  fail_at(source, line, "label out of range");
}

Split parse_split_at(std::string_view source, std::size_t line, std::string_view raw) {
  const auto v = trim(raw);
  if (v == "train") return Split::kTrain;
  if (v == "test") return Split::kTest;
  fail_at(source, line, "split must be 'train' or 'test'");
}

struct CsvRow {
  std::vector<std::string> fields;
  std::size_t line = 0;  // line on which the record starts
};

// RFC 4180 reader. Accepts LF or CRLF record terminators; quoted fields
// may span lines.
std::vector<CsvRow> read_csv_rows(std::string_view content, std::string_view source) {
  std::vector<CsvRow> rows;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = content.size();

  if (content.substr(0, 3) == "\xEF\xBB\xBF") i = 3;

  while (i < n) {
    CsvRow row;
    row.line = line;
    std::string field;
    bool row_done = false;
    while (!row_done) {
      field.clear();
      if (i < n && content[i] == '"') {
        ++i;
        bool closed = false;
        while (i < n) {
          const char c = content[i];
          if (c == '"') {
            if (i + 1 < n && content[i + 1] == '"') {
              field.push_back('"');
              i += 2;
              continue;
            }
            ++i;
            closed = true;
            break;
          }
          if (c == '\n') ++line;
          field.push_back(c);
          ++i;
        }
        if (!closed) fail_at(source, row.line, "unterminated quoted field");
        if (i < n && content[i] != ',' && content[i] != '\n' &&
            !(content[i] == '\r' && i + 1 < n && content[i + 1] == '\n')) {
          fail_at(source, line, "unexpected character after closing quote");
        }
      } else {
        while (i < n && content[i] != ',' && content[i] != '\n') {
          if (content[i] == '"') fail_at(source, line, "quote inside unquoted field");
          if (content[i] == '\r' && i + 1 < n && content[i + 1] == '\n') break;
          field.push_back(content[i]);
          ++i;
        }
      }
      row.fields.push_back(field);
      if (i >= n) {
        row_done = true;
      } else if (content[i] == ',') {
        ++i;
      } else {
        if (content[i] == '\r') ++i;
        ++i;  // '\n'
        ++line;
        row_done = true;
      }
    }
    // A blank line (single empty unquoted field) is not a record.
    if (row.fields.size() == 1 && row.fields[0].empty()) continue;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string_view to_string(Split split) {
  return split == Split::kTrain ? "train" : "test";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw UsageError("unknown split: " + std::string(name));
}

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "csv") return CorpusFormat::kCsv;
  if (name == "jsonl") return CorpusFormat::kJsonl;
  throw UsageError("unknown dataset format: " + std::string(name) + " (expected csv|jsonl)");
}

CorpusFormat infer_corpus_format(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".csv") return CorpusFormat::kCsv;
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return CorpusFormat::kJsonl;
  throw UsageError("cannot infer dataset format from " + path.string() + "; pass --format");
}

CorpusCounts tally(const std::vector<PromptRecord>& records) {
  CorpusCounts c;
  for (const auto& r : records) {
    const bool bad = r.label == 1;
    if (!r.split) {
      (bad ? c.unsplit_malicious : c.unsplit_legitimate)++;
    } else if (*r.split == Split::kTrain) {
      (bad ? c.train_malicious : c.train_legitimate)++;
    } else {
      (bad ? c.test_malicious : c.test_legitimate)++;
    }
  }
  return c;
}

LabeledCorpus::LabeledCorpus(std::vector<PromptRecord> records)
    : records_(std::move(records)), counts_(tally(records_)) {}

LabeledCorpus parse_csv_corpus(std::string_view content, std::string_view source) {
  auto rows = read_csv_rows(content, source);
  if (rows.empty()) fail_at(source, 1, "missing header row");

  int text_col = -1, label_col = -1, split_col = -1;
  const auto& header = rows.front();
  for (std::size_t c = 0; c < header.fields.size(); ++c) {
    const auto name = trim(header.fields[c]);
    int* slot = nullptr;
    if (name == "text") slot = &text_col;
    else if (name == "label") slot = &label_col;
    else if (name == "split") slot = &split_col;
    else fail_at(source, header.line, "unknown column '" + std::string(name) + "'");
    if (*slot != -1) fail_at(source, header.line, "duplicate column '" + std::string(name) + "'");
    *slot = static_cast<int>(c);
  }
  if (text_col < 0) fail_at(source, header.line, "missing 'text' column");
  if (label_col < 0) fail_at(source, header.line, "missing 'label' column");

  std::vector<PromptRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != header.fields.size()) {
      fail_at(source, row.line,
              "expected " + std::to_string(header.fields.size()) + " fields, got " +
                  std::to_string(row.fields.size()));
    }
    PromptRecord rec;
    rec.text = row.fields[text_col];
    check_text(source, row.line, rec.text);
    rec.label = parse_csv_label(source, row.line, row.fields[label_col]);
    if (split_col >= 0) rec.split = parse_split_at(source, row.line, row.fields[split_col]);
    records.push_back(std::move(rec));
  }
  return LabeledCorpus(std::move(records));
}

LabeledCorpus parse_jsonl_corpus(std::string_view content, std::string_view source) {
  std::vector<PromptRecord> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const auto line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (trim(line).empty()) continue;

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      fail_at(source, line_no, "invalid JSON");
    }
    if (!obj.is_object()) fail_at(source, line_no, "expected a JSON object");

    PromptRecord rec;
    const auto text = obj.find("text");
    if (text == obj.end()) fail_at(source, line_no, "missing 'text' field");
    if (!text->is_string()) fail_at(source, line_no, "'text' must be a string");
    rec.text = text->get<std::string>();
    check_text(source, line_no, rec.text);

    const auto label = obj.find("label");
    if (label == obj.end()) fail_at(source, line_no, "missing 'label' field");
    if (!label->is_number_integer()) fail_at(source, line_no, "label is not an integer");
    const auto value = label->get<std::int64_t>();
    if (value != 0 && value != 1) fail_at(source, line_no, "label out of range");
    rec.label = static_cast<std::uint8_t>(value);

    const auto sp = obj.find("split");
    if (sp != obj.end() && !sp->is_null()) {
      if (!sp->is_string()) fail_at(source, line_no, "'split' must be a string");
      rec.split = parse_split_at(source, line_no, sp->get<std::string>());
    }
    records.push_back(std::move(rec));
  }
  return LabeledCorpus(std::move(records));
}

LabeledCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  const auto content = read_file(path);
  const auto source = path.string();
  return format == CorpusFormat::kCsv ? parse_csv_corpus(content, source)
                                      : parse_jsonl_corpus(content, source);
}

LabeledCorpus load_corpus_pair(const std::filesystem::path& train_path,
                               const std::filesystem::path& test_path,
                               CorpusFormat format) {
  auto records = load_corpus(train_path, format).records();
  for (auto& r : records) r.split = Split::kTrain;
  auto test = load_corpus(test_path, format).records();
  for (auto& r : test) {
    r.split = Split::kTest;
    records.push_back(std::move(r));
  }
  return LabeledCorpus(std::move(records));
}

std::string to_jsonl(const LabeledCorpus& corpus) {
  std::string out;
  for (const auto& r : corpus.records()) {
    nlohmann::ordered_json obj;
    obj["text"] = r.text;
    obj["label"] = r.label;
    if (r.split) obj["split"] = std::string(to_string(*r.split));
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const LabeledCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << to_jsonl(corpus);
  if (!out) throw Error("write failed: " + path.string());
}

SplitResult split(const LabeledCorpus& corpus) {
  SplitResult result;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& r = corpus[i];
    if (!r.split) {
      throw FormatError("record " + std::to_string(i) + " has no split tag");
    }
    (*r.split == Split::kTrain ? result.train : result.test).push_back(r);
  }
  return result;
}

}  // namespace promptguard
