#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace promptguard::tfidf {

using Document = std::vector<std::string>;

// Corpus statistics from fit(). Terms are indexed in lexicographic order so
// the feature layout does not depend on document order.
class TermStats {
 public:
  TermStats() = default;
  // Throws FormatError unless terms are strictly increasing, df has the same
  // length and every 1 <= df <= n_docs.
  TermStats(std::vector<std::string> terms, std::vector<std::uint32_t> df, std::uint32_t n_docs);

  std::size_t size() const { return terms_.size(); }
  std::uint32_t n_docs() const { return n_docs_; }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<std::uint32_t>& df() const { return df_; }

  std::optional<std::size_t> index_of(std::string_view term) const;
  // 0 for terms outside the vocabulary.
  std::uint32_t document_frequency(std::string_view term) const;

  bool operator==(const TermStats&) const = default;

 private:
  std::vector<std::string> terms_;
  std::vector<std::uint32_t> df_;
  std::uint32_t n_docs_ = 0;
};

struct SparseEntry {
  std::size_t index;
  double weight;

  bool operator==(const SparseEntry&) const = default;
};

// Entries sorted by strictly increasing index; zero weights are not stored.
struct SparseVector {
  std::vector<SparseEntry> entries;
  std::size_t dimension = 0;

  double weight(std::size_t index) const;
  std::vector<double> to_dense() const;
};

// n_{t,d} / N_d. Throws UsageError on an empty document.
double term_frequency(std::string_view term, std::span<const std::string> doc);

// ln(N / df(t)). Throws UsageError for terms outside the vocabulary.
double inverse_document_frequency(std::string_view term, const TermStats& stats);
double inverse_document_frequency(std::uint32_t n_docs, std::uint32_t df);

// Throws UsageError when no document has any token.
TermStats fit(std::span<const Document> corpus);

// TF x IDF for each in-vocabulary term of `doc`. Out-of-vocabulary terms
// contribute nothing; an empty document gives an empty vector.
SparseVector transform(std::span<const std::string> doc, const TermStats& stats);

// Lowercased basic tokenization, shared by fit/transform callers.
Document tokenize(std::string_view text);

}  // namespace promptguard::tfidf
