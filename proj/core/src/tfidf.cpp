#include "promptguard/tfidf.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "promptguard/error.hpp"
#include "promptguard/tokenizer.hpp"

namespace promptguard::tfidf {

TermStats::TermStats(std::vector<std::string> terms, std::vector<std::uint32_t> df,
                     std::uint32_t n_docs)
    : terms_(std::move(terms)), df_(std::move(df)), n_docs_(n_docs) {
  if (terms_.size() != df_.size()) throw FormatError("tfidf vocab and df lengths differ");
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (i > 0 && !(terms_[i - 1] < terms_[i])) {
      throw FormatError("tfidf vocab must be sorted and unique");
    }
    if (df_[i] < 1 || df_[i] > n_docs_) {
      throw FormatError("tfidf df out of range for term '" + terms_[i] + "'");
    }
  }
}

std::optional<std::size_t> TermStats::index_of(std::string_view term) const {
  const auto it = std::lower_bound(terms_.begin(), terms_.end(), term);
  if (it == terms_.end() || *it != term) return std::nullopt;
  return static_cast<std::size_t>(it - terms_.begin());
}

std::uint32_t TermStats::document_frequency(std::string_view term) const {
  const auto idx = index_of(term);
  return idx ? df_[*idx] : 0;
}

double SparseVector::weight(std::size_t index) const {
  const auto it = std::lower_bound(entries.begin(), entries.end(), index,
                                   [](const SparseEntry& e, std::size_t i) { return e.index < i; });
  return (it != entries.end() && it->index == index) ? it->weight : 0.0;
}

std::vector<double> SparseVector::to_dense() const {
  std::vector<double> out(dimension, 0.0);
  for (const auto& e : entries) out[e.index] = e.weight;
  return out;
}

double term_frequency(std::string_view term, std::span<const std::string> doc) {
  if (doc.empty()) throw UsageError("term frequency of an empty document");
  const auto count = std::count(doc.begin(), doc.end(), term);
  return static_cast<double>(count) / static_cast<double>(doc.size());
}

double inverse_document_frequency(std::uint32_t n_docs, std::uint32_t df) {
  if (df == 0 || df > n_docs) throw UsageError("document frequency out of range");
  return std::log(static_cast<double>(n_docs) / static_cast<double>(df));
}

double inverse_document_frequency(std::string_view term, const TermStats& stats) {
  const auto df = stats.document_frequency(term);
  if (df == 0) throw UsageError("term not in tfidf vocabulary: " + std::string(term));
  return inverse_document_frequency(stats.n_docs(), df);
}

TermStats fit(std::span<const Document> corpus) {
  std::map<std::string, std::uint32_t, std::less<>> df;
  bool any_tokens = false;
  for (const auto& doc : corpus) {
    any_tokens = any_tokens || !doc.empty();
    std::vector<std::string_view> seen(doc.begin(), doc.end());
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (auto term : seen) {
      auto it = df.find(term);
      if (it == df.end()) it = df.emplace(std::string(term), 0).first;
      ++it->second;
    }
  }
  if (!any_tokens) throw UsageError("tfidf fit needs at least one non-empty document");

  std::vector<std::string> terms;
  std::vector<std::uint32_t> counts;
  terms.reserve(df.size());
  counts.reserve(df.size());
  for (auto& [term, count] : df) {
    terms.push_back(term);
    counts.push_back(count);
  }
  return TermStats(std::move(terms), std::move(counts), static_cast<std::uint32_t>(corpus.size()));
}

SparseVector transform(std::span<const std::string> doc, const TermStats& stats) {
  SparseVector out;
  out.dimension = stats.size();
  if (doc.empty()) return out;

  std::map<std::size_t, std::size_t> counts;
  for (const auto& term : doc) {
    if (const auto idx = stats.index_of(term)) ++counts[*idx];
  }
  const double n_d = static_cast<double>(doc.size());
  for (const auto& [idx, count] : counts) {
    const double tf = static_cast<double>(count) / n_d;
    const double w = tf * inverse_document_frequency(stats.n_docs(), stats.df()[idx]);
    if (w != 0.0) out.entries.push_back({idx, w});
  }
  return out;
}

Document tokenize(std::string_view text) { return basic_tokenize(text, true); }

}  // namespace promptguard::tfidf
