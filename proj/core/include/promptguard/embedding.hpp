#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "promptguard/dataset.hpp"
#include "promptguard/tokenizer.hpp"

namespace promptguard {

// Dense row-major n x d matrix of single-precision prompt vectors.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim);
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> values);

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }

  std::span<const float> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  std::span<float> row(std::size_t i) { return {values_.data() + i * dim_, dim_}; }
  const std::vector<float>& values() const { return values_; }

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

enum class Pooling { kMean, kCls };

std::string_view to_string(Pooling pooling);
Pooling parse_pooling(std::string_view name);

// Mean of the rows of a T x d hidden-state block whose mask entry is 1.
// `hidden` is row-major with hidden.size() == mask.size() * dim.
// Throws UsageError when the mask has no 1 entries.
std::vector<float> mean_pool(std::span<const float> hidden, std::span<const std::uint8_t> mask,
                             std::size_t dim);
std::vector<double> mean_pool(std::span<const double> hidden, std::span<const std::uint8_t> mask,
                              std::size_t dim);
// Row 0 ([CLS] position).
std::vector<float> cls_pool(std::span<const float> hidden, std::size_t dim);

enum class ProviderKind { kTransformerRuntime, kCacheFile };

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual ProviderKind kind() const = 0;
  virtual std::size_t dim() const = 0;
  // Exclusive providers must not be called concurrently; callers serialize.
  virtual bool exclusive() const { return false; }
  // Row i embeds sequences[i]. Throws UsageError on an empty batch.
  virtual EmbeddingMatrix embed_batch(std::span<const TokenSequence> sequences) const = 0;
};

// PGEMB1 cache contents.
struct EmbeddingCache {
  EmbeddingMatrix matrix;
  std::vector<std::uint8_t> labels;
  std::vector<Split> splits;

  bool operator==(const EmbeddingCache&) const = default;
};

inline constexpr std::size_t kCacheHeaderBytes = 24;

// Exact on-disk size of a cache with n rows of dimension d.
constexpr std::uint64_t cache_file_size(std::uint64_t n, std::uint64_t d) {
  return kCacheHeaderBytes + n * 2 + n * d * 4;
}

std::string encode_cache(const EmbeddingMatrix& matrix, std::span<const std::uint8_t> labels,
                         std::span<const Split> splits);
EmbeddingCache decode_cache(std::string_view bytes);

void save_cache(const EmbeddingMatrix& matrix, std::span<const std::uint8_t> labels,
                std::span<const Split> splits, const std::filesystem::path& path);
EmbeddingCache load_cache(const std::filesystem::path& path);

// Serves embeddings precomputed into a cache. Rows are keyed by the token-id
// sequence each corpus record encodes to, since that sequence is all the
// transformer ever sees.
class CacheEmbeddingProvider final : public EmbeddingProvider {
 public:
  // `corpus` must be row-aligned with `cache`; label and split tags are
  // cross-checked. Throws FormatError if two records tokenize identically
  // but carry different vectors.
  CacheEmbeddingProvider(const LabeledCorpus& corpus, const EmbeddingCache& cache,
                         const WordPieceTokenizer& tokenizer, std::size_t max_len);

  ProviderKind kind() const override { return ProviderKind::kCacheFile; }
  std::size_t dim() const override { return matrix_.dim(); }
  // Throws Error for sequences that are not in the cache.
  EmbeddingMatrix embed_batch(std::span<const TokenSequence> sequences) const override;

  std::size_t distinct_keys() const { return index_.size(); }

 private:
  struct KeyHash {
    std::size_t operator()(const std::vector<TokenId>& ids) const;
  };

  EmbeddingMatrix matrix_;
  std::unordered_map<std::vector<TokenId>, std::size_t, KeyHash> index_;
};

#ifdef PROMPTGUARD_HAVE_ONNXRUNTIME
// Runs an exported transformer encoder through ONNX Runtime. Inputs are
// `input_ids`, `attention_mask` and (when the graph declares it)
// `token_type_ids`; the first output must be the last hidden state with shape
// [batch, seq, hidden]. The hidden size is read from the graph.
std::unique_ptr<EmbeddingProvider> make_onnx_provider(const std::filesystem::path& model_file,
                                                      TokenId pad_id, Pooling pooling);
#endif

bool transformer_runtime_available();

// Embeds `sequences` in chunks of `batch_size`, concatenating rows.
EmbeddingMatrix embed_all(const EmbeddingProvider& provider,
                          std::span<const TokenSequence> sequences, std::size_t batch_size = 32);

}  // namespace promptguard
