#include "promptguard/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "promptguard/error.hpp"

namespace promptguard {

namespace {

constexpr char kMagic[8] = {'P', 'G', 'E', 'M', 'B', '1', '\0', '\0'};

static_assert(std::numeric_limits<float>::is_iec559, "IEEE-754 floats required");

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int k = 7; k >= 0; --k) v = (v << 8) | p[k];
  return v;
}

template <typename T>
std::vector<T> mean_pool_impl(std::span<const T> hidden, std::span<const std::uint8_t> mask,
                              std::size_t dim) {
  if (hidden.size() != mask.size() * dim) {
    throw UsageError("hidden-state block does not match mask length");
  }
  std::vector<double> acc(dim, 0.0);
  std::size_t count = 0;
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (!mask[t]) continue;
    ++count;
    for (std::size_t j = 0; j < dim; ++j) acc[j] += hidden[t * dim + j];
  }
  if (count == 0) throw UsageError("attention mask has no real tokens");
  std::vector<T> out(dim);
  for (std::size_t j = 0; j < dim; ++j) out[j] = static_cast<T>(acc[j] / static_cast<double>(count));
  return out;
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim)
    : rows_(rows), dim_(dim), values_(rows * dim, 0.0f) {}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> values)
    : rows_(rows), dim_(dim), values_(std::move(values)) {
  if (values_.size() != rows_ * dim_) {
    throw UsageError("embedding matrix payload does not match rows x dim");
  }
}

std::string_view to_string(Pooling pooling) { return pooling == Pooling::kMean ? "mean" : "cls"; }

Pooling parse_pooling(std::string_view name) {
  if (name == "mean") return Pooling::kMean;
  if (name == "cls") return Pooling::kCls;
  throw UsageError("unknown pooling: " + std::string(name) + " (expected mean|cls)");
}

std::vector<float> mean_pool(std::span<const float> hidden, std::span<const std::uint8_t> mask,
                             std::size_t dim) {
  return mean_pool_impl(hidden, mask, dim);
}

std::vector<double> mean_pool(std::span<const double> hidden, std::span<const std::uint8_t> mask,
                              std::size_t dim) {
  return mean_pool_impl(hidden, mask, dim);
}

std::vector<float> cls_pool(std::span<const float> hidden, std::size_t dim) {
  if (hidden.size() < dim) throw UsageError("hidden-state block is empty");
  return {hidden.begin(), hidden.begin() + static_cast<std::ptrdiff_t>(dim)};
}

std::string encode_cache(const EmbeddingMatrix& matrix, std::span<const std::uint8_t> labels,
                         std::span<const Split> splits) {
  const std::size_t n = matrix.rows();
  if (labels.size() != n || splits.size() != n) {
    throw UsageError("cache labels/splits are not aligned with the matrix rows");
  }
  if (n > UINT32_MAX || matrix.dim() > UINT32_MAX) throw UsageError("cache too large");

  std::string out;
  out.reserve(cache_file_size(n, matrix.dim()));
  out.append(kMagic, sizeof kMagic);
  put_u32(out, static_cast<std::uint32_t>(n));
  put_u32(out, static_cast<std::uint32_t>(matrix.dim()));
  put_u64(out, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] > 1) throw UsageError("cache label out of range");
    out.push_back(static_cast<char>(labels[i]));
    out.push_back(static_cast<char>(splits[i]));
  }
  for (float v : matrix.values()) {
    if (!std::isfinite(v)) throw NumericError("non-finite embedding value");
    put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

EmbeddingCache decode_cache(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a PGEMB1 file");
  }
  if (bytes.size() < kCacheHeaderBytes) throw FormatError("truncated PGEMB1 header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t n = get_u32(p + 8);
  const std::uint64_t d = get_u32(p + 12);
  if (get_u64(p + 16) != 0) throw FormatError("PGEMB1 reserved field is not zero");
  const std::uint64_t expected = cache_file_size(n, d);
  if (bytes.size() < expected) {
    throw FormatError("truncated PGEMB1 file: expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw FormatError("PGEMB1 payload length does not match count " + std::to_string(n) +
                      " x dim " + std::to_string(d));
  }

  EmbeddingCache cache;
  cache.labels.resize(n);
  cache.splits.resize(n);
  const unsigned char* meta = p + kCacheHeaderBytes;
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = meta[2 * i];
    const auto split = meta[2 * i + 1];
    if (label > 1) throw FormatError("PGEMB1 label out of range at row " + std::to_string(i));
    if (split > 1) throw FormatError("PGEMB1 split code out of range at row " + std::to_string(i));
    cache.labels[i] = label;
    cache.splits[i] = static_cast<Split>(split);
  }
  std::vector<float> values(n * d);
  const unsigned char* payload = meta + 2 * n;
  for (std::size_t k = 0; k < values.size(); ++k) {
    values[k] = std::bit_cast<float>(get_u32(payload + 4 * k));
  }
  cache.matrix = EmbeddingMatrix(n, d, std::move(values));
  return cache;
}

void save_cache(const EmbeddingMatrix& matrix, std::span<const std::uint8_t> labels,
                std::span<const Split> splits, const std::filesystem::path& path) {
  const auto bytes = encode_cache(matrix, labels, splits);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write cache file: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

EmbeddingCache load_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open cache file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_cache(buf.str());
}

std::size_t CacheEmbeddingProvider::KeyHash::operator()(const std::vector<TokenId>& ids) const {
  // FNV-1a over the id bytes.
  std::uint64_t h = 1469598103934665603ULL;
  for (TokenId id : ids) {
    auto v = static_cast<std::uint32_t>(id);
    for (int k = 0; k < 4; ++k) {
      h ^= (v >> (8 * k)) & 0xFF;
      h *= 1099511628211ULL;
    }
  }
  return static_cast<std::size_t>(h);
}

CacheEmbeddingProvider::CacheEmbeddingProvider(const LabeledCorpus& corpus,
                                               const EmbeddingCache& cache,
                                               const WordPieceTokenizer& tokenizer,
                                               std::size_t max_len)
    : matrix_(cache.matrix) {
  if (corpus.size() != cache.matrix.rows()) {
    throw FormatError("cache has " + std::to_string(cache.matrix.rows()) +
                      " rows but the dataset has " + std::to_string(corpus.size()) + " records");
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& rec = corpus[i];
    if (rec.label != cache.labels[i] || (rec.split && *rec.split != cache.splits[i])) {
      throw FormatError("cache row " + std::to_string(i) + " is not aligned with the dataset");
    }
    auto ids = tokenizer.encode(rec.text, max_len).ids;
    const auto [it, inserted] = index_.emplace(std::move(ids), i);
    if (!inserted) {
      const auto a = matrix_.row(it->second);
      const auto b = matrix_.row(i);
      if (!std::equal(a.begin(), a.end(), b.begin())) {
        throw FormatError("cache rows " + std::to_string(it->second) + " and " +
                          std::to_string(i) +
                          " share a token sequence but differ; wrong vocab or max_len?");
      }
    }
  }
}

EmbeddingMatrix CacheEmbeddingProvider::embed_batch(std::span<const TokenSequence> sequences) const {
  if (sequences.empty()) throw UsageError("embed_batch called with no sequences");
  EmbeddingMatrix out(sequences.size(), matrix_.dim());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& seq = sequences[i];
    std::vector<TokenId> key(seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(seq.real_length()));
    const auto it = index_.find(key);
    if (it == index_.end()) {
      throw Error("text is not present in the embedding cache; a transformer model file is "
                  "required to embed new text");
    }
    const auto src = matrix_.row(it->second);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

bool transformer_runtime_available() {
#ifdef PROMPTGUARD_HAVE_ONNXRUNTIME
  return true;
#else
  return false;
#endif
}

EmbeddingMatrix embed_all(const EmbeddingProvider& provider,
                          std::span<const TokenSequence> sequences, std::size_t batch_size) {
  if (sequences.empty()) throw UsageError("no sequences to embed");
  if (batch_size == 0) batch_size = 1;
  const std::size_t d = provider.dim();
  std::vector<float> values;
  values.reserve(sequences.size() * d);
  for (std::size_t start = 0; start < sequences.size(); start += batch_size) {
    const auto count = std::min(batch_size, sequences.size() - start);
    const auto block = provider.embed_batch(sequences.subspan(start, count));
    if (block.dim() != d || block.rows() != count) {
      throw NumericError("embedding provider returned " + std::to_string(block.rows()) + "x" +
                         std::to_string(block.dim()) + ", expected " + std::to_string(count) +
                         "x" + std::to_string(d));
    }
    for (float v : block.values()) {
      if (!std::isfinite(v)) throw NumericError("embedding provider produced a non-finite value");
    }
    values.insert(values.end(), block.values().begin(), block.values().end());
  }
  return EmbeddingMatrix(sequences.size(), d, std::move(values));
}

}  // namespace promptguard
