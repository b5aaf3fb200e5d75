#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

#include "promptguard/classifiers.hpp"
#include "promptguard/embedding.hpp"
#include "promptguard/tfidf.hpp"

namespace promptguard {

inline constexpr int kSchemaVersion = 1;

struct EmbeddingFeaturizer {
  std::size_t dim = 0;
  std::string model_id;  // identifies the checkpoint the cache was built with
  Pooling pooling = Pooling::kMean;
  std::size_t max_len = kDefaultMaxLen;

  bool operator==(const EmbeddingFeaturizer&) const = default;
};

struct TfidfFeaturizer {
  tfidf::TermStats stats;

  bool operator==(const TfidfFeaturizer&) const = default;
};

using Featurizer = std::variant<EmbeddingFeaturizer, TfidfFeaturizer>;

enum class FeaturizerKind { kEmbeddingCache, kTfidf };

std::string_view to_string(FeaturizerKind kind);
// Accepts the CLI names embedding|tfidf and the stored name embedding_cache.
FeaturizerKind parse_featurizer_kind(std::string_view name);
FeaturizerKind kind_of(const Featurizer& featurizer);
std::size_t feature_dim(const Featurizer& featurizer);

struct TrainedModel {
  int schema_version = kSchemaVersion;
  ModelParams params;
  Featurizer featurizer;
  TrainingConfig training_config;
  std::string created_at;

  ModelKind model_kind() const { return kind_of(params); }
};

// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

nlohmann::ordered_json to_json(const TrainedModel& model);
// Throws FormatError on unsupported schema versions, missing or extra
// top-level keys, or params that do not match model_kind.
TrainedModel model_from_json(const nlohmann::json& j);

void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const TrainingConfig& config);
TrainingConfig training_config_from_json(const nlohmann::json& j);

}  // namespace promptguard
