#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "promptguard/classifiers.hpp"
#include "promptguard/dataset.hpp"
#include "promptguard/embedding.hpp"
#include "promptguard/metrics.hpp"
#include "promptguard/persistence.hpp"
#include "promptguard/predictor.hpp"

// End-to-end commands behind the `promptguard` CLI. Each command writes its
// human-readable summary to `out` and its artifacts under RunConfig::out_dir.
namespace promptguard::pipeline {

inline constexpr const char* kModelDirEnv = "PROMPTGUARD_MODEL_DIR";
inline constexpr const char* kDefaultModelId = "bert-base-multilingual-uncased";
inline constexpr const char* kModelFileName = "model.json";
inline constexpr int kExitLegitimate = 0;
inline constexpr int kExitMalicious = 3;

struct RunConfig {
  // Dataset: either one file with a split column, or a train/test pair.
  std::optional<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> train_path;
  std::optional<std::filesystem::path> test_path;
  std::optional<CorpusFormat> format;  // inferred from the extension when unset

  std::optional<std::filesystem::path> vocab;
  std::optional<std::filesystem::path> model_file;  // exported transformer
  std::optional<std::filesystem::path> cache;       // PGEMB1
  std::optional<std::filesystem::path> model;       // trained model JSON

  std::optional<FeaturizerKind> featurizer;
  ModelKind classifier = ModelKind::kLogReg;
  TrainingConfig training;
  std::optional<std::filesystem::path> out_dir;
  std::size_t max_len = kDefaultMaxLen;
  Pooling pooling = Pooling::kMean;
  std::string model_id = kDefaultModelId;
  std::size_t batch_size = 32;
};

enum class RowUse { kFeaturizerFit, kClassifierFit, kEvaluation };

// Test seams. `on_row` sees every row consumed, tagged by purpose;
// `make_provider` replaces the transformer runtime in cmd_embed/predict.
struct Hooks {
  std::function<void(RowUse, Split)> on_row;
  std::function<std::unique_ptr<EmbeddingProvider>(const RunConfig&, const Vocab&)> make_provider;
};

// Resolves the output directory: --out-dir, else $PROMPTGUARD_MODEL_DIR,
// else the working directory. Created if absent.
std::filesystem::path output_dir(const RunConfig& config);
// --model, else <$PROMPTGUARD_MODEL_DIR or .>/model.json.
std::filesystem::path model_path(const RunConfig& config);

LabeledCorpus load_dataset(const RunConfig& config);

// Writes the PGEMB1 cache (to --cache, else <out>/embeddings.pgemb1).
std::filesystem::path cmd_embed(const RunConfig& config, std::ostream& out, const Hooks& hooks = {});

// Trains on split=train rows and writes <out>/model.json.
std::filesystem::path cmd_train(const RunConfig& config, std::ostream& out, const Hooks& hooks = {});

struct EvalResult {
  metrics::ConfusionMatrix confusion;
  metrics::MetricsReport report;
  std::vector<metrics::RocPoint> roc;
};

// Scores split=test rows with --model; writes <out>/metrics.json and
// <out>/roc.csv.
EvalResult cmd_eval(const RunConfig& config, std::ostream& out, const Hooks& hooks = {});

struct CompareRow {
  ModelKind kind;
  metrics::ConfusionMatrix confusion;
  metrics::MetricsReport report;
};

// Trains and evaluates all four classifiers; writes compare.md,
// compare.json, roc_<kind>.csv and misclassified.jsonl (for --classifier).
std::vector<CompareRow> cmd_compare(const RunConfig& config, std::ostream& out, const Hooks& hooks = {});

// Builds the predictor for --model, wiring a tokenizer and provider for
// embedding models (cache lookup when --cache+--dataset, else --model-file).
std::shared_ptr<const Predictor> make_predictor(const RunConfig& config, const Hooks& hooks = {});

// Prints "<label>\t<score>" and returns kExitLegitimate / kExitMalicious.
int cmd_predict(const RunConfig& config, const std::string& text, std::ostream& out,
                const Hooks& hooks = {});

std::string_view display_name(ModelKind kind);

}  // namespace promptguard::pipeline
