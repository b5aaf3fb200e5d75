#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promptguard/classifiers.hpp"
#include "promptguard/embedding.hpp"
#include "promptguard/persistence.hpp"
#include "promptguard/tokenizer.hpp"

namespace promptguard {

// Text -> label/score for one trained model. Embedding models need a
// tokenizer and a provider whose dimension matches the model; tfidf models
// carry everything they need.
class Predictor {
 public:
  // Throws Error("featurizer mismatch ...") when the provider does not fit.
  explicit Predictor(TrainedModel model, std::shared_ptr<const EmbeddingProvider> provider = nullptr,
                     std::shared_ptr<const WordPieceTokenizer> tokenizer = nullptr);

  const TrainedModel& model() const { return model_; }
  bool exclusive() const { return provider_ && provider_->exclusive(); }
  double threshold() const { return model_.training_config.threshold; }

  std::vector<double> features(std::string_view text) const;
  Decision classify(std::string_view text) const;

 private:
  TrainedModel model_;
  std::shared_ptr<const EmbeddingProvider> provider_;
  std::shared_ptr<const WordPieceTokenizer> tokenizer_;
};

std::string_view label_name(std::uint8_t label);
// Score printed with exactly four decimals, e.g. "0.9655".
std::string format_score(double score);
// The same value as a number: score rounded half-away-from-zero to 1e-4.
double round_score(double score);

}  // namespace promptguard
