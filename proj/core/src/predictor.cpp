#include "promptguard/predictor.hpp"

#include <cmath>
#include <cstdio>

#include "promptguard/error.hpp"

namespace promptguard {

Predictor::Predictor(TrainedModel model, std::shared_ptr<const EmbeddingProvider> provider,
                     std::shared_ptr<const WordPieceTokenizer> tokenizer)
    : model_(std::move(model)), provider_(std::move(provider)), tokenizer_(std::move(tokenizer)) {
  if (const auto* emb = std::get_if<EmbeddingFeaturizer>(&model_.featurizer)) {
    if (!provider_ || !tokenizer_) {
      throw UsageError("embedding model needs --vocab plus either --model-file or --cache with --dataset");
    }
    if (provider_->dim() != emb->dim) {
      throw Error("featurizer mismatch: model expects " + std::to_string(emb->dim) +
                  "-d embeddings, provider produces " + std::to_string(provider_->dim()));
    }
  }
}

std::vector<double> Predictor::features(std::string_view text) const {
  if (const auto* emb = std::get_if<EmbeddingFeaturizer>(&model_.featurizer)) {
    const TokenSequence seq = tokenizer_->encode(text, emb->max_len);
    const auto matrix = provider_->embed_batch(std::span<const TokenSequence>(&seq, 1));
    const auto row = matrix.row(0);
    return {row.begin(), row.end()};
  }
  const auto& stats = std::get<TfidfFeaturizer>(model_.featurizer).stats;
  return tfidf::transform(tfidf::tokenize(text), stats).to_dense();
}

Decision Predictor::classify(std::string_view text) const {
  return decide(model_.params, features(text), threshold());
}

std::string_view label_name(std::uint8_t label) { return label ? "malicious" : "legitimate"; }

std::string format_score(double score) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", round_score(score));
  return buf;
}

double round_score(double score) { return std::round(score * 1e4) / 1e4; }

}  // namespace promptguard
