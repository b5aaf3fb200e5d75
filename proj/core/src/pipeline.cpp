#include "promptguard/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "promptguard/error.hpp"
#include "promptguard/metrics.hpp"
#include "promptguard/tfidf.hpp"

namespace promptguard::pipeline {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr ModelKind kCompareOrder[] = {ModelKind::kGnb, ModelKind::kRandomForest,
                                       ModelKind::kLinearSvm, ModelKind::kLogReg};

void notify(const Hooks& hooks, RowUse use, Split split) {
  if (hooks.on_row) hooks.on_row(use, split);
}

fs::path env_model_dir() {
  if (const char* dir = std::getenv(kModelDirEnv); dir && *dir) return dir;
  return ".";
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write " + path.string());
  out << content;
  if (!out) throw Error("write failed: " + path.string());
}

Matrix to_matrix(const EmbeddingMatrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), m.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = m.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix tfidf_matrix(const LabeledCorpus& corpus, const std::vector<std::size_t>& rows,
                    const tfidf::TermStats& stats) {
  Matrix out(rows.size(), stats.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto vec = tfidf::transform(tfidf::tokenize(corpus[rows[r]].text), stats);
    for (const auto& e : vec.entries) out(r, e.index) = e.weight;
  }
  return out;
}

// Source rows with cached embeddings plus, optionally, the aligned corpus.
struct EmbeddingSource {
  EmbeddingCache cache;
  std::optional<LabeledCorpus> corpus;
};

EmbeddingSource load_embedding_source(const RunConfig& config) {
  if (!config.cache) throw UsageError("--cache is required for the embedding featurizer");
  EmbeddingSource src{load_cache(*config.cache), std::nullopt};
  if (config.dataset || (config.train_path && config.test_path)) {
    src.corpus = load_dataset(config);
    const auto& corpus = *src.corpus;
    if (corpus.size() != src.cache.matrix.rows()) {
      throw FormatError("cache has " + std::to_string(src.cache.matrix.rows()) + " rows but dataset has " +
                        std::to_string(corpus.size()));
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (corpus[i].label != src.cache.labels[i] ||
          (corpus[i].split && *corpus[i].split != src.cache.splits[i])) {
        throw FormatError("cache row " + std::to_string(i) + " is not aligned with the dataset");
      }
    }
  }
  return src;
}

std::vector<std::size_t> rows_of(const std::vector<Split>& splits, Split which) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == which) rows.push_back(i);
  }
  return rows;
}

std::vector<Split> corpus_splits(const LabeledCorpus& corpus) {
  std::vector<Split> splits;
  splits.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!corpus[i].split) throw FormatError("record " + std::to_string(i) + " has no split tag");
    splits.push_back(*corpus[i].split);
  }
  return splits;
}

Labels labels_at(const std::vector<std::uint8_t>& labels, const std::vector<std::size_t>& rows) {
  Labels out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(labels[r]);
  return out;
}

Labels corpus_labels(const LabeledCorpus& corpus) {
  Labels out;
  for (const auto& r : corpus.records()) out.push_back(r.label);
  return out;
}

FeaturizerKind resolve_featurizer(const RunConfig& config) {
  const bool has_data = config.dataset || (config.train_path && config.test_path);
  FeaturizerKind kind;
  if (config.featurizer) {
    kind = *config.featurizer;
  } else if (config.cache) {
    kind = FeaturizerKind::kEmbeddingCache;
  } else if (has_data) {
    kind = FeaturizerKind::kTfidf;
  } else {
    throw UsageError("a featurizer source is required: --cache (embedding) or --dataset (tfidf)");
  }
  if (kind == FeaturizerKind::kEmbeddingCache && !config.cache) {
    throw UsageError("--featurizer embedding needs --cache");
  }
  if (kind == FeaturizerKind::kTfidf) {
    if (config.cache) throw UsageError("--featurizer tfidf takes --dataset, not --cache");
    if (!has_data) throw UsageError("--featurizer tfidf needs --dataset");
  }
  return kind;
}

// Everything a training run needs, split by the stored tags.
struct Prepared {
  Featurizer featurizer;
  Matrix x_train;
  Labels y_train;
  Matrix x_test;
  Labels y_test;
  std::vector<std::size_t> test_rows;
  std::optional<LabeledCorpus> corpus;
};

Prepared prepare(const RunConfig& config, const Hooks& hooks) {
  Prepared p;
  if (resolve_featurizer(config) == FeaturizerKind::kEmbeddingCache) {
    auto src = load_embedding_source(config);
    const auto train_rows = rows_of(src.cache.splits, Split::kTrain);
    p.test_rows = rows_of(src.cache.splits, Split::kTest);
    for (std::size_t i = 0; i < train_rows.size(); ++i) notify(hooks, RowUse::kClassifierFit, Split::kTrain);
    p.x_train = to_matrix(src.cache.matrix, train_rows);
    p.y_train = labels_at(src.cache.labels, train_rows);
    p.x_test = to_matrix(src.cache.matrix, p.test_rows);
    p.y_test = labels_at(src.cache.labels, p.test_rows);
    p.featurizer = EmbeddingFeaturizer{src.cache.matrix.dim(), config.model_id, config.pooling, config.max_len};
    p.corpus = std::move(src.corpus);
    return p;
  }

  auto corpus = load_dataset(config);
  const auto splits = corpus_splits(corpus);
  const auto labels = corpus_labels(corpus);
  const auto train_rows = rows_of(splits, Split::kTrain);
  p.test_rows = rows_of(splits, Split::kTest);

  std::vector<tfidf::Document> docs;
  docs.reserve(train_rows.size());
  for (auto r : train_rows) {
    notify(hooks, RowUse::kFeaturizerFit, splits[r]);
    docs.push_back(tfidf::tokenize(corpus[r].text));
  }
  auto stats = tfidf::fit(docs);
  for (auto r : train_rows) notify(hooks, RowUse::kClassifierFit, splits[r]);
  p.x_train = tfidf_matrix(corpus, train_rows, stats);
  p.y_train = labels_at(labels, train_rows);
  p.x_test = tfidf_matrix(corpus, p.test_rows, stats);
  p.y_test = labels_at(labels, p.test_rows);
  p.featurizer = TfidfFeaturizer{std::move(stats)};
  p.corpus = std::move(corpus);
  return p;
}

metrics::MetricsReport evaluate(const ModelParams& params, const Matrix& x, const Labels& y, double threshold,
                                Labels* predictions, std::vector<double>* scores_out,
                                std::vector<metrics::RocPoint>* roc, metrics::ConfusionMatrix* cm_out) {
  Labels pred(x.rows());
  std::vector<double> scores(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto d = decide(params, x.row(i), threshold);
    pred[i] = d.label;
    scores[i] = d.score;
  }
  const auto cm = metrics::confusion(y, pred);
  auto rep = metrics::report(cm);
  const bool both = std::count(y.begin(), y.end(), 1) > 0 && std::count(y.begin(), y.end(), 0) > 0;
  if (both) {
    auto points = metrics::roc_curve(y, scores);
    rep.auc = metrics::auc(points);
    if (roc) *roc = std::move(points);
  }
  if (predictions) *predictions = std::move(pred);
  if (scores_out) *scores_out = std::move(scores);
  if (cm_out) *cm_out = cm;
  return rep;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

double train_accuracy(const ModelParams& params, const Matrix& x, const Labels& y, double threshold) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) hit += decide(params, x.row(i), threshold).label == y[i];
  return static_cast<double>(hit) / static_cast<double>(x.rows());
}

std::unique_ptr<EmbeddingProvider> transformer_provider(const RunConfig& config, const Vocab& vocab,
                                                        const Hooks& hooks) {
  if (hooks.make_provider) return hooks.make_provider(config, vocab);
  if (!config.model_file) throw UsageError("--model-file is required to run the transformer");
#ifdef PROMPTGUARD_HAVE_ONNXRUNTIME
  return make_onnx_provider(*config.model_file, vocab.pad_id(), config.pooling);
#else
  (void)vocab;
  throw UsageError("this build has no transformer runtime; reconfigure with -DPROMPTGUARD_WITH_ONNXRUNTIME=ON "
                   "or supply a prebuilt --cache");
#endif
}

}  // namespace

std::string_view display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kGnb: return "Gaussian Naive Bayes";
    case ModelKind::kRandomForest: return "Random Forest";
    case ModelKind::kLinearSvm: return "Support Vector Machine";
    case ModelKind::kLogReg: return "Logistic Regression";
  }
  return "unknown";
}

fs::path output_dir(const RunConfig& config) {
  const fs::path dir = config.out_dir ? *config.out_dir : env_model_dir();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UsageError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

fs::path model_path(const RunConfig& config) {
  if (config.model) return *config.model;
  return env_model_dir() / kModelFileName;
}

LabeledCorpus load_dataset(const RunConfig& config) {
  if (config.train_path && config.test_path) {
    const auto format = config.format ? *config.format : infer_corpus_format(*config.train_path);
    return load_corpus_pair(*config.train_path, *config.test_path, format);
  }
  if (config.train_path || config.test_path) throw UsageError("--train and --test must be given together");
  if (!config.dataset) throw UsageError("--dataset is required");
  const auto format = config.format ? *config.format : infer_corpus_format(*config.dataset);
  return load_corpus(*config.dataset, format);
}

fs::path cmd_embed(const RunConfig& config, std::ostream& out, const Hooks& hooks) {
  if (!config.vocab) throw UsageError("--vocab is required");
  const auto corpus = load_dataset(config);
  if (corpus.empty()) throw UsageError("dataset is empty");
  const auto splits = corpus_splits(corpus);
  if (config.max_len < 2 || config.max_len > kMaxSupportedLen) {
    throw UsageError("--max-len must be in [2, " + std::to_string(kMaxSupportedLen) + "]");
  }

  WordPieceTokenizer tokenizer(load_vocab(*config.vocab));
  const auto provider = transformer_provider(config, tokenizer.vocab(), hooks);

  std::vector<TokenSequence> sequences;
  sequences.reserve(corpus.size());
  for (const auto& r : corpus.records()) sequences.push_back(tokenizer.encode(r.text, config.max_len));
  const auto matrix = embed_all(*provider, sequences, config.batch_size);

  const fs::path path = config.cache ? *config.cache : output_dir(config) / "embeddings.pgemb1";
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_cache(matrix, corpus_labels(corpus), splits, path);
  out << "wrote " << matrix.rows() << "×" << matrix.dim() << " embeddings to " << path.string() << '\n';
  return path;
}

fs::path cmd_train(const RunConfig& config, std::ostream& out, const Hooks& hooks) {
  auto prepared = prepare(config, hooks);
  if (prepared.x_train.rows() == 0) throw UsageError("no split=train rows to train on");

  TrainedModel model;
  model.params = fit_model(config.classifier, prepared.x_train, prepared.y_train, config.training);
  model.featurizer = std::move(prepared.featurizer);
  model.training_config = config.training;
  model.created_at = utc_timestamp();

  const auto path = config.model ? *config.model : output_dir(config) / kModelFileName;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_model(model, path);

  const double acc = train_accuracy(model.params, prepared.x_train, prepared.y_train, config.training.threshold);
  out << "classifier: " << to_string(model.model_kind()) << '\n'
      << "featurizer: " << to_string(kind_of(model.featurizer)) << " (dim " << feature_dim(model.featurizer)
      << ")\n"
      << "train rows: " << prepared.x_train.rows() << '\n'
      << "seed: " << config.training.seed << '\n'
      << "train accuracy: " << fixed4(acc) << '\n'
      << "model: " << path.string() << '\n';
  return path;
}

EvalResult cmd_eval(const RunConfig& config, std::ostream& out, const Hooks& hooks) {
  const auto model = load_model(model_path(config));
  Matrix x;
  Labels y;

  if (const auto* emb = std::get_if<EmbeddingFeaturizer>(&model.featurizer)) {
    if (!config.cache) throw Error("featurizer mismatch: embedding model needs an embedding --cache");
    const auto cache = load_cache(*config.cache);
    if (cache.matrix.dim() != emb->dim) {
      throw Error("featurizer mismatch: model expects " + std::to_string(emb->dim) + "-d embeddings, cache has " +
                  std::to_string(cache.matrix.dim()));
    }
    const auto rows = rows_of(cache.splits, Split::kTest);
    for (std::size_t i = 0; i < rows.size(); ++i) notify(hooks, RowUse::kEvaluation, Split::kTest);
    x = to_matrix(cache.matrix, rows);
    y = labels_at(cache.labels, rows);
  } else {
    if (config.cache) throw Error("featurizer mismatch: tfidf model cannot be evaluated against an embedding cache");
    const auto corpus = load_dataset(config);
    const auto splits = corpus_splits(corpus);
    const auto rows = rows_of(splits, Split::kTest);
    for (std::size_t i = 0; i < rows.size(); ++i) notify(hooks, RowUse::kEvaluation, Split::kTest);
    x = tfidf_matrix(corpus, rows, std::get<TfidfFeaturizer>(model.featurizer).stats);
    y = labels_at(corpus_labels(corpus), rows);
  }
  if (x.rows() == 0) throw UsageError("no split=test rows to evaluate");

  EvalResult result;
  result.report = evaluate(model.params, x, y, model.training_config.threshold, nullptr, nullptr, &result.roc,
                           &result.confusion);

  const auto dir = output_dir(config);
  write_text(dir / "metrics.json", metrics::to_json(result.report).dump(2) + "\n");
  if (!result.roc.empty()) metrics::emit_roc_csv(result.roc, dir / "roc.csv");

  out << "model: " << to_string(model.model_kind()) << '\n'
      << "seed: " << model.training_config.seed << '\n'
      << "test rows: " << x.rows() << '\n'
      << "confusion: tp=" << result.confusion.tp << " tn=" << result.confusion.tn << " fp=" << result.confusion.fp
      << " fn=" << result.confusion.fn << '\n'
      << "accuracy " << fixed4(result.report.accuracy) << "  precision " << fixed4(result.report.precision)
      << "  recall " << fixed4(result.report.recall) << "  f1 " << fixed4(result.report.f1);
  if (result.report.auc) out << "  auc " << fixed4(*result.report.auc);
  out << '\n';
  return result;
}

std::vector<CompareRow> cmd_compare(const RunConfig& config, std::ostream& out, const Hooks& hooks) {
  const auto prepared = prepare(config, hooks);
  if (prepared.x_train.rows() == 0) throw UsageError("no split=train rows to train on");
  if (prepared.x_test.rows() == 0) throw UsageError("no split=test rows to evaluate");
  const auto dir = output_dir(config);
  const double threshold = config.training.threshold;

  std::vector<CompareRow> rows;
  ojson models = ojson::array();
  std::string md = "| Machine Learning | accuracy | precision | recall | F1-Score |\n"
                   "|---|---|---|---|---|\n";
  for (const auto kind : kCompareOrder) {
    const auto params = fit_model(kind, prepared.x_train, prepared.y_train, config.training);
    CompareRow row{kind, {}, {}};
    Labels pred;
    std::vector<double> scores;
    std::vector<metrics::RocPoint> roc;
    row.report = evaluate(params, prepared.x_test, prepared.y_test, threshold, &pred, &scores, &roc, &row.confusion);
    if (!roc.empty()) metrics::emit_roc_csv(roc, dir / ("roc_" + std::string(to_string(kind)) + ".csv"));

    md += "| " + std::string(display_name(kind)) + " | " + fixed4(row.report.accuracy) + " | " +
          fixed4(row.report.precision) + " | " + fixed4(row.report.recall) + " | " + fixed4(row.report.f1) + " |\n";
    models.push_back(ojson{{"model_kind", to_string(kind)},
                      {"name", display_name(kind)},
                      {"metrics", metrics::to_json(row.report)},
                      {"confusion", metrics::to_json(row.confusion)}});

    if (kind == config.classifier) {
      std::string lines;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == prepared.y_test[i]) continue;
        const auto src = prepared.test_rows[i];
        ojson miss;
        miss["row"] = src;
        miss["text"] = prepared.corpus ? ojson((*prepared.corpus)[src].text) : ojson(nullptr);
        miss["label"] = prepared.y_test[i];
        miss["predicted"] = pred[i];
        miss["score"] = round_score(scores[i]);
        lines += miss.dump() + "\n";
      }
      write_text(dir / "misclassified.jsonl", lines);
    }
    rows.push_back(row);
  }

  ojson summary;
  summary["seed"] = config.training.seed;
  summary["featurizer"] = to_string(kind_of(prepared.featurizer));
  summary["feature_dim"] = feature_dim(prepared.featurizer);
  summary["n_train"] = prepared.x_train.rows();
  summary["n_test"] = prepared.x_test.rows();
  summary["misclassified_for"] = to_string(config.classifier);
  summary["models"] = std::move(models);
  write_text(dir / "compare.json", summary.dump(2) + "\n");
  write_text(dir / "compare.md", md);

  const auto positives = [](const Labels& y) { return std::count(y.begin(), y.end(), 1); };
  out << "seed: " << config.training.seed << "  train rows: " << prepared.x_train.rows() << " (malicious "
      << positives(prepared.y_train) << ")  test rows: " << prepared.x_test.rows() << " (malicious "
      << positives(prepared.y_test) << ")\n"
      << md;
  return rows;
}

std::shared_ptr<const Predictor> make_predictor(const RunConfig& config, const Hooks& hooks) {
  auto model = load_model(model_path(config));
  const auto* emb = std::get_if<EmbeddingFeaturizer>(&model.featurizer);
  if (!emb) return std::make_shared<const Predictor>(std::move(model));

  if (!config.vocab) throw UsageError("embedding model needs --vocab");
  auto tokenizer = std::make_shared<const WordPieceTokenizer>(load_vocab(*config.vocab));
  std::shared_ptr<const EmbeddingProvider> provider;
  if (config.cache && (config.dataset || (config.train_path && config.test_path))) {
    const auto corpus = load_dataset(config);
    provider = std::make_shared<const CacheEmbeddingProvider>(corpus, load_cache(*config.cache), *tokenizer,
                                                              emb->max_len);
  } else {
    RunConfig runtime = config;
    runtime.pooling = emb->pooling;
    runtime.max_len = emb->max_len;
    provider = transformer_provider(runtime, tokenizer->vocab(), hooks);
  }
  return std::make_shared<const Predictor>(std::move(model), std::move(provider), std::move(tokenizer));
}

int cmd_predict(const RunConfig& config, const std::string& text, std::ostream& out, const Hooks& hooks) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw UsageError("empty text");
  const auto predictor = make_predictor(config, hooks);
  const auto decision = predictor->classify(text);
  out << label_name(decision.label) << '\t' << format_score(decision.score) << '\n';
  return decision.label ? kExitMalicious : kExitLegitimate;
}

}  // namespace promptguard::pipeline
