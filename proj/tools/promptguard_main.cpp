#include <csignal>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "promptguard/error.hpp"
#include "promptguard/pipeline.hpp"
#include "promptguard/service.hpp"

namespace pg = promptguard;
namespace pl = promptguard::pipeline;

namespace {

struct Flags {
  std::string dataset, train, test, format, vocab, model_file, cache, model;
  std::string featurizer, classifier = "logreg", out_dir, pooling = "mean", model_id = pl::kDefaultModelId;
  std::string listen = pg::service::kDefaultListen;
  std::string text;
  std::uint64_t seed = 42;
  std::size_t max_len = pg::kDefaultMaxLen;
  std::size_t threads = 0;
};

std::optional<std::filesystem::path> path_or_none(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::filesystem::path(s);
}

pl::RunConfig to_config(const Flags& f) {
  pl::RunConfig c;
  c.dataset = path_or_none(f.dataset);
  c.train_path = path_or_none(f.train);
  c.test_path = path_or_none(f.test);
  if (!f.format.empty()) c.format = pg::parse_corpus_format(f.format);
  c.vocab = path_or_none(f.vocab);
  c.model_file = path_or_none(f.model_file);
  c.cache = path_or_none(f.cache);
  c.model = path_or_none(f.model);
  if (!f.featurizer.empty()) c.featurizer = pg::parse_featurizer_kind(f.featurizer);
  c.classifier = pg::parse_model_kind(f.classifier);
  c.training.seed = f.seed;
  c.training.forest.threads = f.threads;
  c.out_dir = path_or_none(f.out_dir);
  c.max_len = f.max_len;
  c.pooling = pg::parse_pooling(f.pooling);
  c.model_id = f.model_id;
  return c;
}

void add_data_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--dataset", f.dataset, "corpus with a split column (.csv or .jsonl)");
  cmd->add_option("--train", f.train, "train-only corpus (used with --test)");
  cmd->add_option("--test", f.test, "test-only corpus (used with --train)");
  cmd->add_option("--format", f.format, "csv or jsonl; inferred from the extension by default");
}

void add_feature_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--cache", f.cache, "PGEMB1 embedding cache");
  cmd->add_option("--featurizer", f.featurizer, "embedding or tfidf");
  cmd->add_option("--out-dir", f.out_dir, "output directory (default $PROMPTGUARD_MODEL_DIR or .)");
}

void add_runtime_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--vocab", f.vocab, "WordPiece vocab.txt");
  cmd->add_option("--model-file", f.model_file, "exported transformer (ONNX)");
  cmd->add_option("--max-len", f.max_len, "max tokens including [CLS]/[SEP]");
  cmd->add_option("--pooling", f.pooling, "mean or cls");
}

int serve(const pl::RunConfig& config, const std::string& listen) {
  const auto address = pg::service::parse_listen(listen);
  pg::service::GuardService service;
  service.load_async([config] { return pl::make_predictor(config); });

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  pg::service::HttpServer server(service);
  const int port = server.start(address);
  std::cerr << "listening on " << address.host << ':' << port << '\n';
  try {
    service.wait_loaded();
  } catch (...) {
    server.stop();
    throw;
  }
  std::cerr << "model loaded\n";
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-injection detection with classical classifiers over transformer or TF-IDF features"};
  app.require_subcommand(1);
  Flags f;

  auto* embed = app.add_subcommand("embed", "embed a corpus into a PGEMB1 cache");
  add_data_flags(embed, f);
  add_runtime_flags(embed, f);
  embed->add_option("--cache", f.cache, "output cache path (default <out-dir>/embeddings.pgemb1)");
  embed->add_option("--out-dir", f.out_dir, "output directory");

  auto* train = app.add_subcommand("train", "train one classifier on split=train rows");
  add_data_flags(train, f);
  add_feature_flags(train, f);
  train->add_option("--classifier", f.classifier, "gnb, rf, svm or logreg");
  train->add_option("--seed", f.seed, "random seed");
  train->add_option("--model", f.model, "model output path (default <out-dir>/model.json)");
  train->add_option("--max-len", f.max_len, "recorded with embedding models");
  train->add_option("--pooling", f.pooling, "recorded with embedding models");
  train->add_option("--model-id", f.model_id, "recorded with embedding models");
  train->add_option("--threads", f.threads, "random forest worker threads (0 = all cores)");

  auto* eval = app.add_subcommand("eval", "evaluate a model on split=test rows");
  add_data_flags(eval, f);
  add_feature_flags(eval, f);
  eval->add_option("--model", f.model, "trained model JSON");

  auto* compare = app.add_subcommand("compare", "train and evaluate all four classifiers");
  add_data_flags(compare, f);
  add_feature_flags(compare, f);
  compare->add_option("--classifier", f.classifier, "model whose misclassified rows are written");
  compare->add_option("--seed", f.seed, "random seed");
  compare->add_option("--threads", f.threads, "random forest worker threads (0 = all cores)");

  auto* predict = app.add_subcommand("predict", "classify one text; exit 0 legitimate, 3 malicious");
  predict->add_option("--model", f.model, "trained model JSON");
  add_data_flags(predict, f);
  add_runtime_flags(predict, f);
  predict->add_option("--cache", f.cache, "embedding cache used as a lookup table");
  predict->add_option("text", f.text, "text to classify")->required();

  auto* serve_cmd = app.add_subcommand("serve", "HTTP guard endpoint");
  serve_cmd->add_option("--model", f.model, "trained model JSON");
  add_data_flags(serve_cmd, f);
  add_runtime_flags(serve_cmd, f);
  serve_cmd->add_option("--cache", f.cache, "embedding cache used as a lookup table");
  serve_cmd->add_option("--listen", f.listen, "host:port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const auto config = to_config(f);
    if (*embed) pl::cmd_embed(config, std::cout);
    else if (*train) pl::cmd_train(config, std::cout);
    else if (*eval) pl::cmd_eval(config, std::cout);
    else if (*compare) pl::cmd_compare(config, std::cout);
    else if (*predict) return pl::cmd_predict(config, f.text, std::cout);
    else if (*serve_cmd) return serve(config, f.listen);
    return 0;
  } catch (const pg::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
