// Acceptance checks, one PASS/FAIL line each. Run without arguments for the
// hermetic set; `--table1` runs the holdout reproduction against the cache
// named by PROMPTGUARD_TABLE1_CACHE (exit 77 = skipped).

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "promptguard/classifiers.hpp"
#include "promptguard/embedding.hpp"
#include "promptguard/error.hpp"
#include "promptguard/metrics.hpp"
#include "promptguard/pipeline.hpp"
#include "promptguard/service.hpp"
#include "promptguard/tfidf.hpp"
#include "promptguard/tokenizer.hpp"
#include "test_support.hpp"

using namespace promptguard;
namespace pl = promptguard::pipeline;

namespace {

int failures = 0;

void line(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

// Runs a check, turning an escaped exception into a FAIL line.
void check(int id, const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
  try {
    const auto [pass, detail] = fn();
    line(id, name, pass, detail);
  } catch (const std::exception& e) {
    line(id, name, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double uniform(SplitMix64& rng) { return static_cast<double>(rng.next() >> 11) * 0x1.0p-53; }
double round4(double v) { return std::round(v * 1e4) / 1e4; }

std::pair<bool, std::string> metrics_oracle() {
  SplitMix64 rng(2);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.below(50);
    std::vector<std::uint8_t> yt(n), yp(n);
    for (std::size_t i = 0; i < n; ++i) {
      yt[i] = rng.below(2);
      yp[i] = rng.below(2);
    }
    const auto cm = metrics::confusion(yt, yp);
    const auto r = metrics::report(cm);
    const auto c = oracle::count_pairs(yt, yp);
    const auto f = oracle::formulas(c);
    const bool same = cm.tp == static_cast<std::size_t>(c.tp) && cm.tn == static_cast<std::size_t>(c.tn) &&
                      cm.fp == static_cast<std::size_t>(c.fp) && cm.fn == static_cast<std::size_t>(c.fn) &&
                      r.accuracy == f.accuracy && r.precision == f.precision && r.recall == f.recall &&
                      r.f1 == f.f1;
    mismatches += !same;
  }
  const auto lr = metrics::report({56, 56, 0, 4});
  const bool row = round4(lr.accuracy) == 0.9655 && round4(lr.precision) == 1.0 && round4(lr.recall) == 0.9333 &&
                   round4(lr.f1) == 0.9655;
  return {mismatches == 0 && row, std::to_string(mismatches) + "/1000 mismatches; (56,56,0,4) -> " +
                                      fmt("%.4f", lr.accuracy) + " / " + fmt("%.4f", lr.precision) + " / " +
                                      fmt("%.4f", lr.recall) + " / " + fmt("%.4f", lr.f1)};
}

std::pair<bool, std::string> auc_oracle() {
  SplitMix64 rng(3);
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 2 + rng.below(99);
    std::vector<std::uint8_t> y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = i < 2 ? static_cast<std::uint8_t>(i) : static_cast<std::uint8_t>(rng.below(2));
      // every third set is heavily tied
      s[i] = t % 3 == 0 ? static_cast<double>(rng.below(4)) : uniform(rng);
    }
    worst = std::max(worst, std::abs(metrics::auc(metrics::roc_curve(y, s)) - oracle::mann_whitney(y, s)));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst <= 1e-12 && secs < 5.0, "max |diff| " + fmt("%.3g", worst) + ", " + fmt("%.3f", secs) + " s"};
}

std::pair<bool, std::string> tfidf_oracle() {
  SplitMix64 rng(4);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n_terms = 1 + rng.below(15);
    std::vector<tfidf::Document> corpus(1 + rng.below(10));
    for (auto& d : corpus) {
      for (std::size_t k = 0, len = 1 + rng.below(10); k < len; ++k) d.push_back("w" + std::to_string(rng.below(n_terms)));
    }
    const auto stats = tfidf::fit(corpus);
    for (int q = 0; q < 5; ++q) {
      tfidf::Document doc = q == 0 ? corpus[rng.below(corpus.size())] : tfidf::Document{};
      for (std::size_t k = 0, len = q == 0 ? 0 : 1 + rng.below(10); k < len; ++k) {
        doc.push_back("w" + std::to_string(rng.below(n_terms + 2)));
      }
      const auto got = tfidf::transform(doc, stats).to_dense();
      const auto want = oracle::tfidf_dense(corpus, doc);
      if (got.size() != want.size()) return {false, "dimension mismatch on corpus " + std::to_string(t)};
      for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    }
  }
  return {worst <= 1e-12, "200 corpora x 5 docs, max |diff| " + fmt("%.3g", worst)};
}

std::pair<bool, std::string> gradient_check() {
  SplitMix64 rng(5);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 5 + rng.below(30), d = 1 + rng.below(10);
    Matrix x(n, d);
    Labels y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<std::uint8_t>(rng.below(2));
      for (std::size_t j = 0; j < d; ++j) x(i, j) = uniform(rng) * 4 - 2;
    }
    LinearParams w;
    for (std::size_t j = 0; j < d; ++j) w.weights.push_back(uniform(rng) * 2 - 1);
    w.bias = uniform(rng) * 2 - 1;
    const double lambda = t % 2 ? 1e-4 : 0.5;
    const auto g = logreg_gradient(x, y, w, lambda);
    const double h = 1e-5;
    for (std::size_t j = 0; j <= d; ++j) {
      auto plus = w, minus = w;
      (j < d ? plus.weights[j] : plus.bias) += h;
      (j < d ? minus.weights[j] : minus.bias) -= h;
      const double fd = (logreg_objective(x, y, plus, lambda) - logreg_objective(x, y, minus, lambda)) / (2 * h);
      const double an = j < d ? g.weights[j] : g.bias;
      const double denom = std::max(std::abs(fd), std::abs(an));
      worst = std::max(worst, denom < 1e-10 ? std::abs(fd - an) : std::abs(fd - an) / denom);
    }
  }
  return {worst <= 1e-5, "50 problems, max relative error " + fmt("%.3g", worst)};
}

std::pair<bool, std::string> gnb_closed_form() {
  const auto p = fit_gnb(Matrix(4, 1, {0, 2, 4, 6}), {0, 0, 1, 1});
  // mu = (1, 5), var = (1, 1), equal priors => log-odds(x) = 4x - 12
  double worst = 0.0;
  for (double x : {-3.0, 0.0, 1.0, 2.5, 3.0, 5.0, 8.0}) {
    const auto pred = predict_gnb(p, std::vector<double>{x});
    worst = std::max(worst, std::abs((pred.log_posterior[1] - pred.log_posterior[0]) - (4 * x - 12)));
  }
  const auto tie = predict_gnb(p, std::vector<double>{3});
  const bool ok = worst <= 1e-9 && tie.label == 0 && predict_gnb(p, std::vector<double>{1}).label == 0 &&
                  predict_gnb(p, std::vector<double>{5}).label == 1;
  return {ok, "max |log-odds diff| " + fmt("%.3g", worst) + ", x=3 -> class " + std::to_string(tie.label)};
}

std::pair<bool, std::string> tokenizer_fuzz() {
  SplitMix64 rng(6);
  const std::string alphabet = "abcde";
  auto rand_str = [&](std::size_t lo, std::size_t hi) {
    std::string s;
    for (std::size_t i = 0, len = lo + rng.below(hi - lo + 1); i < len; ++i) s += alphabet[rng.below(alphabet.size())];
    return s;
  };
  int mismatches = 0;
  for (int t = 0; t < 10000; ++t) {
    std::set<std::string> pieces;
    for (std::size_t i = 0, n = 1 + rng.below(20); i < n; ++i) pieces.insert((rng.below(2) ? "##" : "") + rand_str(1, 4));
    std::vector<std::string> tokens{"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
    tokens.insert(tokens.end(), pieces.begin(), pieces.end());
    const Vocab vocab(tokens);
    const auto word = rand_str(1, 14);
    const std::size_t max_chars = 4 + rng.below(12);
    mismatches += wordpiece(word, vocab, max_chars) != oracle::wordpiece(word, pieces, max_chars);
  }

  const std::filesystem::path data = PG_TEST_DATA_DIR;
  WordPieceTokenizer tok(load_vocab(data / "golden_vocab.txt"));
  std::ifstream in(data / "wordpiece_golden.jsonl");
  std::string l, golden_detail = "golden row missing";
  bool golden = false;
  while (std::getline(in, l)) {
    const auto j = nlohmann::json::parse(l);
    if (j["text"] != "Chatbots are helpful") continue;
    const auto want = j["pieces"].get<std::vector<std::string>>();
    const auto got = tok.tokenize("Chatbots are helpful");
    golden = got == want && tok.encode("Chatbots are helpful").ids == j["ids"].get<std::vector<TokenId>>();
    golden_detail = "golden [" + nlohmann::json(got).dump() + "]";
    break;
  }
  return {mismatches == 0 && golden, std::to_string(mismatches) + "/10000 fuzz mismatches; " + golden_detail};
}

std::pair<bool, std::string> cache_roundtrip() {
  pgtest::TempDir dir("acc-cache");
  SplitMix64 rng(8);
  const std::size_t n = 100, d = 32;
  std::vector<float> v(n * d);
  for (auto& x : v) x = static_cast<float>(uniform(rng) * 20 - 10);
  v[0] = -0.0f;
  v[1] = std::numeric_limits<float>::denorm_min();
  const EmbeddingMatrix m(n, d, v);
  std::vector<std::uint8_t> labels(n);
  std::vector<Split> splits(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = rng.below(2);
    splits[i] = rng.below(2) ? Split::kTest : Split::kTrain;
  }
  save_cache(m, labels, splits, dir / "c.pgemb1");
  const auto back = load_cache(dir / "c.pgemb1");
  const bool bits = back.matrix.rows() == n && back.matrix.dim() == d &&
                    std::memcmp(back.matrix.values().data(), v.data(), v.size() * sizeof(float)) == 0 &&
                    back.labels == labels && back.splits == splits;
  const auto size = std::filesystem::file_size(dir / "c.pgemb1");
  const auto raw = pgtest::read_file(dir / "c.pgemb1");
  const bool header = size == 24 + n * 2 + n * d * 4 && size == cache_file_size(n, d) &&
                      std::memcmp(raw.data(), "PGEMB1\0\0", 8) == 0 &&
                      cache_file_size(662, 768) == 24 + 662 * 2 + 662 * 768 * 4;
  return {bits && header, std::string(bits ? "bit-identical" : "MISMATCH") + ", " + std::to_string(size) +
                              " bytes (expected " + std::to_string(24 + n * 2 + n * d * 4) + ")"};
}

// Synthetic corpus + vocab + cache built through the real embed command with
// a deterministic stand-in for the transformer.
struct World {
  pgtest::TempDir dir{"acc-world"};
  LabeledCorpus corpus = pgtest::synthetic_corpus(200, 80, 31);
  pl::RunConfig config;

  World() {
    write_jsonl(corpus, dir / "corpus.jsonl");
    pgtest::write_vocab(dir / "vocab.txt");
    config.dataset = dir / "corpus.jsonl";
    config.vocab = dir / "vocab.txt";
    config.cache = dir / "cache.pgemb1";
    config.out_dir = dir / "out";
    pl::Hooks h;
    h.make_provider = [](const pl::RunConfig&, const Vocab&) {
      return std::make_unique<pgtest::HashEmbeddingProvider>(24);
    };
    std::ostringstream sink;
    pl::cmd_embed(config, sink, h);
  }
};

std::pair<bool, std::string> determinism(const World& w) {
  std::string detail;
  bool ok = true;
  for (auto kind : {ModelKind::kGnb, ModelKind::kLogReg, ModelKind::kLinearSvm, ModelKind::kRandomForest}) {
    auto c = w.config;
    c.dataset.reset();
    c.classifier = kind;
    c.training.seed = 42;
    std::ostringstream sink;
    c.model = w.dir / "det_a.json";
    pl::cmd_train(c, sink);
    c.model = w.dir / "det_b.json";
    pl::cmd_train(c, sink);
    const auto a = nlohmann::ordered_json::parse(pgtest::read_file(w.dir / "det_a.json"));
    const auto b = nlohmann::ordered_json::parse(pgtest::read_file(w.dir / "det_b.json"));
    bool same = a["params"].dump() == b["params"].dump();
    if (kind == ModelKind::kRandomForest) {
      const auto fa = std::get<ForestParams>(load_model(w.dir / "det_a.json").params);
      const auto fb = std::get<ForestParams>(load_model(w.dir / "det_b.json").params);
      std::size_t nodes = 0;
      for (const auto& t : fa.trees) nodes += t.nodes.size();
      same = same && fa == fb;
      detail += "forest " + std::to_string(fa.trees.size()) + " trees/" + std::to_string(nodes) + " nodes equal; ";
    }
    ok = ok && same;
    if (!same) detail += std::string(to_string(kind)) + " differs; ";
  }
  return {ok, detail + "params byte-identical for gnb, logreg, linear_svm, random_forest at seed 42"};
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

struct CliResult {
  int exit_code = -1;
  std::string out;
};

CliResult run_cli(const std::string& command) {
  CliResult r;
  FILE* pipe = ::popen(command.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::pair<bool, std::string> service_cli_equivalence(const World& w, const std::string& cli) {
  if (cli.empty()) return {false, "no CLI path given (--cli)"};
  auto c = w.config;
  std::ostringstream sink;
  pl::cmd_train(c, sink);
  c.model = w.dir / "out" / "model.json";

  service::GuardService svc;
  svc.load_async([c] { return pl::make_predictor(c); });
  svc.wait_loaded();
  service::HttpServer server(svc);
  const int port = server.start({"127.0.0.1", 0});
  httplib::Client http("127.0.0.1", port);

  const std::string base = shell_quote(cli) + " predict --model " + shell_quote(c.model->string()) +
                           " --dataset " + shell_quote(c.dataset->string()) + " --vocab " +
                           shell_quote(c.vocab->string()) + " --cache " + shell_quote(c.cache->string()) + " ";
  SplitMix64 rng(10);
  int agree = 0, malicious = 0;
  std::string first_diff;
  for (int k = 0; k < 50; ++k) {
    const auto& text = w.corpus[rng.below(w.corpus.size())].text;
    auto res = http.Post("/v1/classify", nlohmann::json{{"text", text}}.dump(), "application/json");
    if (!res || res->status != 200) {
      if (first_diff.empty()) first_diff = "HTTP failure on \"" + text + "\"";
      continue;
    }
    const auto j = nlohmann::json::parse(res->body);
    const auto http_label = j["label"].get<std::string>();
    const auto http_score = fmt("%.4f", j["score"].get<double>());

    const auto out = run_cli(base + shell_quote(text));
    const auto tab = out.out.find('\t');
    const auto cli_label = out.out.substr(0, tab);
    const auto cli_score = tab == std::string::npos ? "" : out.out.substr(tab + 1, out.out.size() - tab - 2);
    const int want_code = http_label == "malicious" ? pl::kExitMalicious : pl::kExitLegitimate;
    if (cli_label == http_label && cli_score == http_score && out.exit_code == want_code) {
      ++agree;
    } else if (first_diff.empty()) {
      first_diff = "\"" + text + "\": http " + http_label + " " + http_score + " vs cli " + out.out + " (exit " +
                   std::to_string(out.exit_code) + ")";
    }
    malicious += http_label == "malicious";
  }
  server.stop();
  std::string detail = std::to_string(agree) + "/50 agree (" + std::to_string(malicious) + " malicious)";
  if (!first_diff.empty()) detail += "; first difference " + first_diff;
  return {agree == 50, detail};
}

int table1() {
  const char* cache = std::getenv("PROMPTGUARD_TABLE1_CACHE");
  if (!cache || !*cache) {
    std::printf("[SKIP] 1 table-i-reproduction: PROMPTGUARD_TABLE1_CACHE is not set (needs the 662-row PGEMB1 "
                "cache of the real corpus)\n");
    return 77;
  }
  pgtest::TempDir dir("acc-table1");
  pl::RunConfig c;
  c.cache = cache;
  c.out_dir = dir.path();
  if (const char* ds = std::getenv("PROMPTGUARD_TABLE1_DATASET"); ds && *ds) c.dataset = ds;
  std::ostringstream out;
  std::vector<pl::CompareRow> rows;
  try {
    rows = pl::cmd_compare(c, out);
  } catch (const std::exception& e) {
    line(1, "table-i-reproduction", false, e.what());
    return 1;
  }
  std::cout << out.str();
  auto acc = [&](ModelKind k) {
    for (const auto& r : rows) {
      if (r.kind == k) return r.report.accuracy;
    }
    return 0.0;
  };
  double lr_precision = 0.0;
  for (const auto& r : rows) {
    if (r.kind == ModelKind::kLogReg) lr_precision = r.report.precision;
  }
  const double lr = acc(ModelKind::kLogReg), svm = acc(ModelKind::kLinearSvm), rf = acc(ModelKind::kRandomForest),
               gnb = acc(ModelKind::kGnb);
  line(1, "table-i logistic regression", lr >= 0.93 && lr_precision >= 0.95,
       "accuracy " + fmt("%.4f", lr) + " (>= 0.93, paper 0.9655), precision " + fmt("%.4f", lr_precision) +
           " (>= 0.95)");
  line(1, "table-i linear svm", svm >= 0.92, "accuracy " + fmt("%.4f", svm) + " (>= 0.92, paper 0.9568)");
  line(1, "table-i random forest", rf >= 0.84, "accuracy " + fmt("%.4f", rf) + " (>= 0.84, paper 0.8965)");
  line(1, "table-i gaussian nb", gnb >= 0.83, "accuracy " + fmt("%.4f", gnb) + " (>= 0.83, paper 0.8879)");
  line(1, "table-i ordering", lr >= svm && svm > rf && svm > gnb, "LR >= SVM > RF, SVM > GNB");
  return failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  bool only_table1 = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--table1") only_table1 = true;
    else if (a == "--cli" && i + 1 < argc) cli = argv[++i];
  }
  if (only_table1) return table1();

  check(2, "metrics-oracle", metrics_oracle);
  check(3, "auc-oracle", auc_oracle);
  check(4, "tfidf-oracle", tfidf_oracle);
  check(5, "logreg-gradient", gradient_check);
  check(6, "gnb-closed-form", gnb_closed_form);
  check(7, "tokenizer-fuzz-and-golden", tokenizer_fuzz);
  check(8, "cache-roundtrip", cache_roundtrip);
  std::unique_ptr<World> world;
  try {
    world = std::make_unique<World>();
  } catch (const std::exception& e) {
    line(9, "train-determinism", false, std::string("setup failed: ") + e.what());
    line(10, "service-cli-equivalence", false, std::string("setup failed: ") + e.what());
  }
  if (world) {
    check(9, "train-determinism", [&] { return determinism(*world); });
    check(10, "service-cli-equivalence", [&] { return service_cli_equivalence(*world, cli); });
  }
  std::printf("%d failure(s)\n", failures);
  return failures ? 1 : 0;
}
