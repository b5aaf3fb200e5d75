#include "promptguard/persistence.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "promptguard/error.hpp"

namespace promptguard {

namespace {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

const json& require(const json& j, const char* key, const char* where) {
  if (!j.is_object()) throw FormatError(std::string(where) + " is not a JSON object");
  const auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string(where) + " is missing '" + key + "'");
  return *it;
}

template <typename T>
T get_as(const json& j, const char* key, const char* where) {
  try {
    return require(j, key, where).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string(where) + "." + key + ": " + e.what());
  }
}

std::vector<double> finite_vector(const json& j, const char* key, const char* where) {
  auto v = get_as<std::vector<double>>(j, key, where);
  for (double x : v) {
    if (!std::isfinite(x)) throw FormatError(std::string(where) + "." + key + " has a non-finite value");
  }
  return v;
}

ojson params_to_json(const ModelParams& params) {
  if (const auto* g = std::get_if<GnbParams>(&params)) {
    return {{"priors", g->priors},
            {"means", {g->means[0], g->means[1]}},
            {"variances", {g->variances[0], g->variances[1]}},
            {"epsilon", g->epsilon}};
  }
  if (const auto* lin = std::get_if<LinearParams>(&params)) {
    return {{"weights", lin->weights}, {"bias", lin->bias}};
  }
  const auto& f = std::get<ForestParams>(params);
  ojson trees = ojson::array();
  for (const auto& tree : f.trees) {
    ojson t;
    std::vector<std::int32_t> feature, left, right;
    std::vector<double> threshold;
    std::vector<std::uint32_t> c0, c1;
    for (const auto& n : tree.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      c0.push_back(n.count0);
      c1.push_back(n.count1);
    }
    t["feature"] = feature;
    t["threshold"] = threshold;
    t["left"] = left;
    t["right"] = right;
    t["count0"] = c0;
    t["count1"] = c1;
    trees.push_back(std::move(t));
  }
  return {{"dim", f.dim},
          {"max_depth", f.max_depth},
          {"min_leaf", f.min_leaf},
          {"features_per_split", f.features_per_split},
          {"seed", f.seed},
          {"trees", std::move(trees)}};
}

ModelParams params_from_json(ModelKind kind, const json& j) {
  constexpr const char* where = "params";
  try {
    switch (kind) {
      case ModelKind::kGnb: {
        GnbParams g;
        const auto priors = finite_vector(j, "priors", where);
        const auto means = get_as<std::vector<std::vector<double>>>(j, "means", where);
        const auto vars = get_as<std::vector<std::vector<double>>>(j, "variances", where);
        if (priors.size() != 2 || means.size() != 2 || vars.size() != 2) {
          throw FormatError("gnb params must describe exactly two classes");
        }
        g.priors = {priors[0], priors[1]};
        g.means = {means[0], means[1]};
        g.variances = {vars[0], vars[1]};
        g.epsilon = get_as<double>(j, "epsilon", where);
        const auto d = g.means[0].size();
        for (int c = 0; c < 2; ++c) {
          if (g.means[c].size() != d || g.variances[c].size() != d) {
            throw FormatError("gnb means/variances dimensions differ");
          }
          for (double v : g.variances[c]) {
            if (!(v > 0.0) || !std::isfinite(v)) throw FormatError("gnb variance must be positive");
          }
          for (double m : g.means[c]) {
            if (!std::isfinite(m)) throw FormatError("gnb mean is not finite");
          }
        }
        return g;
      }
      case ModelKind::kLogReg:
      case ModelKind::kLinearSvm: {
        LinearParams lin;
        lin.kind = kind == ModelKind::kLogReg ? LinearKind::kLogReg : LinearKind::kLinearSvm;
        lin.weights = finite_vector(j, "weights", where);
        lin.bias = get_as<double>(j, "bias", where);
        if (!std::isfinite(lin.bias)) throw FormatError("linear bias is not finite");
        return lin;
      }
      case ModelKind::kRandomForest: {
        ForestParams f;
        f.dim = get_as<std::size_t>(j, "dim", where);
        f.max_depth = get_as<std::size_t>(j, "max_depth", where);
        f.min_leaf = get_as<std::size_t>(j, "min_leaf", where);
        f.features_per_split = get_as<std::size_t>(j, "features_per_split", where);
        f.seed = get_as<std::uint64_t>(j, "seed", where);
        const auto& trees = require(j, "trees", where);
        if (!trees.is_array() || trees.empty()) throw FormatError("forest has no trees");
        for (const auto& t : trees) {
          const auto feature = get_as<std::vector<std::int32_t>>(t, "feature", "tree");
          const auto threshold = get_as<std::vector<double>>(t, "threshold", "tree");
          const auto left = get_as<std::vector<std::int32_t>>(t, "left", "tree");
          const auto right = get_as<std::vector<std::int32_t>>(t, "right", "tree");
          const auto c0 = get_as<std::vector<std::uint32_t>>(t, "count0", "tree");
          const auto c1 = get_as<std::vector<std::uint32_t>>(t, "count1", "tree");
          const std::size_t n = feature.size();
          if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n ||
              c0.size() != n || c1.size() != n) {
            throw FormatError("tree node arrays have inconsistent lengths");
          }
          DecisionTree tree;
          tree.nodes.resize(n);
          for (std::size_t i = 0; i < n; ++i) {
            auto& node = tree.nodes[i];
            node = {feature[i], threshold[i], left[i], right[i], c0[i], c1[i]};
            if (node.is_leaf()) {
              if (node.count0 + node.count1 == 0) throw FormatError("tree leaf has no samples");
              continue;
            }
            const auto in_range = [&](std::int32_t k) {
              return k > static_cast<std::int32_t>(i) && static_cast<std::size_t>(k) < n;
            };
            if (static_cast<std::size_t>(node.feature) >= f.dim || !in_range(node.left) ||
                !in_range(node.right) || !std::isfinite(node.threshold)) {
              throw FormatError("tree node " + std::to_string(i) + " is malformed");
            }
          }
          f.trees.push_back(std::move(tree));
        }
        return f;
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("model_kind/params mismatch: ") + e.what());
  }
  throw FormatError("unknown model kind");
}

ojson featurizer_to_json(const Featurizer& f) {
  if (const auto* e = std::get_if<EmbeddingFeaturizer>(&f)) {
    return {{"kind", to_string(FeaturizerKind::kEmbeddingCache)},
            {"dim", e->dim},
            {"model_id", e->model_id},
            {"pooling", to_string(e->pooling)},
            {"max_len", e->max_len}};
  }
  const auto& stats = std::get<TfidfFeaturizer>(f).stats;
  return {{"kind", to_string(FeaturizerKind::kTfidf)},
          {"vocab", stats.terms()},
          {"df", stats.df()},
          {"n_docs", stats.n_docs()}};
}

Featurizer featurizer_from_json(const json& j) {
  constexpr const char* where = "featurizer";
  const auto kind = get_as<std::string>(j, "kind", where);
  if (kind == "embedding_cache") {
    EmbeddingFeaturizer e;
    e.dim = get_as<std::size_t>(j, "dim", where);
    e.model_id = get_as<std::string>(j, "model_id", where);
    e.pooling = parse_pooling(get_as<std::string>(j, "pooling", where));
    e.max_len = get_as<std::size_t>(j, "max_len", where);
    return e;
  }
  if (kind == "tfidf") {
    return TfidfFeaturizer{tfidf::TermStats(get_as<std::vector<std::string>>(j, "vocab", where),
                                            get_as<std::vector<std::uint32_t>>(j, "df", where),
                                            get_as<std::uint32_t>(j, "n_docs", where))};
  }
  throw FormatError("unknown featurizer kind '" + kind + "'");
}

}  // namespace

std::string_view to_string(FeaturizerKind kind) {
  return kind == FeaturizerKind::kTfidf ? "tfidf" : "embedding_cache";
}

FeaturizerKind parse_featurizer_kind(std::string_view name) {
  if (name == "embedding" || name == "embedding_cache") return FeaturizerKind::kEmbeddingCache;
  if (name == "tfidf") return FeaturizerKind::kTfidf;
  throw UsageError("unknown featurizer: " + std::string(name) + " (expected embedding|tfidf)");
}

FeaturizerKind kind_of(const Featurizer& featurizer) {
  return std::holds_alternative<TfidfFeaturizer>(featurizer) ? FeaturizerKind::kTfidf
                                                             : FeaturizerKind::kEmbeddingCache;
}

std::size_t feature_dim(const Featurizer& featurizer) {
  if (const auto* e = std::get_if<EmbeddingFeaturizer>(&featurizer)) return e->dim;
  return std::get<TfidfFeaturizer>(featurizer).stats.size();
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ojson to_json(const TrainingConfig& c) {
  return {{"seed", c.seed},
          {"threshold", c.threshold},
          {"gnb", {{"var_smoothing", c.gnb.var_smoothing}}},
          {"logreg",
           {{"learning_rate", c.logreg.learning_rate},
            {"epochs", c.logreg.epochs},
            {"l2_lambda", c.logreg.l2_lambda}}},
          {"svm",
           {{"c", c.svm.c}, {"epochs", c.svm.epochs}, {"learning_rate", c.svm.learning_rate}}},
          {"forest",
           {{"n_trees", c.forest.n_trees},
            {"max_depth", c.forest.max_depth},
            {"min_leaf", c.forest.min_leaf},
            {"features_per_split", c.forest.features_per_split}}}};
}

TrainingConfig training_config_from_json(const json& j) {
  constexpr const char* where = "training_config";
  TrainingConfig c;
  c.seed = get_as<std::uint64_t>(j, "seed", where);
  c.threshold = get_as<double>(j, "threshold", where);
  if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) throw FormatError("threshold must be in [0,1]");
  const auto& gnb = require(j, "gnb", where);
  c.gnb.var_smoothing = get_as<double>(gnb, "var_smoothing", "gnb");
  const auto& lr = require(j, "logreg", where);
  c.logreg.learning_rate = get_as<double>(lr, "learning_rate", "logreg");
  c.logreg.epochs = get_as<std::size_t>(lr, "epochs", "logreg");
  c.logreg.l2_lambda = get_as<double>(lr, "l2_lambda", "logreg");
  const auto& svm = require(j, "svm", where);
  c.svm.c = get_as<double>(svm, "c", "svm");
  c.svm.epochs = get_as<std::size_t>(svm, "epochs", "svm");
  c.svm.learning_rate = get_as<double>(svm, "learning_rate", "svm");
  const auto& rf = require(j, "forest", where);
  c.forest.n_trees = get_as<std::size_t>(rf, "n_trees", "forest");
  c.forest.max_depth = get_as<std::size_t>(rf, "max_depth", "forest");
  c.forest.min_leaf = get_as<std::size_t>(rf, "min_leaf", "forest");
  c.forest.features_per_split = get_as<std::size_t>(rf, "features_per_split", "forest");
  c.logreg.seed = c.svm.seed = c.forest.seed = c.seed;
  return c;
}

ojson to_json(const TrainedModel& model) {
  ojson j;
  j["schema_version"] = model.schema_version;
  j["model_kind"] = to_string(model.model_kind());
  j["featurizer"] = featurizer_to_json(model.featurizer);
  j["params"] = params_to_json(model.params);
  j["training_config"] = to_json(model.training_config);
  j["created_at"] = model.created_at;
  return j;
}

TrainedModel model_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("model file is not a JSON object");
  const auto version = get_as<int>(j, "schema_version", "model");
  if (version != kSchemaVersion) {
    throw FormatError("unsupported schema version " + std::to_string(version) + " (this build reads " +
                      std::to_string(kSchemaVersion) + ")");
  }
  static const std::set<std::string> kKeys{"schema_version", "model_kind",       "featurizer",
                                           "params",         "training_config", "created_at"};
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.contains(key)) throw FormatError("unexpected top-level key '" + key + "' in model file");
  }

  TrainedModel m;
  m.schema_version = version;
  ModelKind kind;
  try {
    kind = parse_model_kind(get_as<std::string>(j, "model_kind", "model"));
  } catch (const UsageError& e) {
    throw FormatError(e.what());
  }
  m.params = params_from_json(kind, require(j, "params", "model"));
  m.featurizer = featurizer_from_json(require(j, "featurizer", "model"));
  m.training_config = training_config_from_json(require(j, "training_config", "model"));
  m.created_at = get_as<std::string>(j, "created_at", "model");
  if (input_dim(m.params) != feature_dim(m.featurizer)) {
    throw FormatError("model params expect " + std::to_string(input_dim(m.params)) +
                      " features but the featurizer produces " +
                      std::to_string(feature_dim(m.featurizer)));
  }
  return m;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write model file: " + path.string());
  out << to_json(model).dump(1) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open model file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("corrupted model file " + path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace promptguard
