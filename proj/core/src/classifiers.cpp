#include "promptguard/classifiers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <numeric>
#include <thread>

#include "promptguard/error.hpp"
#include "promptguard/random.hpp"

namespace promptguard {

namespace {

void check_training_set(const Matrix& x, const Labels& y) {
  if (x.rows() == 0) throw UsageError("training set is empty");
  if (y.size() != x.rows()) throw UsageError("labels are not aligned with feature rows");
  bool has0 = false, has1 = false;
  for (auto label : y) {
    if (label > 1) throw UsageError("label out of range");
    (label ? has1 : has0) = true;
  }
  if (!has0 || !has1) throw UsageError("training labels contain a single class");
}

void check_dim(std::size_t expected, std::size_t got) {
  if (expected != got) {
    throw UsageError("dimension mismatch: model expects " + std::to_string(expected) +
                     " features, got " + std::to_string(got));
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double squared_norm(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) s += v * v;
  return s;
}

bool all_finite(const std::vector<double>& w, double b) {
  return std::isfinite(b) && std::all_of(w.begin(), w.end(), [](double v) { return std::isfinite(v); });
}

// Objective and gradient from a single pass over the data.
double logreg_objective_and_gradient(const Matrix& x, const Labels& y, const LinearParams& p,
                                     double lambda, LinearGradient* grad) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  if (grad) {
    grad->weights.assign(d, 0.0);
    grad->bias = 0.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row(i);
    const double z = dot(p.weights, row) + p.bias;
    const double yi = y[i];
    loss += softplus(z) - yi * z;
    if (grad) {
      const double r = logistic(z) - yi;
      for (std::size_t j = 0; j < d; ++j) grad->weights[j] += r * row[j];
      grad->bias += r;
    }
  }
  if (grad) {
    for (std::size_t j = 0; j < d; ++j) grad->weights[j] = grad->weights[j] * inv_n + lambda * p.weights[j];
    grad->bias *= inv_n;
  }
  return loss * inv_n + 0.5 * lambda * squared_norm(p.weights);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw UsageError("matrix data does not match rows x cols");
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kGnb: return "gnb";
    case ModelKind::kLogReg: return "logreg";
    case ModelKind::kLinearSvm: return "linear_svm";
    case ModelKind::kRandomForest: return "random_forest";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "gnb") return ModelKind::kGnb;
  if (name == "logreg") return ModelKind::kLogReg;
  if (name == "svm" || name == "linear_svm") return ModelKind::kLinearSvm;
  if (name == "rf" || name == "random_forest") return ModelKind::kRandomForest;
  throw UsageError("unknown classifier: " + std::string(name) + " (expected gnb|rf|svm|logreg)");
}

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ---- GNB ------------------------------------------------------------------

GnbParams fit_gnb(const Matrix& x, const Labels& y, const GnbConfig& config) {
  check_training_set(x, y);
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();

  GnbParams p;
  std::array<std::size_t, 2> count{0, 0};
  for (int c = 0; c < 2; ++c) {
    p.means[c].assign(d, 0.0);
    p.variances[c].assign(d, 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int c = y[i];
    ++count[c];
    const auto row = x.row(i);
    for (std::size_t j = 0; j < d; ++j) p.means[c][j] += row[j];
  }
  for (int c = 0; c < 2; ++c) {
    for (auto& m : p.means[c]) m /= static_cast<double>(count[c]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int c = y[i];
    const auto row = x.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = row[j] - p.means[c][j];
      p.variances[c][j] += dev * dev;
    }
  }

  // Largest per-feature variance over the whole training set.
  double max_var = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
    max_var = std::max(max_var, var / static_cast<double>(n));
  }
  p.epsilon = config.var_smoothing * max_var;
  if (!(p.epsilon > 0.0)) p.epsilon = config.var_smoothing;

  for (int c = 0; c < 2; ++c) {
    for (auto& v : p.variances[c]) v = std::max(v / static_cast<double>(count[c]), p.epsilon);
    p.priors[c] = static_cast<double>(count[c]) / static_cast<double>(n);
  }
  return p;
}

GnbPrediction predict_gnb(const GnbParams& p, std::span<const double> x) {
  check_dim(p.dim(), x.size());
  GnbPrediction out;
  for (int c = 0; c < 2; ++c) {
    double s = std::log(p.priors[c]);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double var = p.variances[c][j];
      const double dev = x[j] - p.means[c][j];
      s -= 0.5 * (std::log(2.0 * std::numbers::pi * var) + dev * dev / var);
    }
    out.joint_log_likelihood[c] = s;
  }
  const double hi = std::max(out.joint_log_likelihood[0], out.joint_log_likelihood[1]);
  const double lse = hi + std::log(std::exp(out.joint_log_likelihood[0] - hi) +
                                   std::exp(out.joint_log_likelihood[1] - hi));
  out.log_posterior = {out.joint_log_likelihood[0] - lse, out.joint_log_likelihood[1] - lse};
  out.label = out.joint_log_likelihood[1] > out.joint_log_likelihood[0] ? 1 : 0;
  return out;
}

// ---- Logistic regression --------------------------------------------------

double logreg_objective(const Matrix& x, const Labels& y, const LinearParams& params, double l2_lambda) {
  check_dim(params.weights.size(), x.cols());
  return logreg_objective_and_gradient(x, y, params, l2_lambda, nullptr);
}

LinearGradient logreg_gradient(const Matrix& x, const Labels& y, const LinearParams& params,
                               double l2_lambda) {
  check_dim(params.weights.size(), x.cols());
  LinearGradient g;
  logreg_objective_and_gradient(x, y, params, l2_lambda, &g);
  return g;
}

LinearParams fit_logreg(const Matrix& x, const Labels& y, const LogRegConfig& config) {
  check_training_set(x, y);
  LinearParams p;
  p.kind = LinearKind::kLogReg;
  p.weights.assign(x.cols(), 0.0);
  LinearGradient g;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = logreg_objective_and_gradient(x, y, p, config.l2_lambda, &g);
    if (!std::isfinite(loss)) {
      throw NumericError("logistic regression diverged at epoch " + std::to_string(epoch));
    }
    for (std::size_t j = 0; j < p.weights.size(); ++j) p.weights[j] -= config.learning_rate * g.weights[j];
    p.bias -= config.learning_rate * g.bias;
  }
  if (!all_finite(p.weights, p.bias)) {
    throw NumericError("logistic regression diverged at epoch " + std::to_string(config.epochs));
  }
  return p;
}

double linear_margin(const LinearParams& params, std::span<const double> x) {
  check_dim(params.weights.size(), x.size());
  return dot(params.weights, x) + params.bias;
}

double predict_proba_linear(const LinearParams& params, std::span<const double> x) {
  return logistic(linear_margin(params, x));
}

// ---- Linear SVM -----------------------------------------------------------

double svm_objective(const Matrix& x, const Labels& y, const LinearParams& params, double c) {
  check_dim(params.weights.size(), x.cols());
  double hinge = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double s = y[i] ? 1.0 : -1.0;
    hinge += std::max(0.0, 1.0 - s * (dot(params.weights, x.row(i)) + params.bias));
  }
  return 0.5 * squared_norm(params.weights) + c * hinge;
}

LinearParams fit_linear_svm(const Matrix& x, const Labels& y, const SvmConfig& config,
                            std::vector<double>* objective_trace) {
  check_training_set(x, y);
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  LinearParams w;
  w.kind = LinearKind::kLinearSvm;
  w.weights.assign(d, 0.0);
  LinearParams avg = w;
  LinearParams best = w;
  double best_obj = svm_objective(x, y, best, config.c);
  if (objective_trace) {
    objective_trace->clear();
    objective_trace->push_back(best_obj);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng(config.seed);

  // Steps are taken in units of 1/R^2 (R^2 = mean squared row norm, bias
  // included) so one eta_0 works for sparse tf-idf rows and dense embeddings.
  double r2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) r2 += squared_norm(x.row(i)) + 1.0;
  r2 *= inv_n;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    const double eta = config.learning_rate / ((1.0 + static_cast<double>(epoch)) * r2);
    for (const std::size_t i : order) {
      const auto row = x.row(i);
      const double s = y[i] ? 1.0 : -1.0;
      const bool active = s * (dot(w.weights, row) + w.bias) < 1.0;
      for (std::size_t j = 0; j < d; ++j) {
        double g = w.weights[j] * inv_n;
        if (active) g -= config.c * s * row[j];
        w.weights[j] -= eta * g;
      }
      if (active) w.bias += eta * config.c * s;
    }
    if (!all_finite(w.weights, w.bias)) {
      throw NumericError("linear SVM diverged at epoch " + std::to_string(epoch));
    }

    const double k = static_cast<double>(epoch + 1);
    for (std::size_t j = 0; j < d; ++j) avg.weights[j] += (w.weights[j] - avg.weights[j]) / k;
    avg.bias += (w.bias - avg.bias) / k;

    const double obj = svm_objective(x, y, avg, config.c);
    if (obj < best_obj) {
      best_obj = obj;
      best = avg;
    }
    if (objective_trace) objective_trace->push_back(best_obj);
  }
  return best;
}

// ---- Random forest --------------------------------------------------------

std::uint8_t DecisionTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& node = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                            : node.right);
  }
  return nodes[i].count1 > nodes[i].count0 ? 1 : 0;
}

std::size_t DecisionTree::depth() const {
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  std::size_t deepest = 0;
  while (!stack.empty()) {
    const auto [i, depth] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, depth);
    if (!nodes[i].is_leaf()) {
      stack.emplace_back(static_cast<std::size_t>(nodes[i].left), depth + 1);
      stack.emplace_back(static_cast<std::size_t>(nodes[i].right), depth + 1);
    }
  }
  return deepest;
}

namespace {

struct TreeBuilder {
  const Matrix& x;
  const Labels& y;
  std::size_t max_depth;
  std::size_t min_leaf;
  std::size_t features_per_split;
  SplitMix64& rng;
  std::vector<std::size_t> feature_perm;
  DecisionTree tree;

  static double gini(double c0, double c1) {
    const double total = c0 + c1;
    if (total == 0.0) return 0.0;
    const double p0 = c0 / total;
    const double p1 = c1 / total;
    return 1.0 - p0 * p0 - p1 * p1;
  }

  std::int32_t build(std::vector<std::size_t>& samples, std::size_t depth) {
    const auto node_index = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    std::uint32_t c0 = 0, c1 = 0;
    for (auto i : samples) (y[i] ? c1 : c0)++;
    tree.nodes[node_index].count0 = c0;
    tree.nodes[node_index].count1 = c1;

    const std::size_t m = samples.size();
    if (c0 == 0 || c1 == 0 || depth >= max_depth || m < 2 * min_leaf) return node_index;

    // Random feature subset: partial Fisher-Yates over the persistent
    // permutation.
    const std::size_t d = feature_perm.size();
    const std::size_t k = std::min(features_per_split, d);
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(feature_perm[i], feature_perm[i + rng.below(d - i)]);
    }

    const double parent = gini(c0, c1);
    double best_gain = 0.0;
    std::int32_t best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, std::uint8_t>> column(m);
    for (std::size_t fi = 0; fi < k; ++fi) {
      const std::size_t f = feature_perm[fi];
      for (std::size_t s = 0; s < m; ++s) column[s] = {x(samples[s], f), y[samples[s]]};
      std::sort(column.begin(), column.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double l0 = 0, l1 = 0;
      for (std::size_t s = 1; s < m; ++s) {
        (column[s - 1].second ? l1 : l0) += 1.0;
        if (!(column[s - 1].first < column[s].first)) continue;
        if (s < min_leaf || m - s < min_leaf) continue;
        const double r0 = c0 - l0;
        const double r1 = c1 - l1;
        const double nl = static_cast<double>(s);
        const double nr = static_cast<double>(m - s);
        const double child = (nl * gini(l0, l1) + nr * gini(r0, r1)) / static_cast<double>(m);
        const double gain = parent - child;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<std::int32_t>(f);
          const double lo = column[s - 1].first;
          const double hi = column[s].first;
          double mid = lo + (hi - lo) / 2.0;
          if (!(mid < hi)) mid = lo;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return node_index;

    std::vector<std::size_t> left, right;
    for (auto i : samples) {
      (x(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? left : right).push_back(i);
    }
    samples.clear();
    samples.shrink_to_fit();

    tree.nodes[node_index].feature = best_feature;
    tree.nodes[node_index].threshold = best_threshold;
    const auto l = build(left, depth + 1);
    tree.nodes[node_index].left = l;
    const auto r = build(right, depth + 1);
    tree.nodes[node_index].right = r;
    return node_index;
  }
};

DecisionTree train_tree(const Matrix& x, const Labels& y, const ForestConfig& cfg,
                        std::size_t features_per_split, std::size_t tree_index) {
  auto rng = SplitMix64::derive(cfg.seed, tree_index);
  const std::size_t n = x.rows();
  std::vector<std::size_t> sample(n);
  for (auto& s : sample) s = rng.below(n);

  TreeBuilder builder{x, y, cfg.max_depth, std::max<std::size_t>(cfg.min_leaf, 1),
                      features_per_split, rng, {}, {}};
  builder.feature_perm.resize(x.cols());
  std::iota(builder.feature_perm.begin(), builder.feature_perm.end(), std::size_t{0});
  builder.build(sample, 0);
  return std::move(builder.tree);
}

}  // namespace

ForestParams fit_random_forest(const Matrix& x, const Labels& y, const ForestConfig& config) {
  check_training_set(x, y);
  if (x.rows() < 2) throw UsageError("random forest needs at least two samples");
  if (config.n_trees == 0) throw UsageError("random forest needs at least one tree");
  if (x.cols() == 0) throw UsageError("random forest needs at least one feature");

  ForestParams forest;
  forest.dim = x.cols();
  forest.max_depth = config.max_depth;
  forest.min_leaf = std::max<std::size_t>(config.min_leaf, 1);
  forest.features_per_split =
      config.features_per_split
          ? std::min(config.features_per_split, x.cols())
          : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));
  forest.seed = config.seed;
  forest.trees.resize(config.n_trees);

  std::size_t workers = config.threads ? config.threads : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, config.n_trees);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < config.n_trees;) {
      try {
        forest.trees[t] = train_tree(x, y, config, forest.features_per_split, t);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return forest;
}

ForestPrediction predict_forest(const ForestParams& params, std::span<const double> x) {
  check_dim(params.dim, x.size());
  std::size_t votes = 0;
  for (const auto& tree : params.trees) votes += tree.predict(x);
  ForestPrediction out;
  const std::size_t total = params.trees.size();
  out.fraction_positive = total ? static_cast<double>(votes) / static_cast<double>(total) : 0.0;
  out.label = 2 * votes > total ? 1 : 0;
  return out;
}

// ---- Uniform interface ----------------------------------------------------

ModelKind kind_of(const ModelParams& params) {
  if (std::holds_alternative<GnbParams>(params)) return ModelKind::kGnb;
  if (const auto* lin = std::get_if<LinearParams>(&params)) {
    return lin->kind == LinearKind::kLogReg ? ModelKind::kLogReg : ModelKind::kLinearSvm;
  }
  return ModelKind::kRandomForest;
}

std::size_t input_dim(const ModelParams& params) {
  if (const auto* g = std::get_if<GnbParams>(&params)) return g->dim();
  if (const auto* lin = std::get_if<LinearParams>(&params)) return lin->weights.size();
  return std::get<ForestParams>(params).dim;
}

double score(const ModelParams& params, std::span<const double> x) {
  if (const auto* g = std::get_if<GnbParams>(&params)) {
    const auto pred = predict_gnb(*g, x);
    return logistic(pred.joint_log_likelihood[1] - pred.joint_log_likelihood[0]);
  }
  if (const auto* lin = std::get_if<LinearParams>(&params)) return predict_proba_linear(*lin, x);
  return predict_forest(std::get<ForestParams>(params), x).fraction_positive;
}

Decision decide(const ModelParams& params, std::span<const double> x, double threshold) {
  Decision d;
  d.score = score(params, x);
  d.label = d.score > threshold ? 1 : 0;
  return d;
}

ModelParams fit_model(ModelKind kind, const Matrix& x, const Labels& y, const TrainingConfig& config) {
  switch (kind) {
    case ModelKind::kGnb:
      return fit_gnb(x, y, config.gnb);
    case ModelKind::kLogReg: {
      auto cfg = config.logreg;
      cfg.seed = config.seed;
      return fit_logreg(x, y, cfg);
    }
    case ModelKind::kLinearSvm: {
      auto cfg = config.svm;
      cfg.seed = config.seed;
      return fit_linear_svm(x, y, cfg);
    }
    case ModelKind::kRandomForest: {
      auto cfg = config.forest;
      cfg.seed = config.seed;
      return fit_random_forest(x, y, cfg);
    }
  }
  throw UsageError("unknown model kind");
}

}  // namespace promptguard
