#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace promptguard {

// Row-major dense feature matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using Labels = std::vector<std::uint8_t>;

enum class ModelKind { kGnb, kLogReg, kLinearSvm, kRandomForest };

std::string_view to_string(ModelKind kind);
// Accepts the CLI names gnb|rf|svm|logreg and the stored names
// gnb|random_forest|linear_svm|logreg.
ModelKind parse_model_kind(std::string_view name);

inline constexpr double kDecisionThreshold = 0.5;

double logistic(double z);

// ---- Gaussian naive Bayes -------------------------------------------------

struct GnbConfig {
  double var_smoothing = 1e-9;
};

struct GnbParams {
  std::array<double, 2> priors{};
  std::array<std::vector<double>, 2> means;
  std::array<std::vector<double>, 2> variances;
  double epsilon = 0.0;

  std::size_t dim() const { return means[0].size(); }
  bool operator==(const GnbParams&) const = default;
};

struct GnbPrediction {
  std::uint8_t label = 0;
  // Normalized log P(c | x) for c = 0, 1.
  std::array<double, 2> log_posterior{};
  // Unnormalized log pi_c + sum_j log N(x_j; mu, sigma^2).
  std::array<double, 2> joint_log_likelihood{};
};

GnbParams fit_gnb(const Matrix& x, const Labels& y, const GnbConfig& config = {});
GnbPrediction predict_gnb(const GnbParams& params, std::span<const double> x);

// ---- Linear models --------------------------------------------------------

enum class LinearKind { kLogReg, kLinearSvm };

struct LinearParams {
  std::vector<double> weights;
  double bias = 0.0;
  LinearKind kind = LinearKind::kLogReg;

  bool operator==(const LinearParams&) const = default;
};

struct LogRegConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 500;
  double l2_lambda = 1e-4;
  std::uint64_t seed = 42;
};

struct LinearGradient {
  std::vector<double> weights;
  double bias = 0.0;
};

// Mean cross-entropy + (lambda/2)|w|^2; the bias is not regularized.
double logreg_objective(const Matrix& x, const Labels& y, const LinearParams& params, double l2_lambda);
LinearGradient logreg_gradient(const Matrix& x, const Labels& y, const LinearParams& params,
                               double l2_lambda);

// Full-batch gradient descent from zero. Throws NumericError naming the epoch
// if the objective stops being finite.
LinearParams fit_logreg(const Matrix& x, const Labels& y, const LogRegConfig& config = {});

double linear_margin(const LinearParams& params, std::span<const double> x);
// logistic(w.x + b). For SVMs this is a ranking score, not a probability.
double predict_proba_linear(const LinearParams& params, std::span<const double> x);

struct SvmConfig {
  double c = 1.0;
  std::size_t epochs = 200;
  double learning_rate = 1.0;  // eta_0 in eta_t = eta_0 / ((1 + t) R^2), t = epoch, R^2 = mean row norm^2
  std::uint64_t seed = 42;
};

// (1/2)|w|^2 + C * sum_i max(0, 1 - s_i (w.x_i + b)), s_i in {-1, +1}.
double svm_objective(const Matrix& x, const Labels& y, const LinearParams& params, double c);

// Shuffled per-sample subgradient descent. Returns the lowest-objective point
// among the zero start and the running averages of the epoch iterates.
// `objective_trace`, when given, receives the objective of that best point
// after each epoch (index 0 is the starting point).
LinearParams fit_linear_svm(const Matrix& x, const Labels& y, const SvmConfig& config = {},
                            std::vector<double>* objective_trace = nullptr);

// ---- Random forest --------------------------------------------------------

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t count0 = 0;
  std::uint32_t count1 = 0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  std::uint8_t predict(std::span<const double> x) const;
  std::size_t depth() const;
  bool operator==(const DecisionTree&) const = default;
};

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 16;
  std::size_t min_leaf = 1;
  std::size_t features_per_split = 0;  // 0 means ceil(sqrt(d))
  std::uint64_t seed = 42;
  std::size_t threads = 0;  // 0 means hardware concurrency
};

struct ForestParams {
  std::vector<DecisionTree> trees;
  std::size_t dim = 0;
  std::size_t max_depth = 16;
  std::size_t min_leaf = 1;
  std::size_t features_per_split = 0;
  std::uint64_t seed = 42;

  bool operator==(const ForestParams&) const = default;
};

struct ForestPrediction {
  std::uint8_t label = 0;
  double fraction_positive = 0.0;
};

ForestParams fit_random_forest(const Matrix& x, const Labels& y, const ForestConfig& config = {});
ForestPrediction predict_forest(const ForestParams& params, std::span<const double> x);

// ---- Uniform interface ----------------------------------------------------

using ModelParams = std::variant<GnbParams, LinearParams, ForestParams>;

ModelKind kind_of(const ModelParams& params);
std::size_t input_dim(const ModelParams& params);

struct Decision {
  std::uint8_t label = 0;
  double score = 0.0;  // in [0, 1]; label = score > threshold
};

// GNB: P(malicious | x). Linear: logistic(margin). Forest: fraction of trees
// voting malicious.
double score(const ModelParams& params, std::span<const double> x);
Decision decide(const ModelParams& params, std::span<const double> x,
                double threshold = kDecisionThreshold);

struct TrainingConfig {
  GnbConfig gnb;
  LogRegConfig logreg;
  SvmConfig svm;
  ForestConfig forest;
  std::uint64_t seed = 42;
  double threshold = kDecisionThreshold;
};

// Dispatches to the fit function for `kind`, with every sub-config's seed
// overridden by config.seed.
ModelParams fit_model(ModelKind kind, const Matrix& x, const Labels& y, const TrainingConfig& config);

}  // namespace promptguard
