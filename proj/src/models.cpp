#include "calibrax/models.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>

#include "calibrax/error.hpp"
#include "calibrax/scoring.hpp"

namespace calibrax {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd to_eigen(const Matrix& x) {
  MatrixXd out(static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols()));
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x(i, j);
  }
  return out;
}

VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_design(const Matrix& x, std::size_t n, const char* what) {
  if (x.rows() != n) throw DomainError(std::string(what) + ": row count differs from target length");
  if (x.rows() == 0 || x.cols() == 0) throw DomainError(std::string(what) + ": empty design matrix");
}

}  // namespace

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  s.mean.assign(x.cols(), 0.0);
  s.scale.assign(x.cols(), 1.0);
  if (x.empty()) return s;
  const double n = static_cast<double>(x.rows());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
    const double sd = std::sqrt(var / n);
    s.mean[j] = mean;
    s.scale[j] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
  }
  return s;
}

void Standardizer::apply(std::span<const double> x, std::span<double> out) const {
  if (x.size() != mean.size() || out.size() != mean.size()) throw DomainError("Standardizer: width mismatch");
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
}

BayesianRidgeModel fit_bayesian_ridge(const Matrix& x, std::span<const double> y, double alpha, double beta,
                                      std::size_t evidence_iters) {
  check_design(x, y.size(), "fit_bayesian_ridge");
  if (!(alpha >= 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw DomainError("fit_bayesian_ridge: need alpha >= 0 and beta > 0");
  }
  const MatrixXd X = to_eigen(x);
  const VectorXd Y = to_eigen(y);
  const MatrixXd gram = X.transpose() * X;
  const VectorXd xty = X.transpose() * Y;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericError("fit_bayesian_ridge: eigen-decomposition failed");
  const VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
  const MatrixXd& basis = eig.eigenvectors();
  const double n = static_cast<double>(x.rows());

  auto posterior_mean = [&](double a, double b) -> VectorXd {
    const VectorXd denom = (a + b * lambda.array()).matrix();
    if (denom.minCoeff() <= 1e-12 * std::max(1.0, denom.maxCoeff())) {
      throw NumericError("fit_bayesian_ridge: alpha I + beta X'X is singular");
    }
    return b * basis * (basis.transpose() * xty).cwiseQuotient(denom);
  };

  for (std::size_t it = 0; it < evidence_iters; ++it) {
    const VectorXd m = posterior_mean(alpha, beta);
    double gamma = 0.0;
    for (Eigen::Index k = 0; k < lambda.size(); ++k) gamma += beta * lambda(k) / (alpha + beta * lambda(k));
    const double m2 = m.squaredNorm();
    const double rss = (Y - X * m).squaredNorm();
    if (m2 <= 0.0 || rss <= 0.0 || n - gamma <= 0.0) break;
    alpha = gamma / m2;
    beta = (n - gamma) / rss;
  }

  const VectorXd mean = posterior_mean(alpha, beta);
  const VectorXd inv = (alpha + beta * lambda.array()).inverse().matrix();
  const MatrixXd cov = basis * inv.asDiagonal() * basis.transpose();

  BayesianRidgeModel model;
  model.prior_precision = alpha;
  model.noise_precision = beta;
  model.weight_mean.assign(mean.data(), mean.data() + mean.size());
  model.weight_cov = Matrix(x.cols(), x.cols());
  for (std::size_t i = 0; i < x.cols(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      // Average the two triangles so the stored covariance is exactly symmetric.
      const auto a = static_cast<Eigen::Index>(std::min(i, j));
      const auto b = static_cast<Eigen::Index>(std::max(i, j));
      model.weight_cov(i, j) = 0.5 * (cov(a, b) + cov(b, a));
    }
  }
  return model;
}

BayesianRidgeModel fit_bayesian_ridge(const Matrix& x, std::span<const double> y) {
  check_design(x, y.size(), "fit_bayesian_ridge");
  const MatrixXd X = to_eigen(x);
  const VectorXd Y = to_eigen(y);
  const VectorXd w = X.colPivHouseholderQr().solve(Y);
  const double rss = (Y - X * w).squaredNorm();
  const double dof = std::max(1.0, static_cast<double>(x.rows()) - static_cast<double>(x.cols()));
  // An exact fit leaves no residual; cap the precision instead of dividing by zero.
  const double beta = rss > 0.0 ? std::min(dof / rss, 1e12) : 1e12;
  return fit_bayesian_ridge(x, y, kDefaultPriorPrecision, beta);
}

GaussianDist predict_bayesian_ridge(const BayesianRidgeModel& model, std::span<const double> x) {
  const std::size_t d = model.weight_mean.size();
  if (x.size() != d) throw DomainError("predict_bayesian_ridge: feature width mismatch");
  double mu = 0.0;
  double var = 1.0 / model.noise_precision;
  for (std::size_t i = 0; i < d; ++i) {
    mu += x[i] * model.weight_mean[i];
    double row = 0.0;
    for (std::size_t j = 0; j < d; ++j) row += model.weight_cov(i, j) * x[j];
    var += x[i] * row;
  }
  return GaussianDist(mu, std::sqrt(std::max(var, 1.0 / model.noise_precision)));
}

GaussianDist GaussianMlp::predict(std::span<const double> x) const {
  std::vector<double> z(x.size());
  x_scale.apply(x, z);
  const auto out = net.forward(z);
  const double sigma = head::softplus(out[1]) + head::kSigmaFloor;
  return GaussianDist(y_mean + y_scale * out[0], y_scale * sigma);
}

GaussianMlp fit_mlp_gaussian(const Matrix& x, std::span<const double> y, const MlpShape& shape,
                             const TrainConfig& config, TrainingLog* log) {
  check_design(x, y.size(), "fit_mlp_gaussian");
  GaussianMlp model;
  model.x_scale = Standardizer::fit(x);
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(y.size()));
  model.y_mean = mean;
  model.y_scale = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;

  Matrix xs(x.rows(), x.cols());
  std::vector<double> ys(y.size());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    model.x_scale.apply(x.row(i), xs.row(i));
    ys[i] = (y[i] - model.y_mean) / model.y_scale;
  }

  model.net = NeuralNet({x.cols(), shape.hidden, 2, shape.dense_skip});
  Rng init_rng(config.seed ^ 0x5bd1e995ULL);
  model.net.init(init_rng);

  // A constant target has no finite likelihood maximizer (sigma -> 0); emit the
  // constant with the floor sigma instead of chasing it with gradient steps.
  if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
    std::fill(model.net.params().begin(), model.net.params().end(), 0.0);
    model.net.output_bias(1) = -40.0;
    if (log != nullptr) *log = {};
    return model;
  }

  NeuralNet::Tape tape;
  std::array<double, 2> out{}, grad_out{};
  const auto trained = train_sgd(model.net, x.rows(), config,
                                 [&](std::span<const std::size_t> batch, std::size_t, std::span<double> grad) {
                                   const double w = 1.0 / static_cast<double>(batch.size());
                                   double total = 0.0;
                                   for (std::size_t i : batch) {
                                     model.net.forward(xs.row(i), tape, out);
                                     total += head::gaussian_nll(out, ys[i], grad_out);
                                     grad_out[0] *= w;
                                     grad_out[1] *= w;
                                     model.net.backward(tape, grad_out, grad);
                                   }
                                   return total * w;
                                 });
  if (log != nullptr) *log = trained;
  return model;
}

CategoricalDist probabilities_from_logits(std::span<const double> logits) {
  std::vector<double> probs(logits.size());
  head::softmax(logits, probs);
  for (double& p : probs) p = std::max(p, kProbFloor);
  return CategoricalDist::normalized(std::move(probs));
}

CategoricalDist SoftmaxClassifier::predict(std::span<const double> x) const {
  if (constant_class) {
    std::vector<double> probs(num_classes, kProbFloor);
    probs[*constant_class] = 1.0 - kProbFloor * static_cast<double>(num_classes - 1);
    return CategoricalDist(std::move(probs));
  }
  std::vector<double> z(x.size());
  x_scale.apply(x, z);
  return probabilities_from_logits(net.forward(z));
}

SoftmaxClassifier fit_softmax_classifier(const Matrix& x, std::span<const std::size_t> labels,
                                         const MlpShape& shape, const TrainConfig& config, std::size_t num_classes,
                                         TrainingLog* log) {
  check_design(x, labels.size(), "fit_softmax_classifier");
  const std::size_t top = *std::max_element(labels.begin(), labels.end());
  if (num_classes == 0) num_classes = std::max<std::size_t>(2, top + 1);
  if (top >= num_classes) throw DomainError("fit_softmax_classifier: label exceeds num_classes");
  if (num_classes < 2) throw DomainError("fit_softmax_classifier: need at least two classes");

  SoftmaxClassifier model;
  model.num_classes = num_classes;
  model.x_scale = Standardizer::fit(x);
  model.net = NeuralNet({x.cols(), shape.hidden, num_classes, shape.dense_skip});
  Rng init_rng(config.seed ^ 0x5bd1e995ULL);
  model.net.init(init_rng);

  // Maximum likelihood has no finite solution for a single observed class.
  if (std::all_of(labels.begin(), labels.end(), [&](std::size_t l) { return l == labels.front(); })) {
    model.constant_class = labels.front();
    if (log != nullptr) *log = {};
    return model;
  }

  Matrix xs(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) model.x_scale.apply(x.row(i), xs.row(i));
  NeuralNet::Tape tape;
  std::vector<double> out(num_classes), grad_out(num_classes);
  const auto trained = train_sgd(model.net, x.rows(), config,
                                 [&](std::span<const std::size_t> batch, std::size_t, std::span<double> grad) {
                                   const double w = 1.0 / static_cast<double>(batch.size());
                                   double total = 0.0;
                                   for (std::size_t i : batch) {
                                     model.net.forward(xs.row(i), tape, out);
                                     total += head::softmax_xent(out, labels[i], grad_out);
                                     for (double& g : grad_out) g *= w;
                                     model.net.backward(tape, grad_out, grad);
                                   }
                                   return total * w;
                                 });
  if (log != nullptr) *log = trained;
  return model;
}

}  // namespace calibrax
