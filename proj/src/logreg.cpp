#include "retro/logreg.hpp"

#include <cmath>

#include "retro/error.hpp"
#include "retro/rng.hpp"

namespace retro::logreg {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

} // namespace

double loss_and_grad(std::span<const std::vector<double>> X, std::span<const int> y,
                     std::span<const double> sample_weights, std::span<const double> weights,
                     double bias, double l2, std::span<double> grad_w, double& grad_b) {
  const std::size_t n = X.size();
  const std::size_t d = weights.size();
  double weight_total = 0.0;
  for (double w : sample_weights) weight_total += w;

  for (auto& g : grad_w) g = 0.0;
  grad_b = 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = bias;
    for (std::size_t j = 0; j < d; ++j) z += weights[j] * X[i][j];
    // Cross entropy: softplus(z) - y z, numerically stable in both tails.
    loss += sample_weights[i] * (softplus(z) - (y[i] ? z : 0.0));
    double err = sample_weights[i] * (sigmoid(z) - static_cast<double>(y[i]));
    for (std::size_t j = 0; j < d; ++j) grad_w[j] += err * X[i][j];
    grad_b += err;
  }
  loss /= weight_total;
  grad_b /= weight_total;
  double penalty = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    grad_w[j] = grad_w[j] / weight_total + l2 * weights[j];
    penalty += weights[j] * weights[j];
  }
  return loss + 0.5 * l2 * penalty;
}

Model train(std::span<const std::vector<double>> X, std::span<const int> y,
            const TrainConfig& cfg) {
  if (X.size() != y.size() || X.empty())
    raise(ErrorKind::validation, "logreg: feature/label size mismatch or empty input");
  const std::size_t d = X.front().size();
  for (const auto& row : X)
    if (row.size() != d) raise(ErrorKind::mismatch, "logreg: ragged feature matrix");

  long n_pos = 0, n_neg = 0;
  for (int label : y) (label ? n_pos : n_neg) += 1;
  if (n_pos < 2 || n_neg < 2)
    raise(ErrorKind::degenerate_input, "logreg: need at least 2 examples per class");

  std::vector<double> sample_weights(X.size(), 1.0);
  if (cfg.balanced) {
    // sklearn-style "balanced": n / (2 * class count).
    double wp = static_cast<double>(X.size()) / (2.0 * n_pos);
    double wn = static_cast<double>(X.size()) / (2.0 * n_neg);
    for (std::size_t i = 0; i < X.size(); ++i) sample_weights[i] = y[i] ? wp : wn;
  }

  Model m;
  m.weights.assign(d, 0.0);
  rng::CounterRng gen(cfg.seed, rng::derive_seed(0, "logreg_init"));
  for (auto& w : m.weights) w = 0.01 * gen.next_gaussian();
  m.bias = 0.0;

  std::vector<double> grad_w(d, 0.0);
  double grad_b = 0.0;
  double prev_loss = INFINITY;
  m.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss = loss_and_grad(X, y, sample_weights, m.weights, m.bias, cfg.l2, grad_w, grad_b);
    if (loss > prev_loss) m.loss_monotone = false;
    prev_loss = loss;
    m.loss_history.push_back(loss);
    for (std::size_t j = 0; j < d; ++j) m.weights[j] -= cfg.lr * grad_w[j];
    m.bias -= cfg.lr * grad_b;
  }
  m.final_loss =
      loss_and_grad(X, y, sample_weights, m.weights, m.bias, cfg.l2, grad_w, grad_b);
  return m;
}

double predict_prob(const Model& m, std::span<const double> x) {
  if (x.size() != m.weights.size()) raise(ErrorKind::mismatch, "logreg: feature dimension mismatch");
  double z = m.bias;
  for (std::size_t j = 0; j < x.size(); ++j) z += m.weights[j] * x[j];
  return sigmoid(z);
}

int predict_label(const Model& m, std::span<const double> x) {
  return predict_prob(m, x) >= 0.5 ? 1 : 0;
}

} // namespace retro::logreg
