#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace retro::logreg {

struct TrainConfig {
  double l2 = 1e-3;    // ridge penalty on weights (bias excluded)
  int epochs = 400;
  double lr = 0.5;
  std::uint64_t seed = 0;
  bool balanced = true; // weight classes inversely to frequency
};

struct Model {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> loss_history; // one entry per epoch
  double final_loss = 0.0;
  bool loss_monotone = true; // false flags a too-large learning rate
};

// Weighted L2-regularized logistic loss and its gradient at (weights, bias).
// Exposed separately so the gradient can be checked against finite
// differences.
double loss_and_grad(std::span<const std::vector<double>> X, std::span<const int> y,
                     std::span<const double> sample_weights, std::span<const double> weights,
                     double bias, double l2, std::span<double> grad_w, double& grad_b);

// Full-batch gradient descent; deterministic for a fixed seed.
Model train(std::span<const std::vector<double>> X, std::span<const int> y,
            const TrainConfig& cfg);

double predict_prob(const Model& m, std::span<const double> x);
int predict_label(const Model& m, std::span<const double> x);

} // namespace retro::logreg
