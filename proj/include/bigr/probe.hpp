#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bigr/binary_codec.hpp"
#include "bigr/model.hpp"

namespace bigr {

// Mean of the n patch features at `layer` (1-based, condition slot excluded),
// computed with no masks and the unconditional token. One row per grid.
template <class T>
Eigen::MatrixXd extract_features(const GenerativeModel<T>& model, std::span<const BinaryCodeGrid> codes, int layer,
                                 int batch_size = 64);

struct ProbeConfig {
  int steps = 500;
  double learning_rate = 0.5;
  double l2 = 1e-4;
};

struct ProbeResult {
  int layer = 0;
  int num_classes = 0;
  Eigen::VectorXd mean;     // training-split statistics
  Eigen::VectorXd inv_std;
  Eigen::MatrixXd weights;  // dim x C
  Eigen::RowVectorXd bias;  // 1 x C
  double top1 = 0.0;
  double top5 = 0.0;  // only meaningful when has_top5
  bool has_top5 = false;

  Eigen::MatrixXd logits(const Eigen::MatrixXd& features) const;
  std::vector<int> predict(const Eigen::MatrixXd& features) const;
};

// Per-dimension standardization, then multinomial logistic regression by
// full-batch gradient descent. Accuracies are measured on the held-out split.
ProbeResult fit_linear_probe(const Eigen::MatrixXd& train_x, std::span<const int> train_y, const Eigen::MatrixXd& val_x,
                             std::span<const int> val_y, int num_classes, const ProbeConfig& config = {});

// Fraction of rows whose true label is among the k highest logits.
double top_k_accuracy(const Eigen::MatrixXd& logits, std::span<const int> labels, int k);

}  // namespace bigr
