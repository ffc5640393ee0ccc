#include "bigr/probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "bigr/errors.hpp"

namespace bigr {

template <class T>
Eigen::MatrixXd extract_features(const GenerativeModel<T>& model, std::span<const BinaryCodeGrid> codes, int layer,
                                 int batch_size) {
  const auto& cfg = model.config().backbone;
  require(layer >= 1 && layer <= cfg.layers, ErrorKind::InvalidInput,
          "feature layer " + std::to_string(layer) + " is outside [1, " + std::to_string(cfg.layers) + "]");
  require(!codes.empty(), ErrorKind::InvalidInput, "no images to extract features from");
  const int n = model.seq_len();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(codes.size()), cfg.dim);
  for (std::size_t start = 0; start < codes.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t len = std::min(codes.size() - start, static_cast<std::size_t>(batch_size));
    const auto batch = codes.subspan(start, len);
    nn::Tape<T> tape(false);
    const std::vector<int> ids(len, model.uncond_id());
    nn::Var cond = model.backbone().class_embedding(tape, ids);
    const std::vector<std::uint8_t> unmasked(len * static_cast<std::size_t>(n), 0);
    nn::Var emb = model.backbone().embed_sequence(tape, tape.constant(codes_to_signed_rows<T>(batch)), unmasked, cond);
    const BackboneOutput res = model.backbone().forward(tape, emb, cond);
    const auto& h = tape.value(res.layers[static_cast<std::size_t>(layer - 1)]);
    for (std::size_t b = 0; b < len; ++b) {
      const auto block = h.middleRows(static_cast<Eigen::Index>(b) * (n + 1) + 1, n);
      out.row(static_cast<Eigen::Index>(start + b)) = block.template cast<double>().colwise().mean();
    }
  }
  return out;
}

Eigen::MatrixXd ProbeResult::logits(const Eigen::MatrixXd& features) const {
  Eigen::MatrixXd z = (features.rowwise() - mean.transpose()).array().rowwise() * inv_std.transpose().array();
  Eigen::MatrixXd out = z * weights;
  out.rowwise() += bias;
  return out;
}

std::vector<int> ProbeResult::predict(const Eigen::MatrixXd& features) const {
  const Eigen::MatrixXd l = logits(features);
  std::vector<int> out(static_cast<std::size_t>(l.rows()));
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    Eigen::Index best = 0;
    l.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double top_k_accuracy(const Eigen::MatrixXd& logits, std::span<const int> labels, int k) {
  require(static_cast<std::size_t>(logits.rows()) == labels.size() && !labels.empty(), ErrorKind::InvalidInput,
          "logits and labels differ in length");
  int hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double own = logits(i, labels[static_cast<std::size_t>(i)]);
    // Rank among the classes; ties go to the lower class index, as in argmax.
    const int label = labels[static_cast<std::size_t>(i)];
    int higher = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      higher += (logits(i, c) > own || (logits(i, c) == own && c < label)) ? 1 : 0;
    }
    hits += higher < k ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

ProbeResult fit_linear_probe(const Eigen::MatrixXd& train_x, std::span<const int> train_y, const Eigen::MatrixXd& val_x,
                             std::span<const int> val_y, int num_classes, const ProbeConfig& config) {
  require(train_x.rows() == static_cast<Eigen::Index>(train_y.size()) && train_x.rows() > 0, ErrorKind::InvalidInput,
          "probe training features and labels differ in length");
  require(val_x.rows() == static_cast<Eigen::Index>(val_y.size()) && val_x.rows() > 0 &&
              val_x.cols() == train_x.cols(),
          ErrorKind::InvalidInput, "probe validation features do not match");
  require(train_x.allFinite() && val_x.allFinite(), ErrorKind::InvalidInput, "probe features must be finite");
  std::set<int> present;
  for (int y : train_y) {
    require(y >= 0 && y < num_classes, ErrorKind::InvalidInput, "probe label out of range");
    present.insert(y);
  }
  for (int y : val_y) require(y >= 0 && y < num_classes, ErrorKind::InvalidInput, "probe label out of range");
  require(present.size() >= 2, ErrorKind::InvalidInput, "linear probe needs at least two classes in the training split");

  const Eigen::Index n = train_x.rows();
  const Eigen::Index d = train_x.cols();
  ProbeResult r;
  r.num_classes = num_classes;
  r.mean = train_x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = train_x.rowwise() - r.mean.transpose();
  const Eigen::VectorXd var = centered.array().square().colwise().mean().transpose();
  r.inv_std = (var.array() + 1e-8).rsqrt().matrix();
  const Eigen::MatrixXd x = centered.array().rowwise() * r.inv_std.transpose().array();

  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, num_classes);
  for (Eigen::Index i = 0; i < n; ++i) y(i, train_y[static_cast<std::size_t>(i)]) = 1.0;

  r.weights = Eigen::MatrixXd::Zero(d, num_classes);
  r.bias = Eigen::RowVectorXd::Zero(num_classes);
  for (int step = 0; step < config.steps; ++step) {
    Eigen::MatrixXd z = x * r.weights;
    z.rowwise() += r.bias;
    const Eigen::VectorXd zmax = z.rowwise().maxCoeff();
    Eigen::MatrixXd p = (z.colwise() - zmax).array().exp();
    p.array().colwise() /= p.rowwise().sum().array();
    const Eigen::MatrixXd g = (p - y) / static_cast<double>(n);
    r.weights -= config.learning_rate * (x.transpose() * g + config.l2 * r.weights);
    r.bias -= config.learning_rate * g.colwise().sum();
  }

  const Eigen::MatrixXd val_logits = r.logits(val_x);
  r.top1 = top_k_accuracy(val_logits, val_y, 1);
  r.has_top5 = num_classes >= 5;
  if (r.has_top5) r.top5 = top_k_accuracy(val_logits, val_y, 5);
  return r;
}

template Eigen::MatrixXd extract_features(const GenerativeModel<float>&, std::span<const BinaryCodeGrid>, int, int);
template Eigen::MatrixXd extract_features(const GenerativeModel<double>&, std::span<const BinaryCodeGrid>, int, int);

}  // namespace bigr
