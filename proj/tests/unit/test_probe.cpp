#include "doctest.h"

#include "bigr/probe.hpp"
#include "fixtures.hpp"

using namespace bigr;

namespace {

// Gaussian blobs with one center per class.
void blobs(int per_class, int classes, int dim, std::uint64_t seed, Eigen::MatrixXd& x, std::vector<int>& y) {
  Rng rng(seed);
  Rng centers_rng(99);
  Eigen::MatrixXd centers(classes, dim);
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = 3.0 * centers_rng.normal();
  x.resize(per_class * classes, dim);
  y.clear();
  for (int i = 0; i < per_class * classes; ++i) {
    const int c = i % classes;
    for (int j = 0; j < dim; ++j) x(i, j) = centers(c, j) + rng.normal();
    y.push_back(c);
  }
}

}  // namespace

TEST_CASE("top-k accuracy breaks ties toward the lower class index") {
  Eigen::MatrixXd logits(3, 3);
  logits << 1, 2, 3,  //
      5, 0, 0,        //
      1, 1, 1;
  const std::vector<int> y{2, 0, 2};
  CHECK(top_k_accuracy(logits, y, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(top_k_accuracy(logits, y, 2) == doctest::Approx(2.0 / 3.0));
  CHECK(top_k_accuracy(logits, y, 3) == doctest::Approx(1.0));
}

TEST_CASE("linear probe separates blobs") {
  Eigen::MatrixXd xt, xv;
  std::vector<int> yt, yv;
  blobs(40, 6, 5, 1, xt, yt);
  blobs(20, 6, 5, 2, xv, yv);
  const ProbeResult r = fit_linear_probe(xt, yt, xv, yv, 6);
  CHECK(r.top1 > 0.9);
  CHECK(r.has_top5);
  CHECK(r.top5 >= r.top1);
  CHECK(r.predict(xv).size() == yv.size());
}

TEST_CASE("probe is invariant to per-dimension affine rescaling") {
  Eigen::MatrixXd xt, xv;
  std::vector<int> yt, yv;
  blobs(30, 4, 6, 3, xt, yt);
  blobs(15, 4, 6, 4, xv, yv);
  Eigen::RowVectorXd a(6), b(6);
  a << 10, 0.1, -3, 7, 1e3, 0.5;
  b << 5, -2, 100, 0, 1, -7;
  Eigen::MatrixXd st = (xt.array().rowwise() * a.array()).rowwise() + b.array();
  Eigen::MatrixXd sv = (xv.array().rowwise() * a.array()).rowwise() + b.array();
  const ProbeResult p = fit_linear_probe(xt, yt, xv, yv, 4);
  const ProbeResult q = fit_linear_probe(st, yt, sv, yv, 4);
  CHECK(p.predict(xv) == q.predict(sv));
  CHECK(p.top1 == doctest::Approx(q.top1));
}

TEST_CASE("probe input validation") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 2);
  std::vector<int> y{0, 0, 0, 0};
  CHECK_THROWS_AS(fit_linear_probe(x, y, x, y, 1), Error);
  std::vector<int> bad{0, 5, 0, 0};
  CHECK_THROWS_AS(fit_linear_probe(x, bad, x, y, 2), Error);
  const ProbeResult r = fit_linear_probe(x, std::vector<int>{0, 1, 0, 1}, x, std::vector<int>{0, 1, 0, 1}, 2);
  CHECK_FALSE(r.has_top5);
}

TEST_CASE("feature extraction is deterministic and layer-indexed") {
  GenerativeModel<float> m(fixture::mini_model(), 1);
  oracle::randomize(m.params(), 0, 0.0);
  Rng rng(5);
  oracle::randomize(m.params(), 3, 0.2);
  const auto grids = fixture::random_grids(5, 2, 2, 6, rng);
  const auto a = extract_features(m, grids, 1, 2);
  const auto b = extract_features(m, grids, 1, 64);
  CHECK(a.rows() == 5);
  CHECK(a.cols() == 16);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(extract_features(m, grids, 2).rows() == 5);
  CHECK_THROWS_AS(extract_features(m, grids, 3), Error);
  CHECK_THROWS_AS(extract_features(m, grids, 0), Error);
}
