#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mtlsent/evalharness.hpp"
#include "mtlsent/rng.hpp"

using namespace mtlsent;

namespace {

// Two gaussian-ish blobs separated along a few dimensions.
FrozenTaskData separable_data(uint64_t seed, int n_per_class, int dim, double gap) {
  Rng rng(seed, "separable");
  auto gen = [&](int n, Mat& x, std::vector<int>& y) {
    x = Mat(2 * n, dim);
    y.clear();
    for (int i = 0; i < 2 * n; ++i) {
      int cls = i % 2;
      for (int j = 0; j < dim; ++j) x(i, j) = rng.uniform(-1, 1);
      x(i, 0) += cls ? gap : -gap;
      y.push_back(cls);
    }
  };
  FrozenTaskData d;
  gen(n_per_class, d.train_x, d.train_y);
  gen(n_per_class / 2, d.dev_x, d.dev_y);
  gen(n_per_class / 2, d.test_x, d.test_y);
  return d;
}

FrozenTaskData xor_data(uint64_t seed, int n_per_cluster) {
  Rng rng(seed, "xor");
  auto gen = [&](int n, Mat& x, std::vector<int>& y) {
    x = Mat(4 * n, 2);
    y.clear();
    int row = 0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int i = 0; i < n; ++i) {
          x(row, 0) = a + rng.uniform(-0.15, 0.15);
          x(row, 1) = b + rng.uniform(-0.15, 0.15);
          y.push_back(a ^ b);
          ++row;
        }
  };
  FrozenTaskData d;
  gen(n_per_cluster, d.train_x, d.train_y);
  gen(n_per_cluster / 2, d.dev_x, d.dev_y);
  gen(n_per_cluster / 2, d.test_x, d.test_y);
  return d;
}

}  // namespace

TEST_CASE("pearson: reference values and errors") {
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson({1, 2, 3}, {-1, -2, -3}) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(pearson({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), DataError);
  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), DataError);
  CHECK_THROWS_AS(pearson({1}, {1}), DataError);
}

TEST_CASE("pearson: symmetric and affine invariant") {
  Rng rng(2, "pearson-prop");
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> x, y;
    for (int i = 0; i < 10; ++i) {
      x.push_back(rng.uniform(-5, 5));
      y.push_back(rng.uniform(-5, 5));
    }
    double r = pearson(x, y);
    CHECK(std::abs(r - pearson(y, x)) < 1e-12);
    std::vector<double> ax;
    for (double v : x) ax.push_back(3.5 * v + 2.0);
    CHECK(std::abs(r - pearson(ax, y)) < 1e-12);
    CHECK(r >= -1.0);
    CHECK(r <= 1.0);
  }
}

TEST_CASE("train_logreg: separable data, permuted labels, single class error") {
  FrozenTaskData data = separable_data(5, 200, 6, 3.0);
  EvalReport rep = train_logreg(data, 1);
  CHECK(rep.test_value >= 0.99);
  CHECK(rep.dev_value >= 0.99);

  // frozen-feature contract: embeddings untouched
  FrozenTaskData copy = separable_data(5, 200, 6, 3.0);
  CHECK(copy.train_x == data.train_x);

  // label permutation: near chance
  Rng rng(6, "perm");
  FrozenTaskData shuffled = data;
  rng.shuffle(shuffled.train_y);
  rng.shuffle(shuffled.dev_y);
  rng.shuffle(shuffled.test_y);
  EvalReport chance = train_logreg(shuffled, 1);
  double n = static_cast<double>(shuffled.test_y.size());
  double sigma = std::sqrt(0.25 / n);
  CHECK(chance.test_value <= 0.5 + 3 * sigma + 0.05);

  FrozenTaskData bad = data;
  for (auto& y : bad.train_y) y = 0;
  CHECK_THROWS_AS(train_logreg(bad, 1), DataError);
}

TEST_CASE("train_logreg reports F1 for binary tasks when asked") {
  FrozenTaskData data = separable_data(8, 100, 4, 3.0);
  EvalReport rep = train_logreg(data, 1, true);
  CHECK(rep.metric == "accuracy/F1");
  CHECK(rep.test_f1 >= 0.98);
}

TEST_CASE("mlp probe separates XOR from logreg; width 0 degenerates to logreg") {
  FrozenTaskData data = xor_data(7, 60);
  EvalReport lin = train_logreg(data, 3);
  EvalReport mlp = train_mlp_probe(data, 16, 3);
  CHECK(lin.test_value <= 0.6);
  CHECK(mlp.test_value >= 0.95);

  FrozenTaskData sep = separable_data(9, 100, 4, 3.0);
  EvalReport deg = train_mlp_probe(sep, 0, 3);
  EvalReport base = train_logreg(sep, 3);
  CHECK(std::abs(deg.test_value - base.test_value) <= 0.02);

  // deterministic under a fixed seed
  EvalReport again = train_mlp_probe(data, 16, 3);
  CHECK(again.test_value == mlp.test_value);
  CHECK(again.dev_value == mlp.dev_value);
}

TEST_CASE("similarity_eval: cosine mode") {
  // pairs constructed so that cosine equals gold
  int n = 30;
  SimilarityData data;
  data.test_x1 = Mat(n, 2);
  data.test_x2 = Mat(n, 2);
  Rng rng(8, "sim");
  for (int i = 0; i < n; ++i) {
    double angle = rng.uniform(0, 3.0);
    data.test_x1.row(i) << 1, 0;
    data.test_x2.row(i) << std::cos(angle), std::sin(angle);
    data.test_gold.push_back(std::cos(angle));
  }
  EvalReport rep = similarity_eval(data, SimilarityMode::Cosine);
  CHECK(rep.test_value == doctest::Approx(1.0).epsilon(1e-9));

  // anti-correlated gold
  SimilarityData anti = data;
  anti.test_gold.clear();
  for (int i = 0; i < n; ++i)
    anti.test_gold.push_back(-data.test_gold[static_cast<size_t>(i)]);
  CHECK(similarity_eval(anti, SimilarityMode::Cosine).test_value ==
        doctest::Approx(-1.0).epsilon(1e-9));

  // degenerate gold surfaces the zero-variance error
  SimilarityData flat = data;
  for (auto& g : flat.test_gold) g = 2.5;
  CHECK_THROWS_AS(similarity_eval(flat, SimilarityMode::Cosine), DataError);

  // zero vector rejected
  SimilarityData zero = data;
  zero.test_x1.row(0).setZero();
  CHECK_THROWS_AS(similarity_eval(zero, SimilarityMode::Cosine), DataError);
}

TEST_CASE("similarity_eval: trained mode recovers a linear relation") {
  Rng rng(9, "sim-train");
  auto fill = [&](Mat& x1, Mat& x2, std::vector<double>& gold, int n) {
    x1 = Mat(n, 3);
    x2 = Mat(n, 3);
    gold.clear();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 3; ++j) {
        x1(i, j) = rng.uniform(-1, 1);
        x2(i, j) = rng.uniform(-1, 1);
      }
      gold.push_back(x1.row(i).dot(x2.row(i)));  // depends on the product segment
    }
  };
  SimilarityData data;
  fill(data.train_x1, data.train_x2, data.train_gold, 300);
  fill(data.test_x1, data.test_x2, data.test_gold, 100);
  EvalReport rep = similarity_eval(data, SimilarityMode::Trained);
  CHECK(rep.test_value >= 0.95);
}

TEST_CASE("weighted_pool_analysis: alpha simplex, signal vs noise, identical encoders") {
  Rng rng(10, "pool");
  int n = 240, dim = 4;
  std::string cid = corpus_hash({"pool-corpus"});
  auto make = [&](bool signal, const std::vector<int>& labels) {
    Mat x(static_cast<Eigen::Index>(labels.size()), dim);
    for (size_t i = 0; i < labels.size(); ++i)
      for (int j = 0; j < dim; ++j) {
        x(static_cast<Eigen::Index>(i), j) = rng.uniform(-1, 1);
        if (signal && j == 0) x(static_cast<Eigen::Index>(i), j) += labels[i] ? 2.5 : -2.5;
      }
    return x;
  };
  std::vector<int> train_y, test_y;
  for (int i = 0; i < n; ++i) train_y.push_back(i % 2);
  for (int i = 0; i < n / 2; ++i) test_y.push_back(i % 2);

  EmbeddingSet sig{cid, make(true, train_y), "sig"};
  EmbeddingSet noise{cid, make(false, train_y), "noise"};
  std::vector<Mat> test_sets = {make(true, test_y), make(false, test_y)};

  PoolAnalysisResult res =
      weighted_pool_analysis({sig, noise}, {"sig", "noise"}, train_y, test_y, test_sets, 4);
  REQUIRE(res.alpha.size() == 2);
  CHECK(std::abs(res.alpha[0] + res.alpha[1] - 1.0) < 1e-6);
  CHECK(res.alpha[0] >= 0.0);
  CHECK(res.alpha[1] >= 0.0);
  CHECK(res.alpha[0] > res.alpha[1]);  // signal encoder wins weight

  // single encoder: alpha = [1]
  PoolAnalysisResult one =
      weighted_pool_analysis({sig}, {"sig"}, train_y, test_y, {test_sets[0]}, 4);
  REQUIRE(one.alpha.size() == 1);
  CHECK(one.alpha[0] == doctest::Approx(1.0).epsilon(1e-12));

  // two identical encoders track the single-encoder accuracy
  PoolAnalysisResult twin = weighted_pool_analysis({sig, sig}, {"a", "b"}, train_y, test_y,
                                                   {test_sets[0], test_sets[0]}, 4);
  CHECK(std::abs(twin.accuracy - one.accuracy) <= 0.02);
}

TEST_CASE("discriminator_probe: no signal vs marker dimensions") {
  Rng rng(11, "probe");
  int n = 150, dim = 5;
  auto blob = [&](double shift) {
    Mat x(n, dim);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < dim; ++j) x(i, j) = rng.uniform(-1, 1) + (j == 0 ? shift : 0.0);
    return x;
  };
  // identical distributions: chance
  double acc_same = discriminator_probe({blob(0), blob(0)}, {blob(0), blob(0)}, 5);
  CHECK(acc_same <= 0.5 + 0.15);
  // task-marker dimension: near perfect
  double acc_marked = discriminator_probe({blob(-2.5), blob(2.5)}, {blob(-2.5), blob(2.5)}, 5);
  CHECK(acc_marked >= 0.95);

  CHECK_THROWS_AS(discriminator_probe({blob(0)}, {blob(0)}, 5), DataError);
}

TEST_CASE("learning_curve: full size equals plain logreg; trend; stratification") {
  FrozenTaskData data = separable_data(12, 150, 5, 2.5);
  int full = static_cast<int>(data.train_y.size());
  auto curve = learning_curve(data, {20, full / 2, full}, 33);
  REQUIRE(curve.size() == 3);
  CHECK(curve[2].size == full);
  EvalReport plain = train_logreg(data, 33);
  CHECK(curve[2].accuracy == plain.test_value);

  // separable data: max-size accuracy within 0.02 of min-size, averaged over 3 seeds
  double lo = 0, hi = 0;
  for (uint64_t s : {101ull, 102ull, 103ull}) {
    auto c = learning_curve(data, {20, full}, s);
    lo += c[0].accuracy;
    hi += c[1].accuracy;
  }
  CHECK(hi / 3 >= lo / 3 - 0.02);

  CHECK_THROWS_AS(learning_curve(data, {full + 1}, 33), DataError);
}
