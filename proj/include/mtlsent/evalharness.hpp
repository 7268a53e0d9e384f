#pragma once

#include <string>
#include <vector>

#include "mtlsent/combiner.hpp"
#include "mtlsent/tensor.hpp"

namespace mtlsent {

// Frozen embeddings plus labels; evaluation trains classifier parameters
// only and never touches the embedding matrices.
struct FrozenTaskData {
  Mat train_x, dev_x, test_x;  // rows are sentences
  std::vector<int> train_y, dev_y, test_y;
};

struct EvalReport {
  std::string task;
  std::string metric;  // "accuracy", "accuracy/F1", or "pearson"
  double dev_value = 0.0;
  double test_value = 0.0;
  double chosen_l2 = 0.0;
  double test_f1 = -1.0;  // positive-class F1 when requested
};

// L2 grid searched on dev for the frozen-feature classifiers.
const std::vector<double>& logreg_l2_grid();

EvalReport train_logreg(const FrozenTaskData& data, uint64_t seed, bool report_f1 = false);

// Same protocol with one tanh hidden layer; hidden == 0 is exactly logreg.
EvalReport train_mlp_probe(const FrozenTaskData& data, int hidden, uint64_t seed);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

enum class SimilarityMode { Cosine, Trained };

// Cosine mode: Pearson between cosine(s1, s2) and gold on the test rows (no
// training). Trained mode: ridge regression over pair features on train,
// Pearson on test.
struct SimilarityData {
  Mat train_x1, train_x2, test_x1, test_x2;
  std::vector<double> train_gold, test_gold;
};
EvalReport similarity_eval(const SimilarityData& data, SimilarityMode mode);

struct PoolAnalysisResult {
  std::vector<std::string> encoder_names;
  std::vector<double> alpha;  // nonnegative, sums to 1
  double accuracy = 0.0;
};

// Per-encoder softmax classifiers whose predicted distributions are mixed by
// learned pooling weights alpha = softmax(pool logits), trained jointly.
PoolAnalysisResult weighted_pool_analysis(const std::vector<EmbeddingSet>& sets,
                                          const std::vector<std::string>& names,
                                          const std::vector<int>& train_labels,
                                          const std::vector<int>& test_labels,
                                          const std::vector<Mat>& test_sets, uint64_t seed);

// Trains a fresh logistic regression to predict which task each sentence
// came from; low accuracy means the embeddings are task-generic.
double discriminator_probe(const std::vector<Mat>& train_per_task,
                           const std::vector<Mat>& test_per_task, uint64_t seed);

struct CurvePoint {
  int size = 0;
  double accuracy = 0.0;
};

// Stratified seeded subsampling of the train split at each size.
std::vector<CurvePoint> learning_curve(const FrozenTaskData& data, const std::vector<int>& sizes,
                                       uint64_t seed);

}  // namespace mtlsent
