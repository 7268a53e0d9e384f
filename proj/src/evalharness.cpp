#include "mtlsent/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mtlsent/multitask.hpp"
#include "mtlsent/rng.hpp"

namespace mtlsent {

namespace {

struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Mat& x) {
    Standardizer s;
    s.mean = x.colwise().mean();
    Mat centered = x.rowwise() - s.mean;
    s.scale = (centered.array().square().colwise().mean()).sqrt();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j)
      if (s.scale(j) < 1e-12) s.scale(j) = 1.0;
    return s;
  }

  Mat apply(const Mat& x) const {
    Mat out = x.rowwise() - mean;
    out.array().rowwise() /= scale.array();
    return out;
  }
};

int num_classes(const std::vector<int>& y) {
  int c = 0;
  for (int v : y) c = std::max(c, v + 1);
  return c;
}

// Full-batch gradient descent with halving on loss increase; deterministic
// under a fixed seed.
MlpParams fit_softmax(const Mat& x, const std::vector<int>& y, int classes, int hidden, double l2,
                      uint64_t seed, int max_iters) {
  Rng rng(seed, "softmax-fit");
  MlpParams p = MlpParams::init(static_cast<int>(x.cols()), hidden, classes, rng);
  Mat xt = x.transpose();  // features x examples
  double lr = 1.0;
  double prev_loss = std::numeric_limits<double>::infinity();
  std::vector<Mat> prev_vals;
  for (int it = 0; it < max_iters; ++it) {
    Tape tape;
    Var xc = tape.constant(xt);
    Var logits = mlp_forward(tape, p, xc);
    Var loss = softmax_xent_cols(logits, y);
    if (l2 > 0) {
      loss = add(loss, scale(frobenius_sq(tape.param(p.w2)), l2));
      if (hidden > 0) loss = add(loss, scale(frobenius_sq(tape.param(p.w1)), l2));
    }
    double lv = loss.scalar();
    if (lv > prev_loss + 1e-12) {
      // step was too big: revert and retry smaller
      auto params = p.params();
      for (size_t i = 0; i < params.size(); ++i) params[i]->value = prev_vals[i];
      lr *= 0.5;
      if (lr < 1e-7) break;
      continue;
    }
    if (prev_loss - lv < 1e-10 && it > 20) break;
    prev_loss = lv;
    prev_vals.clear();
    for (Param* q : p.params()) prev_vals.push_back(q->value);
    for (Param* q : p.params()) q->zero_grad();
    tape.backward(loss);
    for (Param* q : p.params()) q->value -= lr * q->grad;
  }
  return p;
}

std::vector<int> predict(MlpParams& p, const Mat& x) {
  Tape tape;
  Var logits = mlp_forward(tape, p, tape.constant(x.transpose()));
  const Mat& l = logits.value();
  std::vector<int> out;
  for (Eigen::Index j = 0; j < l.cols(); ++j) {
    Eigen::Index arg;
    l.col(j).maxCoeff(&arg);
    out.push_back(static_cast<int>(arg));
  }
  return out;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& gold) {
  int correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == gold[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double positive_f1(const std::vector<int>& pred, const std::vector<int>& gold) {
  int tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && gold[i] == 1) ++tp;
    if (pred[i] == 1 && gold[i] != 1) ++fp;
    if (pred[i] != 1 && gold[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  double prec = static_cast<double>(tp) / (tp + fp);
  double rec = static_cast<double>(tp) / (tp + fn);
  return 2 * prec * rec / (prec + rec);
}

EvalReport eval_classifier(const FrozenTaskData& data, int hidden, uint64_t seed, bool report_f1,
                           int max_iters) {
  if (data.train_y.empty()) throw DataError("eval: empty training split");
  int classes = num_classes(data.train_y);
  std::set<int> distinct(data.train_y.begin(), data.train_y.end());
  if (distinct.size() < 2) throw DataError("eval: single-class training data");

  Standardizer std_ = Standardizer::fit(data.train_x);
  Mat train = std_.apply(data.train_x);
  Mat dev = std_.apply(data.dev_x);
  Mat test = std_.apply(data.test_x);

  EvalReport report;
  report.metric = report_f1 ? "accuracy/F1" : "accuracy";
  double best_dev = -1.0;
  for (double l2 : logreg_l2_grid()) {
    MlpParams p = fit_softmax(train, data.train_y, classes, hidden, l2, seed, max_iters);
    double dev_acc = accuracy(predict(p, dev), data.dev_y);
    if (dev_acc > best_dev) {
      best_dev = dev_acc;
      report.chosen_l2 = l2;
      std::vector<int> test_pred = predict(p, test);
      report.test_value = accuracy(test_pred, data.test_y);
      if (report_f1) report.test_f1 = positive_f1(test_pred, data.test_y);
    }
  }
  report.dev_value = best_dev;
  return report;
}

}  // namespace

const std::vector<double>& logreg_l2_grid() {
  static const std::vector<double> grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  return grid;
}

EvalReport train_logreg(const FrozenTaskData& data, uint64_t seed, bool report_f1) {
  return eval_classifier(data, 0, seed, report_f1, 400);
}

EvalReport train_mlp_probe(const FrozenTaskData& data, int hidden, uint64_t seed) {
  return eval_classifier(data, hidden, seed, false, 1500);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  size_t n = x.size();
  if (n < 2) throw DataError("pearson: need at least 2 points");
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("pearson: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

EvalReport similarity_eval(const SimilarityData& data, SimilarityMode mode) {
  EvalReport report;
  report.metric = "pearson";
  if (mode == SimilarityMode::Cosine) {
    std::vector<double> cos;
    for (Eigen::Index i = 0; i < data.test_x1.rows(); ++i) {
      double n1 = data.test_x1.row(i).norm();
      double n2 = data.test_x2.row(i).norm();
      if (n1 == 0.0 || n2 == 0.0)
        throw DataError("similarity_eval: zero-vector sentence at row " + std::to_string(i));
      cos.push_back(data.test_x1.row(i).dot(data.test_x2.row(i)) / (n1 * n2));
    }
    report.test_value = pearson(cos, data.test_gold);
    report.dev_value = report.test_value;
    return report;
  }

  // trained: ridge regression over pair features
  auto features = [](const Mat& a, const Mat& b) {
    Mat f(a.rows(), 4 * a.cols());
    f << a, b, (a - b), a.cwiseProduct(b);
    return f;
  };
  Mat ftr = features(data.train_x1, data.train_x2);
  Mat fte = features(data.test_x1, data.test_x2);
  Eigen::VectorXd gold(ftr.rows());
  for (Eigen::Index i = 0; i < gold.size(); ++i)
    gold(i) = data.train_gold[static_cast<size_t>(i)];
  double lambda = 1e-2;
  Eigen::MatrixXd a = ftr.transpose() * ftr;
  a.diagonal().array() += lambda * static_cast<double>(ftr.rows());
  Eigen::VectorXd w = a.ldlt().solve(ftr.transpose() * gold);
  std::vector<double> pred;
  for (Eigen::Index i = 0; i < fte.rows(); ++i) pred.push_back(fte.row(i).dot(w));
  report.test_value = pearson(pred, data.test_gold);
  report.dev_value = report.test_value;
  return report;
}

PoolAnalysisResult weighted_pool_analysis(const std::vector<EmbeddingSet>& sets,
                                          const std::vector<std::string>& names,
                                          const std::vector<int>& train_labels,
                                          const std::vector<int>& test_labels,
                                          const std::vector<Mat>& test_sets, uint64_t seed) {
  if (sets.empty()) throw DataError("weighted_pool_analysis: no encoders");
  for (size_t i = 1; i < sets.size(); ++i)
    if (sets[i].corpus_id != sets[0].corpus_id || sets[i].n() != sets[0].n())
      throw DataError("weighted_pool_analysis: misaligned embedding sets");
  size_t E = sets.size();
  int classes = num_classes(train_labels);

  std::vector<Standardizer> stds;
  std::vector<Mat> train_x, test_x;
  for (size_t e = 0; e < E; ++e) {
    stds.push_back(Standardizer::fit(sets[e].matrix));
    train_x.push_back(stds[e].apply(sets[e].matrix).transpose());
    test_x.push_back(stds[e].apply(test_sets[e]).transpose());
  }

  Rng rng(seed, "pool-analysis");
  std::vector<MlpParams> clf;
  for (size_t e = 0; e < E; ++e)
    clf.push_back(MlpParams::init(static_cast<int>(train_x[e].rows()), 0, classes, rng));
  Param pool_logits(Mat::Zero(static_cast<Eigen::Index>(E), 1));

  std::vector<Param*> all;
  for (auto& c : clf)
    for (Param* p : c.params()) all.push_back(p);
  all.push_back(&pool_logits);

  auto forward = [&](Tape& tape, const std::vector<Mat>& xs) {
    Var alpha = softmax(tape.param(pool_logits));
    Var combined{};
    for (size_t e = 0; e < E; ++e) {
      Var probs = softmax_cols(mlp_forward(tape, clf[e], tape.constant(xs[e])));
      Var weighted = scale_by_entry(probs, alpha, static_cast<int>(e));
      combined = (e == 0) ? weighted : add(combined, weighted);
    }
    return combined;
  };

  double lr = 1.0;
  double prev_loss = std::numeric_limits<double>::infinity();
  std::vector<Mat> prev_vals;
  for (int it = 0; it < 600; ++it) {
    Tape tape;
    Var loss = pick_neg_log_cols(forward(tape, train_x), train_labels);
    double lv = loss.scalar();
    if (lv > prev_loss + 1e-12) {
      for (size_t i = 0; i < all.size(); ++i) all[i]->value = prev_vals[i];
      lr *= 0.5;
      if (lr < 1e-7) break;
      continue;
    }
    if (prev_loss - lv < 1e-10 && it > 20) break;
    prev_loss = lv;
    prev_vals.clear();
    for (Param* p : all) prev_vals.push_back(p->value);
    for (Param* p : all) p->zero_grad();
    tape.backward(loss);
    for (Param* p : all) p->value -= lr * p->grad;
  }

  PoolAnalysisResult result;
  result.encoder_names = names;
  {
    Tape tape;
    Mat alpha = softmax(tape.param(pool_logits)).value();
    for (Eigen::Index i = 0; i < alpha.rows(); ++i) result.alpha.push_back(alpha(i, 0));
  }
  {
    Tape tape;
    const Mat& probs = forward(tape, test_x).value();
    std::vector<int> pred;
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      Eigen::Index arg;
      probs.col(j).maxCoeff(&arg);
      pred.push_back(static_cast<int>(arg));
    }
    result.accuracy = accuracy(pred, test_labels);
  }
  return result;
}

double discriminator_probe(const std::vector<Mat>& train_per_task,
                           const std::vector<Mat>& test_per_task, uint64_t seed) {
  if (train_per_task.size() < 2) throw DataError("discriminator_probe: need >= 2 source tasks");
  FrozenTaskData data;
  Eigen::Index dim = train_per_task[0].cols();
  auto stack = [&](const std::vector<Mat>& per_task, Mat& x, std::vector<int>& y,
                   Mat* held_out_x, std::vector<int>* held_out_y) {
    Eigen::Index total = 0;
    for (const Mat& m : per_task) total += m.rows();
    std::vector<Eigen::RowVectorXd> main_rows, held_rows;
    std::vector<int> main_y, held_y;
    for (size_t k = 0; k < per_task.size(); ++k) {
      for (Eigen::Index i = 0; i < per_task[k].rows(); ++i) {
        // every fifth row goes to the dev slice used for L2 selection
        if (held_out_x && i % 5 == 4) {
          held_rows.push_back(per_task[k].row(i));
          held_y.push_back(static_cast<int>(k));
        } else {
          main_rows.push_back(per_task[k].row(i));
          main_y.push_back(static_cast<int>(k));
        }
      }
    }
    x = Mat(static_cast<Eigen::Index>(main_rows.size()), dim);
    for (size_t i = 0; i < main_rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = main_rows[i];
    y = main_y;
    if (held_out_x) {
      *held_out_x = Mat(static_cast<Eigen::Index>(held_rows.size()), dim);
      for (size_t i = 0; i < held_rows.size(); ++i)
        held_out_x->row(static_cast<Eigen::Index>(i)) = held_rows[i];
      *held_out_y = held_y;
    }
  };
  stack(train_per_task, data.train_x, data.train_y, &data.dev_x, &data.dev_y);
  stack(test_per_task, data.test_x, data.test_y, nullptr, nullptr);
  return train_logreg(data, seed).test_value;
}

std::vector<CurvePoint> learning_curve(const FrozenTaskData& data, const std::vector<int>& sizes,
                                       uint64_t seed) {
  int n = static_cast<int>(data.train_y.size());
  std::vector<CurvePoint> out;
  for (int size : sizes) {
    if (size > n)
      throw DataError("learning_curve: size " + std::to_string(size) + " exceeds train split " +
                      std::to_string(n));
    // stratified: per-class quota proportional to the full split
    int classes = num_classes(data.train_y);
    std::vector<std::vector<int>> by_class(static_cast<size_t>(classes));
    for (int i = 0; i < n; ++i) by_class[static_cast<size_t>(data.train_y[i])].push_back(i);
    Rng rng(seed, "curve-subsample-" + std::to_string(size));
    std::vector<int> chosen;
    for (int c = 0; c < classes; ++c) {
      auto& idx = by_class[static_cast<size_t>(c)];
      rng.shuffle(idx);
      int quota = static_cast<int>(std::round(
          static_cast<double>(size) * static_cast<double>(idx.size()) / static_cast<double>(n)));
      quota = std::min(quota, static_cast<int>(idx.size()));
      for (int i = 0; i < quota; ++i) chosen.push_back(idx[static_cast<size_t>(i)]);
    }
    // rounding drift: top up or trim to the requested size
    size_t ci = 0;
    while (static_cast<int>(chosen.size()) < size) {
      for (int c = 0; c < classes && static_cast<int>(chosen.size()) < size; ++c) {
        auto& idx = by_class[static_cast<size_t>(c)];
        for (int i : idx) {
          if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) {
            chosen.push_back(i);
            break;
          }
        }
      }
      ++ci;
      if (ci > static_cast<size_t>(classes)) break;
    }
    while (static_cast<int>(chosen.size()) > size) chosen.pop_back();
    std::sort(chosen.begin(), chosen.end());

    FrozenTaskData sub;
    sub.train_x = Mat(static_cast<Eigen::Index>(chosen.size()), data.train_x.cols());
    for (size_t i = 0; i < chosen.size(); ++i) {
      sub.train_x.row(static_cast<Eigen::Index>(i)) = data.train_x.row(chosen[i]);
      sub.train_y.push_back(data.train_y[static_cast<size_t>(chosen[i])]);
    }
    sub.dev_x = data.dev_x;
    sub.dev_y = data.dev_y;
    sub.test_x = data.test_x;
    sub.test_y = data.test_y;
    out.push_back({size, train_logreg(sub, seed).test_value});
  }
  return out;
}

}  // namespace mtlsent
