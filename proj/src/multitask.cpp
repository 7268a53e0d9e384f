#include "mtlsent/multitask.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

namespace mtlsent {

using nlohmann::json;

MlpParams MlpParams::init(int in, int hidden, int out, Rng& rng) {
  MlpParams p;
  p.hidden = hidden;
  auto uniform_mat = [&](int r, int c) {
    double bound = 1.0 / std::sqrt(static_cast<double>(c));
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
  };
  if (hidden > 0) {
    p.w1 = Param(uniform_mat(hidden, in));
    p.b1 = Param(Mat::Zero(hidden, 1));
    p.w2 = Param(uniform_mat(out, hidden));
  } else {
    p.w2 = Param(uniform_mat(out, in));
  }
  p.b2 = Param(Mat::Zero(out, 1));
  return p;
}

std::vector<Param*> MlpParams::params() {
  if (hidden > 0) return {&w1, &b1, &w2, &b2};
  return {&w2, &b2};
}

Var mlp_forward(Tape& tape, MlpParams& p, Var x) {
  Var h = x;
  if (p.hidden > 0)
    h = tanh(add_col_broadcast(matmul(tape.param(p.w1), x), tape.param(p.b1)));
  return add_col_broadcast(matmul(tape.param(p.w2), h), tape.param(p.b2));
}

MtlModel MtlModel::init(const std::vector<TaskSpec>& tasks, int d, int e, int mlp_hidden,
                        Rng& rng) {
  MtlModel m;
  m.d = d;
  m.e = e;
  m.K = static_cast<int>(tasks.size());
  m.mlp_hidden = mlp_hidden;
  m.shared = EncoderParams::init(d, e, rng);
  for (const TaskSpec& t : tasks) {
    m.priv.push_back(EncoderParams::init(d, e, rng));
    int in = 4 * d;  // [shared 2d; private 2d]
    if (t.kind == Schema::Pair) in *= 4;
    m.clf.push_back(MlpParams::init(in, mlp_hidden, t.num_classes, rng));
  }
  m.disc_w = Param(Mat::Zero(m.K, 2 * d));
  m.disc_b = Param(Mat::Zero(m.K, 1));
  return m;
}

std::vector<Param*> MtlModel::all_params() {
  std::vector<Param*> out = encoder_and_clf_params();
  out.push_back(&disc_w);
  out.push_back(&disc_b);
  return out;
}

std::vector<Param*> MtlModel::encoder_and_clf_params() {
  std::vector<Param*> out = shared.params();
  for (auto& p : priv)
    for (Param* q : p.params()) out.push_back(q);
  for (auto& c : clf)
    for (Param* q : c.params()) out.push_back(q);
  return out;
}

void MtlModel::zero_grads() {
  for (Param* p : all_params()) p->zero_grad();
}

TaskForward forward_task(Tape& tape, MtlModel& model, int k, const SentenceBatch& s1,
                         const SentenceBatch* s2, const EmbeddingTable& table) {
  if (k < 0 || k >= model.K) throw DataError("forward_task: unknown task id " + std::to_string(k));
  TaskForward out;
  out.shared_enc.push_back(encode_batch(tape, s1, table, model.shared));
  out.private_enc.push_back(encode_batch(tape, s1, table, model.priv[static_cast<size_t>(k)]));
  Var f1 = concat_rows({out.shared_enc[0].pooled, out.private_enc[0].pooled});
  Var features = f1;
  if (s2 != nullptr) {
    out.shared_enc.push_back(encode_batch(tape, *s2, table, model.shared));
    out.private_enc.push_back(encode_batch(tape, *s2, table, model.priv[static_cast<size_t>(k)]));
    Var f2 = concat_rows({out.shared_enc[1].pooled, out.private_enc[1].pooled});
    features = pair_features(f1, f2);
  }
  out.logits = mlp_forward(tape, model.clf[static_cast<size_t>(k)], features);
  return out;
}

Var discriminator_forward(Tape& tape, MtlModel& model, Var s_shared) {
  return softmax_cols(
      add_col_broadcast(matmul(tape.param(model.disc_w), s_shared), tape.param(model.disc_b)));
}

Var adv_loss(Tape& tape, MtlModel& model, const std::vector<EncodeResult>& shared_enc, int task_id,
             bool reversal, double reversal_scale) {
  Var w = tape.param(model.disc_w);
  Var b = tape.param(model.disc_b);
  std::vector<Var> terms;
  for (const EncodeResult& enc : shared_enc) {
    Var s = reversal ? grad_reverse(enc.pooled, reversal_scale) : enc.pooled;
    Var logits = add_col_broadcast(matmul(w, s), b);
    std::vector<int> labels(static_cast<size_t>(s.cols()), task_id);
    terms.push_back(softmax_xent_cols(logits, labels));
  }
  Var total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return scale(total, 1.0 / static_cast<double>(terms.size()));
}

Var diff_loss(const EncodeResult& shared_enc, const EncodeResult& private_enc) {
  return gram_frobenius(shared_enc.hidden, private_enc.hidden, shared_enc.mask);
}

namespace {

struct PreparedTask {
  std::vector<SentenceBatch> s1;
  std::vector<SentenceBatch> s2;  // empty unless pair task
  std::vector<std::vector<int>> labels;
};

PreparedTask prepare(const TaskSpec& task, const std::vector<DatasetRecord>& records,
                     const EmbeddingTable& table, int batch_size, Rng* shuffle_rng) {
  std::vector<DatasetRecord> order = records;
  if (shuffle_rng) shuffle_rng->shuffle(order);
  PreparedTask out;
  out.s1 = make_batches(order, batch_size, table.vocab, false);
  if (task.kind == Schema::Pair) out.s2 = make_batches(order, batch_size, table.vocab, true);
  size_t i = 0;
  for (const auto& b : out.s1) {
    std::vector<int> ls;
    for (int j = 0; j < b.batch_size(); ++j) ls.push_back(order[i + static_cast<size_t>(j)].label);
    i += static_cast<size_t>(b.batch_size());
    out.labels.push_back(std::move(ls));
  }
  return out;
}

struct StepStats {
  double task_xent = 0.0;
  double adv = 0.0;
  double diff = 0.0;
};

StepStats train_step(MtlModel& model, int k, const SentenceBatch& s1, const SentenceBatch* s2,
                     const std::vector<int>& labels, const EmbeddingTable& table,
                     const TrainConfig& cfg, double lr) {
  StepStats stats;
  if (cfg.mode == AdvMode::Alternating && cfg.beta > 0.0) {
    // discriminator phase: maximize task identification, encoder frozen
    Tape tape;
    TaskForward fwd = forward_task(tape, model, k, s1, s2, table);
    Var l = adv_loss(tape, model, fwd.shared_enc, k, /*reversal=*/false);
    model.zero_grads();
    tape.backward(l);
    model.disc_w.value -= lr * cfg.beta * model.disc_w.grad;
    model.disc_b.value -= lr * cfg.beta * model.disc_b.grad;
  }

  if (cfg.mode == AdvMode::Reversal && cfg.beta > 0.0 && cfg.disc_extra_steps > 0) {
    // best-response refresh: the shared embeddings are treated as constants
    // so only (W, b) move
    std::vector<Mat> feats;
    feats.push_back(encode_values(s1, table, model.shared));
    if (s2) feats.push_back(encode_values(*s2, table, model.shared));
    for (int step = 0; step < cfg.disc_extra_steps; ++step) {
      Tape t;
      Var w = t.param(model.disc_w);
      Var b = t.param(model.disc_b);
      std::vector<Var> terms;
      for (const Mat& f : feats) {
        Var logits = add_col_broadcast(matmul(w, t.constant(f)), b);
        std::vector<int> task_labels(static_cast<size_t>(f.cols()), k);
        terms.push_back(softmax_xent_cols(logits, task_labels));
      }
      Var l = terms[0];
      for (size_t i = 1; i < terms.size(); ++i) l = add(l, terms[i]);
      model.zero_grads();
      t.backward(scale(l, 1.0 / static_cast<double>(terms.size())));
      model.disc_w.value -= lr * model.disc_w.grad;
      model.disc_b.value -= lr * model.disc_b.grad;
    }
  }

  Tape tape;
  TaskForward fwd = forward_task(tape, model, k, s1, s2, table);
  Var loss = softmax_xent_cols(fwd.logits, labels);
  stats.task_xent = loss.scalar();

  if (cfg.gamma > 0.0) {
    std::vector<Var> terms;
    for (size_t i = 0; i < fwd.shared_enc.size(); ++i)
      terms.push_back(diff_loss(fwd.shared_enc[i], fwd.private_enc[i]));
    Var d = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) d = add(d, terms[i]);
    d = scale(d, 1.0 / static_cast<double>(terms.size()));
    stats.diff = d.scalar();
    loss = add(loss, scale(d, cfg.gamma));
  }

  if (cfg.mode != AdvMode::Off && cfg.beta > 0.0) {
    // In alternating mode the discriminator was already stepped above and is
    // excluded from this update, so reversal only feeds the encoder. The
    // discriminator minimizes the unscaled loss; beta scales only the
    // reversed gradient pushing on the encoder.
    Var a = adv_loss(tape, model, fwd.shared_enc, k, /*reversal=*/true, cfg.beta);
    stats.adv = a.scalar();
    loss = add(loss, a);
  }

  model.zero_grads();
  tape.backward(loss);
  std::vector<Param*> updated = (cfg.mode == AdvMode::Alternating)
                                    ? model.encoder_and_clf_params()
                                    : model.all_params();
  for (Param* p : updated) p->value -= lr * p->grad;
  model.zero_grads();
  return stats;
}

std::vector<Mat> snapshot(MtlModel& model) {
  std::vector<Mat> out;
  for (Param* p : model.all_params()) out.push_back(p->value);
  return out;
}

void restore(MtlModel& model, const std::vector<Mat>& snap) {
  auto params = model.all_params();
  for (size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

}  // namespace

double task_accuracy(MtlModel& model, int k, const TaskSpec& task,
                     const std::vector<DatasetRecord>& records, const EmbeddingTable& table,
                     int batch_size) {
  PreparedTask prep = prepare(task, records, table, batch_size, nullptr);
  int correct = 0, total = 0;
  for (size_t i = 0; i < prep.s1.size(); ++i) {
    Tape tape;
    const SentenceBatch* s2 = prep.s2.empty() ? nullptr : &prep.s2[i];
    TaskForward fwd = forward_task(tape, model, k, prep.s1[i], s2, table);
    const Mat& logits = fwd.logits.value();
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      Eigen::Index arg;
      logits.col(j).maxCoeff(&arg);
      if (static_cast<int>(arg) == prep.labels[i][static_cast<size_t>(j)]) ++correct;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

TrainResult train(MtlModel& model, const std::vector<TaskSpec>& tasks,
                  const EmbeddingTable& table, const TrainConfig& config) {
  if (tasks.empty()) throw DataError("train: empty task list");
  for (const TaskSpec& t : tasks) {
    if (t.train.empty()) throw DataError("train: task '" + t.name + "' has no training data");
    if (t.dev.empty()) throw DataError("train: task '" + t.name + "' has no dev data");
  }
  int K = static_cast<int>(tasks.size());
  TrainResult result;
  LrSchedule sched(config.lr0, config.lr_decay, config.lr_divisor, config.stop_threshold);
  std::vector<Mat> best;
  Rng shuffle_rng(config.seed, "train-shuffle");
  Rng sample_rng(config.seed, "task-sampling");

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::vector<PreparedTask> prep;
    for (int k = 0; k < K; ++k)
      prep.push_back(prepare(tasks[static_cast<size_t>(k)], tasks[static_cast<size_t>(k)].train,
                             table, config.batch_size, &shuffle_rng));

    std::vector<size_t> next(static_cast<size_t>(K), 0);
    std::vector<size_t> remaining;
    size_t total_remaining = 0;
    for (int k = 0; k < K; ++k) {
      remaining.push_back(prep[static_cast<size_t>(k)].s1.size());
      total_remaining += remaining.back();
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = sched.lr();
    log.task_train_loss.assign(static_cast<size_t>(K), 0.0);
    std::vector<int> task_steps(static_cast<size_t>(K), 0);
    double adv_sum = 0.0, diff_sum = 0.0;
    int steps = 0;

    while (total_remaining > 0) {
      // next batch's task sampled proportionally to remaining batches
      uint64_t pick = sample_rng.uniform_int(total_remaining);
      int k = 0;
      for (; k < K; ++k) {
        if (pick < remaining[static_cast<size_t>(k)]) break;
        pick -= remaining[static_cast<size_t>(k)];
      }
      PreparedTask& pt = prep[static_cast<size_t>(k)];
      size_t bi = next[static_cast<size_t>(k)]++;
      --remaining[static_cast<size_t>(k)];
      --total_remaining;
      const SentenceBatch* s2 = pt.s2.empty() ? nullptr : &pt.s2[bi];
      StepStats st = train_step(model, k, pt.s1[bi], s2, pt.labels[bi], table, config, sched.lr());
      log.task_train_loss[static_cast<size_t>(k)] += st.task_xent;
      ++task_steps[static_cast<size_t>(k)];
      adv_sum += st.adv;
      diff_sum += st.diff;
      ++steps;
    }
    for (int k = 0; k < K; ++k)
      if (task_steps[static_cast<size_t>(k)] > 0)
        log.task_train_loss[static_cast<size_t>(k)] /= task_steps[static_cast<size_t>(k)];
    log.adv_loss_mean = steps ? adv_sum / steps : 0.0;
    log.diff_loss_mean = steps ? diff_sum / steps : 0.0;

    double acc_sum = 0.0;
    for (int k = 0; k < K; ++k) {
      double acc = task_accuracy(model, k, tasks[static_cast<size_t>(k)],
                                 tasks[static_cast<size_t>(k)].dev, table, config.batch_size);
      log.task_dev_acc.push_back(acc);
      acc_sum += acc;
    }
    log.mean_dev_acc = acc_sum / K;
    result.log.push_back(log);

    if (result.best_epoch < 0 || log.mean_dev_acc > result.best_mean_dev_acc) {
      result.best_epoch = epoch;
      result.best_mean_dev_acc = log.mean_dev_acc;
      best = snapshot(model);
    }
    if (!sched.epoch_end(log.mean_dev_acc)) break;
  }

  if (config.restore_best && !best.empty()) restore(model, best);
  return result;
}

void export_encoders(MtlModel& model, const std::vector<TaskSpec>& tasks,
                     const EmbeddingTable& table, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  json encoders = json::array();
  save_encoder(model.shared, (fs::path(out_dir) / "shared.json").string());
  encoders.push_back({{"role", "shared"}, {"file", "shared.json"}});
  for (size_t k = 0; k < model.priv.size(); ++k) {
    std::string file = "private_" + tasks[k].name + ".json";
    save_encoder(model.priv[k], (fs::path(out_dir) / file).string());
    encoders.push_back({{"role", "private:" + tasks[k].name}, {"file", file}});
  }
  save_word_vectors(table, (fs::path(out_dir) / "embeddings.vec").string());
  json manifest{{"format", "encoder-bundle"},
                {"version", 1},
                {"embedding_dim", model.e},
                {"hidden_dim", model.d},
                {"embeddings", "embeddings.vec"},
                {"encoders", encoders}};
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  if (!out) throw DataError("cannot write manifest in " + out_dir);
  out << manifest.dump(2) << '\n';
}

}  // namespace mtlsent
