#pragma once

#include <string>
#include <vector>

#include "mtlsent/encoder.hpp"
#include "mtlsent/text_data.hpp"

namespace mtlsent {

struct TaskSpec {
  std::string name;
  Schema kind = Schema::Single;  // Single or Pair
  int num_classes = 2;
  std::vector<DatasetRecord> train, dev, test;
};

// One-hidden-layer tanh MLP; hidden == 0 degenerates to a linear softmax map.
struct MlpParams {
  Param w1, b1;  // hidden x in, hidden x 1
  Param w2, b2;  // out x hidden (or out x in), out x 1
  int hidden = 0;

  static MlpParams init(int in, int hidden, int out, Rng& rng);
  std::vector<Param*> params();
};

Var mlp_forward(Tape& tape, MlpParams& p, Var x);

enum class AdvMode { Off, Reversal, Alternating };

struct MtlModel {
  int d = 0, e = 0, K = 0;
  int mlp_hidden = 512;
  EncoderParams shared;
  std::vector<EncoderParams> priv;  // one per task
  std::vector<MlpParams> clf;       // one per task
  Param disc_w;                     // K x 2d
  Param disc_b;                     // K x 1

  static MtlModel init(const std::vector<TaskSpec>& tasks, int d, int e, int mlp_hidden,
                       Rng& rng);
  std::vector<Param*> all_params();
  std::vector<Param*> encoder_and_clf_params();
  void zero_grads();
};

struct TaskForward {
  Var logits;
  std::vector<EncodeResult> shared_enc;   // one per input sentence slot
  std::vector<EncodeResult> private_enc;
};

// Shared + private encodings, concatenated; pair tasks additionally go
// through pair_features before the task classifier.
TaskForward forward_task(Tape& tape, MtlModel& model, int k, const SentenceBatch& s1,
                         const SentenceBatch* s2, const EmbeddingTable& table);

// Discriminator over shared embeddings only: softmax(W s + b).
Var discriminator_forward(Tape& tape, MtlModel& model, Var s_shared);

// Cross-entropy of the discriminator against the task identity. With
// reversal the gradient into (W, b) is untouched while the gradient entering
// the shared encoder is sign-flipped and scaled by reversal_scale, so the
// discriminator trains at full strength while beta weights only the
// adversarial pressure on the encoder.
Var adv_loss(Tape& tape, MtlModel& model, const std::vector<EncodeResult>& shared_enc, int task_id,
             bool reversal, double reversal_scale = 1.0);

// Orthogonality penalty between shared and private hidden states, averaged
// over sentences in the batch.
Var diff_loss(const EncodeResult& shared_enc, const EncodeResult& private_enc);

struct TrainConfig {
  double beta = 0.0;
  double gamma = 0.0;
  double lr0 = 0.1;
  double lr_divisor = 5.0;
  double lr_decay = 0.99;
  double stop_threshold = 1e-5;
  int batch_size = 128;
  AdvMode mode = AdvMode::Off;
  uint64_t seed = 0;
  int max_epochs = 50;
  // Reversal mode: extra discriminator-only updates per step on frozen
  // shared embeddings, keeping the adversary close to its best response.
  int disc_extra_steps = 0;
  // Restore the best-mean-dev-accuracy snapshot after training. Analysis
  // runs that probe the final adversarial state can turn this off.
  bool restore_best = true;
};

// Learning-rate policy: decay each epoch, divide on a dev-accuracy drop,
// stop below the threshold. Never increases.
class LrSchedule {
 public:
  LrSchedule(double lr0, double decay, double divisor, double threshold)
      : lr_(lr0), decay_(decay), divisor_(divisor), threshold_(threshold) {}

  double lr() const { return lr_; }

  // Returns true while training should continue.
  bool epoch_end(double mean_dev_acc) {
    if (has_prev_ && mean_dev_acc < prev_acc_)
      lr_ /= divisor_;
    else
      lr_ *= decay_;
    prev_acc_ = mean_dev_acc;
    has_prev_ = true;
    return lr_ >= threshold_;
  }

 private:
  double lr_, decay_, divisor_, threshold_;
  double prev_acc_ = 0.0;
  bool has_prev_ = false;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  std::vector<double> task_train_loss;
  std::vector<double> task_dev_acc;
  double mean_dev_acc = 0.0;
  double adv_loss_mean = 0.0;
  double diff_loss_mean = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_mean_dev_acc = 0.0;
};

TrainResult train(MtlModel& model, const std::vector<TaskSpec>& tasks,
                  const EmbeddingTable& table, const TrainConfig& config);

double task_accuracy(MtlModel& model, int k, const TaskSpec& task,
                     const std::vector<DatasetRecord>& records, const EmbeddingTable& table,
                     int batch_size);

// One checkpoint per encoder plus a manifest naming roles and the embedding
// table file, all under out_dir.
void export_encoders(MtlModel& model, const std::vector<TaskSpec>& tasks,
                     const EmbeddingTable& table, const std::string& out_dir);

}  // namespace mtlsent
