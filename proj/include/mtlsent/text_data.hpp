#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtlsent/tensor.hpp"

namespace mtlsent {

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// PAD and UNK occupy fixed slots so embedding tables and batches agree.
inline constexpr int kPadIndex = 0;
inline constexpr int kUnkIndex = 1;

class Vocab {
 public:
  Vocab();

  int add(const std::string& token);            // returns existing index if present
  int lookup(const std::string& token) const;   // UNK for unseen tokens
  const std::string& token(int index) const { return tokens_.at(static_cast<size_t>(index)); }
  int size() const { return static_cast<int>(tokens_.size()); }

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> tokens_;
};

// Fixed (non-trainable) word vectors; row per vocab entry, PAD row all zeros.
struct EmbeddingTable {
  Vocab vocab;
  Mat vectors;  // |V| x e
  int dim() const { return static_cast<int>(vectors.cols()); }
};

enum class Schema { Single, Pair, PairScore };

struct DatasetRecord {
  std::vector<std::string> sentence1;
  std::vector<std::string> sentence2;  // empty for single-sentence tasks
  int label = -1;                      // class index, classification schemas
  double score = 0.0;                  // gold score, PairScore schema
};

struct SentenceBatch {
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> tokens;  // B x T
  Mat mask;                                                   // B x T, 1 = real token
  std::vector<int> lengths;
  int batch_size() const { return static_cast<int>(tokens.rows()); }
  int max_len() const { return static_cast<int>(tokens.cols()); }
};

struct WordVectorLoad {
  EmbeddingTable table;
  int skipped_lines = 0;
};

std::vector<std::string> tokenize(const std::string& line);

// Whitespace word-vector text format: token then `dim` reals per line.
// UNK row is the mean of all loaded vectors.
WordVectorLoad load_word_vectors(const std::string& path, int dim);

void save_word_vectors(const EmbeddingTable& table, const std::string& path);

// TSV; '#' first-character lines are comments. Columns per schema:
//   Single:    label \t sent1
//   Pair:      label \t sent1 \t sent2
//   PairScore: score \t sent1 \t sent2
std::vector<DatasetRecord> load_dataset(const std::string& path, Schema schema);
void save_dataset(const std::vector<DatasetRecord>& records, Schema schema,
                  const std::string& path);

// Pads each batch to its own max length; OOV tokens map to UNK; last batch
// may be short. Order is the given record order.
std::vector<SentenceBatch> make_batches(const std::vector<DatasetRecord>& records, int batch_size,
                                        const Vocab& vocab, bool second_sentence = false);

struct SynthTaskSpec {
  int num_classes = 2;
  int n = 1000;
  double shared_signal_weight = 1.0;
  double private_signal_weight = 1.0;
  int min_len = 6;
  int max_len = 12;
  int task_id = 0;        // selects the disjoint private-marker block
  int filler_tokens = 20;
};

// Token inventory shared by all generated tasks: per class c a generic
// marker "gen<c>", per (task, class) a private marker "pv<task>_<c>", plus
// filler tokens "f<i>". The label is recoverable from the marker tokens
// alone, so a Bayes-optimal labeler is exact.
std::vector<DatasetRecord> synth_task(uint64_t seed, const SynthTaskSpec& spec);

std::string generic_marker(int cls);
std::string private_marker(int task_id, int cls);

// Vocabulary + deterministic random embedding table covering every token the
// generator can emit (markers for tasks [0, num_tasks) and fillers).
EmbeddingTable synth_embedding_table(uint64_t seed, int num_tasks, int num_classes,
                                     int filler_tokens, int dim);

}  // namespace mtlsent
