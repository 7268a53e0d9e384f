#pragma once

#include <string>
#include <vector>

#include "mtlsent/encoder.hpp"
#include "mtlsent/tensor.hpp"

namespace mtlsent {

// Persistent matrix of fixed-size sentence vectors aligned to a corpus. The
// corpus id is an order-sensitive hash of the raw sentence lines; matching
// ids are required before any concatenation, so silent row misalignment
// cannot happen.
struct EmbeddingSet {
  std::string corpus_id;  // 64 hex chars (SHA-256)
  Mat matrix;             // n x dim
  std::string provenance;

  Eigen::Index n() const { return matrix.rows(); }
  Eigen::Index dim() const { return matrix.cols(); }
};

// Per-sentence matrices of precomputed contextualized word vectors.
struct ContextualVectors {
  std::string corpus_id;
  std::vector<Mat> sentences;  // T_i x d_w each
};

std::string corpus_hash(const std::vector<std::string>& sentences);

// Binary cache: magic, version, corpus hash, n, dim, provenance, row-major
// little-endian doubles. A .json sidecar mirrors the header for debugging.
void save_embedding_set(const EmbeddingSet& set, const std::string& path);
EmbeddingSet load_embedding_set(const std::string& path);

void save_contextual(const ContextualVectors& cv, const std::string& path);
ContextualVectors load_contextual(const std::string& path);

// Mean over timesteps (the paper's choice); max pooling available for the
// ablation.
enum class ContextualPool { Average, Max };
EmbeddingSet pool_contextual(const ContextualVectors& cv,
                             ContextualPool pool = ContextualPool::Average);

struct EncoderBundle {
  EmbeddingTable table;
  EncoderParams shared;
  std::vector<std::pair<std::string, EncoderParams>> privates;  // task name -> params
};

EncoderBundle load_bundle(const std::string& manifest_path);

// mode: "shared", "private:<task>", or "concat_all" (shared first, then
// privates in manifest order).
EmbeddingSet embed_corpus(EncoderBundle& bundle, const std::vector<std::string>& sentences,
                          const std::string& mode, int batch_size = 64);

// Row-wise concatenation of aligned sets; provenance tags joined with '+'.
// Optional L2 normalization of each component before concatenation.
EmbeddingSet combine(const std::vector<EmbeddingSet>& sets, bool l2_normalize = false);

}  // namespace mtlsent
