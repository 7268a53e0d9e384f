#include "mtlsent/combiner.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

namespace mtlsent {

using nlohmann::json;

namespace {

constexpr char kEmbMagic[8] = {'M', 'T', 'L', 'E', 'M', 'B', '0', '1'};
constexpr char kCtxMagic[8] = {'M', 'T', 'L', 'C', 'T', 'X', '0', '1'};
constexpr uint32_t kVersion = 1;

std::string to_hex(const unsigned char* bytes, size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(2 * n);
  for (size_t i = 0; i < n; ++i) {
    out.push_back(digits[bytes[i] >> 4]);
    out.push_back(digits[bytes[i] & 0xf]);
  }
  return out;
}

void write_bytes(std::ofstream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, size_t n, const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw DataError("truncated embedding file: " + path);
}

void hex_to_bytes(const std::string& hex, unsigned char* out, const std::string& path) {
  if (hex.size() != 64) throw DataError("bad corpus id in " + path);
  for (size_t i = 0; i < 32; ++i)
    out[i] = static_cast<unsigned char>(std::stoi(hex.substr(2 * i, 2), nullptr, 16));
}

void write_header(std::ofstream& out, const char magic[8], const std::string& corpus_id,
                  uint64_t n, uint32_t dim, const std::string& provenance,
                  const std::string& path) {
  write_bytes(out, magic, 8);
  write_bytes(out, &kVersion, 4);
  unsigned char hash[32];
  hex_to_bytes(corpus_id, hash, path);
  write_bytes(out, hash, 32);
  write_bytes(out, &n, 8);
  write_bytes(out, &dim, 4);
  uint32_t plen = static_cast<uint32_t>(provenance.size());
  write_bytes(out, &plen, 4);
  write_bytes(out, provenance.data(), plen);
}

struct Header {
  std::string corpus_id;
  uint64_t n = 0;
  uint32_t dim = 0;
  std::string provenance;
};

Header read_header(std::ifstream& in, const char magic[8], const std::string& path) {
  char m[8];
  read_bytes(in, m, 8, path);
  if (std::memcmp(m, magic, 8) != 0) throw DataError("bad magic in " + path);
  uint32_t version;
  read_bytes(in, &version, 4, path);
  if (version != kVersion) throw DataError("unsupported version in " + path);
  Header h;
  unsigned char hash[32];
  read_bytes(in, hash, 32, path);
  h.corpus_id = to_hex(hash, 32);
  read_bytes(in, &h.n, 8, path);
  read_bytes(in, &h.dim, 4, path);
  uint32_t plen;
  read_bytes(in, &plen, 4, path);
  h.provenance.resize(plen);
  if (plen) read_bytes(in, h.provenance.data(), plen, path);
  return h;
}

}  // namespace

std::string corpus_hash(const std::vector<std::string>& sentences) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const std::string& s : sentences) {
    EVP_DigestUpdate(ctx, s.data(), s.size());
    EVP_DigestUpdate(ctx, "\n", 1);
  }
  unsigned char digest[32];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  return to_hex(digest, len);
}

void save_embedding_set(const EmbeddingSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embedding cache: " + path);
  write_header(out, kEmbMagic, set.corpus_id, static_cast<uint64_t>(set.n()),
               static_cast<uint32_t>(set.dim()), set.provenance, path);
  for (Eigen::Index i = 0; i < set.n(); ++i)
    for (Eigen::Index j = 0; j < set.dim(); ++j) {
      double v = set.matrix(i, j);
      write_bytes(out, &v, 8);
    }

  json sidecar{{"corpus_id", set.corpus_id},
               {"n", set.n()},
               {"dim", set.dim()},
               {"provenance", set.provenance}};
  std::ofstream js(path + ".json");
  js << sidecar.dump(2) << '\n';
}

EmbeddingSet load_embedding_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding cache: " + path);
  Header h = read_header(in, kEmbMagic, path);
  EmbeddingSet set;
  set.corpus_id = h.corpus_id;
  set.provenance = h.provenance;
  set.matrix = Mat(static_cast<Eigen::Index>(h.n), static_cast<Eigen::Index>(h.dim));
  for (uint64_t i = 0; i < h.n; ++i)
    for (uint32_t j = 0; j < h.dim; ++j) {
      double v;
      read_bytes(in, &v, 8, path);
      if (!std::isfinite(v))
        throw DataError("non-finite entry at row " + std::to_string(i) + " in " + path);
      set.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  char extra;
  if (in.read(&extra, 1)) throw DataError("row-count mismatch (trailing data) in " + path);
  return set;
}

void save_contextual(const ContextualVectors& cv, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write contextual-vector file: " + path);
  uint32_t dim = cv.sentences.empty() ? 0 : static_cast<uint32_t>(cv.sentences[0].cols());
  write_header(out, kCtxMagic, cv.corpus_id, cv.sentences.size(), dim, "contextual", path);
  for (const Mat& s : cv.sentences) {
    uint32_t t = static_cast<uint32_t>(s.rows());
    write_bytes(out, &t, 4);
    for (Eigen::Index i = 0; i < s.rows(); ++i)
      for (Eigen::Index j = 0; j < s.cols(); ++j) {
        double v = s(i, j);
        write_bytes(out, &v, 8);
      }
  }
}

ContextualVectors load_contextual(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open contextual-vector file: " + path);
  Header h = read_header(in, kCtxMagic, path);
  ContextualVectors cv;
  cv.corpus_id = h.corpus_id;
  for (uint64_t i = 0; i < h.n; ++i) {
    uint32_t t;
    read_bytes(in, &t, 4, path);
    if (t < 1) throw DataError("empty sentence " + std::to_string(i) + " in " + path);
    Mat s(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(h.dim));
    for (Eigen::Index r = 0; r < s.rows(); ++r)
      for (Eigen::Index c = 0; c < s.cols(); ++c) {
        double v;
        read_bytes(in, &v, 8, path);
        if (!std::isfinite(v))
          throw DataError("non-finite entry in sentence " + std::to_string(i) + " in " + path);
        s(r, c) = v;
      }
    cv.sentences.push_back(std::move(s));
  }
  return cv;
}

EmbeddingSet pool_contextual(const ContextualVectors& cv, ContextualPool pool) {
  EmbeddingSet set;
  set.corpus_id = cv.corpus_id;
  set.provenance = pool == ContextualPool::Average ? "contextual:avg" : "contextual:max";
  if (cv.sentences.empty()) throw DataError("pool_contextual: empty corpus");
  Eigen::Index dim = cv.sentences[0].cols();
  set.matrix = Mat(static_cast<Eigen::Index>(cv.sentences.size()), dim);
  for (size_t i = 0; i < cv.sentences.size(); ++i) {
    const Mat& s = cv.sentences[i];
    if (s.rows() < 1) throw DataError("pool_contextual: empty sentence " + std::to_string(i));
    if (pool == ContextualPool::Average)
      set.matrix.row(static_cast<Eigen::Index>(i)) = s.colwise().mean();
    else
      set.matrix.row(static_cast<Eigen::Index>(i)) = s.colwise().maxCoeff();
  }
  return set;
}

EncoderBundle load_bundle(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest: " + manifest_path);
  json j = json::parse(in);
  if (j.at("format") != "encoder-bundle") throw DataError("not a bundle manifest: " + manifest_path);
  fs::path dir = fs::path(manifest_path).parent_path();

  EncoderBundle bundle;
  int e = j.at("embedding_dim").get<int>();
  bundle.table =
      load_word_vectors((dir / j.at("embeddings").get<std::string>()).string(), e).table;
  bool have_shared = false;
  for (const auto& enc : j.at("encoders")) {
    std::string role = enc.at("role").get<std::string>();
    EncoderParams p = load_encoder((dir / enc.at("file").get<std::string>()).string());
    if (role == "shared") {
      bundle.shared = std::move(p);
      have_shared = true;
    } else if (role.rfind("private:", 0) == 0) {
      bundle.privates.emplace_back(role.substr(8), std::move(p));
    } else {
      throw DataError("unknown encoder role '" + role + "' in " + manifest_path);
    }
  }
  if (!have_shared) throw DataError("manifest lists no shared encoder: " + manifest_path);
  return bundle;
}

EmbeddingSet embed_corpus(EncoderBundle& bundle, const std::vector<std::string>& sentences,
                          const std::string& mode, int batch_size) {
  if (sentences.empty()) throw DataError("embed_corpus: empty corpus");
  std::vector<EncoderParams*> encoders;
  std::string provenance;
  if (mode == "shared") {
    encoders.push_back(&bundle.shared);
    provenance = "mtl:shared";
  } else if (mode == "concat_all") {
    encoders.push_back(&bundle.shared);
    for (auto& [name, p] : bundle.privates) encoders.push_back(&p);
    provenance = "mtl:concat_all";
  } else if (mode.rfind("private:", 0) == 0) {
    std::string want = mode.substr(8);
    for (auto& [name, p] : bundle.privates)
      if (name == want) encoders.push_back(&p);
    if (encoders.empty()) throw DataError("embed_corpus: unknown private task '" + want + "'");
    provenance = "mtl:" + mode;
  } else {
    throw DataError("embed_corpus: unknown mode '" + mode + "'");
  }

  std::vector<DatasetRecord> records;
  for (const std::string& s : sentences) {
    DatasetRecord r;
    r.sentence1 = tokenize(s);
    if (r.sentence1.empty()) throw DataError("embed_corpus: empty sentence");
    r.label = 0;
    records.push_back(std::move(r));
  }
  auto batches = make_batches(records, batch_size, bundle.table.vocab);

  EmbeddingSet set;
  set.corpus_id = corpus_hash(sentences);
  set.provenance = provenance;
  Eigen::Index dim = 0;
  for (EncoderParams* p : encoders) dim += 2 * p->d;
  set.matrix = Mat(static_cast<Eigen::Index>(sentences.size()), dim);
  Eigen::Index row = 0;
  for (const SentenceBatch& batch : batches) {
    Eigen::Index col0 = 0;
    for (EncoderParams* p : encoders) {
      Mat emb = encode_values(batch, bundle.table, *p);  // 2d x B
      set.matrix.block(row, col0, batch.batch_size(), emb.rows()) = emb.transpose();
      col0 += emb.rows();
    }
    row += batch.batch_size();
  }
  return set;
}

EmbeddingSet combine(const std::vector<EmbeddingSet>& sets, bool l2_normalize) {
  if (sets.empty()) throw DataError("combine: empty set list");
  for (size_t i = 1; i < sets.size(); ++i) {
    if (sets[i].corpus_id != sets[0].corpus_id)
      throw DataError("combine: corpus-id mismatch between set 0 and set " + std::to_string(i));
    if (sets[i].n() != sets[0].n())
      throw DataError("combine: row-count mismatch between set 0 and set " + std::to_string(i));
  }
  EmbeddingSet out;
  out.corpus_id = sets[0].corpus_id;
  Eigen::Index dim = 0;
  for (const auto& s : sets) dim += s.dim();
  out.matrix = Mat(sets[0].n(), dim);
  Eigen::Index col = 0;
  for (size_t i = 0; i < sets.size(); ++i) {
    Mat block = sets[i].matrix;
    if (l2_normalize) {
      for (Eigen::Index r = 0; r < block.rows(); ++r) {
        double norm = block.row(r).norm();
        if (norm > 0) block.row(r) /= norm;
      }
    }
    out.matrix.middleCols(col, block.cols()) = block;
    col += block.cols();
    if (i) out.provenance += "+";
    out.provenance += sets[i].provenance;
  }
  return out;
}

}  // namespace mtlsent
