#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include "mtlsent/combiner.hpp"
#include "mtlsent/rng.hpp"

using namespace mtlsent;

namespace {

EmbeddingSet random_set(const std::string& corpus_id, int n, int dim, uint64_t seed,
                        const std::string& provenance) {
  EmbeddingSet s;
  s.corpus_id = corpus_id;
  s.provenance = provenance;
  Rng rng(seed, "set");
  s.matrix = Mat(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) s.matrix(i, j) = rng.uniform(-1, 1);
  return s;
}

std::string tmp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("corpus_hash: order-sensitive, deterministic, 64 hex chars") {
  auto h1 = corpus_hash({"a", "b"});
  auto h2 = corpus_hash({"a", "b"});
  auto h3 = corpus_hash({"b", "a"});
  CHECK(h1 == h2);
  CHECK(h1 != h3);
  CHECK(h1.size() == 64);
}

TEST_CASE("avg pool: mean of one, symmetry, oracle, permutation invariance") {
  ContextualVectors cv;
  cv.corpus_id = corpus_hash({"s1", "s2", "s3"});
  Mat one(1, 2);
  one << 3, -1;
  Mat two(2, 2);
  two << 1, 3, 3, 1;
  Mat three(3, 2);
  three << 0, 0, 6, 0, 0, 6;
  cv.sentences = {one, two, three};

  EmbeddingSet pooled = pool_contextual(cv);
  CHECK(pooled.provenance == "contextual:avg");
  CHECK(pooled.matrix.row(0) == one.row(0));
  CHECK(pooled.matrix(1, 0) == 2.0);
  CHECK(pooled.matrix(1, 1) == 2.0);
  CHECK(pooled.matrix(2, 0) == 2.0);
  CHECK(pooled.matrix(2, 1) == 2.0);

  // timestep permutation does not change the mean
  Mat permuted(3, 2);
  permuted << 6, 0, 0, 6, 0, 0;
  ContextualVectors cv2 = cv;
  cv2.sentences[2] = permuted;
  CHECK(pool_contextual(cv2).matrix.row(2) == pooled.matrix.row(2));

  // max pooling behind the flag
  EmbeddingSet mx = pool_contextual(cv, ContextualPool::Max);
  CHECK(mx.matrix(1, 0) == 3.0);
  CHECK(mx.provenance == "contextual:max");
}

TEST_CASE("embedding cache round trip is bit exact; sidecar written") {
  auto set = random_set(corpus_hash({"x", "y", "z"}), 3, 5, 1, "external:gensen");
  std::string path = tmp("emb_cache.bin");
  save_embedding_set(set, path);
  EmbeddingSet loaded = load_embedding_set(path);
  CHECK(loaded.corpus_id == set.corpus_id);
  CHECK(loaded.provenance == set.provenance);
  CHECK(loaded.matrix == set.matrix);
  CHECK(std::filesystem::exists(path + ".json"));
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
}

TEST_CASE("embedding cache: corruption detected") {
  auto set = random_set(corpus_hash({"x"}), 2, 3, 2, "external:e");
  std::string path = tmp("emb_corrupt.bin");
  save_embedding_set(set, path);

  // truncate: row count mismatch
  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 8);
  CHECK_THROWS_AS(load_embedding_set(path), DataError);

  // bad magic
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTMAGIC garbage";
  }
  CHECK_THROWS_AS(load_embedding_set(path), DataError);

  // NaN entry rejected with row index
  set.matrix(1, 1) = std::numeric_limits<double>::quiet_NaN();
  save_embedding_set(set, path);
  CHECK_THROWS_WITH_AS(load_embedding_set(path), doctest::Contains("row 1"), DataError);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
}

TEST_CASE("contextual file round trip") {
  ContextualVectors cv;
  cv.corpus_id = corpus_hash({"a b", "c"});
  Rng rng(3, "ctx");
  Mat s1(2, 4), s2(5, 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) s1(i, j) = rng.uniform(-1, 1);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) s2(i, j) = rng.uniform(-1, 1);
  cv.sentences = {s1, s2};
  std::string path = tmp("ctx_cache.bin");
  save_contextual(cv, path);
  ContextualVectors loaded = load_contextual(path);
  CHECK(loaded.corpus_id == cv.corpus_id);
  REQUIRE(loaded.sentences.size() == 2);
  CHECK(loaded.sentences[0] == s1);
  CHECK(loaded.sentences[1] == s2);
  std::filesystem::remove(path);
}

TEST_CASE("combine: additivity, identity, segment extraction, associativity") {
  std::string cid = corpus_hash({"p", "q"});
  auto a = random_set(cid, 2, 3, 4, "mtl:shared");
  auto b = random_set(cid, 2, 4, 5, "external:gensen");
  auto c = random_set(cid, 2, 2, 6, "contextual:avg");

  EmbeddingSet abc = combine({a, b, c});
  CHECK(abc.dim() == 9);
  CHECK(abc.provenance == "mtl:shared+external:gensen+contextual:avg");
  CHECK(abc.matrix.middleCols(0, 3) == a.matrix);
  CHECK(abc.matrix.middleCols(3, 4) == b.matrix);
  CHECK(abc.matrix.middleCols(7, 2) == c.matrix);

  EmbeddingSet single = combine({a});
  CHECK(single.matrix == a.matrix);

  EmbeddingSet bc = combine({b, c});
  EmbeddingSet nested = combine({a, bc});
  CHECK(nested.matrix == abc.matrix);

  auto other = random_set(corpus_hash({"different"}), 2, 3, 7, "x");
  CHECK_THROWS_AS(combine({a, other}), DataError);
  CHECK_THROWS_AS(combine({}), DataError);
}

TEST_CASE("combine with l2 normalization") {
  std::string cid = corpus_hash({"p"});
  EmbeddingSet a;
  a.corpus_id = cid;
  a.provenance = "x";
  a.matrix = Mat(1, 2);
  a.matrix << 3, 4;
  EmbeddingSet out = combine({a}, true);
  CHECK(out.matrix(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(out.matrix(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
}
