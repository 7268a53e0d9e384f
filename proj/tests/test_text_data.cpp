#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "mtlsent/text_data.hpp"

using namespace mtlsent;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& content) {
    path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("tokenize lowercases and splits on whitespace") {
  auto toks = tokenize("The  Quick\tbrown FOX ");
  REQUIRE(toks.size() == 4);
  CHECK(toks[0] == "the");
  CHECK(toks[3] == "fox");
}

TEST_CASE("load_word_vectors: counts, UNK mean, pad zeros") {
  TempFile f("wv1.vec", "cat 1 2 3\ndog 3 4 5\n");
  auto loaded = load_word_vectors(f.path, 3);
  CHECK(loaded.table.vocab.size() == 4);  // PAD, UNK + 2
  CHECK(loaded.table.vectors.row(kPadIndex).isZero());
  // UNK is the mean of the loaded rows
  CHECK(loaded.table.vectors(kUnkIndex, 0) == 2.0);
  CHECK(loaded.table.vectors(kUnkIndex, 1) == 3.0);
  CHECK(loaded.table.vectors(kUnkIndex, 2) == 4.0);
  CHECK(loaded.table.vectors.allFinite());
  CHECK(loaded.table.vocab.lookup("cat") == 2);
  CHECK(loaded.table.vocab.lookup("unseen") == kUnkIndex);
}

TEST_CASE("load_word_vectors: wrong arity and empty file") {
  TempFile bad("wv2.vec", "cat 1 2\n");
  CHECK_THROWS_AS(load_word_vectors(bad.path, 3), DataError);
  TempFile empty("wv3.vec", "");
  CHECK_THROWS_AS(load_word_vectors(empty.path, 3), DataError);
  CHECK_THROWS_AS(load_word_vectors("/nonexistent/path.vec", 3), DataError);
}

TEST_CASE("word vector save/load round trip") {
  TempFile f("wv4.vec", "a 0.25 -1\nb 0.5 2\nc -0.125 3\n");
  auto loaded = load_word_vectors(f.path, 2);
  std::string out = (std::filesystem::temp_directory_path() / "wv4b.vec").string();
  save_word_vectors(loaded.table, out);
  auto reloaded = load_word_vectors(out, 2);
  CHECK(reloaded.table.vectors == loaded.table.vectors);
  std::remove(out.c_str());
}

TEST_CASE("load_dataset schemas") {
  TempFile pair("ds1.tsv", "# comment\n1\ta b\tc\n0\tx\ty z\n");
  auto recs = load_dataset(pair.path, Schema::Pair);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].label == 1);
  CHECK(recs[0].sentence1.size() == 2);
  CHECK(recs[0].sentence2.size() == 1);

  TempFile score("ds2.tsv", "3.5\tx\ty\n");
  auto srecs = load_dataset(score.path, Schema::PairScore);
  CHECK(srecs[0].score == 3.5);

  TempFile badcols("ds3.tsv", "1\tonlyone\n");
  CHECK_THROWS_AS(load_dataset(badcols.path, Schema::Pair), DataError);

  TempFile badscore("ds4.tsv", "abc\tx\ty\n");
  CHECK_THROWS_AS(load_dataset(badscore.path, Schema::PairScore), DataError);

  TempFile emptysent("ds5.tsv", "1\t \tx\n");
  CHECK_THROWS_AS(load_dataset(emptysent.path, Schema::Pair), DataError);
}

TEST_CASE("dataset TSV round trip") {
  TempFile f("ds6.tsv", "1\ta b\tc d e\n0\tq\tr\n2\tlonger sentence here\ts\n");
  auto recs = load_dataset(f.path, Schema::Pair);
  std::string out = (std::filesystem::temp_directory_path() / "ds6b.tsv").string();
  save_dataset(recs, Schema::Pair, out);
  auto reloaded = load_dataset(out, Schema::Pair);
  REQUIRE(reloaded.size() == recs.size());
  for (size_t i = 0; i < recs.size(); ++i) {
    CHECK(reloaded[i].label == recs[i].label);
    CHECK(reloaded[i].sentence1 == recs[i].sentence1);
    CHECK(reloaded[i].sentence2 == recs[i].sentence2);
  }
  std::remove(out.c_str());
}

TEST_CASE("make_batches: padding, masks, short last batch, UNK") {
  Vocab vocab;
  vocab.add("a");
  vocab.add("b");
  std::vector<DatasetRecord> recs;
  for (int i = 0; i < 10; ++i) {
    DatasetRecord r;
    r.label = 0;
    r.sentence1 = {"a", "b"};
    if (i == 0) r.sentence1 = {"a", "b", "a", "b", "a"};
    recs.push_back(r);
  }
  recs[1].sentence1 = {"zzz"};

  auto batches = make_batches(recs, 4, vocab);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].batch_size() == 4);
  CHECK(batches[2].batch_size() == 2);
  CHECK(batches[0].max_len() == 5);
  // row 0 fully valid, row 1 has one real token
  CHECK(batches[0].mask.row(0).sum() == 5.0);
  CHECK(batches[0].mask.row(1).sum() == 1.0);
  CHECK(batches[0].tokens(1, 0) == kUnkIndex);
  CHECK(batches[0].tokens(1, 1) == kPadIndex);
  CHECK(batches[1].max_len() == 2);

  // mask recovers original lengths
  for (const auto& b : batches)
    for (int i = 0; i < b.batch_size(); ++i)
      CHECK(b.mask.row(i).sum() == static_cast<double>(b.lengths[static_cast<size_t>(i)]));

  CHECK_THROWS_AS(make_batches({}, 4, vocab), DataError);
}

TEST_CASE("synth_task determinism and construction") {
  SynthTaskSpec spec;
  spec.num_classes = 3;
  spec.n = 200;
  spec.task_id = 0;
  auto a = synth_task(42, spec);
  auto b = synth_task(42, spec);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].label == b[i].label);
    CHECK(a[i].sentence1 == b[i].sentence1);
  }
  auto c = synth_task(43, spec);
  bool differs = false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].sentence1 != c[i].sentence1) differs = true;
  CHECK(differs);
}

TEST_CASE("synth_task: bayes rule on markers is near perfect") {
  SynthTaskSpec spec;
  spec.num_classes = 2;
  spec.n = 500;
  spec.private_signal_weight = 0.0;  // labels depend only on generic markers
  auto recs = synth_task(7, spec);
  int correct = 0;
  for (const auto& r : recs) {
    int pred = -1;
    for (const auto& tok : r.sentence1)
      for (int c = 0; c < 2; ++c)
        if (tok == generic_marker(c)) pred = c;
    if (pred == r.label) ++correct;
  }
  CHECK(static_cast<double>(correct) / recs.size() >= 0.95);
}

TEST_CASE("synth_task: disjoint private markers between tasks") {
  SynthTaskSpec s0, s1;
  s0.task_id = 0;
  s1.task_id = 1;
  s0.shared_signal_weight = s1.shared_signal_weight = 0.0;
  s0.n = s1.n = 100;
  auto a = synth_task(1, s0);
  auto b = synth_task(2, s1);
  std::set<std::string> ma, mb;
  for (const auto& r : a)
    for (const auto& t : r.sentence1)
      if (t.rfind("pv", 0) == 0) ma.insert(t);
  for (const auto& r : b)
    for (const auto& t : r.sentence1)
      if (t.rfind("pv", 0) == 0) mb.insert(t);
  CHECK(!ma.empty());
  CHECK(!mb.empty());
  for (const auto& t : ma) CHECK(mb.count(t) == 0);
}

TEST_CASE("synth_task rejects zero total signal") {
  SynthTaskSpec spec;
  spec.shared_signal_weight = 0.0;
  spec.private_signal_weight = 0.0;
  CHECK_THROWS_AS(synth_task(1, spec), DataError);
}

TEST_CASE("synth_embedding_table covers generator tokens and is deterministic") {
  auto t1 = synth_embedding_table(9, 2, 3, 20, 8);
  auto t2 = synth_embedding_table(9, 2, 3, 20, 8);
  CHECK(t1.vectors == t2.vectors);
  CHECK(t1.vocab.lookup(generic_marker(2)) != kUnkIndex);
  CHECK(t1.vocab.lookup(private_marker(1, 0)) != kUnkIndex);
  CHECK(t1.vocab.lookup("f19") != kUnkIndex);
  CHECK(t1.vectors.row(kPadIndex).isZero());
}
