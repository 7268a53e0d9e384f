#include "mtlsent/text_data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mtlsent/rng.hpp"

namespace mtlsent {

Vocab::Vocab() {
  add("<pad>");
  add("<unk>");
}

int Vocab::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int Vocab::lookup(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkIndex : it->second;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

WordVectorLoad load_word_vectors(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word-vector file: " + path);

  std::vector<std::string> tokens;
  std::vector<std::vector<double>> rows;
  int skipped = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      ++skipped;
      continue;
    }
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) {
      ++skipped;
      continue;
    }
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (!ls.eof()) {
      ++skipped;  // trailing garbage that is not a number
      continue;
    }
    if (static_cast<int>(vals.size()) != dim)
      throw DataError("word-vector dimension mismatch for token '" + tok + "': expected " +
                      std::to_string(dim) + ", got " + std::to_string(vals.size()));
    for (double x : vals)
      if (!std::isfinite(x)) throw DataError("non-finite word vector entry for token '" + tok + "'");
    tokens.push_back(tok);
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw DataError("no valid word-vector lines in " + path);

  WordVectorLoad out;
  out.skipped_lines = skipped;
  for (const auto& t : tokens) out.table.vocab.add(t);
  out.table.vectors = Mat::Zero(out.table.vocab.size(), dim);
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(dim);
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < dim; ++j) out.table.vectors(static_cast<Eigen::Index>(i) + 2, j) = rows[i][j];
    mean += out.table.vectors.row(static_cast<Eigen::Index>(i) + 2);
  }
  out.table.vectors.row(kUnkIndex) = mean / static_cast<double>(rows.size());
  return out;
}

void save_word_vectors(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write word-vector file: " + path);
  out << std::setprecision(17);
  for (int i = 2; i < table.vocab.size(); ++i) {
    out << table.vocab.token(i);
    for (int j = 0; j < table.dim(); ++j) out << ' ' << table.vectors(i, j);
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  size_t start = 0;
  while (true) {
    size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cols;
}

int expected_cols(Schema s) { return s == Schema::Single ? 2 : 3; }

}  // namespace

std::vector<DatasetRecord> load_dataset(const std::string& path, Schema schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::vector<DatasetRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto cols = split_tabs(line);
    if (static_cast<int>(cols.size()) != expected_cols(schema))
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(expected_cols(schema)) + " columns, got " +
                      std::to_string(cols.size()));
    DatasetRecord rec;
    try {
      if (schema == Schema::PairScore) {
        size_t used = 0;
        rec.score = std::stod(cols[0], &used);
        if (used != cols[0].size()) throw std::invalid_argument(cols[0]);
      } else {
        size_t used = 0;
        rec.label = std::stoi(cols[0], &used);
        if (used != cols[0].size()) throw std::invalid_argument(cols[0]);
      }
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad label/score '" + cols[0] + "'");
    }
    rec.sentence1 = tokenize(cols[1]);
    if (rec.sentence1.empty())
      throw DataError(path + ":" + std::to_string(lineno) + ": empty sentence");
    if (schema != Schema::Single) {
      rec.sentence2 = tokenize(cols[2]);
      if (rec.sentence2.empty())
        throw DataError(path + ":" + std::to_string(lineno) + ": empty sentence");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_dataset(const std::vector<DatasetRecord>& records, Schema schema,
                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file: " + path);
  out << std::setprecision(17);
  auto join = [](const std::vector<std::string>& toks) {
    std::string s;
    for (size_t i = 0; i < toks.size(); ++i) {
      if (i) s += ' ';
      s += toks[i];
    }
    return s;
  };
  for (const auto& rec : records) {
    if (schema == Schema::PairScore)
      out << rec.score;
    else
      out << rec.label;
    out << '\t' << join(rec.sentence1);
    if (schema != Schema::Single) out << '\t' << join(rec.sentence2);
    out << '\n';
  }
}

std::vector<SentenceBatch> make_batches(const std::vector<DatasetRecord>& records, int batch_size,
                                        const Vocab& vocab, bool second_sentence) {
  if (records.empty()) throw DataError("make_batches: empty record list");
  if (batch_size < 1) throw DataError("make_batches: batch_size must be >= 1");
  std::vector<SentenceBatch> batches;
  for (size_t start = 0; start < records.size(); start += static_cast<size_t>(batch_size)) {
    size_t end = std::min(records.size(), start + static_cast<size_t>(batch_size));
    int b = static_cast<int>(end - start);
    int maxlen = 1;
    for (size_t i = start; i < end; ++i) {
      const auto& s = second_sentence ? records[i].sentence2 : records[i].sentence1;
      maxlen = std::max(maxlen, static_cast<int>(s.size()));
    }
    SentenceBatch batch;
    batch.tokens.setConstant(b, maxlen, kPadIndex);
    batch.mask = Mat::Zero(b, maxlen);
    for (size_t i = start; i < end; ++i) {
      const auto& s = second_sentence ? records[i].sentence2 : records[i].sentence1;
      int row = static_cast<int>(i - start);
      batch.lengths.push_back(static_cast<int>(s.size()));
      for (size_t t = 0; t < s.size(); ++t) {
        batch.tokens(row, static_cast<int>(t)) = vocab.lookup(s[t]);
        batch.mask(row, static_cast<int>(t)) = 1.0;
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::string generic_marker(int cls) { return "gen" + std::to_string(cls); }

std::string private_marker(int task_id, int cls) {
  return "pv" + std::to_string(task_id) + "_" + std::to_string(cls);
}

std::vector<DatasetRecord> synth_task(uint64_t seed, const SynthTaskSpec& spec) {
  if (spec.shared_signal_weight < 0 || spec.private_signal_weight < 0)
    throw DataError("synth_task: signal weights must be >= 0");
  double total = spec.shared_signal_weight + spec.private_signal_weight;
  if (total <= 0) throw DataError("synth_task: zero total signal weight");
  if (spec.n < 1) throw DataError("synth_task: n must be >= 1");

  Rng rng(seed, "synth-task");
  double p_shared = spec.shared_signal_weight / total;
  // A marker token lands at roughly every third position; the rest is filler.
  std::vector<DatasetRecord> records;
  records.reserve(static_cast<size_t>(spec.n));
  for (int i = 0; i < spec.n; ++i) {
    int cls = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.num_classes)));
    int len = spec.min_len + static_cast<int>(rng.uniform_int(
                  static_cast<uint64_t>(spec.max_len - spec.min_len + 1)));
    DatasetRecord rec;
    rec.label = cls;
    bool marker_placed = false;
    for (int t = 0; t < len; ++t) {
      bool is_marker = rng.uniform() < (1.0 / 3.0);
      if (t == len - 1 && !marker_placed) is_marker = true;
      if (is_marker) {
        marker_placed = true;
        if (rng.uniform() < p_shared)
          rec.sentence1.push_back(generic_marker(cls));
        else
          rec.sentence1.push_back(private_marker(spec.task_id, cls));
      } else {
        rec.sentence1.push_back(
            "f" + std::to_string(rng.uniform_int(static_cast<uint64_t>(spec.filler_tokens))));
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

EmbeddingTable synth_embedding_table(uint64_t seed, int num_tasks, int num_classes,
                                     int filler_tokens, int dim) {
  EmbeddingTable table;
  for (int c = 0; c < num_classes; ++c) table.vocab.add(generic_marker(c));
  for (int k = 0; k < num_tasks; ++k)
    for (int c = 0; c < num_classes; ++c) table.vocab.add(private_marker(k, c));
  for (int f = 0; f < filler_tokens; ++f) table.vocab.add("f" + std::to_string(f));

  Rng rng(seed, "synth-embeddings");
  table.vectors = Mat::Zero(table.vocab.size(), dim);
  for (int i = 2; i < table.vocab.size(); ++i)
    for (int j = 0; j < dim; ++j) table.vectors(i, j) = rng.uniform(-1, 1);
  table.vectors.row(kUnkIndex) =
      table.vectors.bottomRows(table.vocab.size() - 2).colwise().mean();
  return table;
}

}  // namespace mtlsent
