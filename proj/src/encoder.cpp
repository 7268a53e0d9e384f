#include "mtlsent/encoder.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

namespace mtlsent {

using nlohmann::json;

LstmParams LstmParams::init(int d, int e, Rng& rng) {
  LstmParams p;
  p.d = d;
  p.e = e;
  double bound = 1.0 / std::sqrt(static_cast<double>(d));
  auto uniform_mat = [&](int r, int c) {
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
  };
  p.w_input = Param(uniform_mat(4 * d, e));
  p.w_hidden = Param(uniform_mat(4 * d, d));
  Mat b = Mat::Zero(4 * d, 1);
  b.middleRows(d, d).setConstant(1.0);  // forget-gate bias
  p.bias = Param(std::move(b));
  return p;
}

EncoderParams EncoderParams::init(int d, int e, Rng& rng) {
  EncoderParams p;
  p.d = d;
  p.e = e;
  p.fwd = LstmParams::init(d, e, rng);
  p.bwd = LstmParams::init(d, e, rng);
  return p;
}

std::vector<Param*> EncoderParams::params() {
  std::vector<Param*> out = fwd.params();
  for (Param* p : bwd.params()) out.push_back(p);
  return out;
}

BoundLstm bind(Tape& tape, LstmParams& p) {
  return BoundLstm{tape.param(p.w_input), tape.param(p.w_hidden), tape.param(p.bias), p.d};
}

std::pair<Var, Var> lstm_step(Tape& tape, Var x, Var h_prev, Var c_prev, const BoundLstm& p) {
  Var z = add_col_broadcast(add(matmul(p.w_input, x), matmul(p.w_hidden, h_prev)), p.bias);
  int d = p.d;
  Var i = sigmoid(slice_rows(z, 0, d));
  Var f = sigmoid(slice_rows(z, d, d));
  Var g = tanh(slice_rows(z, 2 * d, d));
  Var o = sigmoid(slice_rows(z, 3 * d, d));
  Var c = add(mul(f, c_prev), mul(i, g));
  Var h = mul(o, tanh(c));
  return {h, c};
}

namespace {

// One direction over the padded batch. At masked positions the state is
// carried unchanged, so the backward pass effectively starts at each
// sentence's true last token and padding cannot affect any embedding.
std::vector<Var> run_direction(Tape& tape, const SentenceBatch& batch,
                               const EmbeddingTable& table, LstmParams& params, bool reverse) {
  int B = batch.batch_size();
  int T = batch.max_len();
  int d = params.d;
  int e = params.e;
  BoundLstm bound = bind(tape, params);

  Var h = tape.constant(Mat::Zero(d, B));
  Var c = tape.constant(Mat::Zero(d, B));
  std::vector<Var> out(static_cast<size_t>(T));
  for (int step = 0; step < T; ++step) {
    int t = reverse ? T - 1 - step : step;
    Mat x(e, B);
    for (int b = 0; b < B; ++b) x.col(b) = table.vectors.row(batch.tokens(b, t)).transpose();
    Var xt = tape.constant(std::move(x));
    auto [hc, cc] = lstm_step(tape, xt, h, c, bound);
    Mat m(d, B), inv(d, B);
    for (int b = 0; b < B; ++b) {
      m.col(b).setConstant(batch.mask(b, t));
      inv.col(b).setConstant(1.0 - batch.mask(b, t));
    }
    Var mv = tape.constant(std::move(m));
    Var iv = tape.constant(std::move(inv));
    h = add(mul(hc, mv), mul(h, iv));
    c = add(mul(cc, mv), mul(c, iv));
    out[static_cast<size_t>(t)] = h;
  }
  return out;
}

}  // namespace

EncodeResult encode_batch(Tape& tape, const SentenceBatch& batch, const EmbeddingTable& table,
                          EncoderParams& params) {
  auto fwd = run_direction(tape, batch, table, params.fwd, false);
  auto bwd = run_direction(tape, batch, table, params.bwd, true);
  EncodeResult r;
  r.mask = batch.mask;
  r.hidden.reserve(fwd.size());
  for (size_t t = 0; t < fwd.size(); ++t) r.hidden.push_back(concat_rows({fwd[t], bwd[t]}));
  r.pooled = masked_max_time(r.hidden, batch.mask);
  return r;
}

std::vector<Mat> hidden_states(const EncodeResult& r, const SentenceBatch& batch) {
  std::vector<Mat> out;
  int twod = static_cast<int>(r.hidden[0].rows());
  for (int b = 0; b < batch.batch_size(); ++b) {
    Mat H(batch.lengths[static_cast<size_t>(b)], twod);
    for (int t = 0; t < batch.lengths[static_cast<size_t>(b)]; ++t)
      H.row(t) = r.hidden[static_cast<size_t>(t)].value().col(b).transpose();
    out.push_back(std::move(H));
  }
  return out;
}

Mat encode_values(const SentenceBatch& batch, const EmbeddingTable& table, EncoderParams& params) {
  Tape tape;
  return encode_batch(tape, batch, table, params).pooled.value();
}

Var pair_features(Var s1, Var s2) {
  if (s1.rows() != s2.rows() || s1.cols() != s2.cols())
    throw ShapeError("pair_features: embedding widths differ");
  return concat_rows({s1, s2, sub(s1, s2), mul(s1, s2)});
}

namespace {

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const json& rows) {
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.at(0).size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows.at(static_cast<size_t>(i)).at(static_cast<size_t>(j)).get<double>();
  return m;
}

json lstm_to_json(const LstmParams& p) {
  return json{{"w_input", mat_to_json(p.w_input.value)},
              {"w_hidden", mat_to_json(p.w_hidden.value)},
              {"bias", mat_to_json(p.bias.value)}};
}

LstmParams lstm_from_json(const json& j, int d, int e) {
  LstmParams p;
  p.d = d;
  p.e = e;
  p.w_input = Param(mat_from_json(j.at("w_input")));
  p.w_hidden = Param(mat_from_json(j.at("w_hidden")));
  p.bias = Param(mat_from_json(j.at("bias")));
  if (p.w_input.value.rows() != 4 * d || p.w_input.value.cols() != e ||
      p.w_hidden.value.cols() != d)
    throw DataError("encoder checkpoint: inconsistent matrix shapes");
  return p;
}

}  // namespace

void save_encoder(const EncoderParams& p, const std::string& path) {
  json j{{"format", "bilstm-max-encoder"},
         {"version", 1},
         {"e", p.e},
         {"d", p.d},
         {"gate_order", "ifgo"},
         {"forward", lstm_to_json(p.fwd)},
         {"backward", lstm_to_json(p.bwd)}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write encoder checkpoint: " + path);
  out << j.dump(2) << '\n';
}

EncoderParams load_encoder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open encoder checkpoint: " + path);
  json j = json::parse(in);
  if (j.at("format") != "bilstm-max-encoder")
    throw DataError("not an encoder checkpoint: " + path);
  if (j.at("gate_order") != "ifgo")
    throw DataError("unsupported gate order in checkpoint: " + path);
  EncoderParams p;
  p.e = j.at("e").get<int>();
  p.d = j.at("d").get<int>();
  p.fwd = lstm_from_json(j.at("forward"), p.d, p.e);
  p.bwd = lstm_from_json(j.at("backward"), p.d, p.e);
  return p;
}

}  // namespace mtlsent
