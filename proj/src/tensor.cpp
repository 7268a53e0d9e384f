#include "mtlsent/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mtlsent {

namespace {

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace

int Tape::push(Mat value, std::function<void(Tape&, int)> back) {
  nodes_.push_back(Node{std::move(value), Mat(), std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(Mat v) {
  int id = push(std::move(v), nullptr);
  return Var{this, id};
}

Var Tape::leaf(Mat v) { return constant(std::move(v)); }

Var Tape::param(Param& p) {
  int id = push(p.value, nullptr);
  param_leaves_.emplace_back(id, &p);
  return Var{this, id};
}

void Tape::backward(Var loss) {
  require(loss.tape == this, "backward: loss from a different tape");
  require(loss.rows() == 1 && loss.cols() == 1,
          "backward: loss must be scalar, got " + shape_str(loss.value()));
  for (auto& n : nodes_) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  nodes_[loss.id].grad(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back(*this, i);
  }
  for (auto& [id, p] : param_leaves_) p->grad += nodes_[id].grad;
}

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  const Mat& av = a.value();
  const Mat& bv = b.value();
  require(av.cols() == bv.rows(),
          "matmul: inner dimensions disagree, " + shape_str(av) + " vs " + shape_str(bv));
  Mat out = av * bv;
  int ida = a.id, idb = b.id;
  int id = t.push(std::move(out), [ida, idb](Tape& t, int self) {
    const Mat& g = t.grd(self);
    t.grd(ida) += g * t.val(idb).transpose();
    t.grd(idb) += t.val(ida).transpose() * g;
  });
  return Var{&t, id};
}

Var elementwise(EwOp op, Var a, Var b) {
  Tape& t = *a.tape;
  const Mat& av = a.value();
  const Mat& bv = b.value();
  require(av.rows() == bv.rows() && av.cols() == bv.cols(),
          "elementwise: shapes differ, " + shape_str(av) + " vs " + shape_str(bv));
  Mat out;
  switch (op) {
    case EwOp::Add: out = av + bv; break;
    case EwOp::Sub: out = av - bv; break;
    case EwOp::Mul: out = av.cwiseProduct(bv); break;
  }
  int ida = a.id, idb = b.id;
  int id = t.push(std::move(out), [op, ida, idb](Tape& t, int self) {
    const Mat& g = t.grd(self);
    switch (op) {
      case EwOp::Add:
        t.grd(ida) += g;
        t.grd(idb) += g;
        break;
      case EwOp::Sub:
        t.grd(ida) += g;
        t.grd(idb) -= g;
        break;
      case EwOp::Mul:
        t.grd(ida) += g.cwiseProduct(t.val(idb));
        t.grd(idb) += g.cwiseProduct(t.val(ida));
        break;
    }
  });
  return Var{&t, id};
}

Var sigmoid(Var x) {
  Tape& t = *x.tape;
  Mat out = x.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  int idx = x.id;
  int id = t.push(std::move(out), [idx](Tape& t, int self) {
    const Mat& y = t.val(self);
    t.grd(idx) += t.grd(self).cwiseProduct(y.cwiseProduct(Mat::Ones(y.rows(), y.cols()) - y));
  });
  return Var{&t, id};
}

Var tanh(Var x) {
  Tape& t = *x.tape;
  Mat out = x.value().array().tanh();
  int idx = x.id;
  int id = t.push(std::move(out), [idx](Tape& t, int self) {
    const Mat& y = t.val(self);
    t.grd(idx) += t.grd(self).cwiseProduct(Mat::Ones(y.rows(), y.cols()) - y.cwiseProduct(y));
  });
  return Var{&t, id};
}

Var softmax(Var logits) {
  Tape& t = *logits.tape;
  const Mat& z = logits.value();
  require(z.cols() == 1 && z.rows() >= 1, "softmax: expected column vector, got " + shape_str(z));
  double m = z.maxCoeff();
  Mat e = (z.array() - m).exp();
  Mat out = e / e.sum();
  int idx = logits.id;
  int id = t.push(std::move(out), [idx](Tape& t, int self) {
    const Mat& p = t.val(self);
    const Mat& g = t.grd(self);
    double dot = (p.array() * g.array()).sum();
    t.grd(idx) += p.cwiseProduct(g - Mat::Constant(g.rows(), 1, dot));
  });
  return Var{&t, id};
}

Var cross_entropy(Var probs, int label) {
  Tape& t = *probs.tape;
  const Mat& p = probs.value();
  require(p.cols() == 1, "cross_entropy: expected column vector, got " + shape_str(p));
  if (label < 0 || label >= p.rows())
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " out of range for " +
                            std::to_string(p.rows()) + " classes");
  double clamped = std::max(p(label, 0), kXentClamp);
  Mat out(1, 1);
  out(0, 0) = -std::log(clamped);
  int idx = probs.id;
  int id = t.push(std::move(out), [idx, label, clamped](Tape& t, int self) {
    double g = t.grd(self)(0, 0);
    t.grd(idx)(label, 0) += -g / clamped;
  });
  return Var{&t, id};
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat: empty input list");
  Tape& t = *parts[0].tape;
  Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& v : parts) {
    require(v.cols() == cols, "concat: column counts differ");
    rows += v.rows();
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> offs;
  for (const Var& v : parts) {
    out.middleRows(r, v.rows()) = v.value();
    ids.push_back(v.id);
    offs.push_back(r);
    r += v.rows();
  }
  int id = t.push(std::move(out), [ids, offs](Tape& t, int self) {
    const Mat& g = t.grd(self);
    for (size_t i = 0; i < ids.size(); ++i) {
      Mat& gi = t.grd(ids[i]);
      gi += g.middleRows(offs[i], gi.rows());
    }
  });
  return Var{&t, id};
}

Var slice_rows(Var x, int start, int count) {
  Tape& t = *x.tape;
  const Mat& v = x.value();
  require(start >= 0 && count >= 1 && start + count <= v.rows(), "slice_rows: range out of bounds");
  Mat out = v.middleRows(start, count);
  int idx = x.id;
  int id = t.push(std::move(out), [idx, start, count](Tape& t, int self) {
    t.grd(idx).middleRows(start, count) += t.grd(self);
  });
  return Var{&t, id};
}

Var frobenius_sq(Var m) {
  Tape& t = *m.tape;
  const Mat& v = m.value();
  Mat out(1, 1);
  out(0, 0) = v.squaredNorm();
  int idx = m.id;
  int id = t.push(std::move(out), [idx](Tape& t, int self) {
    t.grd(idx) += 2.0 * t.grd(self)(0, 0) * t.val(idx);
  });
  return Var{&t, id};
}

Var sum(Var x) {
  Tape& t = *x.tape;
  Mat out(1, 1);
  out(0, 0) = x.value().sum();
  int idx = x.id;
  int id = t.push(std::move(out), [idx](Tape& t, int self) {
    const Mat& v = t.val(idx);
    t.grd(idx) += Mat::Constant(v.rows(), v.cols(), t.grd(self)(0, 0));
  });
  return Var{&t, id};
}

Var scale(Var x, double c) {
  Tape& t = *x.tape;
  Mat out = c * x.value();
  int idx = x.id;
  int id = t.push(std::move(out), [idx, c](Tape& t, int self) { t.grd(idx) += c * t.grd(self); });
  return Var{&t, id};
}

Var add_col_broadcast(Var x, Var b) {
  Tape& t = *x.tape;
  const Mat& xv = x.value();
  const Mat& bv = b.value();
  require(bv.cols() == 1 && bv.rows() == xv.rows(),
          "add_col_broadcast: bias " + shape_str(bv) + " vs " + shape_str(xv));
  Mat out = xv.colwise() + Eigen::VectorXd(bv.col(0));
  int idx = x.id, idb = b.id;
  int id = t.push(std::move(out), [idx, idb](Tape& t, int self) {
    const Mat& g = t.grd(self);
    t.grd(idx) += g;
    t.grd(idb) += g.rowwise().sum();
  });
  return Var{&t, id};
}

Var scale_by_entry(Var x, Var s, int i) {
  Tape& t = *x.tape;
  const Mat& sv = s.value();
  require(sv.cols() == 1 && i >= 0 && i < sv.rows(), "scale_by_entry: index out of bounds");
  Mat out = sv(i, 0) * x.value();
  int idx = x.id, ids = s.id;
  int id = t.push(std::move(out), [idx, ids, i](Tape& t, int self) {
    const Mat& g = t.grd(self);
    t.grd(idx) += t.val(ids)(i, 0) * g;
    t.grd(ids)(i, 0) += g.cwiseProduct(t.val(idx)).sum();
  });
  return Var{&t, id};
}

Var grad_reverse(Var x, double lambda) {
  Tape& t = *x.tape;
  Mat out = x.value();
  int idx = x.id;
  int id = t.push(std::move(out),
                  [idx, lambda](Tape& t, int self) { t.grd(idx) -= lambda * t.grd(self); });
  return Var{&t, id};
}

Var softmax_cols(Var logits) {
  Tape& t = *logits.tape;
  const Mat& z = logits.value();
  Mat out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    double m = z.col(j).maxCoeff();
    Eigen::ArrayXd e = (z.col(j).array() - m).exp();
    out.col(j) = e / e.sum();
  }
  int idx = logits.id;
  int id = t.push(std::move(out), [idx](Tape& t, int self) {
    const Mat& p = t.val(self);
    const Mat& g = t.grd(self);
    Mat& gz = t.grd(idx);
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      double dot = (p.col(j).array() * g.col(j).array()).sum();
      gz.col(j) += p.col(j).cwiseProduct(g.col(j) - Eigen::VectorXd::Constant(p.rows(), dot));
    }
  });
  return Var{&t, id};
}

Var softmax_xent_cols(Var logits, const std::vector<int>& labels) {
  Tape& t = *logits.tape;
  const Mat& z = logits.value();
  require(static_cast<Eigen::Index>(labels.size()) == z.cols(),
          "softmax_xent_cols: label count vs batch size");
  Eigen::Index B = z.cols();
  Mat probs(z.rows(), B);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < B; ++j) {
    int y = labels[j];
    require(y >= 0 && y < z.rows(), "softmax_xent_cols: label out of range");
    double m = z.col(j).maxCoeff();
    Eigen::ArrayXd e = (z.col(j).array() - m).exp();
    double s = e.sum();
    probs.col(j) = e / s;
    loss += -(z(y, j) - m - std::log(s));
  }
  Mat out(1, 1);
  out(0, 0) = loss / static_cast<double>(B);
  int idx = logits.id;
  int id = t.push(std::move(out), [idx, labels, probs](Tape& t, int self) {
    double g = t.grd(self)(0, 0) / static_cast<double>(labels.size());
    Mat d = probs;
    for (size_t j = 0; j < labels.size(); ++j) d(labels[j], static_cast<Eigen::Index>(j)) -= 1.0;
    t.grd(idx) += g * d;
  });
  return Var{&t, id};
}

Var pick_neg_log_cols(Var probs, const std::vector<int>& labels) {
  Tape& t = *probs.tape;
  const Mat& p = probs.value();
  require(static_cast<Eigen::Index>(labels.size()) == p.cols(),
          "pick_neg_log_cols: label count vs batch size");
  double loss = 0.0;
  std::vector<double> clamped(labels.size());
  for (size_t j = 0; j < labels.size(); ++j) {
    int y = labels[j];
    require(y >= 0 && y < p.rows(), "pick_neg_log_cols: label out of range");
    clamped[j] = std::max(p(y, static_cast<Eigen::Index>(j)), kXentClamp);
    loss += -std::log(clamped[j]);
  }
  Mat out(1, 1);
  out(0, 0) = loss / static_cast<double>(labels.size());
  int idx = probs.id;
  int id = t.push(std::move(out), [idx, labels, clamped](Tape& t, int self) {
    double g = t.grd(self)(0, 0) / static_cast<double>(labels.size());
    Mat& gp = t.grd(idx);
    for (size_t j = 0; j < labels.size(); ++j)
      gp(labels[j], static_cast<Eigen::Index>(j)) += -g / clamped[j];
  });
  return Var{&t, id};
}

Var masked_max_time(const std::vector<Var>& steps, const Mat& mask) {
  require(!steps.empty(), "masked_max_time: no timesteps");
  Tape& t = *steps[0].tape;
  Eigen::Index d = steps[0].rows();
  Eigen::Index B = steps[0].cols();
  require(mask.rows() == B && mask.cols() == static_cast<Eigen::Index>(steps.size()),
          "masked_max_time: mask shape " + shape_str(mask));
  for (Eigen::Index b = 0; b < B; ++b)
    require(mask.row(b).sum() > 0, "masked_max_time: all-masked sentence");

  Mat out = Mat::Constant(d, B, -std::numeric_limits<double>::infinity());
  // argmax(i, b): earliest timestep achieving the max of dimension i.
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> argmax(d, B);
  argmax.setConstant(-1);
  for (size_t s = 0; s < steps.size(); ++s) {
    const Mat& h = steps[s].value();
    for (Eigen::Index b = 0; b < B; ++b) {
      if (mask(b, static_cast<Eigen::Index>(s)) == 0.0) continue;
      for (Eigen::Index i = 0; i < d; ++i) {
        if (h(i, b) > out(i, b)) {
          out(i, b) = h(i, b);
          argmax(i, b) = static_cast<int>(s);
        }
      }
    }
  }
  std::vector<int> ids;
  ids.reserve(steps.size());
  for (const Var& v : steps) ids.push_back(v.id);
  int id = t.push(std::move(out), [ids, argmax](Tape& t, int self) {
    const Mat& g = t.grd(self);
    for (Eigen::Index b = 0; b < g.cols(); ++b)
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        t.grd(ids[argmax(i, b)])(i, b) += g(i, b);
  });
  return Var{&t, id};
}

Var gram_frobenius(const std::vector<Var>& hs, const std::vector<Var>& hp, const Mat& mask) {
  require(!hs.empty() && hs.size() == hp.size(), "gram_frobenius: timestep lists differ");
  Tape& t = *hs[0].tape;
  Eigen::Index ds = hs[0].rows();
  Eigen::Index dp = hp[0].rows();
  Eigen::Index B = hs[0].cols();
  require(hp[0].cols() == B, "gram_frobenius: batch sizes differ");
  size_t T = hs.size();
  require(mask.rows() == B && mask.cols() == static_cast<Eigen::Index>(T),
          "gram_frobenius: mask shape " + shape_str(mask));

  std::vector<Mat> grams(static_cast<size_t>(B), Mat::Zero(ds, dp));
  double loss = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    for (size_t s = 0; s < T; ++s) {
      if (mask(b, static_cast<Eigen::Index>(s)) == 0.0) continue;
      grams[b] += hs[s].value().col(b) * hp[s].value().col(b).transpose();
    }
    loss += grams[b].squaredNorm();
  }
  Mat out(1, 1);
  out(0, 0) = loss / static_cast<double>(B);

  std::vector<int> ids_s, ids_p;
  for (const Var& v : hs) ids_s.push_back(v.id);
  for (const Var& v : hp) ids_p.push_back(v.id);
  int id = t.push(std::move(out), [ids_s, ids_p, grams, mask](Tape& t, int self) {
    double g = 2.0 * t.grd(self)(0, 0) / static_cast<double>(grams.size());
    for (size_t s = 0; s < ids_s.size(); ++s) {
      Mat& gs = t.grd(ids_s[s]);
      Mat& gp = t.grd(ids_p[s]);
      for (Eigen::Index b = 0; b < mask.rows(); ++b) {
        if (mask(b, static_cast<Eigen::Index>(s)) == 0.0) continue;
        gs.col(b) += g * grams[static_cast<size_t>(b)] * t.val(ids_p[s]).col(b);
        gp.col(b) += g * grams[static_cast<size_t>(b)].transpose() * t.val(ids_s[s]).col(b);
      }
    }
  });
  return Var{&t, id};
}

double grad_check(const std::function<Var(Tape&)>& f, const std::vector<Param*>& params,
                  double eps) {
  for (Param* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  std::vector<Mat> analytic;
  for (Param* p : params) analytic.push_back(p->grad);

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Mat& v = params[pi]->value;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      for (Eigen::Index j = 0; j < v.cols(); ++j) {
        double orig = v(i, j);
        v(i, j) = orig + eps;
        double fp;
        {
          Tape tape;
          fp = f(tape).scalar();
        }
        v(i, j) = orig - eps;
        double fm;
        {
          Tape tape;
          fm = f(tape).scalar();
        }
        v(i, j) = orig;
        double cd = (fp - fm) / (2.0 * eps);
        double an = analytic[pi](i, j);
        double denom = std::max({std::abs(an), std::abs(cd), 1e-8});
        max_rel = std::max(max_rel, std::abs(an - cd) / denom);
      }
    }
  }
  return max_rel;
}

}  // namespace mtlsent
