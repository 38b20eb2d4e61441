#include "trajflow/autodiff.hpp"

#include <cmath>
#include <limits>

#include "trajflow/errors.hpp"

namespace trajflow::ad {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw DimensionError("autodiff: operands live on different tapes");
}

void require_shape(bool ok, const char* op) {
  if (!ok) throw DimensionError(std::string("autodiff: shape mismatch in ") + op);
}

}  // namespace

Parameter& ParamStore::add(const std::string& name, Mat init) {
  if (index_.count(name) != 0) throw ConfigError("duplicate parameter name: " + name);
  index_[name] = params_.size();
  Mat grad = Mat::Zero(init.rows(), init.cols());
  params_.push_back(Parameter{name, std::move(init), std::move(grad)});
  return params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter: " + name);
  return params_[it->second];
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

const Mat& Var::value() const { return tape->value(id); }
const Mat& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), false, nullptr, nullptr});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::input(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), true, nullptr, nullptr});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{Mat(), Mat(), true, &p, nullptr});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Mat value, const std::vector<Var>& parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape != this) throw DimensionError("autodiff: operand from a different tape");
    needs = needs || requires_grad(p.id);
  }
  nodes_.push_back(Node{std::move(value), Mat(), needs, nullptr, needs ? std::move(backward) : nullptr});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(int id, const Mat& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  if (root.tape != this) throw DimensionError("autodiff: backward root from a different tape");
  const Mat& v = value(root.id);
  accumulate(root.id, Mat::Ones(v.rows(), v.cols()));
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(n.grad);
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->grad.setZero(n.grad.rows(), n.grad.cols());
      n.param->grad += n.grad;
    }
  }
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.cols() == b.rows(), "matmul");
  Tape* t = a.tape;
  Mat out = a.value() * b.value();
  return t->record(std::move(out), {a, b}, [t, a, b](const Mat& g) {
    if (t->requires_grad(a.id)) t->accumulate(a.id, g * b.value().transpose());
    if (t->requires_grad(b.id)) t->accumulate(b.id, a.value().transpose() * g);
  });
}

Var linear(Var x, Var w, Var b) {
  require_same_tape(x, w);
  require_same_tape(x, b);
  require_shape(x.cols() == w.rows() && b.rows() == 1 && b.cols() == w.cols(), "linear");
  Tape* t = x.tape;
  Mat out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return t->record(std::move(out), {x, w, b}, [t, x, w, b](const Mat& g) {
    if (t->requires_grad(x.id)) t->accumulate(x.id, g * w.value().transpose());
    if (t->requires_grad(w.id)) t->accumulate(w.id, x.value().transpose() * g);
    if (t->requires_grad(b.id)) t->accumulate(b.id, g.colwise().sum());
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Tape* t = a.tape;
  return t->record(a.value() + b.value(), {a, b}, [t, a, b](const Mat& g) {
    t->accumulate(a.id, g);
    t->accumulate(b.id, g);
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  Tape* t = a.tape;
  return t->record(a.value() - b.value(), {a, b}, [t, a, b](const Mat& g) {
    t->accumulate(a.id, g);
    t->accumulate(b.id, -g);
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul");
  Tape* t = a.tape;
  return t->record(a.value().cwiseProduct(b.value()), {a, b}, [t, a, b](const Mat& g) {
    if (t->requires_grad(a.id)) t->accumulate(a.id, g.cwiseProduct(b.value()));
    if (t->requires_grad(b.id)) t->accumulate(b.id, g.cwiseProduct(a.value()));
  });
}

Var scale(Var a, double c) {
  Tape* t = a.tape;
  return t->record(a.value() * c, {a}, [t, a, c](const Mat& g) { t->accumulate(a.id, g * c); });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  Tape* t = a.tape;
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return t->record(std::move(out), {a, row}, [t, a, row](const Mat& g) {
    t->accumulate(a.id, g);
    if (t->requires_grad(row.id)) t->accumulate(row.id, g.colwise().sum());
  });
}

Var repeat_rows(Var row, Eigen::Index n) {
  require_shape(row.rows() == 1, "repeat_rows");
  Tape* t = row.tape;
  Mat out = row.value().replicate(n, 1);
  return t->record(std::move(out), {row}, [t, row](const Mat& g) { t->accumulate(row.id, g.colwise().sum()); });
}

Var relu(Var a) {
  Tape* t = a.tape;
  Mat out = a.value().cwiseMax(0.0);
  return t->record(std::move(out), {a}, [t, a](const Mat& g) {
    t->accumulate(a.id, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var tanh(Var a) {
  Tape* t = a.tape;
  Mat out = a.value().array().tanh().matrix();
  Mat saved = out;
  return t->record(std::move(out), {a}, [t, a, saved](const Mat& g) {
    t->accumulate(a.id, (g.array() * (1.0 - saved.array().square())).matrix());
  });
}

Var exp(Var a) {
  Tape* t = a.tape;
  Mat out = a.value().array().exp().matrix();
  Mat saved = out;
  return t->record(std::move(out), {a}, [t, a, saved](const Mat& g) {
    t->accumulate(a.id, g.cwiseProduct(saved));
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  require_shape(gain.rows() == 1 && bias.rows() == 1 && gain.cols() == x.cols() && bias.cols() == x.cols(),
                "layer_norm");
  Tape* t = x.tape;
  const Mat& xv = x.value();
  const Eigen::Index n = xv.rows();
  const auto d = static_cast<double>(xv.cols());
  Mat xhat(xv.rows(), xv.cols());
  Vec inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = xv.row(i).mean();
    const double var = (xv.row(i).array() - mean).square().sum() / d;
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mean) * inv_std(i);
  }
  Mat out = xhat;
  out.array().rowwise() *= gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return t->record(std::move(out), {x, gain, bias}, [t, x, gain, bias, xhat, inv_std, d](const Mat& g) {
    if (t->requires_grad(gain.id)) t->accumulate(gain.id, g.cwiseProduct(xhat).colwise().sum());
    if (t->requires_grad(bias.id)) t->accumulate(bias.id, g.colwise().sum());
    if (t->requires_grad(x.id)) {
      Mat gx = g;
      gx.array().rowwise() *= gain.value().row(0).array();
      Mat dx(gx.rows(), gx.cols());
      for (Eigen::Index i = 0; i < gx.rows(); ++i) {
        const double mean_g = gx.row(i).mean();
        const double mean_gx = gx.row(i).dot(xhat.row(i)) / d;
        dx.row(i) = inv_std(i) * (gx.row(i).array() - mean_g - xhat.row(i).array() * mean_gx);
      }
      t->accumulate(x.id, dx);
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  Tape* t = parts.front().tape;
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    require_shape(p.rows() == rows, "concat_cols");
    cols += p.cols();
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t->record(std::move(out), parts, [t, parts](const Mat& g) {
    Eigen::Index c0 = 0;
    for (const Var& p : parts) {
      if (t->requires_grad(p.id)) t->accumulate(p.id, g.middleCols(c0, p.cols()));
      c0 += p.cols();
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  Tape* t = parts.front().tape;
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    require_shape(p.cols() == cols, "concat_rows");
    rows += p.rows();
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return t->record(std::move(out), parts, [t, parts](const Mat& g) {
    Eigen::Index r0 = 0;
    for (const Var& p : parts) {
      if (t->requires_grad(p.id)) t->accumulate(p.id, g.middleRows(r0, p.rows()));
      r0 += p.rows();
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows");
  Tape* t = a.tape;
  Mat out = a.value().middleRows(start, count);
  const Eigen::Index rows = a.rows();
  return t->record(std::move(out), {a}, [t, a, start, rows](const Mat& g) {
    Mat full = Mat::Zero(rows, g.cols());
    full.middleRows(start, g.rows()) = g;
    t->accumulate(a.id, full);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols");
  Tape* t = a.tape;
  Mat out = a.value().middleCols(start, count);
  const Eigen::Index cols = a.cols();
  return t->record(std::move(out), {a}, [t, a, start, cols](const Mat& g) {
    Mat full = Mat::Zero(g.rows(), cols);
    full.middleCols(start, g.cols()) = g;
    t->accumulate(a.id, full);
  });
}

Var gather_cols(Var a, const std::vector<Eigen::Index>& cols) {
  Tape* t = a.tape;
  Mat out(a.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    require_shape(cols[j] >= 0 && cols[j] < a.cols(), "gather_cols");
    out.col(static_cast<Eigen::Index>(j)) = a.value().col(cols[j]);
  }
  const Eigen::Index n = a.cols();
  return t->record(std::move(out), {a}, [t, a, cols, n](const Mat& g) {
    Mat full = Mat::Zero(g.rows(), n);
    for (std::size_t j = 0; j < cols.size(); ++j) full.col(cols[j]) += g.col(static_cast<Eigen::Index>(j));
    t->accumulate(a.id, full);
  });
}

Var sum(Var a) {
  Tape* t = a.tape;
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  return t->record(std::move(out), {a}, [t, a, r, c](const Mat& g) {
    t->accumulate(a.id, Mat::Constant(r, c, g(0, 0)));
  });
}

Var detach(Var a) { return a.tape->constant(a.value()); }

Var masked_max_pool(Var x, const std::vector<char>& valid, Eigen::Index group_size) {
  require_shape(group_size > 0 && x.rows() % group_size == 0 &&
                    static_cast<Eigen::Index>(valid.size()) == x.rows(),
                "masked_max_pool");
  Tape* t = x.tape;
  const Eigen::Index groups = x.rows() / group_size;
  const Eigen::Index d = x.cols();
  const Mat& xv = x.value();
  Mat out = Mat::Zero(groups, d);
  // argmax row per (group, column); -1 when the group is fully masked.
  Eigen::MatrixXi arg = Eigen::MatrixXi::Constant(groups, d, -1);
  for (Eigen::Index gidx = 0; gidx < groups; ++gidx) {
    for (Eigen::Index r = gidx * group_size; r < (gidx + 1) * group_size; ++r) {
      if (!valid[static_cast<std::size_t>(r)]) continue;
      for (Eigen::Index c = 0; c < d; ++c) {
        // Strict > keeps the first maximal row on ties.
        if (arg(gidx, c) < 0 || xv(r, c) > out(gidx, c)) {
          out(gidx, c) = xv(r, c);
          arg(gidx, c) = static_cast<int>(r);
        }
      }
    }
  }
  const Eigen::Index rows = x.rows();
  return t->record(std::move(out), {x}, [t, x, arg, rows, d](const Mat& g) {
    Mat full = Mat::Zero(rows, d);
    for (Eigen::Index gidx = 0; gidx < arg.rows(); ++gidx) {
      for (Eigen::Index c = 0; c < d; ++c) {
        if (arg(gidx, c) >= 0) full(arg(gidx, c), c) += g(gidx, c);
      }
    }
    t->accumulate(x.id, full);
  });
}

Mat attention_weights(const Mat& q, const Mat& k, const AttentionMask& allowed) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Mat s = (q * k.transpose()) * inv_sqrt;
  Mat p = Mat::Zero(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (allowed(i, j)) mx = std::max(mx, s(i, j));
    }
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (allowed(i, j)) {
        p(i, j) = std::exp(s(i, j) - mx);
        z += p(i, j);
      }
    }
    p.row(i) /= z;
  }
  return p;
}

Var attention(Var q, Var k, Var v, int heads, const AttentionMask& allowed) {
  require_same_tape(q, k);
  require_same_tape(q, v);
  const Eigen::Index d = q.cols();
  require_shape(heads > 0 && d % heads == 0 && k.cols() == d && v.cols() == d && k.rows() == v.rows() &&
                    allowed.rows() == q.rows() && allowed.cols() == k.rows(),
                "attention");
  Tape* t = q.tape;
  const Eigen::Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Mat> probs(static_cast<std::size_t>(heads));
  Mat out(q.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * dh;
    probs[static_cast<std::size_t>(h)] =
        attention_weights(q.value().middleCols(c0, dh), k.value().middleCols(c0, dh), allowed);
    out.middleCols(c0, dh) = probs[static_cast<std::size_t>(h)] * v.value().middleCols(c0, dh);
  }
  return t->record(std::move(out), {q, k, v}, [t, q, k, v, heads, dh, inv_sqrt, probs](const Mat& g) {
    Mat gq = Mat::Zero(q.rows(), q.cols());
    Mat gk = Mat::Zero(k.rows(), k.cols());
    Mat gv = Mat::Zero(v.rows(), v.cols());
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index c0 = h * dh;
      const Mat& p = probs[static_cast<std::size_t>(h)];
      const auto go = g.middleCols(c0, dh);
      gv.middleCols(c0, dh) = p.transpose() * go;
      Mat dp = go * v.value().middleCols(c0, dh).transpose();
      Vec rowdot = (dp.cwiseProduct(p)).rowwise().sum();
      Mat ds = p.cwiseProduct(dp.colwise() - rowdot) * inv_sqrt;
      gq.middleCols(c0, dh) = ds * k.value().middleCols(c0, dh);
      gk.middleCols(c0, dh) = ds.transpose() * q.value().middleCols(c0, dh);
    }
    t->accumulate(q.id, gq);
    t->accumulate(k.id, gk);
    t->accumulate(v.id, gv);
  });
}

}  // namespace trajflow::ad
