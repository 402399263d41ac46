#include "ignn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace ignn::num {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw Error(Errc::invalid_argument, msg);
}

bool want_grad(const Tape& t, std::initializer_list<const Tensor*> ins) {
  if (!t.recording()) return false;
  for (const Tensor* p : ins) {
    if (p->tracked()) return true;
  }
  return false;
}

// c += a * b           a: [m,k]  b: [k,n]  c: [m,n]
void mm_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c += a * b^T         a: [m,k]  b: [n,k]  c: [m,n]
void mm_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (int64_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

// c += a^T * b         a: [k,m]  b: [k,n]  c: [m,n]
void mm_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c + i * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<int32_t> to_i32(std::span<const int64_t> v, const char* what, int64_t hi) {
  std::vector<int32_t> out;
  out.reserve(v.size());
  for (int64_t x : v) {
    check(x >= 0 && x < hi, std::string(what) + ": index " + std::to_string(x) +
                                " out of range [0, " + std::to_string(hi) + ")");
    out.push_back(static_cast<int32_t>(x));
  }
  return out;
}

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

Tensor Tensor::zeros(Shape shape) {
  auto n = std::make_shared<TensorNode>();
  const int64_t count = shape_numel(shape);
  check(count >= 0, "zeros: negative dimension in " + shape_str(shape));
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(count), 0.0);
  return wrap(std::move(n));
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.node_->value.begin(), t.node_->value.end(), v);
  return t;
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  const int64_t count = shape_numel(shape);
  check(static_cast<int64_t>(data.size()) == count,
        "from: data size " + std::to_string(data.size()) + " does not match shape " +
            shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  return wrap(std::move(n));
}

double Tensor::item() const {
  check(defined() && numel() == 1,
        "item: tensor is not a scalar" + std::string(defined() ? " (shape " + shape_str(shape()) + ")" : ""));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  check(defined(), "at: undefined tensor");
  check(static_cast<int>(idx.size()) == ndim(),
        "at: " + std::to_string(idx.size()) + " indices for shape " + shape_str(shape()));
  int64_t off = 0;
  int i = 0;
  for (int64_t ix : idx) {
    const int64_t d = node_->shape[static_cast<size_t>(i)];
    check(ix >= 0 && ix < d, "at: index " + std::to_string(ix) + " out of range for dim " +
                                 std::to_string(i) + " of " + shape_str(shape()));
    off = off * d + ix;
    ++i;
  }
  return node_->value[static_cast<size_t>(off)];
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

Tensor Tensor::detached_copy() const {
  auto n = std::make_shared<TensorNode>();
  n->shape = node_->shape;
  n->value = node_->value;
  return wrap(std::move(n));
}

void ensure_grad(TensorNode& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
}

void Tape::push(const char* op, std::vector<std::shared_ptr<TensorNode>> inputs,
                std::shared_ptr<TensorNode> output, std::function<void()> pull) {
  records_.push_back(Record{op, std::move(inputs), std::move(output), std::move(pull)});
}

void Tape::backward(const Tensor& loss) {
  check(loss.defined() && loss.numel() == 1,
        "backward: loss must be a scalar, got shape " +
            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  loss.node()->grad.assign(1, 1.0);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    Record& rec = *it;
    if (rec.output->grad.empty()) continue;  // not on any path to the loss
    rec.pull();
    if (check_finite) {
      for (const auto& in : rec.inputs) {
        for (double g : in->grad) {
          if (!std::isfinite(g)) {
            records_.clear();
            throw Error(Errc::nonfinite,
                        std::string("backward: non-finite gradient produced by op '") + rec.op +
                            "'");
          }
        }
      }
    }
  }
  records_.clear();  // the tape is consumed
}

// ---- op helpers ----

namespace {

Tensor unary_ew(Tape& t, const char* op, const Tensor& x, double (*f)(double),
                double (*df_from_y)(double, double)) {
  check(x.defined(), std::string(op) + ": undefined input");
  Tensor out = Tensor::zeros(x.shape());
  const auto xv = x.data();
  auto ov = out.mutable_data();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = f(xv[i]);
  if (want_grad(t, {&x})) {
    out.node()->tracked = true;
    auto xn = x.node();
    auto on = out.node();
    t.push(op, {xn}, on, [xn, on, df_from_y]() {
      ensure_grad(*xn);
      for (size_t i = 0; i < xn->grad.size(); ++i)
        xn->grad[i] += on->grad[i] * df_from_y(xn->value[i], on->value[i]);
    });
  }
  return out;
}

}  // namespace

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b) {
  check(a.defined() && b.defined(), "matmul: undefined input");
  check(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0),
        "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  mm_acc(a.data().data(), b.data().data(), out.mutable_data().data(), m, k, n);
  if (want_grad(t, {&a, &b})) {
    out.node()->tracked = true;
    auto an = a.node(), bn = b.node(), on = out.node();
    const bool ga = a.tracked(), gb = b.tracked();
    t.push("matmul", {an, bn}, on, [an, bn, on, m, k, n, ga, gb]() {
      if (ga) {
        ensure_grad(*an);  // dA += dC * B^T
        mm_nt_acc(on->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
      }
      if (gb) {
        ensure_grad(*bn);  // dB += A^T * dC
        mm_tn_acc(an->value.data(), on->grad.data(), bn->grad.data(), k, m, n);
      }
    });
  }
  return out;
}

namespace {

Tensor binary_same_shape(Tape& t, const char* op, const Tensor& a, const Tensor& b, int mode) {
  check(a.defined() && b.defined(), std::string(op) + ": undefined input");
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.data(), bv = b.data();
  auto ov = out.mutable_data();
  for (size_t i = 0; i < av.size(); ++i)
    ov[i] = mode == 0 ? av[i] + bv[i] : (mode == 1 ? av[i] - bv[i] : av[i] * bv[i]);
  if (want_grad(t, {&a, &b})) {
    out.node()->tracked = true;
    auto an = a.node(), bn = b.node(), on = out.node();
    const bool ga = a.tracked(), gb = b.tracked();
    t.push(op, {an, bn}, on, [an, bn, on, ga, gb, mode]() {
      const auto& g = on->grad;
      if (ga) {
        ensure_grad(*an);
        for (size_t i = 0; i < g.size(); ++i)
          an->grad[i] += mode == 2 ? g[i] * bn->value[i] : g[i];
      }
      if (gb) {
        ensure_grad(*bn);
        for (size_t i = 0; i < g.size(); ++i)
          bn->grad[i] += mode == 0 ? g[i] : (mode == 1 ? -g[i] : g[i] * an->value[i]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(Tape& t, const Tensor& a, const Tensor& b) { return binary_same_shape(t, "add", a, b, 0); }
Tensor sub(Tape& t, const Tensor& a, const Tensor& b) { return binary_same_shape(t, "sub", a, b, 1); }
Tensor mul(Tape& t, const Tensor& a, const Tensor& b) { return binary_same_shape(t, "mul", a, b, 2); }

Tensor scalar_mul(Tape& t, const Tensor& a, double c) {
  check(a.defined(), "scalar_mul: undefined input");
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.data();
  auto ov = out.mutable_data();
  for (size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * c;
  if (want_grad(t, {&a})) {
    out.node()->tracked = true;
    auto an = a.node(), on = out.node();
    t.push("scalar_mul", {an}, on, [an, on, c]() {
      ensure_grad(*an);
      for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i] * c;
    });
  }
  return out;
}

Tensor add_bias(Tape& t, const Tensor& x, const Tensor& bias) {
  check(x.defined() && bias.defined(), "add_bias: undefined input");
  check(x.ndim() == 2 && bias.ndim() == 1 && x.dim(1) == bias.dim(0),
        "add_bias: incompatible shapes " + shape_str(x.shape()) + " + " +
            shape_str(bias.shape()));
  const int64_t m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({m, n});
  const auto xv = x.data(), bv = bias.data();
  auto ov = out.mutable_data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) ov[i * n + j] = xv[i * n + j] + bv[j];
  if (want_grad(t, {&x, &bias})) {
    out.node()->tracked = true;
    auto xn = x.node(), bn = bias.node(), on = out.node();
    const bool gx = x.tracked(), gb = bias.tracked();
    t.push("add_bias", {xn, bn}, on, [xn, bn, on, m, n, gx, gb]() {
      const auto& g = on->grad;
      if (gx) {
        ensure_grad(*xn);
        for (size_t i = 0; i < g.size(); ++i) xn->grad[i] += g[i];
      }
      if (gb) {
        ensure_grad(*bn);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) bn->grad[j] += g[i * n + j];
      }
    });
  }
  return out;
}

Tensor sigmoid(Tape& t, const Tensor& x) {
  return unary_ew(t, "sigmoid", x, &stable_sigmoid,
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(Tape& t, const Tensor& x) {
  return unary_ew(
      t, "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(Tape& t, const Tensor& x) {
  return unary_ew(
      t, "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor concat_cols(Tape& t, const Tensor& a, const Tensor& b) {
  check(a.defined() && b.defined(), "concat_cols: undefined input");
  check(a.ndim() == 2 && b.ndim() == 2 && a.dim(0) == b.dim(0),
        "concat_cols: incompatible shapes " + shape_str(a.shape()) + " | " +
            shape_str(b.shape()));
  const int64_t m = a.dim(0), p = a.dim(1), q = b.dim(1);
  Tensor out = Tensor::zeros({m, p + q});
  const auto av = a.data(), bv = b.data();
  auto ov = out.mutable_data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < p; ++j) ov[i * (p + q) + j] = av[i * p + j];
    for (int64_t j = 0; j < q; ++j) ov[i * (p + q) + p + j] = bv[i * q + j];
  }
  if (want_grad(t, {&a, &b})) {
    out.node()->tracked = true;
    auto an = a.node(), bn = b.node(), on = out.node();
    const bool ga = a.tracked(), gb = b.tracked();
    t.push("concat_cols", {an, bn}, on, [an, bn, on, m, p, q, ga, gb]() {
      const auto& g = on->grad;
      if (ga) {
        ensure_grad(*an);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < p; ++j) an->grad[i * p + j] += g[i * (p + q) + j];
      }
      if (gb) {
        ensure_grad(*bn);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < q; ++j) bn->grad[i * q + j] += g[i * (p + q) + p + j];
      }
    });
  }
  return out;
}

namespace {

Tensor reduce_all(Tape& t, const char* op, const Tensor& x, bool mean, bool square) {
  check(x.defined(), std::string(op) + ": undefined input");
  const auto xv = x.data();
  double s = 0.0;
  for (double v : xv) s += square ? v * v : v;
  const double denom = mean ? static_cast<double>(std::max<int64_t>(x.numel(), 1)) : 1.0;
  Tensor out = Tensor::scalar(s / denom);
  if (want_grad(t, {&x})) {
    out.node()->tracked = true;
    auto xn = x.node(), on = out.node();
    t.push(op, {xn}, on, [xn, on, denom, square]() {
      ensure_grad(*xn);
      const double g = on->grad[0] / denom;
      for (size_t i = 0; i < xn->grad.size(); ++i)
        xn->grad[i] += square ? 2.0 * xn->value[i] * g : g;
    });
  }
  return out;
}

}  // namespace

Tensor sum_all(Tape& t, const Tensor& x) { return reduce_all(t, "sum_all", x, false, false); }
Tensor mean_all(Tape& t, const Tensor& x) { return reduce_all(t, "mean_all", x, true, false); }
Tensor squared_l2(Tape& t, const Tensor& x) { return reduce_all(t, "squared_l2", x, false, true); }

Tensor softmax_rows(Tape& t, const Tensor& x) {
  check(x.defined() && x.ndim() == 2,
        "softmax_rows: expected a 2-d tensor, got " +
            (x.defined() ? shape_str(x.shape()) : std::string("<undefined>")));
  const int64_t m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({m, n});
  const auto xv = x.data();
  auto ov = out.mutable_data();
  for (int64_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < n; ++j) mx = std::max(mx, xv[i * n + j]);
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      ov[i * n + j] = std::exp(xv[i * n + j] - mx);
      s += ov[i * n + j];
    }
    for (int64_t j = 0; j < n; ++j) ov[i * n + j] /= s;
  }
  if (want_grad(t, {&x})) {
    out.node()->tracked = true;
    auto xn = x.node(), on = out.node();
    t.push("softmax_rows", {xn}, on, [xn, on, m, n]() {
      ensure_grad(*xn);
      for (int64_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j) dot += on->grad[i * n + j] * on->value[i * n + j];
        for (int64_t j = 0; j < n; ++j)
          xn->grad[i * n + j] += on->value[i * n + j] * (on->grad[i * n + j] - dot);
      }
    });
  }
  return out;
}

Tensor segment_softmax(Tape& t, const Tensor& logits, std::span<const int32_t> seg,
                       int64_t num_segments) {
  check(logits.defined() && logits.ndim() == 1,
        "segment_softmax: expected a 1-d tensor, got " +
            (logits.defined() ? shape_str(logits.shape()) : std::string("<undefined>")));
  const int64_t n = logits.dim(0);
  check(static_cast<int64_t>(seg.size()) == n,
        "segment_softmax: " + std::to_string(seg.size()) + " segment ids for " +
            std::to_string(n) + " logits");
  check(num_segments > 0, "segment_softmax: num_segments must be positive");
  for (int32_t s : seg)
    check(s >= 0 && s < num_segments,
          "segment_softmax: segment id " + std::to_string(s) + " out of range [0, " +
              std::to_string(num_segments) + ")");
  std::vector<int32_t> seg_copy(seg.begin(), seg.end());
  const auto xv = logits.data();
  std::vector<double> mx(static_cast<size_t>(num_segments),
                         -std::numeric_limits<double>::infinity());
  for (int64_t i = 0; i < n; ++i) mx[seg_copy[i]] = std::max(mx[seg_copy[i]], xv[i]);
  Tensor out = Tensor::zeros({n});
  auto ov = out.mutable_data();
  std::vector<double> sums(static_cast<size_t>(num_segments), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    ov[i] = std::exp(xv[i] - mx[seg_copy[i]]);
    sums[seg_copy[i]] += ov[i];
  }
  for (int64_t i = 0; i < n; ++i) ov[i] /= sums[seg_copy[i]];
  if (want_grad(t, {&logits})) {
    out.node()->tracked = true;
    auto xn = logits.node(), on = out.node();
    t.push("segment_softmax", {xn}, on, [xn, on, seg_copy, num_segments, n]() {
      ensure_grad(*xn);
      std::vector<double> dots(static_cast<size_t>(num_segments), 0.0);
      for (int64_t i = 0; i < n; ++i) dots[seg_copy[i]] += on->grad[i] * on->value[i];
      for (int64_t i = 0; i < n; ++i)
        xn->grad[i] += on->value[i] * (on->grad[i] - dots[seg_copy[i]]);
    });
  }
  return out;
}

Tensor gather_rows(Tape& t, const Tensor& x, std::span<const int32_t> idx) {
  check(x.defined() && x.ndim() == 2,
        "gather_rows: expected a 2-d tensor, got " +
            (x.defined() ? shape_str(x.shape()) : std::string("<undefined>")));
  const int64_t n = x.dim(0), d = x.dim(1);
  const int64_t k = static_cast<int64_t>(idx.size());
  for (int32_t i : idx)
    check(i >= 0 && i < n, "gather_rows: row index " + std::to_string(i) +
                               " out of range [0, " + std::to_string(n) + ")");
  std::vector<int32_t> idx_copy(idx.begin(), idx.end());
  Tensor out = Tensor::zeros({k, d});
  const auto xv = x.data();
  auto ov = out.mutable_data();
  for (int64_t i = 0; i < k; ++i)
    std::copy(xv.begin() + idx_copy[i] * d, xv.begin() + (idx_copy[i] + 1) * d,
              ov.begin() + i * d);
  if (want_grad(t, {&x})) {
    out.node()->tracked = true;
    auto xn = x.node(), on = out.node();
    t.push("gather_rows", {xn}, on, [xn, on, idx_copy, d, k]() {
      ensure_grad(*xn);
      for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < d; ++j) xn->grad[idx_copy[i] * d + j] += on->grad[i * d + j];
    });
  }
  return out;
}

Tensor scatter_add_rows(Tape& t, const Tensor& rows, std::span<const int32_t> idx,
                        int64_t out_rows) {
  check(rows.defined() && rows.ndim() == 2,
        "scatter_add_rows: expected a 2-d tensor, got " +
            (rows.defined() ? shape_str(rows.shape()) : std::string("<undefined>")));
  const int64_t n = rows.dim(0), d = rows.dim(1);
  check(static_cast<int64_t>(idx.size()) == n,
        "scatter_add_rows: " + std::to_string(idx.size()) + " indices for " +
            std::to_string(n) + " rows");
  check(out_rows >= 0, "scatter_add_rows: negative out_rows");
  for (int32_t i : idx)
    check(i >= 0 && i < out_rows, "scatter_add_rows: row index " + std::to_string(i) +
                                      " out of range [0, " + std::to_string(out_rows) + ")");
  std::vector<int32_t> idx_copy(idx.begin(), idx.end());
  Tensor out = Tensor::zeros({out_rows, d});
  const auto rv = rows.data();
  auto ov = out.mutable_data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) ov[idx_copy[i] * d + j] += rv[i * d + j];
  if (want_grad(t, {&rows})) {
    out.node()->tracked = true;
    auto rn = rows.node(), on = out.node();
    t.push("scatter_add_rows", {rn}, on, [rn, on, idx_copy, d, n]() {
      ensure_grad(*rn);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) rn->grad[i * d + j] += on->grad[idx_copy[i] * d + j];
    });
  }
  return out;
}

Tensor bmv(Tape& t, const Tensor& mats, const Tensor& vecs) {
  check(mats.defined() && vecs.defined(), "bmv: undefined input");
  check(mats.ndim() == 3 && vecs.ndim() == 2 && mats.dim(0) == vecs.dim(0) &&
            mats.dim(2) == vecs.dim(1),
        "bmv: incompatible shapes " + shape_str(mats.shape()) + " x " + shape_str(vecs.shape()));
  const int64_t m = mats.dim(0), r = mats.dim(1), c = mats.dim(2);
  Tensor out = Tensor::zeros({m, r});
  const auto wv = mats.data(), xv = vecs.data();
  auto ov = out.mutable_data();
  for (int64_t i = 0; i < m; ++i) {
    const double* wi = wv.data() + i * r * c;
    const double* xi = xv.data() + i * c;
    for (int64_t a = 0; a < r; ++a) {
      double s = 0.0;
      for (int64_t b = 0; b < c; ++b) s += wi[a * c + b] * xi[b];
      ov[i * r + a] = s;
    }
  }
  if (want_grad(t, {&mats, &vecs})) {
    out.node()->tracked = true;
    auto wn = mats.node(), xn = vecs.node(), on = out.node();
    const bool gw = mats.tracked(), gx = vecs.tracked();
    t.push("bmv", {wn, xn}, on, [wn, xn, on, m, r, c, gw, gx]() {
      if (gw) ensure_grad(*wn);
      if (gx) ensure_grad(*xn);
      for (int64_t i = 0; i < m; ++i) {
        const double* gi = on->grad.data() + i * r;
        for (int64_t a = 0; a < r; ++a) {
          const double ga = gi[a];
          if (ga == 0.0) continue;
          for (int64_t b = 0; b < c; ++b) {
            if (gw) wn->grad[(i * r + a) * c + b] += ga * xn->value[i * c + b];
            if (gx) xn->grad[i * c + b] += ga * wn->value[(i * r + a) * c + b];
          }
        }
      }
    });
  }
  return out;
}

Tensor scale_rows(Tape& t, const Tensor& x, const Tensor& s) {
  check(x.defined() && s.defined(), "scale_rows: undefined input");
  check(x.ndim() == 2 && s.ndim() == 1 && x.dim(0) == s.dim(0),
        "scale_rows: incompatible shapes " + shape_str(x.shape()) + " * " +
            shape_str(s.shape()));
  const int64_t n = x.dim(0), d = x.dim(1);
  Tensor out = Tensor::zeros({n, d});
  const auto xv = x.data(), sv = s.data();
  auto ov = out.mutable_data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) ov[i * d + j] = xv[i * d + j] * sv[i];
  if (want_grad(t, {&x, &s})) {
    out.node()->tracked = true;
    auto xn = x.node(), sn = s.node(), on = out.node();
    const bool gx = x.tracked(), gs = s.tracked();
    t.push("scale_rows", {xn, sn}, on, [xn, sn, on, n, d, gx, gs]() {
      if (gx) ensure_grad(*xn);
      if (gs) ensure_grad(*sn);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) {
          const double g = on->grad[i * d + j];
          if (gx) xn->grad[i * d + j] += g * sn->value[i];
          if (gs) sn->grad[i] += g * xn->value[i * d + j];
        }
    });
  }
  return out;
}

Tensor row_dot(Tape& t, const Tensor& a, const Tensor& b) {
  check(a.defined() && b.defined(), "row_dot: undefined input");
  check(a.ndim() == 2 && a.shape() == b.shape(),
        "row_dot: incompatible shapes " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  const int64_t n = a.dim(0), d = a.dim(1);
  Tensor out = Tensor::zeros({n});
  const auto av = a.data(), bv = b.data();
  auto ov = out.mutable_data();
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) s += av[i * d + j] * bv[i * d + j];
    ov[i] = s;
  }
  if (want_grad(t, {&a, &b})) {
    out.node()->tracked = true;
    auto an = a.node(), bn = b.node(), on = out.node();
    const bool ga = a.tracked(), gb = b.tracked();
    t.push("row_dot", {an, bn}, on, [an, bn, on, n, d, ga, gb]() {
      if (ga) ensure_grad(*an);
      if (gb) ensure_grad(*bn);
      for (int64_t i = 0; i < n; ++i) {
        const double g = on->grad[i];
        for (int64_t j = 0; j < d; ++j) {
          if (ga) an->grad[i * d + j] += g * bn->value[i * d + j];
          if (gb) bn->grad[i * d + j] += g * an->value[i * d + j];
        }
      }
    });
  }
  return out;
}

Tensor reshape(Tape& t, const Tensor& x, Shape shape) {
  check(x.defined(), "reshape: undefined input");
  check(shape_numel(shape) == x.numel(), "reshape: cannot view " + shape_str(x.shape()) +
                                             " as " + shape_str(shape));
  Tensor out = Tensor::zeros(shape);
  std::copy(x.data().begin(), x.data().end(), out.mutable_data().begin());
  if (want_grad(t, {&x})) {
    out.node()->tracked = true;
    auto xn = x.node(), on = out.node();
    t.push("reshape", {xn}, on, [xn, on]() {
      ensure_grad(*xn);
      for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor detach(const Tensor& x) {
  check(x.defined(), "detach: undefined input");
  return x.detached_copy();
}

namespace {

Tensor pointwise_loss(Tape& t, const char* op, const Tensor& pred, const Tensor& target,
                      bool absolute) {
  check(pred.defined() && target.defined(), std::string(op) + ": undefined input");
  check(pred.shape() == target.shape(), std::string(op) + ": shape mismatch " +
                                            shape_str(pred.shape()) + " vs " +
                                            shape_str(target.shape()));
  const auto pv = pred.data(), yv = target.data();
  const double n = static_cast<double>(std::max<int64_t>(pred.numel(), 1));
  double s = 0.0;
  for (size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - yv[i];
    s += absolute ? std::fabs(d) : d * d;
  }
  Tensor out = Tensor::scalar(s / n);
  if (want_grad(t, {&pred, &target})) {
    out.node()->tracked = true;
    auto pn = pred.node(), yn = target.node(), on = out.node();
    const bool gp = pred.tracked(), gy = target.tracked();
    t.push(op, {pn, yn}, on, [pn, yn, on, n, gp, gy, absolute]() {
      if (gp) ensure_grad(*pn);
      if (gy) ensure_grad(*yn);
      const double g = on->grad[0] / n;
      for (size_t i = 0; i < pn->value.size(); ++i) {
        const double d = pn->value[i] - yn->value[i];
        const double dd = absolute ? (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) : 2.0 * d;
        if (gp) pn->grad[i] += g * dd;
        if (gy) yn->grad[i] -= g * dd;
      }
    });
  }
  return out;
}

}  // namespace

Tensor mse_loss(Tape& t, const Tensor& pred, const Tensor& target) {
  return pointwise_loss(t, "mse_loss", pred, target, false);
}

Tensor mae_loss(Tape& t, const Tensor& pred, const Tensor& target) {
  return pointwise_loss(t, "mae_loss", pred, target, true);
}

Tensor ce_loss(Tape& t, const Tensor& logits, const Tensor& classes) {
  check(logits.defined() && classes.defined(), "ce_loss: undefined input");
  check(logits.ndim() == 2 && classes.ndim() == 1 && logits.dim(0) == classes.dim(0),
        "ce_loss: incompatible shapes " + shape_str(logits.shape()) + " with classes " +
            shape_str(classes.shape()));
  const int64_t n = logits.dim(0), c = logits.dim(1);
  std::vector<int64_t> cls(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double v = classes.data()[i];
    const int64_t k = std::llround(v);
    check(std::fabs(v - static_cast<double>(k)) < 1e-9 && k >= 0 && k < c,
          "ce_loss: class value " + std::to_string(v) + " at row " + std::to_string(i) +
              " is not an integer in [0, " + std::to_string(c) + ")");
    cls[static_cast<size_t>(i)] = k;
  }
  const auto lv = logits.data();
  // fused log-sum-exp so large logits cannot overflow
  std::vector<double> soft(static_cast<size_t>(n * c));
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < c; ++j) mx = std::max(mx, lv[i * c + j]);
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      soft[i * c + j] = std::exp(lv[i * c + j] - mx);
      s += soft[i * c + j];
    }
    for (int64_t j = 0; j < c; ++j) soft[i * c + j] /= s;
    total += mx + std::log(s) - lv[i * c + cls[static_cast<size_t>(i)]];
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  if (want_grad(t, {&logits})) {
    out.node()->tracked = true;
    auto ln = logits.node(), on = out.node();
    t.push("ce_loss", {ln}, on, [ln, on, soft, cls, n, c]() {
      ensure_grad(*ln);
      const double g = on->grad[0] / static_cast<double>(n);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) {
          const double one = j == cls[static_cast<size_t>(i)] ? 1.0 : 0.0;
          ln->grad[i * c + j] += g * (soft[i * c + j] - one);
        }
    });
  }
  return out;
}

Tensor forward_primitive(Tape& t, std::string_view op, std::span<const Tensor> inputs,
                         const PrimitiveArgs& args) {
  auto need = [&](size_t n) {
    check(inputs.size() == n, std::string(op) + ": expected " + std::to_string(n) +
                                  " inputs, got " + std::to_string(inputs.size()));
  };
  if (op == "matmul") { need(2); return matmul(t, inputs[0], inputs[1]); }
  if (op == "add") { need(2); return add(t, inputs[0], inputs[1]); }
  if (op == "sub") { need(2); return sub(t, inputs[0], inputs[1]); }
  if (op == "mul") { need(2); return mul(t, inputs[0], inputs[1]); }
  if (op == "scalar_mul") {
    need(1);
    check(args.floats.size() == 1, "scalar_mul: expected one float argument");
    return scalar_mul(t, inputs[0], args.floats[0]);
  }
  if (op == "add_bias") { need(2); return add_bias(t, inputs[0], inputs[1]); }
  if (op == "sigmoid") { need(1); return sigmoid(t, inputs[0]); }
  if (op == "tanh") { need(1); return tanh(t, inputs[0]); }
  if (op == "relu") { need(1); return relu(t, inputs[0]); }
  if (op == "concat_cols") { need(2); return concat_cols(t, inputs[0], inputs[1]); }
  if (op == "sum_all") { need(1); return sum_all(t, inputs[0]); }
  if (op == "mean_all") { need(1); return mean_all(t, inputs[0]); }
  if (op == "squared_l2") { need(1); return squared_l2(t, inputs[0]); }
  if (op == "softmax_rows") { need(1); return softmax_rows(t, inputs[0]); }
  if (op == "segment_softmax") {
    need(1);
    check(args.rows > 0, "segment_softmax: args.rows must carry the segment count");
    auto seg = to_i32(args.ints, "segment_softmax", args.rows);
    return segment_softmax(t, inputs[0], seg, args.rows);
  }
  if (op == "gather_rows") {
    need(1);
    auto idx = to_i32(args.ints, "gather_rows",
                      inputs[0].ndim() == 2 ? inputs[0].dim(0) : 0);
    return gather_rows(t, inputs[0], idx);
  }
  if (op == "scatter_add_rows") {
    need(1);
    check(args.rows >= 0, "scatter_add_rows: args.rows must carry the output row count");
    auto idx = to_i32(args.ints, "scatter_add_rows", args.rows);
    return scatter_add_rows(t, inputs[0], idx, args.rows);
  }
  if (op == "bmv") { need(2); return bmv(t, inputs[0], inputs[1]); }
  if (op == "scale_rows") { need(2); return scale_rows(t, inputs[0], inputs[1]); }
  if (op == "row_dot") { need(2); return row_dot(t, inputs[0], inputs[1]); }
  if (op == "reshape") { need(1); return reshape(t, inputs[0], args.shape); }
  if (op == "detach") { need(1); return detach(inputs[0]); }
  if (op == "mse_loss") { need(2); return mse_loss(t, inputs[0], inputs[1]); }
  if (op == "mae_loss") { need(2); return mae_loss(t, inputs[0], inputs[1]); }
  if (op == "ce_loss") { need(2); return ce_loss(t, inputs[0], inputs[1]); }
  throw Error(Errc::invalid_argument, "forward_primitive: unknown op '" + std::string(op) + "'");
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& fn,
                                  const Tensor& x, double h) {
  check(x.defined(), "finite_difference_gradient: undefined input");
  check(h > 0.0, "finite_difference_gradient: step must be positive");
  Tensor grad = Tensor::zeros(x.shape());
  auto gv = grad.mutable_data();
  for (int64_t i = 0; i < x.numel(); ++i) {
    Tensor hi = x.detached_copy();
    hi.mutable_data()[static_cast<size_t>(i)] += h;
    const double fp = fn(hi);
    Tensor lo = x.detached_copy();
    lo.mutable_data()[static_cast<size_t>(i)] -= h;
    const double fm = fn(lo);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw Error(Errc::nonfinite, "finite_difference_gradient: non-finite value at coordinate " +
                                       std::to_string(i));
    gv[static_cast<size_t>(i)] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace ignn::num
