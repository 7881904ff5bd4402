#include "gamekd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace gamekd {

using detail::NodePtr;
using detail::TensorNode;

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t shape_product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw InputError("tensor: non-positive dimension in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw InputError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2)
    throw InputError(std::string(op) + ": expected rank-2 tensor, got " +
                     shape_str(a.shape()));
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

} // namespace

// ---- Tensor ----------------------------------------------------------------

const NodePtr& Tensor::node() const {
  if (!node_) throw InputError("tensor: used before initialisation");
  return node_;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return from(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  std::size_t n = shape_product(shape);
  Tensor t;
  t.node_ = std::make_shared<TensorNode>();
  t.node_->shape = std::move(shape);
  t.node_->value.assign(n, v);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data,
                    bool requires_grad) {
  std::size_t n = shape_product(shape);
  if (data.empty()) data.assign(n, 0.0);
  if (data.size() != n)
    throw InputError("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  Tensor t;
  t.node_ = std::make_shared<TensorNode>();
  t.node_->shape = std::move(shape);
  t.node_->value = std::move(data);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

int Tensor::rows() const {
  require_rank2("rows", *this);
  return shape()[0];
}

int Tensor::cols() const {
  require_rank2("cols", *this);
  return shape()[1];
}

double Tensor::at(int r, int c) const {
  require_rank2("at", *this);
  return node()->value[static_cast<std::size_t>(r) * shape()[1] + c];
}

double Tensor::value() const {
  if (size() != 1)
    throw InputError("value: expected scalar, got " + shape_str(shape()));
  return node()->value[0];
}

Tensor Tensor::clone(bool requires_grad) const {
  return from(shape(), std::vector<double>(data().begin(), data().end()),
              requires_grad);
}

void Tensor::backward() const {
  const NodePtr& root = node();
  if (root->size() != 1)
    throw InputError("backward: loss must be scalar, got " + shape_str(root->shape));

  // Post-order over the recorded graph: parents first, so the reversed list
  // replays adjoints outputs-first.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* n;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get()});
  seen.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next++].get();
      if (seen.insert(p).second) stack.push_back({p});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

// Creates the output node; the adjoint closure and parent links are only
// recorded when some input is tracked, so untracked subgraphs cost nothing.
Tensor make_op(std::vector<int> shape, std::vector<double> value,
               std::vector<NodePtr> parents,
               std::function<void(TensorNode&)> fn) {
  Tensor t;
  t.node_ = std::make_shared<TensorNode>();
  t.node_->shape = std::move(shape);
  t.node_->value = std::move(value);
  bool track = false;
  for (const auto& p : parents)
    if (p->tracked()) track = true;
  if (track) {
    auto& keep = t.node_->parents;
    for (auto& p : parents)
      if (p->tracked()) keep.push_back(p);
    t.node_->backprop = std::move(fn);
  }
  return t;
}

namespace {

// Accumulate helper used by the closures below.
inline void add_into(const NodePtr& p, std::size_t i, double v) {
  p->grad[i] += v;
}

bool want(const NodePtr& p) {
  if (!p->tracked()) return false;
  p->ensure_grad();
  return true;
}

} // namespace

// ---- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", b);
  const bool vec = a.rank() == 1;
  const int m = vec ? 1 : a.shape()[0];
  const int k = vec ? a.shape()[0] : a.shape()[1];
  if (k != b.shape()[0])
    throw InputError("matmul: dimension mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const int n = b.shape()[1];

  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto av = a.data();
  const auto bv = b.data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[static_cast<std::size_t>(p) * n];
      double* crow = &out[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }

  auto pa = a.node_handle(), pb = b.node_handle();
  std::vector<int> shape = vec ? std::vector<int>{n} : std::vector<int>{m, n};
  return make_op(std::move(shape), std::move(out), {pa, pb},
                 [pa, pb, m, k, n](TensorNode& o) {
                   const auto& g = o.grad;
                   if (want(pa)) { // dA = dC·Bᵀ
                     for (int i = 0; i < m; ++i)
                       for (int p = 0; p < k; ++p) {
                         double s = 0.0;
                         const double* grow = &g[static_cast<std::size_t>(i) * n];
                         const double* brow = &pb->value[static_cast<std::size_t>(p) * n];
                         for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                         add_into(pa, static_cast<std::size_t>(i) * k + p, s);
                       }
                   }
                   if (want(pb)) { // dB = Aᵀ·dC
                     for (int i = 0; i < m; ++i)
                       for (int p = 0; p < k; ++p) {
                         const double aip = pa->value[static_cast<std::size_t>(i) * k + p];
                         if (aip == 0.0) continue;
                         const double* grow = &g[static_cast<std::size_t>(i) * n];
                         double* brow = &pb->grad[static_cast<std::size_t>(p) * n];
                         for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
                       }
                   }
                 });
}

Tensor transpose(const Tensor& a) {
  require_rank2("transpose", a);
  const int m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(a.size());
  const auto av = a.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];
  auto pa = a.node_handle();
  return make_op({n, m}, std::move(out), {pa}, [pa, m, n](TensorNode& o) {
    if (!want(pa)) return;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i)
        pa->grad[static_cast<std::size_t>(i) * n + j] +=
            o.grad[static_cast<std::size_t>(j) * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto pa = a.node_handle(), pb = b.node_handle();
  return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb](TensorNode& o) {
    if (want(pa))
      for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
    if (want(pb))
      for (std::size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] += o.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto pa = a.node_handle(), pb = b.node_handle();
  return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb](TensorNode& o) {
    if (want(pa))
      for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
    if (want(pb))
      for (std::size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] -= o.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto pa = a.node_handle(), pb = b.node_handle();
  return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb](TensorNode& o) {
    if (want(pa))
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        pa->grad[i] += o.grad[i] * pb->value[i];
    if (want(pb))
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        pb->grad[i] += o.grad[i] * pa->value[i];
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  auto pa = a.node_handle(), pb = b.node_handle();
  return make_op(a.shape(), std::move(out), {pa, pb}, [pa, pb](TensorNode& o) {
    if (want(pa))
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        pa->grad[i] += o.grad[i] / pb->value[i];
    if (want(pb))
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        pb->grad[i] -= o.grad[i] * pa->value[i] / (pb->value[i] * pb->value[i]);
  });
}

Tensor add_row(const Tensor& m, const Tensor& row) {
  require_rank2("add_row", m);
  if (row.rank() != 1 || row.shape()[0] != m.shape()[1])
    throw InputError("add_row: shape mismatch " + shape_str(m.shape()) + " vs " +
                     shape_str(row.shape()));
  const int s = m.shape()[0], d = m.shape()[1];
  std::vector<double> out(m.size());
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i) * d + j] =
          m.data()[static_cast<std::size_t>(i) * d + j] + row.data()[j];
  auto pm = m.node_handle(), pr = row.node_handle();
  return make_op(m.shape(), std::move(out), {pm, pr}, [pm, pr, s, d](TensorNode& o) {
    if (want(pm))
      for (std::size_t i = 0; i < o.grad.size(); ++i) pm->grad[i] += o.grad[i];
    if (want(pr))
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < d; ++j)
          pr->grad[j] += o.grad[static_cast<std::size_t>(i) * d + j];
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  auto pa = a.node_handle();
  return make_op(a.shape(), std::move(out), {pa}, [pa, c](TensorNode& o) {
    if (!want(pa)) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i] * c;
  });
}

Tensor add_const(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
  auto pa = a.node_handle();
  return make_op(a.shape(), std::move(out), {pa}, [pa](TensorNode& o) {
    if (!want(pa)) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
  });
}

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.data()[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  auto pa = a.node_handle();
  return make_op(a.shape(), std::move(out), {pa}, [pa](TensorNode& o) {
    if (!want(pa)) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double x = pa->value[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      pa->grad[i] += o.grad[i] * (cdf + x * pdf);
    }
  });
}

Tensor softmax(const Tensor& a) {
  if (a.rank() != 1 && a.rank() != 2)
    throw InputError("softmax: expected rank 1 or 2, got " + shape_str(a.shape()));
  const int rows = a.rank() == 2 ? a.shape()[0] : 1;
  const int n = a.rank() == 2 ? a.shape()[1] : a.shape()[0];
  std::vector<double> out(a.size());
  for (int r = 0; r < rows; ++r) {
    const double* x = &a.data()[static_cast<std::size_t>(r) * n];
    double* y = &out[static_cast<std::size_t>(r) * n];
    double mx = x[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    for (int j = 0; j < n; ++j) y[j] /= total;
  }
  auto pa = a.node_handle();
  return make_op(a.shape(), std::move(out), {pa}, [pa, rows, n](TensorNode& o) {
    if (!want(pa)) return;
    for (int r = 0; r < rows; ++r) {
      const double* y = &o.value[static_cast<std::size_t>(r) * n];
      const double* gy = &o.grad[static_cast<std::size_t>(r) * n];
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += gy[j] * y[j];
      double* gx = &pa->grad[static_cast<std::size_t>(r) * n];
      for (int j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_rank2("layer_norm", x);
  const int s = x.shape()[0], d = x.shape()[1];
  if (gain.rank() != 1 || gain.shape()[0] != d || bias.rank() != 1 ||
      bias.shape()[0] != d)
    throw InputError("layer_norm: gain/bias shape mismatch with " + shape_str(x.shape()));

  std::vector<double> out(x.size());
  std::vector<double> inv_sigma(s), mean(s);
  for (int i = 0; i < s; ++i) {
    const double* row = &x.data()[static_cast<std::size_t>(i) * d];
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    mean[i] = mu;
    inv_sigma[i] = inv;
    double* y = &out[static_cast<std::size_t>(i) * d];
    for (int j = 0; j < d; ++j)
      y[j] = (row[j] - mu) * inv * gain.data()[j] + bias.data()[j];
  }

  auto px = x.node_handle(), pg = gain.node_handle(), pb = bias.node_handle();
  return make_op(x.shape(), std::move(out), {px, pg, pb},
                 [px, pg, pb, s, d, mean, inv_sigma](TensorNode& o) {
                   const bool wx = want(px), wg = want(pg), wb = want(pb);
                   for (int i = 0; i < s; ++i) {
                     const double* row = &px->value[static_cast<std::size_t>(i) * d];
                     const double* gy = &o.grad[static_cast<std::size_t>(i) * d];
                     const double inv = inv_sigma[i];
                     const double mu = mean[i];
                     double sum_gxhat = 0.0, sum_gxhat_xhat = 0.0;
                     for (int j = 0; j < d; ++j) {
                       const double xhat = (row[j] - mu) * inv;
                       const double gxhat = gy[j] * pg->value[j];
                       sum_gxhat += gxhat;
                       sum_gxhat_xhat += gxhat * xhat;
                       if (wg) pg->grad[j] += gy[j] * xhat;
                       if (wb) pb->grad[j] += gy[j];
                     }
                     if (wx) {
                       double* gx = &px->grad[static_cast<std::size_t>(i) * d];
                       for (int j = 0; j < d; ++j) {
                         const double xhat = (row[j] - mu) * inv;
                         const double gxhat = gy[j] * pg->value[j];
                         gx[j] += inv * (gxhat - sum_gxhat / d - xhat * sum_gxhat_xhat / d);
                       }
                     }
                   }
                 });
}

namespace {

// Row-stable log-softmax into `out`; returns nothing. Used by cross_entropy.
void log_softmax_rows(std::span<const double> x, int rows, int n,
                      std::vector<double>& out) {
  out.resize(static_cast<std::size_t>(rows) * n);
  for (int r = 0; r < rows; ++r) {
    const double* xr = &x[static_cast<std::size_t>(r) * n];
    double* yr = &out[static_cast<std::size_t>(r) * n];
    double mx = xr[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double total = 0.0;
    for (int j = 0; j < n; ++j) total += std::exp(xr[j] - mx);
    const double lse = mx + std::log(total);
    for (int j = 0; j < n; ++j) yr[j] = xr[j] - lse;
  }
}

} // namespace

Tensor cross_entropy(const Tensor& logits, const Tensor& target_probs) {
  if (logits.shape() != target_probs.shape())
    throw InputError("cross_entropy: shape mismatch " + shape_str(logits.shape()) +
                     " vs " + shape_str(target_probs.shape()));
  if (logits.rank() != 1 && logits.rank() != 2)
    throw InputError("cross_entropy: expected rank 1 or 2, got " +
                     shape_str(logits.shape()));
  const int rows = logits.rank() == 2 ? logits.shape()[0] : 1;
  const int n = logits.rank() == 2 ? logits.shape()[1] : logits.shape()[0];
  if (n < 1) throw InputError("cross_entropy: empty class axis");

  for (int r = 0; r < rows; ++r) {
    double rowsum = 0.0;
    for (int j = 0; j < n; ++j)
      rowsum += target_probs.data()[static_cast<std::size_t>(r) * n + j];
    if (std::abs(rowsum - 1.0) > 1e-6)
      throw InputError("cross_entropy: invalid target row " + std::to_string(r) +
                       " sums to " + std::to_string(rowsum));
  }

  std::vector<double> lsm;
  log_softmax_rows(logits.data(), rows, n, lsm);
  double loss = 0.0;
  for (std::size_t i = 0; i < lsm.size(); ++i)
    loss -= target_probs.data()[i] * lsm[i];
  loss /= rows;

  auto pl = logits.node_handle(), pt = target_probs.node_handle();
  return make_op({1}, {loss}, {pl, pt}, [pl, pt, rows, n](TensorNode& o) {
    const double g = o.grad[0] / rows;
    std::vector<double> lsm;
    log_softmax_rows(pl->value, rows, n, lsm);
    const bool wl = want(pl), wt = want(pt);
    for (int r = 0; r < rows; ++r) {
      const std::size_t off = static_cast<std::size_t>(r) * n;
      double tsum = 0.0;
      for (int j = 0; j < n; ++j) tsum += pt->value[off + j];
      for (int j = 0; j < n; ++j) {
        if (wl)
          pl->grad[off + j] += g * (std::exp(lsm[off + j]) * tsum - pt->value[off + j]);
        if (wt) pt->grad[off + j] -= g * lsm[off + j];
      }
    }
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape("mse", a, b);
  const std::size_t n = a.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.data()[i] - b.data()[i];
    loss += d * d;
  }
  loss /= static_cast<double>(n);
  auto pa = a.node_handle(), pb = b.node_handle();
  return make_op({1}, {loss}, {pa, pb}, [pa, pb, n](TensorNode& o) {
    const double g = 2.0 * o.grad[0] / static_cast<double>(n);
    const bool wa = want(pa), wb = want(pb);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = g * (pa->value[i] - pb->value[i]);
      if (wa) pa->grad[i] += d;
      if (wb) pb->grad[i] -= d;
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  auto pa = a.node_handle();
  return make_op({1}, {total}, {pa}, [pa](TensorNode& o) {
    if (!want(pa)) return;
    for (double& g : pa->grad) g += o.grad[0];
  });
}

Tensor mean_rows(const Tensor& a) {
  require_rank2("mean_rows", a);
  const int s = a.shape()[0], d = a.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < d; ++j) out[j] += a.data()[static_cast<std::size_t>(i) * d + j];
  for (int j = 0; j < d; ++j) out[j] /= s;
  auto pa = a.node_handle();
  return make_op({d}, std::move(out), {pa}, [pa, s, d](TensorNode& o) {
    if (!want(pa)) return;
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < d; ++j)
        pa->grad[static_cast<std::size_t>(i) * d + j] += o.grad[j] / s;
  });
}

Tensor take_row(const Tensor& a, int r) {
  require_rank2("take_row", a);
  const int s = a.shape()[0], d = a.shape()[1];
  if (r < 0 || r >= s)
    throw InputError("take_row: row " + std::to_string(r) + " out of range for " +
                     shape_str(a.shape()));
  std::vector<double> out(a.data().begin() + static_cast<std::size_t>(r) * d,
                          a.data().begin() + static_cast<std::size_t>(r + 1) * d);
  auto pa = a.node_handle();
  return make_op({d}, std::move(out), {pa}, [pa, r, d](TensorNode& o) {
    if (!want(pa)) return;
    for (int j = 0; j < d; ++j)
      pa->grad[static_cast<std::size_t>(r) * d + j] += o.grad[j];
  });
}

Tensor take_rows(const Tensor& a, std::span<const int> idx) {
  require_rank2("take_rows", a);
  const int s = a.shape()[0], d = a.shape()[1];
  std::vector<double> out;
  out.reserve(idx.size() * d);
  for (int r : idx) {
    if (r < 0 || r >= s)
      throw InputError("take_rows: row " + std::to_string(r) + " out of range for " +
                       shape_str(a.shape()));
    out.insert(out.end(), a.data().begin() + static_cast<std::size_t>(r) * d,
               a.data().begin() + static_cast<std::size_t>(r + 1) * d);
  }
  std::vector<int> rows(idx.begin(), idx.end());
  auto pa = a.node_handle();
  const int m = static_cast<int>(rows.size());
  return make_op({m, d}, std::move(out), {pa},
                 [pa, rows = std::move(rows), d](TensorNode& o) {
                   if (!want(pa)) return;
                   for (std::size_t i = 0; i < rows.size(); ++i)
                     for (int j = 0; j < d; ++j)
                       pa->grad[static_cast<std::size_t>(rows[i]) * d + j] +=
                           o.grad[i * d + j];
                 });
}

Tensor slice_rows(const Tensor& a, int start, int n) {
  require_rank2("slice_rows", a);
  const int s = a.shape()[0], d = a.shape()[1];
  if (start < 0 || n < 1 || start + n > s)
    throw InputError("slice_rows: range [" + std::to_string(start) + ", " +
                     std::to_string(start + n) + ") out of bounds for " +
                     shape_str(a.shape()));
  std::vector<double> out(a.data().begin() + static_cast<std::size_t>(start) * d,
                          a.data().begin() + static_cast<std::size_t>(start + n) * d);
  auto pa = a.node_handle();
  return make_op({n, d}, std::move(out), {pa}, [pa, start, n, d](TensorNode& o) {
    if (!want(pa)) return;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        pa->grad[static_cast<std::size_t>(start + i) * d + j] +=
            o.grad[static_cast<std::size_t>(i) * d + j];
  });
}

Tensor slice_cols(const Tensor& a, int start, int n) {
  require_rank2("slice_cols", a);
  const int s = a.shape()[0], d = a.shape()[1];
  if (start < 0 || n < 1 || start + n > d)
    throw InputError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + n) + ") out of bounds for " +
                     shape_str(a.shape()));
  std::vector<double> out(static_cast<std::size_t>(s) * n);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(i) * n + j] =
          a.data()[static_cast<std::size_t>(i) * d + start + j];
  auto pa = a.node_handle();
  return make_op({s, n}, std::move(out), {pa}, [pa, s, d, start, n](TensorNode& o) {
    if (!want(pa)) return;
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < n; ++j)
        pa->grad[static_cast<std::size_t>(i) * d + start + j] +=
            o.grad[static_cast<std::size_t>(i) * n + j];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw InputError("concat_cols: no parts");
  const int s = parts[0].shape()[0];
  int total = 0;
  for (const Tensor& p : parts) {
    require_rank2("concat_cols", p);
    if (p.shape()[0] != s)
      throw InputError("concat_cols: row mismatch " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(p.shape()));
    total += p.shape()[1];
  }
  std::vector<double> out(static_cast<std::size_t>(s) * total);
  int off = 0;
  for (const Tensor& p : parts) {
    const int w = p.shape()[1];
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < w; ++j)
        out[static_cast<std::size_t>(i) * total + off + j] =
            p.data()[static_cast<std::size_t>(i) * w + j];
    off += w;
  }
  std::vector<NodePtr> nodes;
  std::vector<int> widths;
  for (const Tensor& p : parts) {
    nodes.push_back(p.node_handle());
    widths.push_back(p.shape()[1]);
  }
  return make_op({s, total}, std::move(out), nodes,
                 [nodes, widths, s, total](TensorNode& o) {
                   int off = 0;
                   for (std::size_t k = 0; k < nodes.size(); ++k) {
                     const int w = widths[k];
                     if (want(nodes[k])) {
                       for (int i = 0; i < s; ++i)
                         for (int j = 0; j < w; ++j)
                           nodes[k]->grad[static_cast<std::size_t>(i) * w + j] +=
                               o.grad[static_cast<std::size_t>(i) * total + off + j];
                     }
                     off += w;
                   }
                 });
}

Tensor one_hot(int index, int classes) {
  if (index < 0 || index >= classes)
    throw InputError("one_hot: class id " + std::to_string(index) +
                     " out of range for " + std::to_string(classes) + " classes");
  std::vector<double> v(static_cast<std::size_t>(classes), 0.0);
  v[static_cast<std::size_t>(index)] = 1.0;
  return Tensor::from({classes}, std::move(v));
}

// ---- finite-difference oracle ------------------------------------------------

double grad_check(const std::function<Tensor()>& f, std::span<Tensor> inputs,
                  double h) {
  for (Tensor& t : inputs) t.zero_grad();

  Tensor loss = f();
  if (!std::isfinite(loss.value()))
    throw NumericError("grad_check: non-finite loss value");
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (Tensor& t : inputs) {
    if (t.requires_grad() && t.has_grad())
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    else
      analytic.emplace_back(t.size(), 0.0);
  }

  double max_rel = 0.0;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    if (!t.requires_grad()) continue; // frozen inputs are excluded
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + h;
      const double up = f().value();
      t.data()[i] = saved - h;
      const double down = f().value();
      t.data()[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("grad_check: non-finite value during perturbation");
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[ti][i];
      if (!std::isfinite(a) || !std::isfinite(numeric))
        throw NumericError("grad_check: non-finite gradient");
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

} // namespace gamekd
