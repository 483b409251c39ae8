#include "czsl/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace czsl {

namespace {

idx_t product(const std::vector<idx_t>& shape) {
  idx_t n = 1;
  for (idx_t d : shape) n *= d;
  return n;
}

void ensure_grad(detail::TensorNode& n) {
  if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.defined() && t.shape().size() == 2) return;
  fail(ErrorKind::shape, op, ": expected a rank-2 tensor, got shape ",
       t.defined() ? shape_str(t.shape()) : "<undefined>");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.defined() && b.defined() && a.shape() == b.shape()) return;
  fail(ErrorKind::shape, op, ": shapes disagree: ",
       a.defined() ? shape_str(a.shape()) : "<undefined>", " vs ",
       b.defined() ? shape_str(b.shape()) : "<undefined>");
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

std::string shape_str(const std::vector<idx_t>& shape) {
  if (shape.empty()) return "scalar";
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s;
}

Tensor Tensor::zeros(std::vector<idx_t> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<idx_t> shape, double value, bool requires_grad) {
  for (idx_t d : shape)
    if (d <= 0)
      fail(ErrorKind::shape, "tensor dimensions must be positive, got ",
           shape_str(shape));
  auto n = std::make_shared<detail::TensorNode>();
  n->values.assign(static_cast<std::size_t>(product(shape)), value);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(std::vector<idx_t> shape, std::vector<double> values,
                    bool requires_grad) {
  for (idx_t d : shape)
    if (d <= 0)
      fail(ErrorKind::shape, "tensor dimensions must be positive, got ",
           shape_str(shape));
  if (static_cast<idx_t>(values.size()) != product(shape))
    fail(ErrorKind::shape, "value count ", values.size(),
         " does not match shape ", shape_str(shape));
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const std::vector<idx_t>& Tensor::shape() const {
  check(defined(), ErrorKind::contract, "use of an undefined tensor");
  return node_->shape;
}

idx_t Tensor::rows() const {
  require_rank2(*this, "rows");
  return node_->shape[0];
}

idx_t Tensor::cols() const {
  require_rank2(*this, "cols");
  return node_->shape[1];
}

idx_t Tensor::numel() const {
  check(defined(), ErrorKind::contract, "use of an undefined tensor");
  return static_cast<idx_t>(node_->values.size());
}

const std::vector<double>& Tensor::values() const {
  check(defined(), ErrorKind::contract, "use of an undefined tensor");
  return node_->values;
}

double Tensor::item() const {
  check(numel() == 1, ErrorKind::contract, "item() needs numel==1, got shape ",
        shape_str(shape()));
  return node_->values[0];
}

double Tensor::at(idx_t r, idx_t c) const {
  require_rank2(*this, "at");
  return node_->values[static_cast<std::size_t>(r * cols() + c)];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

void Tensor::set_requires_grad(bool v) {
  check(defined(), ErrorKind::contract, "use of an undefined tensor");
  node_->requires_grad = v;
}

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  check(has_grad(), ErrorKind::state, "tensor has no gradient; run backward");
  return node_->grad;
}

void Tensor::clear_grad() {
  if (defined()) node_->grad.clear();
}

std::vector<double>& Tensor::raw_values() {
  check(defined(), ErrorKind::contract, "use of an undefined tensor");
  return node_->values;
}

Tensor Tensor::detached_copy() const {
  check(defined(), ErrorKind::contract, "use of an undefined tensor");
  return Tensor::from(node_->shape, node_->values, false);
}

void Tape::backward(const Tensor& loss) {
  check(loss.defined() && loss.numel() == 1, ErrorKind::contract,
        "backward expects a scalar loss, got shape ",
        loss.defined() ? shape_str(loss.shape()) : "<undefined>");
  check(!consumed_, ErrorKind::state,
        "tape already consumed by backward; reset() before reuse");
  auto ln = loss.node();
  ln->grad.assign(1, 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  consumed_ = true;
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

namespace {

bool track(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  Tensor result = Tensor::from(a.shape(), std::move(out));
  if (track(tape, {&a, &b})) {
    result.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = result.node();
    tape->push([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        ensure_grad(*an);
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        ensure_grad(*bn);
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          bn->grad[i] += on->grad[i];
      }
    });
  }
  return result;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  Tensor result = Tensor::from(a.shape(), std::move(out));
  if (track(tape, {&a, &b})) {
    result.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = result.node();
    tape->push([an, bn, on] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        ensure_grad(*an);
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          an->grad[i] += on->grad[i] * bn->values[i];
      }
      if (bn->requires_grad) {
        ensure_grad(*bn);
        for (std::size_t i = 0; i < on->grad.size(); ++i)
          bn->grad[i] += on->grad[i] * an->values[i];
      }
    });
  }
  return result;
}

Tensor scale(Tape* tape, const Tensor& a, double c) {
  check(a.defined(), ErrorKind::contract, "scale: undefined tensor");
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
  Tensor result = Tensor::from(a.shape(), std::move(out));
  if (track(tape, {&a})) {
    result.set_requires_grad(true);
    auto an = a.node(), on = result.node();
    tape->push([an, on, c] {
      if (on->grad.empty() || !an->requires_grad) return;
      ensure_grad(*an);
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += c * on->grad[i];
    });
  }
  return result;
}

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows())
    fail(ErrorKind::shape, "matmul: inner dimensions disagree: ",
         shape_str(a.shape()), " vs ", shape_str(b.shape()));
  const idx_t m = a.rows(), k = a.cols(), n = b.cols();
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  for (idx_t i = 0; i < m; ++i) {
    for (idx_t p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i * k + p)];
      const double* brow = &bv[static_cast<std::size_t>(p * n)];
      double* orow = &out[static_cast<std::size_t>(i * n)];
      for (idx_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  Tensor result = Tensor::from({m, n}, std::move(out));
  if (track(tape, {&a, &b})) {
    result.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = result.node();
    tape->push([an, bn, on, m, k, n] {
      if (on->grad.empty()) return;
      const auto& go = on->grad;
      if (an->requires_grad) {
        ensure_grad(*an);
        // dA = dOut * B^T
        for (idx_t i = 0; i < m; ++i) {
          for (idx_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = &go[static_cast<std::size_t>(i * n)];
            const double* brow = &bn->values[static_cast<std::size_t>(p * n)];
            for (idx_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            an->grad[static_cast<std::size_t>(i * k + p)] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        ensure_grad(*bn);
        // dB = A^T * dOut
        for (idx_t i = 0; i < m; ++i) {
          const double* grow = &go[static_cast<std::size_t>(i * n)];
          for (idx_t p = 0; p < k; ++p) {
            const double aip = an->values[static_cast<std::size_t>(i * k + p)];
            double* brow = &bn->grad[static_cast<std::size_t>(p * n)];
            for (idx_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
          }
        }
      }
    });
  }
  return result;
}

Tensor transpose(Tape* tape, const Tensor& a) {
  require_rank2(a, "transpose");
  const idx_t m = a.rows(), n = a.cols();
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (idx_t i = 0; i < m; ++i)
    for (idx_t j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j * m + i)] =
          av[static_cast<std::size_t>(i * n + j)];
  Tensor result = Tensor::from({n, m}, std::move(out));
  if (track(tape, {&a})) {
    result.set_requires_grad(true);
    auto an = a.node(), on = result.node();
    tape->push([an, on, m, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      ensure_grad(*an);
      for (idx_t i = 0; i < m; ++i)
        for (idx_t j = 0; j < n; ++j)
          an->grad[static_cast<std::size_t>(i * n + j)] +=
              on->grad[static_cast<std::size_t>(j * m + i)];
    });
  }
  return result;
}

Tensor sum(Tape* tape, const Tensor& a) {
  check(a.defined(), ErrorKind::contract, "sum: undefined tensor");
  double total = 0.0;
  for (double v : a.values()) total += v;
  Tensor result = Tensor::scalar(total);
  if (track(tape, {&a})) {
    result.set_requires_grad(true);
    auto an = a.node(), on = result.node();
    tape->push([an, on] {
      if (on->grad.empty() || !an->requires_grad) return;
      ensure_grad(*an);
      const double g = on->grad[0];
      for (double& gi : an->grad) gi += g;
    });
  }
  return result;
}

Tensor slice_rows(Tape* tape, const Tensor& a, idx_t start, idx_t len) {
  require_rank2(a, "slice_rows");
  if (start < 0 || len <= 0 || start + len > a.rows())
    fail(ErrorKind::index, "slice_rows: rows [", start, ", ", start + len,
         ") out of range for ", shape_str(a.shape()));
  const idx_t n = a.cols();
  const auto& av = a.values();
  std::vector<double> out(static_cast<std::size_t>(len * n));
  std::copy(av.begin() + start * n, av.begin() + (start + len) * n,
            out.begin());
  Tensor result = Tensor::from({len, n}, std::move(out));
  if (track(tape, {&a})) {
    result.set_requires_grad(true);
    auto an = a.node(), on = result.node();
    tape->push([an, on, start, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      ensure_grad(*an);
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        an->grad[static_cast<std::size_t>(start * n) + i] += on->grad[i];
    });
  }
  return result;
}

Tensor concat_rows(Tape* tape, const std::vector<Tensor>& parts) {
  check(!parts.empty(), ErrorKind::contract, "concat_rows: no parts");
  const idx_t n = parts.front().cols();
  idx_t total_rows = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != n)
      fail(ErrorKind::shape, "concat_rows: column mismatch: ",
           shape_str(p.shape()), " expected cols ", n);
    total_rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total_rows * n));
  for (const Tensor& p : parts)
    out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor result = Tensor::from({total_rows, n}, std::move(out));
  bool any = false;
  for (const Tensor& p : parts)
    if (p.requires_grad()) any = true;
  if (tape && any) {
    result.set_requires_grad(true);
    std::vector<std::shared_ptr<detail::TensorNode>> ins;
    ins.reserve(parts.size());
    for (const Tensor& p : parts) ins.push_back(p.node());
    auto on = result.node();
    tape->push([ins, on] {
      if (on->grad.empty()) return;
      std::size_t offset = 0;
      for (const auto& in : ins) {
        const std::size_t sz = in->values.size();
        if (in->requires_grad) {
          ensure_grad(*in);
          for (std::size_t i = 0; i < sz; ++i)
            in->grad[i] += on->grad[offset + i];
        }
        offset += sz;
      }
    });
  }
  return result;
}

Tensor embedding_lookup(Tape* tape, const Tensor& table,
                        const std::vector<idx_t>& indices) {
  require_rank2(table, "embedding_lookup");
  check(!indices.empty(), ErrorKind::contract,
        "embedding_lookup: empty index list");
  const idx_t v = table.rows(), d = table.cols();
  for (idx_t idx : indices)
    check(idx >= 0 && idx < v, ErrorKind::index, "embedding_lookup: index ",
          idx, " out of range [0, ", v, ")");
  const auto& tv = table.values();
  std::vector<double> out;
  out.reserve(indices.size() * static_cast<std::size_t>(d));
  for (idx_t idx : indices)
    out.insert(out.end(), tv.begin() + idx * d, tv.begin() + (idx + 1) * d);
  Tensor result =
      Tensor::from({static_cast<idx_t>(indices.size()), d}, std::move(out));
  if (track(tape, {&table})) {
    result.set_requires_grad(true);
    auto tn = table.node(), on = result.node();
    auto idxs = indices;
    tape->push([tn, on, idxs, d] {
      if (on->grad.empty() || !tn->requires_grad) return;
      ensure_grad(*tn);
      for (std::size_t j = 0; j < idxs.size(); ++j) {
        const std::size_t src = j * static_cast<std::size_t>(d);
        const std::size_t dst = static_cast<std::size_t>(idxs[j] * d);
        for (idx_t c = 0; c < d; ++c) tn->grad[dst + c] += on->grad[src + c];
      }
    });
  }
  return result;
}

Tensor softmax_rows(Tape* tape, const Tensor& a) {
  require_rank2(a, "softmax_rows");
  const idx_t m = a.rows(), n = a.cols();
  const auto& av = a.values();
  for (double x : av)
    check(!std::isnan(x) && x != std::numeric_limits<double>::infinity(),
          ErrorKind::contract,
          "softmax_rows: entries must be finite or -inf");
  std::vector<double> out(av.size());
  for (idx_t i = 0; i < m; ++i) {
    const double* row = &av[static_cast<std::size_t>(i * n)];
    double* orow = &out[static_cast<std::size_t>(i * n)];
    double mx = kNegInf;
    for (idx_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
    check(mx != kNegInf, ErrorKind::degenerate,
          "softmax_rows: row ", i, " is entirely masked (-inf)");
    double z = 0.0;
    for (idx_t j = 0; j < n; ++j) {
      orow[j] = row[j] == kNegInf ? 0.0 : std::exp(row[j] - mx);
      z += orow[j];
    }
    for (idx_t j = 0; j < n; ++j) orow[j] /= z;
  }
  Tensor result = Tensor::from(a.shape(), std::move(out));
  if (track(tape, {&a})) {
    result.set_requires_grad(true);
    auto an = a.node(), on = result.node();
    tape->push([an, on, m, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      ensure_grad(*an);
      for (idx_t i = 0; i < m; ++i) {
        const double* p = &on->values[static_cast<std::size_t>(i * n)];
        const double* go = &on->grad[static_cast<std::size_t>(i * n)];
        double dot = 0.0;
        for (idx_t j = 0; j < n; ++j) dot += p[j] * go[j];
        double* ga = &an->grad[static_cast<std::size_t>(i * n)];
        for (idx_t j = 0; j < n; ++j) ga[j] += p[j] * (go[j] - dot);
      }
    });
  }
  return result;
}

Tensor l2_normalize_rows(Tape* tape, const Tensor& a) {
  require_rank2(a, "l2_normalize_rows");
  const idx_t m = a.rows(), n = a.cols();
  const auto& av = a.values();
  std::vector<double> out(av.size());
  std::vector<double> norms(static_cast<std::size_t>(m));
  for (idx_t i = 0; i < m; ++i) {
    const double* row = &av[static_cast<std::size_t>(i * n)];
    double sq = 0.0;
    for (idx_t j = 0; j < n; ++j) sq += row[j] * row[j];
    const double norm = std::sqrt(sq);
    check(norm >= 1e-12, ErrorKind::degenerate,
          "l2_normalize_rows: row ", i, " has near-zero norm ", norm);
    norms[static_cast<std::size_t>(i)] = norm;
    double* orow = &out[static_cast<std::size_t>(i * n)];
    for (idx_t j = 0; j < n; ++j) orow[j] = row[j] / norm;
  }
  Tensor result = Tensor::from(a.shape(), std::move(out));
  if (track(tape, {&a})) {
    result.set_requires_grad(true);
    auto an = a.node(), on = result.node();
    tape->push([an, on, norms, m, n] {
      if (on->grad.empty() || !an->requires_grad) return;
      ensure_grad(*an);
      for (idx_t i = 0; i < m; ++i) {
        const double* y = &on->values[static_cast<std::size_t>(i * n)];
        const double* go = &on->grad[static_cast<std::size_t>(i * n)];
        double dot = 0.0;
        for (idx_t j = 0; j < n; ++j) dot += go[j] * y[j];
        const double inv = 1.0 / norms[static_cast<std::size_t>(i)];
        double* ga = &an->grad[static_cast<std::size_t>(i * n)];
        for (idx_t j = 0; j < n; ++j) ga[j] += (go[j] - dot * y[j]) * inv;
      }
    });
  }
  return result;
}

Tensor layer_norm_rows(Tape* tape, const Tensor& x, const Tensor& gain,
                       const Tensor& bias, double eps) {
  require_rank2(x, "layer_norm_rows");
  const idx_t m = x.rows(), n = x.cols();
  check(gain.defined() && bias.defined() && gain.numel() == n &&
            bias.numel() == n,
        ErrorKind::shape, "layer_norm_rows: gain/bias must have ", n,
        " entries");
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  std::vector<double> out(xv.size());
  std::vector<double> inv_std(static_cast<std::size_t>(m));
  std::vector<double> xhat(xv.size());
  for (idx_t i = 0; i < m; ++i) {
    const double* row = &xv[static_cast<std::size_t>(i * n)];
    double mean = 0.0;
    for (idx_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (idx_t j = 0; j < n; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    for (idx_t j = 0; j < n; ++j) {
      const std::size_t k = static_cast<std::size_t>(i * n + j);
      xhat[k] = (row[j] - mean) * is;
      out[k] = xhat[k] * gv[static_cast<std::size_t>(j)] +
               bv[static_cast<std::size_t>(j)];
    }
  }
  Tensor result = Tensor::from(x.shape(), std::move(out));
  if (track(tape, {&x, &gain, &bias})) {
    result.set_requires_grad(true);
    auto xn = x.node(), gn = gain.node(), bn = bias.node(), on = result.node();
    tape->push([xn, gn, bn, on, xhat, inv_std, m, n] {
      if (on->grad.empty()) return;
      const auto& go = on->grad;
      if (xn->requires_grad) {
        ensure_grad(*xn);
        for (idx_t i = 0; i < m; ++i) {
          const std::size_t base = static_cast<std::size_t>(i * n);
          double mean_h = 0.0, mean_hx = 0.0;
          for (idx_t j = 0; j < n; ++j) {
            const double h = go[base + j] * gn->values[static_cast<std::size_t>(j)];
            mean_h += h;
            mean_hx += h * xhat[base + j];
          }
          mean_h /= static_cast<double>(n);
          mean_hx /= static_cast<double>(n);
          const double is = inv_std[static_cast<std::size_t>(i)];
          for (idx_t j = 0; j < n; ++j) {
            const double h = go[base + j] * gn->values[static_cast<std::size_t>(j)];
            xn->grad[base + j] += (h - mean_h - xhat[base + j] * mean_hx) * is;
          }
        }
      }
      if (gn->requires_grad) {
        ensure_grad(*gn);
        for (idx_t i = 0; i < m; ++i)
          for (idx_t j = 0; j < n; ++j)
            gn->grad[static_cast<std::size_t>(j)] +=
                go[static_cast<std::size_t>(i * n + j)] *
                xhat[static_cast<std::size_t>(i * n + j)];
      }
      if (bn->requires_grad) {
        ensure_grad(*bn);
        for (idx_t i = 0; i < m; ++i)
          for (idx_t j = 0; j < n; ++j)
            bn->grad[static_cast<std::size_t>(j)] +=
                go[static_cast<std::size_t>(i * n + j)];
      }
    });
  }
  return result;
}

Tensor gelu(Tape* tape, const Tensor& a) {
  check(a.defined(), ErrorKind::contract, "gelu: undefined tensor");
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  Tensor result = Tensor::from(a.shape(), std::move(out));
  if (track(tape, {&a})) {
    result.set_requires_grad(true);
    auto an = a.node(), on = result.node();
    tape->push([an, on] {
      if (on->grad.empty() || !an->requires_grad) return;
      ensure_grad(*an);
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double x = an->values[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        an->grad[i] += on->grad[i] * (cdf + x * pdf);
      }
    });
  }
  return result;
}

Tensor cross_entropy(Tape* tape, const Tensor& logits,
                     const std::vector<idx_t>& targets) {
  require_rank2(logits, "cross_entropy");
  const idx_t m = logits.rows(), k = logits.cols();
  check(static_cast<idx_t>(targets.size()) == m, ErrorKind::contract,
        "cross_entropy: ", targets.size(), " targets for ", m, " rows");
  for (idx_t t : targets)
    check(t >= 0 && t < k, ErrorKind::index, "cross_entropy: target ", t,
          " out of range [0, ", k, ")");
  const auto& lv = logits.values();
  for (double x : lv)
    check(!std::isnan(x) && x != std::numeric_limits<double>::infinity(),
          ErrorKind::contract, "cross_entropy: logits must be finite or -inf");
  // Per-row stable log-sum-exp; softmax saved for the backward pass.
  std::vector<double> probs(lv.size());
  double loss = 0.0;
  for (idx_t i = 0; i < m; ++i) {
    const double* row = &lv[static_cast<std::size_t>(i * k)];
    double mx = kNegInf;
    for (idx_t j = 0; j < k; ++j) mx = std::max(mx, row[j]);
    check(mx != kNegInf, ErrorKind::degenerate,
          "cross_entropy: row ", i, " is entirely masked (-inf)");
    double z = 0.0;
    double* prow = &probs[static_cast<std::size_t>(i * k)];
    for (idx_t j = 0; j < k; ++j) {
      prow[j] = row[j] == kNegInf ? 0.0 : std::exp(row[j] - mx);
      z += prow[j];
    }
    const double lse = mx + std::log(z);
    loss += lse - row[targets[static_cast<std::size_t>(i)]];
    for (idx_t j = 0; j < k; ++j) prow[j] /= z;
  }
  loss /= static_cast<double>(m);
  Tensor result = Tensor::scalar(loss);
  if (track(tape, {&logits})) {
    result.set_requires_grad(true);
    auto ln = logits.node(), on = result.node();
    auto tgts = targets;
    tape->push([ln, on, probs, tgts, m, k] {
      if (on->grad.empty() || !ln->requires_grad) return;
      ensure_grad(*ln);
      const double g = on->grad[0] / static_cast<double>(m);
      for (idx_t i = 0; i < m; ++i) {
        const std::size_t base = static_cast<std::size_t>(i * k);
        for (idx_t j = 0; j < k; ++j) ln->grad[base + j] += g * probs[base + j];
        ln->grad[base + static_cast<std::size_t>(
                            tgts[static_cast<std::size_t>(i)])] -= g;
      }
    });
  }
  return result;
}

}  // namespace czsl
