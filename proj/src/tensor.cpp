#include "lsm/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lsm/kernels.hpp"

namespace lsm {

namespace {

thread_local Tape* g_active_tape = nullptr;
std::atomic<uint64_t> g_tape_serial{1};

void axpy(std::vector<double>& dst, double s, const std::vector<double>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

}  // namespace

long numel(const Shape& s) {
  long n = 1;
  for (long e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)) {
  for (long e : shape)
    if (e <= 0) throw std::invalid_argument("tensor: non-positive extent in " + shape_str(shape));
  if (numel(shape) != static_cast<long>(values.size()))
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " needs " +
                                std::to_string(numel(shape)) + " values, got " +
                                std::to_string(values.size()));
  data = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape s) { return full(std::move(s), 0.0); }

Tensor Tensor::full(Shape s, double v) {
  long n = numel(s);
  return Tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item: tensor has " + std::to_string(size()) +
                                               " elements, expected 1");
  return (*data)[0];
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape = shape;
  t.data = data;
  return t;
}

const Tensor& Gradients::of(const Tensor& leaf) const {
  auto it = by_node_.find(leaf.node);
  if (it == by_node_.end())
    throw std::invalid_argument("gradients: tensor is not a watched leaf of this tape");
  return it->second;
}

Tape::Tape() : id_(g_tape_serial.fetch_add(1)), prev_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

bool tracked(const Tensor& t) {
  Tape* tp = Tape::active();
  return tp != nullptr && t.node >= 0 && t.tape_id == tp->id();
}

void Tape::watch(Tensor& t) {
  if (consumed_) throw std::logic_error("tape: already consumed by backward");
  t.node = record([](const std::vector<double>&, Tape&) {});
  t.tape_id = id_;
  t.requires_grad = true;
  leaves_.emplace_back(t.node, t.shape);
}

int Tape::record(BackwardFn fn) {
  if (consumed_) throw std::logic_error("tape: already consumed by backward");
  nodes_.push_back(std::move(fn));
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buf(int node, long n) {
  auto& g = grads_[static_cast<size_t>(node)];
  if (g.empty()) g.assign(static_cast<size_t>(n), 0.0);
  return g;
}

Gradients Tape::backward(const Tensor& loss) {
  if (consumed_) throw std::logic_error("tape: already consumed by backward");
  if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                                    shape_str(loss.shape));
  if (!tracked(loss) || Tape::active() != this)
    throw std::invalid_argument("backward: loss was not produced on this tape");
  consumed_ = true;
  std::vector<char> is_leaf(nodes_.size(), 0);
  for (auto& [node, shape] : leaves_) is_leaf[static_cast<size_t>(node)] = 1;
  grads_.assign(nodes_.size(), {});
  grads_[static_cast<size_t>(loss.node)] = {1.0};
  for (long i = static_cast<long>(nodes_.size()) - 1; i >= 0; --i) {
    auto& g = grads_[static_cast<size_t>(i)];
    if (g.empty()) continue;  // unreachable from the loss
    nodes_[static_cast<size_t>(i)](g, *this);
    // Retired non-leaf buffers are dead weight from here on.
    if (!is_leaf[static_cast<size_t>(i)]) std::vector<double>().swap(g);
  }
  std::unordered_map<int, Tensor> out;
  for (auto& [node, shape] : leaves_) {
    auto& g = grads_[static_cast<size_t>(node)];
    Tensor t = g.empty() ? Tensor::zeros(shape) : Tensor(shape, std::move(g));
    out.emplace(node, std::move(t));
  }
  return Gradients(std::move(out));
}

namespace {

// Registers `out` on the tape when any input is tracked; `fn` receives the
// upstream gradient and accumulates into the inputs' buffers.
void maybe_record(Tensor& out, bool any_input_tracked, Tape::BackwardFn fn) {
  Tape* tp = Tape::active();
  if (!tp || !any_input_tracked) return;
  out.node = tp->record(std::move(fn));
  out.tape_id = tp->id();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}

}  // namespace

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor* b, double scalar) {
  const bool binary = kind == EwKind::add || kind == EwKind::sub || kind == EwKind::mul;
  if (binary) {
    if (b == nullptr) throw std::invalid_argument("elementwise: binary op requires two tensors");
    require_same_shape("elementwise", a, *b);
  }
  const long n = a.size();
  std::vector<double> out(static_cast<size_t>(n));
  const auto& av = *a.data;
  switch (kind) {
    case EwKind::add:
      for (long i = 0; i < n; ++i) out[i] = av[i] + (*b->data)[i];
      break;
    case EwKind::sub:
      for (long i = 0; i < n; ++i) out[i] = av[i] - (*b->data)[i];
      break;
    case EwKind::mul:
      for (long i = 0; i < n; ++i) out[i] = av[i] * (*b->data)[i];
      break;
    case EwKind::scale:
      for (long i = 0; i < n; ++i) out[i] = av[i] * scalar;
      break;
    case EwKind::sin:
      for (long i = 0; i < n; ++i) out[i] = std::sin(av[i]);
      break;
    case EwKind::cos:
      for (long i = 0; i < n; ++i) out[i] = std::cos(av[i]);
      break;
    case EwKind::exp:
      for (long i = 0; i < n; ++i) out[i] = std::exp(av[i]);
      break;
    case EwKind::neg:
      for (long i = 0; i < n; ++i) out[i] = -av[i];
      break;
  }
  Tensor res(a.shape, std::move(out));

  const int an = tracked(a) ? a.node : -1;
  const int bn = (binary && tracked(*b)) ? b->node : -1;
  auto adata = a.data;
  auto bdata = binary ? b->data : nullptr;
  auto rdata = res.data;
  maybe_record(res, an >= 0 || bn >= 0, [kind, an, bn, n, scalar, adata, bdata, rdata](
                                            const std::vector<double>& g, Tape& tp) {
    switch (kind) {
      case EwKind::add:
        if (an >= 0) axpy(tp.grad_buf(an, n), 1.0, g);
        if (bn >= 0) axpy(tp.grad_buf(bn, n), 1.0, g);
        break;
      case EwKind::sub:
        if (an >= 0) axpy(tp.grad_buf(an, n), 1.0, g);
        if (bn >= 0) axpy(tp.grad_buf(bn, n), -1.0, g);
        break;
      case EwKind::mul:
        if (an >= 0) {
          auto& ga = tp.grad_buf(an, n);
          for (long i = 0; i < n; ++i) ga[i] += g[i] * (*bdata)[i];
        }
        if (bn >= 0) {
          auto& gb = tp.grad_buf(bn, n);
          for (long i = 0; i < n; ++i) gb[i] += g[i] * (*adata)[i];
        }
        break;
      case EwKind::scale:
        if (an >= 0) axpy(tp.grad_buf(an, n), scalar, g);
        break;
      case EwKind::sin:
        if (an >= 0) {
          auto& ga = tp.grad_buf(an, n);
          for (long i = 0; i < n; ++i) ga[i] += g[i] * std::cos((*adata)[i]);
        }
        break;
      case EwKind::cos:
        if (an >= 0) {
          auto& ga = tp.grad_buf(an, n);
          for (long i = 0; i < n; ++i) ga[i] -= g[i] * std::sin((*adata)[i]);
        }
        break;
      case EwKind::exp:
        if (an >= 0) {
          auto& ga = tp.grad_buf(an, n);
          for (long i = 0; i < n; ++i) ga[i] += g[i] * (*rdata)[i];
        }
        break;
      case EwKind::neg:
        if (an >= 0) axpy(tp.grad_buf(an, n), -1.0, g);
        break;
    }
  });
  return res;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(EwKind::add, a, &b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(EwKind::sub, a, &b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(EwKind::mul, a, &b); }
Tensor scale(const Tensor& a, double s) { return elementwise(EwKind::scale, a, nullptr, s); }
Tensor sin(const Tensor& a) { return elementwise(EwKind::sin, a); }
Tensor cos(const Tensor& a) { return elementwise(EwKind::cos, a); }
Tensor exp(const Tensor& a) { return elementwise(EwKind::exp, a); }
Tensor neg(const Tensor& a) { return elementwise(EwKind::neg, a); }

namespace {
void require_matrix(const char* op, const Tensor& t) {
  if (t.shape.size() != 2)
    throw std::invalid_argument(std::string(op) + ": expected a matrix, got " +
                                shape_str(t.shape));
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const long m = a.shape[0], k = a.shape[1], n = b.shape[1];
  if (b.shape[0] != k)
    throw std::invalid_argument("matmul: inner extents disagree, " + shape_str(a.shape) + " . " +
                                shape_str(b.shape));
  Tensor res = Tensor::zeros({m, n});
  kernels::matmul_nn(a.data->data(), b.data->data(), res.data->data(), m, k, n);
  const int an = tracked(a) ? a.node : -1;
  const int bn = tracked(b) ? b.node : -1;
  auto adata = a.data;
  auto bdata = b.data;
  maybe_record(res, an >= 0 || bn >= 0, [an, bn, m, k, n, adata, bdata](
                                            const std::vector<double>& g, Tape& tp) {
    if (an >= 0) {  // dA = dC . B^T
      std::vector<double> tmp(static_cast<size_t>(m * k));
      kernels::matmul_nt(g.data(), bdata->data(), tmp.data(), m, n, k);
      axpy(tp.grad_buf(an, m * k), 1.0, tmp);
    }
    if (bn >= 0) {  // dB = A^T . dC
      std::vector<double> tmp(static_cast<size_t>(k * n));
      kernels::matmul_tn(adata->data(), g.data(), tmp.data(), m, k, n);
      axpy(tp.grad_buf(bn, k * n), 1.0, tmp);
    }
  });
  return res;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix("matmul_nt", a);
  require_matrix("matmul_nt", b);
  const long m = a.shape[0], k = a.shape[1], n = b.shape[0];
  if (b.shape[1] != k)
    throw std::invalid_argument("matmul_nt: inner extents disagree, " + shape_str(a.shape) +
                                " . " + shape_str(b.shape) + "^T");
  Tensor res = Tensor::zeros({m, n});
  kernels::matmul_nt(a.data->data(), b.data->data(), res.data->data(), m, k, n);
  const int an = tracked(a) ? a.node : -1;
  const int bn = tracked(b) ? b.node : -1;
  auto adata = a.data;
  auto bdata = b.data;
  maybe_record(res, an >= 0 || bn >= 0, [an, bn, m, k, n, adata, bdata](
                                            const std::vector<double>& g, Tape& tp) {
    if (an >= 0) {  // dA = dC . B
      std::vector<double> tmp(static_cast<size_t>(m * k));
      kernels::matmul_nn(g.data(), bdata->data(), tmp.data(), m, n, k);
      axpy(tp.grad_buf(an, m * k), 1.0, tmp);
    }
    if (bn >= 0) {  // dB = dC^T . A
      std::vector<double> tmp(static_cast<size_t>(n * k));
      kernels::matmul_tn(g.data(), adata->data(), tmp.data(), m, n, k);
      axpy(tp.grad_buf(bn, n * k), 1.0, tmp);
    }
  });
  return res;
}

Tensor softmax_rows(const Tensor& a) {
  require_matrix("softmax_rows", a);
  const long m = a.shape[0], n = a.shape[1];
  Tensor res = Tensor::zeros({m, n});
  kernels::softmax_rows(a.data->data(), res.data->data(), m, n);
  const int an = tracked(a) ? a.node : -1;
  auto rdata = res.data;
  maybe_record(res, an >= 0, [an, m, n, rdata](const std::vector<double>& g, Tape& tp) {
    if (an < 0) return;
    auto& ga = tp.grad_buf(an, m * n);
    for (long i = 0; i < m; ++i) {
      const double* y = rdata->data() + i * n;
      const double* gi = g.data() + i * n;
      double dot = 0.0;
      for (long j = 0; j < n; ++j) dot += gi[j] * y[j];
      for (long j = 0; j < n; ++j) ga[i * n + j] += (gi[j] - dot) * y[j];
    }
  });
  return res;
}

Tensor reshape(const Tensor& a, Shape s) {
  if (numel(s) != a.size())
    throw std::invalid_argument("reshape: " + shape_str(a.shape) + " to " + shape_str(s) +
                                " changes element count");
  Tensor res;
  res.shape = std::move(s);
  res.data = a.data;  // view
  const int an = tracked(a) ? a.node : -1;
  const long n = a.size();
  maybe_record(res, an >= 0, [an, n](const std::vector<double>& g, Tape& tp) {
    if (an >= 0) axpy(tp.grad_buf(an, n), 1.0, g);
  });
  return res;
}

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double v : *a.data) acc += v;
  Tensor res = Tensor::scalar(acc);
  const int an = tracked(a) ? a.node : -1;
  const long n = a.size();
  maybe_record(res, an >= 0, [an, n](const std::vector<double>& g, Tape& tp) {
    if (an < 0) return;
    auto& ga = tp.grad_buf(an, n);
    for (long i = 0; i < n; ++i) ga[i] += g[0];
  });
  return res;
}

Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<long>> idx, Shape out_shape) {
  const long n_out = numel(out_shape);
  if (static_cast<long>(idx->size()) != n_out)
    throw std::invalid_argument("gather: index count " + std::to_string(idx->size()) +
                                " does not match output shape " + shape_str(out_shape));
  const long n_in = a.size();
  std::vector<double> out(static_cast<size_t>(n_out));
  const auto& av = *a.data;
  for (long i = 0; i < n_out; ++i) {
    const long src = (*idx)[static_cast<size_t>(i)];
    if (src >= n_in)
      throw std::invalid_argument("gather: index " + std::to_string(src) + " out of range " +
                                  std::to_string(n_in));
    out[static_cast<size_t>(i)] = src >= 0 ? av[static_cast<size_t>(src)] : 0.0;
  }
  Tensor res(std::move(out_shape), std::move(out));
  const int an = tracked(a) ? a.node : -1;
  maybe_record(res, an >= 0, [an, n_in, n_out, idx](const std::vector<double>& g, Tape& tp) {
    if (an < 0) return;
    auto& ga = tp.grad_buf(an, n_in);
    for (long i = 0; i < n_out; ++i) {
      const long src = (*idx)[static_cast<size_t>(i)];
      if (src >= 0) ga[static_cast<size_t>(src)] += g[static_cast<size_t>(i)];
    }
  });
  return res;
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != b.shape.size() || a.shape.empty())
    throw std::invalid_argument("concat_last: rank mismatch " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
  for (size_t i = 0; i + 1 < a.shape.size(); ++i)
    if (a.shape[i] != b.shape[i])
      throw std::invalid_argument("concat_last: leading extents differ, " + shape_str(a.shape) +
                                  " vs " + shape_str(b.shape));
  const long ca = a.shape.back(), cb = b.shape.back();
  const long rows = a.size() / ca;
  Shape out_shape = a.shape;
  out_shape.back() = ca + cb;
  std::vector<double> out(static_cast<size_t>(rows * (ca + cb)));
  for (long r = 0; r < rows; ++r) {
    for (long j = 0; j < ca; ++j) out[r * (ca + cb) + j] = (*a.data)[r * ca + j];
    for (long j = 0; j < cb; ++j) out[r * (ca + cb) + ca + j] = (*b.data)[r * cb + j];
  }
  Tensor res(std::move(out_shape), std::move(out));
  const int an = tracked(a) ? a.node : -1;
  const int bn = tracked(b) ? b.node : -1;
  maybe_record(res, an >= 0 || bn >= 0, [an, bn, rows, ca, cb](const std::vector<double>& g, Tape& tp) {
    if (an >= 0) {
      auto& ga = tp.grad_buf(an, rows * ca);
      for (long r = 0; r < rows; ++r)
        for (long j = 0; j < ca; ++j) ga[r * ca + j] += g[r * (ca + cb) + j];
    }
    if (bn >= 0) {
      auto& gb = tp.grad_buf(bn, rows * cb);
      for (long r = 0; r < rows; ++r)
        for (long j = 0; j < cb; ++j) gb[r * cb + j] += g[r * (ca + cb) + ca + j];
    }
  });
  return res;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const long cols = parts[0].shape.size() == 2 ? parts[0].shape[1] : -1;
  long rows = 0;
  for (const auto& p : parts) {
    if (p.shape.size() != 2 || p.shape[1] != cols)
      throw std::invalid_argument("concat_rows: expected matrices with " + std::to_string(cols) +
                                  " columns, got " + shape_str(p.shape));
    rows += p.shape[0];
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(rows * cols));
  for (const auto& p : parts) out.insert(out.end(), p.data->begin(), p.data->end());
  Tensor res({rows, cols}, std::move(out));

  bool any = false;
  std::vector<int> nodes;
  std::vector<long> sizes;
  nodes.reserve(parts.size());
  sizes.reserve(parts.size());
  for (const auto& p : parts) {
    const bool tr = tracked(p);
    any = any || tr;
    nodes.push_back(tr ? p.node : -1);
    sizes.push_back(p.size());
  }
  maybe_record(res, any, [nodes, sizes](const std::vector<double>& g, Tape& tp) {
    size_t off = 0;
    for (size_t p = 0; p < nodes.size(); ++p) {
      if (nodes[p] >= 0) {
        auto& gp = tp.grad_buf(nodes[p], sizes[p]);
        for (long i = 0; i < sizes[p]; ++i) gp[static_cast<size_t>(i)] += g[off + static_cast<size_t>(i)];
      }
      off += static_cast<size_t>(sizes[p]);
    }
  });
  return res;
}

GradcheckReport gradcheck(const std::function<Tensor(std::vector<Tensor>&)>& builder,
                          std::vector<Tensor> params, double h) {
  if (!(h > 0.0 && h <= 1e-3))
    throw std::invalid_argument("gradcheck: h must be in (0, 1e-3], got " + std::to_string(h));
  std::vector<Tensor> analytic;
  {
    Tape tape;
    for (auto& p : params) tape.watch(p);
    Tensor loss = builder(params);
    Gradients grads = tape.backward(loss);
    for (auto& p : params) analytic.push_back(grads.of(p));
  }
  GradcheckReport rep;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    for (long ci = 0; ci < params[pi].size(); ++ci) {
      const double saved = (*params[pi].data)[static_cast<size_t>(ci)];
      auto eval_at = [&](double v) {
        std::vector<Tensor> probe;
        probe.reserve(params.size());
        for (size_t q = 0; q < params.size(); ++q) {
          Tensor t;
          t.shape = params[q].shape;
          if (q == pi) {
            t.data = std::make_shared<std::vector<double>>(*params[q].data);
            (*t.data)[static_cast<size_t>(ci)] = v;
          } else {
            t.data = params[q].data;
          }
          probe.push_back(std::move(t));
        }
        return builder(probe).item();
      };
      const double fp = eval_at(saved + h);
      const double fm = eval_at(saved - h);
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = (*analytic[pi].data)[static_cast<size_t>(ci)];
      if (!std::isfinite(a) || !std::isfinite(numeric)) {
        rep.finite = false;
        rep.worst_param = static_cast<long>(pi);
        rep.worst_coord = ci;
        rep.max_rel_err = std::numeric_limits<double>::infinity();
        rep.note = "non-finite gradient at param " + std::to_string(pi) + " coord " +
                   std::to_string(ci);
        return rep;
      }
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = static_cast<long>(pi);
        rep.worst_coord = ci;
      }
    }
  }
  return rep;
}

}  // namespace lsm
