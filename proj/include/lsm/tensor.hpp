#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

// Dense f64 tensors with define-by-run reverse-mode differentiation.
// Tensors are immutable values; ops return fresh tensors and record adjoint
// closures on the thread's active tape when any input is tracked. A tape is
// confined to one thread and consumed by a single backward pass.

namespace lsm {

using Shape = std::vector<long>;

long numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<double>> data;
  int node = -1;              // index into the active tape; -1 = constant
  uint64_t tape_id = 0;       // which tape `node` belongs to
  bool requires_grad = false; // set only on watched leaves

  Tensor() : data(std::make_shared<std::vector<double>>()) {}
  Tensor(Shape s, std::vector<double> values);

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double v);
  static Tensor scalar(double v);

  long size() const { return static_cast<long>(data->size()); }
  const std::vector<double>& vals() const { return *data; }
  double item() const;          // value of a 1-element tensor
  Tensor detached() const;      // same data, off-tape
};

class Tape;

// Gradients keyed by leaf; zero tensors for leaves the loss does not reach.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::unordered_map<int, Tensor> by_node) : by_node_(std::move(by_node)) {}
  const Tensor& of(const Tensor& leaf) const;
  size_t count() const { return by_node_.size(); }

 private:
  std::unordered_map<int, Tensor> by_node_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(const std::vector<double>& upstream, Tape&)>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();
  uint64_t id() const { return id_; }

  // Marks a leaf parameter; gradients for it are produced by backward().
  void watch(Tensor& t);
  int record(BackwardFn fn);
  std::vector<double>& grad_buf(int node, long n);

  Gradients backward(const Tensor& loss);
  size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<BackwardFn> nodes_;
  std::vector<std::vector<double>> grads_;
  std::vector<std::pair<int, Shape>> leaves_;
  uint64_t id_;
  bool consumed_ = false;
  Tape* prev_;
};

// True when t participates in the thread's active tape.
bool tracked(const Tensor& t);

enum class EwKind { add, sub, mul, scale, sin, cos, exp, neg };

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor* b = nullptr, double scalar = 0.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);      // [m,k].[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);   // [m,k].[n,k]^T
Tensor softmax_rows(const Tensor& a);
Tensor reshape(const Tensor& a, Shape s);             // view; same element count
Tensor sum_all(const Tensor& a);                      // scalar

// out[i] = idx[i] >= 0 ? a[idx[i]] : 0. Covers pad/crop/patchify layouts.
Tensor gather(const Tensor& a, std::shared_ptr<const std::vector<long>> idx, Shape out_shape);

// Concatenate along the final axis; leading extents must match.
Tensor concat_last(const Tensor& a, const Tensor& b);

// Stack matrices with equal column counts along the row axis.
Tensor concat_rows(const std::vector<Tensor>& parts);

struct GradcheckReport {
  double max_rel_err = 0.0;
  long worst_param = -1;
  long worst_coord = -1;
  bool finite = true;
  std::string note;
};

// Analytic gradients vs central differences (f(x+h)-f(x-h))/2h, coordinate-
// wise, denominator max(|analytic|, |numeric|, 1e-8). builder must be a
// deterministic map from params to a scalar.
GradcheckReport gradcheck(const std::function<Tensor(std::vector<Tensor>&)>& builder,
                          std::vector<Tensor> params, double h);

}  // namespace lsm
