#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ignn/error.hpp"

namespace ignn::num {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;    // empty until the node participates in a backward pass
  bool requires_grad = false;  // leaf flag
  bool tracked = false;        // gradient flows through this node
};

// Dense row-major double tensor. Value-semantics handle onto a shared node;
// cheap to copy, immutable after construction except for the grad buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);
  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor wrap(std::shared_ptr<TensorNode> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

  std::span<const double> data() const { return node_->value; }
  // Leaves and test fixtures only; mutating a recorded intermediate corrupts the tape.
  std::span<double> mutable_data() { return node_->value; }

  double item() const;
  double at(std::initializer_list<int64_t> idx) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    node_->requires_grad = b;
    node_->tracked = b;
    return *this;
  }
  bool tracked() const { return node_ && node_->tracked; }

  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  Tensor detached_copy() const;

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Reverse-mode tape. Ops append one record per primitive while recording is
// on and at least one input is tracked; backward() replays the records in
// reverse, accumulating gradients additively, and consumes the tape.
class Tape {
 public:
  struct Record {
    const char* op;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::shared_ptr<TensorNode> output;
    std::function<void()> pull;  // accumulate output->grad into input grads
  };

  bool recording() const { return recording_; }
  void set_recording(bool b) { recording_ = b; }

  // scan gradients for NaN/Inf after each record; reports the offending op
  bool check_finite = true;

  size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  void push(const char* op, std::vector<std::shared_ptr<TensorNode>> inputs,
            std::shared_ptr<TensorNode> output, std::function<void()> pull);

  void backward(const Tensor& loss);

 private:
  std::vector<Record> records_;
  bool recording_ = true;
};

void ensure_grad(TensorNode& n);

// ---- primitive operations ----

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b);
Tensor add(Tape& t, const Tensor& a, const Tensor& b);
Tensor sub(Tape& t, const Tensor& a, const Tensor& b);
Tensor mul(Tape& t, const Tensor& a, const Tensor& b);
Tensor scalar_mul(Tape& t, const Tensor& a, double c);
Tensor add_bias(Tape& t, const Tensor& x, const Tensor& bias);  // [m,n] + [n]
Tensor sigmoid(Tape& t, const Tensor& x);
Tensor tanh(Tape& t, const Tensor& x);
Tensor relu(Tape& t, const Tensor& x);
Tensor concat_cols(Tape& t, const Tensor& a, const Tensor& b);
Tensor sum_all(Tape& t, const Tensor& x);    // -> scalar
Tensor mean_all(Tape& t, const Tensor& x);   // -> scalar
Tensor squared_l2(Tape& t, const Tensor& x); // -> scalar sum of squares
Tensor softmax_rows(Tape& t, const Tensor& x);
Tensor segment_softmax(Tape& t, const Tensor& logits, std::span<const int32_t> seg,
                       int64_t num_segments);
Tensor gather_rows(Tape& t, const Tensor& x, std::span<const int32_t> idx);
Tensor scatter_add_rows(Tape& t, const Tensor& rows, std::span<const int32_t> idx,
                        int64_t out_rows);
// out[i] = mats[i] * vecs[i] for mats [m,r,c], vecs [m,c]
Tensor bmv(Tape& t, const Tensor& mats, const Tensor& vecs);
Tensor scale_rows(Tape& t, const Tensor& x, const Tensor& s);  // [n,d] * [n]
Tensor row_dot(Tape& t, const Tensor& a, const Tensor& b);     // [n,d],[n,d] -> [n]
Tensor reshape(Tape& t, const Tensor& x, Shape shape);
Tensor detach(const Tensor& x);
Tensor mse_loss(Tape& t, const Tensor& pred, const Tensor& target);
Tensor mae_loss(Tape& t, const Tensor& pred, const Tensor& target);
// logits [n,C], classes [n] integer-valued
Tensor ce_loss(Tape& t, const Tensor& logits, const Tensor& classes);

// Generic dispatcher over the primitive set, keyed by id. Index-valued and
// scalar attributes travel in PrimitiveArgs.
struct PrimitiveArgs {
  std::vector<int64_t> ints;    // gather/scatter indices, segment ids
  std::vector<double> floats;   // scalar_mul constant
  Shape shape;                  // reshape target
  int64_t rows = -1;            // scatter output rows / segment count
};
Tensor forward_primitive(Tape& t, std::string_view op, std::span<const Tensor> inputs,
                         const PrimitiveArgs& args = {});

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& fn,
                                  const Tensor& x, double h);

}  // namespace ignn::num
