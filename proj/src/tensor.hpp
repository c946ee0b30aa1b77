#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "common.hpp"

namespace gimo {

// Dense row-major tensor of 64-bit reals. Rank 1 and 2 cover the whole model;
// the container itself is rank-agnostic.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  // Rank-1 tensors are treated as a single row by the 2-D helpers.
  int rows() const { return rank() == 2 ? shape_[0] : 1; }
  int cols() const { return rank() == 0 ? 0 : shape_.back(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }
  double& at(int r, int c) { return data_[static_cast<int64_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data_[static_cast<int64_t>(r) * cols() + c]; }

  double item() const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

  void fill(double v);
  Tensor row(int r) const;  // copy of one row as rank-1

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::string shape_str(const std::vector<int>& s);

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Inverse-distance interpolation stencil: up to 3 source rows with weights.
struct InterpEntry {
  std::array<int, 3> idx{0, 0, 0};
  std::array<double, 3> w{0.0, 0.0, 0.0};
};

// Reverse-mode tape. Records every primitive with its inputs and a local
// gradient rule; nodes are stored in topological order by construction.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    std::vector<int> inputs;
    std::function<void(Tape&, int)> backprop;  // null for leaves
  };

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const { return node(v.id).value; }
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return node(v.id).requires_grad; }
  size_t size() const { return nodes_.size(); }

  // Populates grad for every reachable node that requires it. Root must be a
  // single-element tensor.
  void backward(Var root);

  // --- primitives -------------------------------------------------------
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var relu(Var a);
  Var tanh_op(Var a);
  Var abs_op(Var a);
  Var softmax(Var a, int axis);
  Var layer_norm(Var x, Var gain, Var bias);
  Var transpose(Var a);
  Var concat(const std::vector<Var>& parts, int axis);
  Var slice_cols(Var a, int c0, int c1);
  Var slice_rows(Var a, int r0, int r1);
  Var gather_rows(Var a, std::vector<int> idx);
  Var weighted_gather_rows(Var a, std::vector<InterpEntry> stencil);
  Var segment_max_rows(Var a, int group);  // (g*k) x d -> g x d
  Var max_rows(Var a);                     // n x d -> 1 x d
  Var sum(Var a);                          // -> scalar
  Var tile_rows(Var a, int n);             // 1 x d -> n x d
  Var canon_rows(Var a);                   // axis-angle canonicalization, T x 3

 private:
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  Var record(Tensor value, std::vector<int> inputs, std::function<void(Tape&, int)> backprop);
  Tensor& grad_buf(int id);
  void add_grad(int id, const Tensor& g);

  std::vector<Node> nodes_;
};

// Convenience: y = x W + b with b broadcast over rows (b may be invalid to skip).
Var linear(Tape& tp, Var x, Var w, Var b);

// Central-difference gradient verification for a scalar-valued tensor function.
struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  bool pass = false;
};

// f builds the scalar output from a leaf for x on the given tape.
GradCheckReport grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x,
                           double step = 1e-5, double tol = 1e-4);

}  // namespace gimo
