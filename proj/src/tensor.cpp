#include "tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace gimo {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

int64_t shape_product(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    n *= d;
  }
  return n;
}

}  // namespace

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream ss;
  ss << "[";
  for (size_t i = 0; i < s.size(); ++i) ss << (i ? "x" : "") << s[i];
  ss << "]";
  return ss.str();
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != static_cast<int64_t>(data_.size()))
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + gimo::shape_str(shape_));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() requires a scalar tensor, got " + shape_str());
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const { return gimo::shape_str(shape_); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::row(int r) const {
  Tensor out({cols()});
  std::memcpy(out.data(), data() + static_cast<int64_t>(r) * cols(), sizeof(double) * cols());
  return out;
}

// --- tape ----------------------------------------------------------------

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Tensor value, std::vector<int> inputs, std::function<void(Tape&, int)> backprop) {
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  bool rg = false;
  for (int i : n.inputs) rg = rg || node(i).requires_grad;
  n.requires_grad = rg;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int id) {
  Node& n = node(id);
  if (!n.grad_alloc) {
    n.grad = Tensor(n.value.shape());
    n.grad_alloc = true;
  }
  return n.grad;
}

void Tape::add_grad(int id, const Tensor& g) {
  Tensor& buf = grad_buf(id);
  double* d = buf.data();
  const double* s = g.data();
  for (int64_t i = 0; i < buf.size(); ++i) d[i] += s[i];
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v.id);
  if (!n.grad_alloc) throw ContractError("gradient not populated; run backward() first");
  return n.grad;
}

void Tape::backward(Var root) {
  Node& r = node(root.id);
  if (r.value.size() != 1)
    throw ContractError("backward() requires a scalar root, got " + r.value.shape_str());
  grad_buf(root.id).fill(1.0);
  for (int id = root.id; id >= 0; --id) {
    Node& n = node(id);
    if (!n.grad_alloc || !n.requires_grad || !n.backprop) continue;
    n.backprop(*this, id);
  }
  for (size_t id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (n.requires_grad && !n.backprop && !n.grad_alloc) grad_buf(static_cast<int>(id));
  }
}

// --- primitives -----------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 2 || B.rank() != 2 || A.shape()[1] != B.shape()[0])
    throw DimensionError("matmul shape mismatch: " + A.shape_str() + " x " + B.shape_str());
  const int m = A.shape()[0], k = A.shape()[1], n = B.shape()[1];
  Tensor C({m, n});
  MatMap(C.data(), m, n).noalias() = ConstMatMap(A.data(), m, k) * ConstMatMap(B.data(), k, n);
  return record(std::move(C), {a.id, b.id}, [a, b, m, k, n](Tape& tp, int self) {
    const Tensor& gC = tp.node(self).grad;
    ConstMatMap dC(gC.data(), m, n);
    if (tp.node(a.id).requires_grad) {
      ConstMatMap Bm(tp.node(b.id).value.data(), k, n);
      MatMap(tp.grad_buf(a.id).data(), m, k).noalias() += dC * Bm.transpose();
    }
    if (tp.node(b.id).requires_grad) {
      ConstMatMap Am(tp.node(a.id).value.data(), m, k);
      MatMap(tp.grad_buf(b.id).data(), k, n).noalias() += Am.transpose() * dC;
    }
  });
}

namespace {

// Broadcast compatibility: identical shapes, or equal trailing dims with a
// leading extent of 1 on one side.
enum class Bcast { none, a_leads, b_leads, incompatible };

Bcast classify(const Tensor& A, const Tensor& B) {
  if (A.shape() == B.shape()) return Bcast::none;
  if (A.rank() == 2 && B.rank() == 2 && A.shape()[1] == B.shape()[1]) {
    if (A.shape()[0] == 1 && B.shape()[0] > 1) return Bcast::a_leads;  // A broadcast over B rows
    if (B.shape()[0] == 1 && A.shape()[0] > 1) return Bcast::b_leads;
  }
  return Bcast::incompatible;
}

}  // namespace

Var Tape::add(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  Bcast bc = classify(A, B);
  if (bc == Bcast::incompatible)
    throw DimensionError("add shape mismatch: " + A.shape_str() + " vs " + B.shape_str());
  const Tensor& big = (bc == Bcast::a_leads) ? B : A;
  Tensor C(big.shape());
  const int rows = big.rows(), cols = big.cols();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double av = (bc == Bcast::a_leads) ? A[c] : A[static_cast<int64_t>(r) * cols + c];
      double bv = (bc == Bcast::b_leads) ? B[c] : B[static_cast<int64_t>(r) * cols + c];
      C[static_cast<int64_t>(r) * cols + c] = av + bv;
    }
  return record(std::move(C), {a.id, b.id}, [a, b, bc, rows, cols](Tape& tp, int self) {
    const Tensor& g = tp.node(self).grad;
    auto push = [&](int id, bool reduced) {
      if (!tp.node(id).requires_grad) return;
      Tensor& buf = tp.grad_buf(id);
      if (!reduced) {
        for (int64_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
      } else {
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) buf[c] += g[static_cast<int64_t>(r) * cols + c];
      }
    };
    push(a.id, bc == Bcast::a_leads);
    push(b.id, bc == Bcast::b_leads);
  });
}

Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Tape::mul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  Bcast bc = classify(A, B);
  if (bc == Bcast::incompatible)
    throw DimensionError("mul shape mismatch: " + A.shape_str() + " vs " + B.shape_str());
  const Tensor& big = (bc == Bcast::a_leads) ? B : A;
  Tensor C(big.shape());
  const int rows = big.rows(), cols = big.cols();
  auto at = [cols](const Tensor& t, bool reduced, int r, int c) {
    return reduced ? t[c] : t[static_cast<int64_t>(r) * cols + c];
  };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      C[static_cast<int64_t>(r) * cols + c] =
          at(A, bc == Bcast::a_leads, r, c) * at(B, bc == Bcast::b_leads, r, c);
  return record(std::move(C), {a.id, b.id}, [a, b, bc, rows, cols, at](Tape& tp, int self) {
    const Tensor& g = tp.node(self).grad;
    auto push = [&](int id, int other, bool reduced, bool other_reduced) {
      if (!tp.node(id).requires_grad) return;
      Tensor& buf = tp.grad_buf(id);
      const Tensor& o = tp.node(other).value;
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          double gv = g[static_cast<int64_t>(r) * cols + c] * at(o, other_reduced, r, c);
          if (reduced)
            buf[c] += gv;
          else
            buf[static_cast<int64_t>(r) * cols + c] += gv;
        }
    };
    push(a.id, b.id, bc == Bcast::a_leads, bc == Bcast::b_leads);
    push(b.id, a.id, bc == Bcast::b_leads, bc == Bcast::a_leads);
  });
}

Var Tape::scale(Var a, double s) {
  const Tensor& A = value(a);
  Tensor C(A.shape());
  for (int64_t i = 0; i < A.size(); ++i) C[i] = A[i] * s;
  return record(std::move(C), {a.id}, [a, s](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const Tensor& g = tp.node(self).grad;
    Tensor& buf = tp.grad_buf(a.id);
    for (int64_t i = 0; i < buf.size(); ++i) buf[i] += g[i] * s;
  });
}

Var Tape::relu(Var a) {
  const Tensor& A = value(a);
  Tensor C(A.shape());
  for (int64_t i = 0; i < A.size(); ++i) C[i] = A[i] > 0.0 ? A[i] : 0.0;
  return record(std::move(C), {a.id}, [a](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const Tensor& g = tp.node(self).grad;
    const Tensor& x = tp.node(a.id).value;
    Tensor& buf = tp.grad_buf(a.id);
    for (int64_t i = 0; i < buf.size(); ++i)
      if (x[i] > 0.0) buf[i] += g[i];
  });
}

Var Tape::tanh_op(Var a) {
  const Tensor& A = value(a);
  Tensor C(A.shape());
  for (int64_t i = 0; i < A.size(); ++i) C[i] = std::tanh(A[i]);
  return record(std::move(C), {a.id}, [a](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const Tensor& g = tp.node(self).grad;
    const Tensor& y = tp.node(self).value;
    Tensor& buf = tp.grad_buf(a.id);
    for (int64_t i = 0; i < buf.size(); ++i) buf[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var Tape::abs_op(Var a) {
  const Tensor& A = value(a);
  Tensor C(A.shape());
  for (int64_t i = 0; i < A.size(); ++i) C[i] = std::fabs(A[i]);
  return record(std::move(C), {a.id}, [a](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const Tensor& g = tp.node(self).grad;
    const Tensor& x = tp.node(a.id).value;
    Tensor& buf = tp.grad_buf(a.id);
    for (int64_t i = 0; i < buf.size(); ++i)
      buf[i] += g[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
  });
}

Var Tape::softmax(Var a, int axis) {
  const Tensor& A = value(a);
  if (A.rank() < 1 || A.rank() > 2)
    throw DimensionError("softmax expects rank 1 or 2, got " + A.shape_str());
  if (A.rank() == 1) axis = 0;
  if (axis < 0 || axis >= A.rank())
    throw DimensionError("softmax axis out of range for " + A.shape_str());
  const int rows = A.rows(), cols = A.cols();
  const bool along_cols = (A.rank() == 1) || (axis == 1);  // slice varies along the last axis
  const int nslices = along_cols ? rows : cols;
  const int slice_len = along_cols ? cols : rows;
  if (slice_len < 1) throw DimensionError("softmax over empty axis");
  auto idx = [along_cols, cols](int s, int i) -> int64_t {
    return along_cols ? static_cast<int64_t>(s) * cols + i : static_cast<int64_t>(i) * cols + s;
  };
  Tensor C(A.shape());
  for (int s = 0; s < nslices; ++s) {
    double mx = A[idx(s, 0)];
    for (int i = 1; i < slice_len; ++i) mx = std::max(mx, A[idx(s, i)]);
    double denom = 0.0;
    for (int i = 0; i < slice_len; ++i) {
      double e = std::exp(A[idx(s, i)] - mx);
      C[idx(s, i)] = e;
      denom += e;
    }
    for (int i = 0; i < slice_len; ++i) C[idx(s, i)] /= denom;
  }
  return record(std::move(C), {a.id}, [a, nslices, slice_len, idx](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const Tensor& g = tp.node(self).grad;
    const Tensor& y = tp.node(self).value;
    Tensor& buf = tp.grad_buf(a.id);
    for (int s = 0; s < nslices; ++s) {
      double dot = 0.0;
      for (int i = 0; i < slice_len; ++i) dot += g[idx(s, i)] * y[idx(s, i)];
      for (int i = 0; i < slice_len; ++i) buf[idx(s, i)] += y[idx(s, i)] * (g[idx(s, i)] - dot);
    }
  });
}

Var Tape::layer_norm(Var x, Var gain, Var bias) {
  const Tensor& X = value(x);
  const Tensor& G = value(gain);
  const Tensor& B = value(bias);
  const int rows = X.rows(), d = X.cols();
  if (d < 2) throw DimensionError("layer_norm needs at least 2 features, got " + X.shape_str());
  if (G.size() != d || B.size() != d)
    throw DimensionError("layer_norm gain/bias must have length " + std::to_string(d));
  constexpr double kEps = 1e-5;  // variance floor
  Tensor C(X.shape());
  // cache per-row inv std and normalized values for the backward pass
  std::vector<double> inv_std(rows);
  std::vector<double> norm(static_cast<size_t>(rows) * d);
  for (int r = 0; r < rows; ++r) {
    const double* xr = X.data() + static_cast<int64_t>(r) * d;
    double mean = 0.0;
    for (int c = 0; c < d; ++c) mean += xr[c];
    mean /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= d;
    const double is = 1.0 / std::sqrt(std::max(var, kEps));
    inv_std[r] = (var > kEps) ? is : -is;  // sign marks the floored branch
    for (int c = 0; c < d; ++c) {
      double h = (xr[c] - mean) * is;
      norm[static_cast<size_t>(r) * d + c] = h;
      C[static_cast<int64_t>(r) * d + c] = h * G[c] + B[c];
    }
  }
  return record(std::move(C), {x.id, gain.id, bias.id},
                [x, gain, bias, rows, d, inv_std = std::move(inv_std),
                 norm = std::move(norm)](Tape& tp, int self) {
    const Tensor& g = tp.node(self).grad;
    const Tensor& G = tp.node(gain.id).value;
    const bool need_x = tp.node(x.id).requires_grad;
    const bool need_g = tp.node(gain.id).requires_grad;
    const bool need_b = tp.node(bias.id).requires_grad;
    for (int r = 0; r < rows; ++r) {
      const double* gr = g.data() + static_cast<int64_t>(r) * d;
      const double* hr = norm.data() + static_cast<size_t>(r) * d;
      if (need_g) {
        Tensor& bg = tp.grad_buf(gain.id);
        for (int c = 0; c < d; ++c) bg[c] += gr[c] * hr[c];
      }
      if (need_b) {
        Tensor& bb = tp.grad_buf(bias.id);
        for (int c = 0; c < d; ++c) bb[c] += gr[c];
      }
      if (need_x) {
        Tensor& bx = tp.grad_buf(x.id);
        const bool floored = inv_std[r] < 0.0;
        const double is = std::fabs(inv_std[r]);
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (int c = 0; c < d; ++c) {
          double dh = gr[c] * G[c];
          mean_dh += dh;
          mean_dh_h += dh * hr[c];
        }
        mean_dh /= d;
        mean_dh_h /= d;
        for (int c = 0; c < d; ++c) {
          double dh = gr[c] * G[c];
          double v = floored ? (dh - mean_dh) : (dh - mean_dh - hr[c] * mean_dh_h);
          bx[static_cast<int64_t>(r) * d + c] += v * is;
        }
      }
    }
  });
}

Var Tape::transpose(Var a) {
  const Tensor& A = value(a);
  if (A.rank() != 2) throw DimensionError("transpose expects rank 2, got " + A.shape_str());
  const int m = A.shape()[0], n = A.shape()[1];
  Tensor C({n, m});
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) C[static_cast<int64_t>(c) * m + r] = A[static_cast<int64_t>(r) * n + c];
  return record(std::move(C), {a.id}, [a, m, n](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const Tensor& g = tp.node(self).grad;
    Tensor& buf = tp.grad_buf(a.id);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c)
        buf[static_cast<int64_t>(r) * n + c] += g[static_cast<int64_t>(c) * m + r];
  });
}

Var Tape::concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  if (axis != 0 && axis != 1) throw DimensionError("concat axis must be 0 or 1");
  std::vector<int> ids;
  int rows = 0, cols = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    if (t.rank() != 2) throw DimensionError("concat expects rank-2 parts, got " + t.shape_str());
    ids.push_back(p.id);
    if (axis == 0) {
      if (cols && t.cols() != cols) throw DimensionError("concat column mismatch");
      cols = t.cols();
      rows += t.rows();
    } else {
      if (rows && t.rows() != rows) throw DimensionError("concat row mismatch");
      rows = t.rows();
      cols += t.cols();
    }
  }
  Tensor C({rows, cols});
  int off = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    if (axis == 0) {
      std::memcpy(C.data() + static_cast<int64_t>(off) * cols, t.data(), sizeof(double) * t.size());
      off += t.rows();
    } else {
      for (int r = 0; r < rows; ++r)
        std::memcpy(C.data() + static_cast<int64_t>(r) * cols + off,
                    t.data() + static_cast<int64_t>(r) * t.cols(), sizeof(double) * t.cols());
      off += t.cols();
    }
  }
  return record(std::move(C), ids, [ids, axis, rows, cols](Tape& tp, int self) {
    const Tensor& g = tp.node(self).grad;
    int off = 0;
    for (int id : ids) {
      const Tensor& t = tp.node(id).value;
      if (tp.node(id).requires_grad) {
        Tensor& buf = tp.grad_buf(id);
        if (axis == 0) {
          for (int64_t i = 0; i < t.size(); ++i)
            buf[i] += g[static_cast<int64_t>(off) * cols + i];
        } else {
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < t.cols(); ++c)
              buf[static_cast<int64_t>(r) * t.cols() + c] +=
                  g[static_cast<int64_t>(r) * cols + off + c];
        }
      }
      off += (axis == 0) ? t.rows() : t.cols();
    }
  });
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  const Tensor& A = value(a);
  if (A.rank() != 2 || c0 < 0 || c1 > A.cols() || c0 >= c1)
    throw DimensionError("slice_cols range invalid for " + A.shape_str());
  const int rows = A.rows(), cols = A.cols(), w = c1 - c0;
  Tensor C({rows, w});
  for (int r = 0; r < rows; ++r)
    std::memcpy(C.data() + static_cast<int64_t>(r) * w, A.data() + static_cast<int64_t>(r) * cols + c0,
                sizeof(double) * w);
  return record(std::move(C), {a.id}, [a, rows, cols, c0, w](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const Tensor& g = tp.node(self).grad;
    Tensor& buf = tp.grad_buf(a.id);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < w; ++c)
        buf[static_cast<int64_t>(r) * cols + c0 + c] += g[static_cast<int64_t>(r) * w + c];
  });
}

Var Tape::slice_rows(Var a, int r0, int r1) {
  const Tensor& A = value(a);
  if (A.rank() != 2 || r0 < 0 || r1 > A.rows() || r0 >= r1)
    throw DimensionError("slice_rows range invalid for " + A.shape_str());
  const int cols = A.cols(), h = r1 - r0;
  Tensor C({h, cols});
  std::memcpy(C.data(), A.data() + static_cast<int64_t>(r0) * cols, sizeof(double) * C.size());
  return record(std::move(C), {a.id}, [a, cols, r0, h](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const Tensor& g = tp.node(self).grad;
    Tensor& buf = tp.grad_buf(a.id);
    for (int64_t i = 0; i < g.size(); ++i) buf[static_cast<int64_t>(r0) * cols + i] += g[i];
  });
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Tensor& A = value(a);
  if (A.rank() != 2) throw DimensionError("gather_rows expects rank 2, got " + A.shape_str());
  const int cols = A.cols();
  for (int i : idx)
    if (i < 0 || i >= A.rows()) throw DimensionError("gather_rows index out of range");
  Tensor C({static_cast<int>(idx.size()), cols});
  for (size_t r = 0; r < idx.size(); ++r)
    std::memcpy(C.data() + static_cast<int64_t>(r) * cols,
                A.data() + static_cast<int64_t>(idx[r]) * cols, sizeof(double) * cols);
  return record(std::move(C), {a.id}, [a, cols, idx = std::move(idx)](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const Tensor& g = tp.node(self).grad;
    Tensor& buf = tp.grad_buf(a.id);
    for (size_t r = 0; r < idx.size(); ++r)
      for (int c = 0; c < cols; ++c)
        buf[static_cast<int64_t>(idx[r]) * cols + c] += g[static_cast<int64_t>(r) * cols + c];
  });
}

Var Tape::weighted_gather_rows(Var a, std::vector<InterpEntry> stencil) {
  const Tensor& A = value(a);
  if (A.rank() != 2) throw DimensionError("weighted_gather_rows expects rank 2");
  const int cols = A.cols();
  Tensor C({static_cast<int>(stencil.size()), cols});
  for (size_t q = 0; q < stencil.size(); ++q) {
    double* out = C.data() + static_cast<int64_t>(q) * cols;
    for (int k = 0; k < 3; ++k) {
      const double w = stencil[q].w[k];
      if (w == 0.0) continue;
      const double* src = A.data() + static_cast<int64_t>(stencil[q].idx[k]) * cols;
      for (int c = 0; c < cols; ++c) out[c] += w * src[c];
    }
  }
  return record(std::move(C), {a.id}, [a, cols, stencil = std::move(stencil)](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const Tensor& g = tp.node(self).grad;
    Tensor& buf = tp.grad_buf(a.id);
    for (size_t q = 0; q < stencil.size(); ++q) {
      const double* gq = g.data() + static_cast<int64_t>(q) * cols;
      for (int k = 0; k < 3; ++k) {
        const double w = stencil[q].w[k];
        if (w == 0.0) continue;
        double* dst = buf.data() + static_cast<int64_t>(stencil[q].idx[k]) * cols;
        for (int c = 0; c < cols; ++c) dst[c] += w * gq[c];
      }
    }
  });
}

Var Tape::segment_max_rows(Var a, int group) {
  const Tensor& A = value(a);
  if (A.rank() != 2 || group < 1 || A.rows() % group != 0)
    throw DimensionError("segment_max_rows: rows of " + A.shape_str() +
                         " not divisible by group " + std::to_string(group));
  const int cols = A.cols(), segs = A.rows() / group;
  Tensor C({segs, cols});
  std::vector<int> argmax(static_cast<size_t>(segs) * cols);
  for (int s = 0; s < segs; ++s)
    for (int c = 0; c < cols; ++c) {
      int best = s * group;
      double bv = A[static_cast<int64_t>(best) * cols + c];
      for (int k = 1; k < group; ++k) {
        double v = A[static_cast<int64_t>(s * group + k) * cols + c];
        if (v > bv) {
          bv = v;
          best = s * group + k;
        }
      }
      C[static_cast<int64_t>(s) * cols + c] = bv;
      argmax[static_cast<size_t>(s) * cols + c] = best;
    }
  return record(std::move(C), {a.id}, [a, cols, segs, argmax = std::move(argmax)](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const Tensor& g = tp.node(self).grad;
    Tensor& buf = tp.grad_buf(a.id);
    for (int s = 0; s < segs; ++s)
      for (int c = 0; c < cols; ++c)
        buf[static_cast<int64_t>(argmax[static_cast<size_t>(s) * cols + c]) * cols + c] +=
            g[static_cast<int64_t>(s) * cols + c];
  });
}

Var Tape::max_rows(Var a) { return segment_max_rows(a, value(a).rows()); }

Var Tape::sum(Var a) {
  const Tensor& A = value(a);
  double s = 0.0;
  for (int64_t i = 0; i < A.size(); ++i) s += A[i];
  return record(Tensor::scalar(s), {a.id}, [a](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const double g = tp.node(self).grad[0];
    Tensor& buf = tp.grad_buf(a.id);
    for (int64_t i = 0; i < buf.size(); ++i) buf[i] += g;
  });
}

Var Tape::tile_rows(Var a, int n) {
  const Tensor& A = value(a);
  if (A.rows() != 1) throw DimensionError("tile_rows expects a single row, got " + A.shape_str());
  const int cols = A.cols();
  Tensor C({n, cols});
  for (int r = 0; r < n; ++r)
    std::memcpy(C.data() + static_cast<int64_t>(r) * cols, A.data(), sizeof(double) * cols);
  return record(std::move(C), {a.id}, [a, n, cols](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const Tensor& g = tp.node(self).grad;
    Tensor& buf = tp.grad_buf(a.id);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < cols; ++c) buf[c] += g[static_cast<int64_t>(r) * cols + c];
  });
}

Var Tape::canon_rows(Var a) {
  const Tensor& A = value(a);
  if (A.cols() != 3) throw DimensionError("canon_rows expects Tx3, got " + A.shape_str());
  const int rows = A.rows();
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  Tensor C(A.shape());
  std::vector<double> scales(rows), wraps(rows);
  for (int r = 0; r < rows; ++r) {
    const double* x = A.data() + 3 * static_cast<int64_t>(r);
    double theta = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    double s = 1.0, m = 0.0;
    if (theta > 1e-9) {
      double k = std::fmod(theta, kTwoPi);
      double tcanon = (k <= 3.141592653589793238462643383279502884) ? k : k - kTwoPi;
      s = tcanon / theta;
      m = (theta - tcanon) / kTwoPi;
    }
    scales[r] = s;
    wraps[r] = m;
    for (int c = 0; c < 3; ++c) C[3 * static_cast<int64_t>(r) + c] = s * x[c];
  }
  return record(std::move(C), {a.id},
                [a, rows, scales = std::move(scales), wraps = std::move(wraps)](Tape& tp, int self) {
    if (!tp.node(a.id).requires_grad) return;
    const Tensor& g = tp.node(self).grad;
    const Tensor& x = tp.node(a.id).value;
    Tensor& buf = tp.grad_buf(a.id);
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    for (int r = 0; r < rows; ++r) {
      const double* xr = x.data() + 3 * static_cast<int64_t>(r);
      const double* gr = g.data() + 3 * static_cast<int64_t>(r);
      double* br = buf.data() + 3 * static_cast<int64_t>(r);
      const double s = scales[r], m = wraps[r];
      // r' = s(theta) r with ds/dtheta = 2*pi*m / theta^2
      double coef = 0.0;
      if (m != 0.0) {
        double theta2 = xr[0] * xr[0] + xr[1] * xr[1] + xr[2] * xr[2];
        double theta = std::sqrt(theta2);
        double dot = xr[0] * gr[0] + xr[1] * gr[1] + xr[2] * gr[2];
        coef = (kTwoPi * m / (theta2 * theta)) * dot;
      }
      for (int c = 0; c < 3; ++c) br[c] += s * gr[c] + coef * xr[c];
    }
  });
}

Var linear(Tape& tp, Var x, Var w, Var b) {
  Var y = tp.matmul(x, w);
  if (b.valid()) y = tp.add(y, b);
  return y;
}

GradCheckReport grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double step,
                           double tol) {
  Tape tape;
  Var in = tape.leaf(x, true);
  Var out = f(tape, in);
  if (tape.value(out).size() != 1)
    throw ContractError("grad_check requires a scalar-valued function");
  if (!std::isfinite(tape.value(out).item()))
    throw NumericError("grad_check: function value is not finite at x");
  tape.backward(out);
  const Tensor analytic = tape.grad(in);

  GradCheckReport rep;
  Tensor probe = x;
  for (int64_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    Tape tp;
    double fp = tp.value(f(tp, tp.leaf(probe, false))).item();
    probe[i] = orig - step;
    Tape tm;
    double fm = tm.value(f(tm, tm.leaf(probe, false))).item();
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("grad_check: function value is not finite near x");
    const double numeric = (fp - fm) / (2.0 * step);
    const double denom = std::max({1e-8, std::fabs(numeric), std::fabs(analytic[i])});
    const double abs_err = std::fabs(numeric - analytic[i]);
    rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
    rep.max_rel_err = std::max(rep.max_rel_err, abs_err / denom);
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace gimo
