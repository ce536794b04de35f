#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mmcl/error.hpp"
#include "mmcl/matrix.hpp"
#include "mmcl/param_store.hpp"

namespace mmcl {

// Reverse-mode tape over Matrix values. Ops append nodes in topological
// order (an op can only reference earlier nodes), so the backward sweep is a
// plain reverse index walk. Each node's backward function accumulates into
// its parents' gradients; parameter leaves flush into the ParamStore passed
// to backward(). Node gradients are cleared as the sweep consumes them, so
// several backward calls on one tape (e.g. one per modality head) compose by
// accumulation, matching caller-zeroed gradient semantics.
class Tape {
 public:
  using NodeId = int;

  NodeId input(Matrix v) { return push(std::move(v), {}, nullptr, ""); }

  NodeId param(const std::string& name, const ParamStore& store) {
    return push(store.value(name), {}, nullptr, name);
  }

  const Matrix& value(NodeId id) const { return nodes_[check(id)].value; }

  NodeId matmul(NodeId a, NodeId b) {
    Matrix v = mmcl::matmul(value(a), value(b));
    return push(std::move(v), {a, b}, [](Tape& t, int self) {
      const Matrix& g = t.nodes_[self].grad;
      int a = t.nodes_[self].parents[0], b = t.nodes_[self].parents[1];
      t.accum(a, mmcl::matmul_nt(g, t.nodes_[b].value));
      t.accum(b, mmcl::matmul_tn(t.nodes_[a].value, g));
    });
  }

  // c = a * b^T
  NodeId matmul_nt(NodeId a, NodeId b) {
    Matrix v = mmcl::matmul_nt(value(a), value(b));
    return push(std::move(v), {a, b}, [](Tape& t, int self) {
      const Matrix& g = t.nodes_[self].grad;
      int a = t.nodes_[self].parents[0], b = t.nodes_[self].parents[1];
      t.accum(a, mmcl::matmul(g, t.nodes_[b].value));
      t.accum(b, matmul_tn(g, t.nodes_[a].value));
    });
  }

  NodeId add(NodeId a, NodeId b) {
    Matrix v = mmcl::add(value(a), value(b));
    return push(std::move(v), {a, b}, [](Tape& t, int self) {
      const Matrix& g = t.nodes_[self].grad;
      t.accum(t.nodes_[self].parents[0], g);
      t.accum(t.nodes_[self].parents[1], g);
    });
  }

  // x (T x D) plus a broadcast 1 x D bias row
  NodeId add_row(NodeId x, NodeId bias) {
    const Matrix& xv = value(x);
    const Matrix& bv = value(bias);
    if (bv.rows() != 1 || bv.cols() != xv.cols())
      throw_shape("add_row: bias " + bv.shape_str() + " against " + xv.shape_str());
    Matrix v = xv;
    for (int i = 0; i < v.rows(); ++i)
      for (int j = 0; j < v.cols(); ++j) v(i, j) += bv(0, j);
    return push(std::move(v), {x, bias}, [](Tape& t, int self) {
      const Matrix& g = t.nodes_[self].grad;
      t.accum(t.nodes_[self].parents[0], g);
      t.accum(t.nodes_[self].parents[1], col_sum(g));
    });
  }

  NodeId hadamard(NodeId a, NodeId b) {
    Matrix v = mmcl::hadamard(value(a), value(b));
    return push(std::move(v), {a, b}, [](Tape& t, int self) {
      const Matrix& g = t.nodes_[self].grad;
      int a = t.nodes_[self].parents[0], b = t.nodes_[self].parents[1];
      t.accum(a, mmcl::hadamard(g, t.nodes_[b].value));
      t.accum(b, mmcl::hadamard(g, t.nodes_[a].value));
    });
  }

  NodeId scale(NodeId a, double c) {
    Matrix v = mmcl::scale(value(a), c);
    return push(std::move(v), {a}, [c](Tape& t, int self) {
      t.accum(t.nodes_[self].parents[0], mmcl::scale(t.nodes_[self].grad, c));
    });
  }

  NodeId relu(NodeId a) {
    Matrix v = mmcl::relu(value(a));
    return push(std::move(v), {a}, [](Tape& t, int self) {
      const Matrix& g = t.nodes_[self].grad;
      int a = t.nodes_[self].parents[0];
      Matrix d = g;
      const Matrix& av = t.nodes_[a].value;
      for (size_t i = 0; i < d.size(); ++i)
        if (av.data()[i] <= 0.0) d.data()[i] = 0.0;
      t.accum(a, std::move(d));
    });
  }

  NodeId mean_rows(NodeId a) {
    Matrix v = mmcl::mean_rows(value(a));
    return push(std::move(v), {a}, [](Tape& t, int self) {
      const Matrix& g = t.nodes_[self].grad;
      int a = t.nodes_[self].parents[0];
      const Matrix& av = t.nodes_[a].value;
      Matrix d(av.rows(), av.cols());
      for (int i = 0; i < d.rows(); ++i)
        for (int j = 0; j < d.cols(); ++j) d(i, j) = g(0, j) / av.rows();
      t.accum(a, std::move(d));
    });
  }

  NodeId softmax_rows(NodeId a) {
    const Matrix& av = value(a);
    Matrix p(av.rows(), av.cols());
    for (int i = 0; i < av.rows(); ++i) {
      double m = av(i, 0);
      for (int j = 1; j < av.cols(); ++j) m = std::max(m, av(i, j));
      double s = 0.0;
      for (int j = 0; j < av.cols(); ++j) s += std::exp(av(i, j) - m);
      for (int j = 0; j < av.cols(); ++j) p(i, j) = std::exp(av(i, j) - m) / s;
    }
    return push(std::move(p), {a}, [](Tape& t, int self) {
      const Matrix& g = t.nodes_[self].grad;
      const Matrix& p = t.nodes_[self].value;
      Matrix d(p.rows(), p.cols());
      for (int i = 0; i < p.rows(); ++i) {
        double dot = 0.0;
        for (int j = 0; j < p.cols(); ++j) dot += g(i, j) * p(i, j);
        for (int j = 0; j < p.cols(); ++j) d(i, j) = p(i, j) * (g(i, j) - dot);
      }
      t.accum(t.nodes_[self].parents[0], std::move(d));
    });
  }

  // Causal dilated gather: out[t, k*C+c] = x[max(0, t - (K-1-k)*dil), c].
  // Taps reaching before the sequence clamp to the first frame, so a
  // constant-in-time input stays constant through any dilation stack.
  // matmul against a (K*C) x Cout kernel then realizes a dilated 1-D
  // convolution with same-length output.
  NodeId gather_dilated(NodeId a, int taps, int dilation) {
    const Matrix& av = value(a);
    const int T = av.rows(), C = av.cols();
    Matrix v(T, taps * C);
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < taps; ++k) {
        int src = std::max(0, t - (taps - 1 - k) * dilation);
        for (int c = 0; c < C; ++c) v(t, k * C + c) = av(src, c);
      }
    return push(std::move(v), {a}, [taps, dilation, C](Tape& t, int self) {
      const Matrix& g = t.nodes_[self].grad;
      int a = t.nodes_[self].parents[0];
      Matrix d(t.nodes_[a].value.rows(), C);
      for (int row = 0; row < g.rows(); ++row)
        for (int k = 0; k < taps; ++k) {
          int src = std::max(0, row - (taps - 1 - k) * dilation);
          for (int c = 0; c < C; ++c) d(src, c) += g(row, k * C + c);
        }
      t.accum(a, std::move(d));
    });
  }

  NodeId hconcat(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw_shape("hconcat: no inputs");
    int rows = value(parts[0]).rows(), cols = 0;
    for (NodeId p : parts) {
      if (value(p).rows() != rows) throw_shape("hconcat: row mismatch");
      cols += value(p).cols();
    }
    Matrix v(rows, cols);
    int off = 0;
    for (NodeId p : parts) {
      const Matrix& pv = value(p);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < pv.cols(); ++j) v(i, off + j) = pv(i, j);
      off += pv.cols();
    }
    return push(std::move(v), parts, [](Tape& t, int self) {
      const Matrix& g = t.nodes_[self].grad;
      int off = 0;
      for (int p : t.nodes_[self].parents) {
        const Matrix& pv = t.nodes_[p].value;
        Matrix d(pv.rows(), pv.cols());
        for (int i = 0; i < d.rows(); ++i)
          for (int j = 0; j < d.cols(); ++j) d(i, j) = g(i, off + j);
        t.accum(p, std::move(d));
        off += pv.cols();
      }
    });
  }

  NodeId vstack(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw_shape("vstack: no inputs");
    int cols = value(parts[0]).cols(), rows = 0;
    for (NodeId p : parts) {
      if (value(p).cols() != cols) throw_shape("vstack: column mismatch");
      rows += value(p).rows();
    }
    Matrix v(rows, cols);
    int off = 0;
    for (NodeId p : parts) {
      const Matrix& pv = value(p);
      for (int i = 0; i < pv.rows(); ++i)
        for (int j = 0; j < cols; ++j) v(off + i, j) = pv(i, j);
      off += pv.rows();
    }
    return push(std::move(v), parts, [](Tape& t, int self) {
      const Matrix& g = t.nodes_[self].grad;
      int off = 0;
      for (int p : t.nodes_[self].parents) {
        const Matrix& pv = t.nodes_[p].value;
        Matrix d(pv.rows(), pv.cols());
        for (int i = 0; i < d.rows(); ++i)
          for (int j = 0; j < d.cols(); ++j) d(i, j) = g(off + i, j);
        t.accum(p, std::move(d));
        off += pv.rows();
      }
    });
  }

  NodeId sum(NodeId a) {
    Matrix v(1, 1);
    v(0, 0) = sum_all(value(a));
    return push(std::move(v), {a}, [](Tape& t, int self) {
      double g = t.nodes_[self].grad(0, 0);
      int a = t.nodes_[self].parents[0];
      const Matrix& av = t.nodes_[a].value;
      t.accum(a, Matrix(av.rows(), av.cols(), g));
    });
  }

  // Seeds the root with `upstream` (= dLoss/dRoot) and sweeps the tape,
  // accumulating dLoss/dParam into store. Gradients for parameters that the
  // root does not depend on are left untouched.
  void backward(NodeId root, const Matrix& upstream, ParamStore& store) {
    if (nodes_.empty()) throw_protocol("backward: no forward pass recorded");
    check(root);
    if (!upstream.same_shape(nodes_[root].value))
      throw_protocol("backward: upstream shape " + upstream.shape_str() +
                     " does not match root " + nodes_[root].value.shape_str());
    accum(root, upstream);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (!n.param_name.empty()) add_in_place(store.grad(n.param_name), n.grad);
      n.grad = Matrix();  // consumed; keeps repeated backward calls additive
    }
  }

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<int> parents;
    std::function<void(Tape&, int)> backward;
    std::string param_name;
  };

  int check(NodeId id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      throw_protocol("tape: node " + std::to_string(id) + " was never recorded");
    return id;
  }

  NodeId push(Matrix v, std::vector<int> parents, std::function<void(Tape&, int)> back,
              const std::string& param_name = "") {
    for (int p : parents) check(p);
    nodes_.push_back({std::move(v), Matrix(), std::move(parents), std::move(back), param_name});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void accum(int id, Matrix delta) {
    Node& n = nodes_[id];
    if (n.grad.empty())
      n.grad = std::move(delta);
    else
      add_in_place(n.grad, delta);
  }

  std::vector<Node> nodes_;
};

}  // namespace mmcl
