#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aelab/errors.hpp"
#include "aelab/matrix.hpp"

namespace aelab {

/// Hidden-layer activation; analytic first and second derivatives are
/// part of the contract (no numerical fallback).
enum class ActKind : std::uint8_t { Identity, Tanh, Softplus };

double act_value(ActKind k, double u);
double act_d1(ActKind k, double u);
double act_d2(ActKind k, double u);

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

/// Recording tape for reverse-mode differentiation over matrix-valued
/// nodes.  Columns are batch points, so one tape differentiates a whole
/// mini-batch at once.
///
/// Values are computed eagerly at record time.  grad() runs a numeric
/// reverse sweep and gathers parameter adjoints.  jvp()/vjp() do not
/// sweep numerically; they append new nodes that compute the directional
/// derivative of a recorded segment, so their results stay on the tape
/// and remain differentiable by a later grad() call.  That gives the
/// order-two (forward-over-reverse) paths the penalties need; order
/// three is out of scope and throws.
class Tape {
public:
  Tape() = default;
  /// Binds the parameter vector that param_block() views and grad()
  /// differentiates with respect to.  The caller keeps ownership and the
  /// storage must outlive the tape (or its next reset()).
  explicit Tape(std::span<const double> params) : params_(params) {}

  void bind_params(std::span<const double> params) { params_ = params; }
  std::size_t param_count() const { return params_.size(); }

  /// Drops all nodes but keeps allocated capacity for reuse across
  /// training iterations.
  void reset();

  // Leaf nodes.
  NodeId constant(const Matrix& m);
  NodeId constant(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Views params[offset, offset + rows*cols) as a row-major matrix.
  NodeId param_block(std::size_t offset, std::size_t rows, std::size_t cols);

  // Elementary operations (shapes checked, values computed immediately).
  NodeId matmul(NodeId a, NodeId b);    // (r x k)·(k x B)
  NodeId matmul_t(NodeId a, NodeId b);  // aᵀ·b with a (k x r), b (k x B)
  NodeId add_col(NodeId a, NodeId b);   // (r x B) + (r x 1) per column
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId act(NodeId a, ActKind k);
  NodeId act_d(NodeId a, ActKind k);   // σ'(a) elementwise
  NodeId act_d2(NodeId a, ActKind k);  // σ''(a) elementwise
  NodeId dot_cols(NodeId a, NodeId b);  // columnwise inner products -> 1 x B
  NodeId sqnorm_cols(NodeId a);         // columnwise squared norms -> 1 x B
  NodeId div(NodeId a, NodeId b);       // elementwise quotient
  NodeId max_c(NodeId a, double c);     // elementwise max(a, c)
  NodeId gt_c(NodeId a, double c);      // 0/1 mask a > c (constant slope)
  NodeId mean_cols(NodeId a);           // 1 x B -> 1 x 1
  NodeId bcast11(NodeId a, std::size_t cols);  // 1 x 1 -> 1 x B
  NodeId row_select(NodeId a, std::size_t r);  // one row -> 1 x B
  NodeId row_scatter(NodeId a, std::size_t r, std::size_t rows);
  NodeId row_stack(std::span<const NodeId> rows);  // m rows of 1 x B
  NodeId col_scale(NodeId a, NodeId s);  // column j of a times s(0, j)

  std::size_t rows(NodeId n) const { return nodes_[n].rows; }
  std::size_t cols(NodeId n) const { return nodes_[n].cols; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Copy of a node's current value.
  Matrix value(NodeId n) const;
  double scalar(NodeId n) const;

  /// Appends nodes computing the directional derivative of `output` with
  /// respect to `input`, seeded with `seed` (same shape as input).
  NodeId jvp(NodeId output, NodeId input, NodeId seed);

  /// Appends nodes computing the adjoint of `output` with respect to
  /// `input`, seeded with `cotangent` (same shape as output).  Matrix
  /// operands on the left of matmul/matmul_t must not depend on `input`
  /// (true for MLP segments, where they are parameters).
  NodeId vjp(NodeId output, NodeId input, NodeId cotangent);

  /// Reverse sweep from a scalar root; returns the gradient with respect
  /// to the bound parameter vector.  Scans values and the result for
  /// non-finite entries and names the first offending node.
  std::vector<double> grad(NodeId root);

  /// Re-evaluates every node in recording order; values are bit-identical
  /// to the original evaluation for identical inputs.
  void replay();

private:
  enum class Op : std::uint8_t {
    Const, ParamView, MatMul, MatMulT, AddCol, Add, Sub, Hadamard, Scale,
    ActF, ActD, ActD2, DotCols, SqNormCols, Div, MaxC, GtC, MeanCols,
    Bcast11, RowSelect, RowScatter, RowStack, ColScale
  };

  struct Node {
    Op op;
    ActKind akind = ActKind::Identity;
    std::uint32_t rows = 0, cols = 0;
    NodeId a = kNoNode, b = kNoNode;
    std::size_t val = 0;   // offset into vals_
    std::size_t i0 = 0;    // param offset / row index / target rows
    double c = 0.0;        // scalar attribute
    std::uint32_t aux_start = 0, aux_count = 0;  // RowStack operands
  };

  static const char* op_name(Op op);

  NodeId push(Op op, std::size_t rows, std::size_t cols, NodeId a, NodeId b);
  void eval(Node& n);
  void backward(const Node& n, const double* dy, double* adj);
  const double* vptr(NodeId n) const { return vals_.data() + nodes_[n].val; }
  double* vptr(NodeId n) { return vals_.data() + nodes_[n].val; }
  void check_shape(bool ok, const std::string& what) const;
  void check_node(NodeId n) const;
  void throw_non_finite(const std::string& where) const;

  std::span<const double> params_;
  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> adj_;
  std::vector<NodeId> aux_;
};

/// Gradient of a scalar objective with respect to a flat parameter
/// vector.  The builder records the objective on the supplied tape using
/// param_block views into `at` and returns the scalar root node.
std::vector<double> grad(
    const std::function<NodeId(Tape&)>& objective, std::span<const double> at);

/// J·direction for a vector map recorded as tape nodes; plain value API
/// over std::vector for map-level callers.
std::vector<double> jvp(
    const std::function<NodeId(Tape&, NodeId)>& map,
    std::span<const double> at, std::span<const double> direction);

/// Jᵀ·covector, the transpose analogue of jvp.
std::vector<double> vjp(
    const std::function<NodeId(Tape&, NodeId)>& map,
    std::span<const double> at, std::span<const double> covector);

}  // namespace aelab
