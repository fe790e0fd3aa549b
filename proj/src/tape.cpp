#include "aelab/tape.hpp"

#include <cmath>
#include <cstring>

namespace aelab {

double act_value(ActKind k, double u) {
  switch (k) {
    case ActKind::Identity: return u;
    case ActKind::Tanh: return std::tanh(u);
    case ActKind::Softplus:
      // log(1 + e^u), stable on both tails.
      return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
  }
  return u;
}

double act_d1(ActKind k, double u) {
  switch (k) {
    case ActKind::Identity: return 1.0;
    case ActKind::Tanh: {
      const double t = std::tanh(u);
      return 1.0 - t * t;
    }
    case ActKind::Softplus: {
      if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
      const double e = std::exp(u);
      return e / (1.0 + e);
    }
  }
  return 1.0;
}

double act_d2(ActKind k, double u) {
  switch (k) {
    case ActKind::Identity: return 0.0;
    case ActKind::Tanh: {
      const double t = std::tanh(u);
      return -2.0 * t * (1.0 - t * t);
    }
    case ActKind::Softplus: {
      const double s = act_d1(ActKind::Softplus, u);
      return s * (1.0 - s);
    }
  }
  return 0.0;
}

const char* Tape::op_name(Op op) {
  switch (op) {
    case Op::Const: return "Const";
    case Op::ParamView: return "ParamView";
    case Op::MatMul: return "MatMul";
    case Op::MatMulT: return "MatMulT";
    case Op::AddCol: return "AddCol";
    case Op::Add: return "Add";
    case Op::Sub: return "Sub";
    case Op::Hadamard: return "Hadamard";
    case Op::Scale: return "Scale";
    case Op::ActF: return "ActF";
    case Op::ActD: return "ActD";
    case Op::ActD2: return "ActD2";
    case Op::DotCols: return "DotCols";
    case Op::SqNormCols: return "SqNormCols";
    case Op::Div: return "Div";
    case Op::MaxC: return "MaxC";
    case Op::GtC: return "GtC";
    case Op::MeanCols: return "MeanCols";
    case Op::Bcast11: return "Bcast11";
    case Op::RowSelect: return "RowSelect";
    case Op::RowScatter: return "RowScatter";
    case Op::RowStack: return "RowStack";
    case Op::ColScale: return "ColScale";
  }
  return "?";
}

void Tape::reset() {
  nodes_.clear();
  vals_.clear();
  adj_.clear();
  aux_.clear();
}

void Tape::check_shape(bool ok, const std::string& what) const {
  if (!ok) throw ShapeError(what);
}

void Tape::check_node(NodeId n) const {
  if (n < 0 || static_cast<std::size_t>(n) >= nodes_.size())
    throw ShapeError("invalid node id " + std::to_string(n));
}

NodeId Tape::push(Op op, std::size_t rows, std::size_t cols, NodeId a,
                  NodeId b) {
  Node n;
  n.op = op;
  n.rows = static_cast<std::uint32_t>(rows);
  n.cols = static_cast<std::uint32_t>(cols);
  n.a = a;
  n.b = b;
  n.val = vals_.size();
  vals_.resize(vals_.size() + rows * cols, 0.0);
  nodes_.push_back(n);
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(const Matrix& m) {
  const NodeId id = push(Op::Const, m.rows(), m.cols(), kNoNode, kNoNode);
  std::memcpy(vptr(id), m.data(), m.size() * sizeof(double));
  return id;
}

NodeId Tape::constant(std::size_t rows, std::size_t cols, double fill) {
  const NodeId id = push(Op::Const, rows, cols, kNoNode, kNoNode);
  double* v = vptr(id);
  for (std::size_t i = 0; i < rows * cols; ++i) v[i] = fill;
  return id;
}

NodeId Tape::param_block(std::size_t offset, std::size_t rows,
                         std::size_t cols) {
  check_shape(offset + rows * cols <= params_.size(),
              "param_block out of range");
  const NodeId id = push(Op::ParamView, rows, cols, kNoNode, kNoNode);
  nodes_[id].i0 = offset;
  eval(nodes_[id]);
  return id;
}

#define AELAB_BINARY(NAME, OP, RCHECK, ROWS, COLS)                        \
  NodeId Tape::NAME(NodeId a, NodeId b) {                                 \
    check_node(a);                                                        \
    check_node(b);                                                        \
    const Node& na = nodes_[a];                                           \
    const Node& nb = nodes_[b];                                           \
    check_shape((RCHECK), #NAME ": shape mismatch");                      \
    const NodeId id = push(Op::OP, (ROWS), (COLS), a, b);                 \
    eval(nodes_[id]);                                                     \
    return id;                                                            \
  }

AELAB_BINARY(matmul, MatMul, na.cols == nb.rows, na.rows, nb.cols)
AELAB_BINARY(matmul_t, MatMulT, na.rows == nb.rows, na.cols, nb.cols)
AELAB_BINARY(add_col, AddCol, nb.cols == 1 && na.rows == nb.rows, na.rows,
             na.cols)
AELAB_BINARY(add, Add, na.rows == nb.rows && na.cols == nb.cols, na.rows,
             na.cols)
AELAB_BINARY(sub, Sub, na.rows == nb.rows && na.cols == nb.cols, na.rows,
             na.cols)
AELAB_BINARY(hadamard, Hadamard, na.rows == nb.rows && na.cols == nb.cols,
             na.rows, na.cols)
AELAB_BINARY(dot_cols, DotCols, na.rows == nb.rows && na.cols == nb.cols, 1,
             na.cols)
AELAB_BINARY(div, Div, na.rows == nb.rows && na.cols == nb.cols, na.rows,
             na.cols)
#undef AELAB_BINARY

NodeId Tape::col_scale(NodeId a, NodeId s) {
  check_node(a);
  check_node(s);
  const Node& na = nodes_[a];
  const Node& ns = nodes_[s];
  check_shape(ns.rows == 1 && ns.cols == na.cols, "col_scale: shape mismatch");
  const NodeId id = push(Op::ColScale, na.rows, na.cols, a, s);
  eval(nodes_[id]);
  return id;
}

NodeId Tape::scale(NodeId a, double c) {
  check_node(a);
  const NodeId id = push(Op::Scale, nodes_[a].rows, nodes_[a].cols, a, kNoNode);
  nodes_[id].c = c;
  eval(nodes_[id]);
  return id;
}

NodeId Tape::act(NodeId a, ActKind k) {
  check_node(a);
  const NodeId id = push(Op::ActF, nodes_[a].rows, nodes_[a].cols, a, kNoNode);
  nodes_[id].akind = k;
  eval(nodes_[id]);
  return id;
}

NodeId Tape::act_d(NodeId a, ActKind k) {
  check_node(a);
  const NodeId id = push(Op::ActD, nodes_[a].rows, nodes_[a].cols, a, kNoNode);
  nodes_[id].akind = k;
  eval(nodes_[id]);
  return id;
}

NodeId Tape::act_d2(NodeId a, ActKind k) {
  check_node(a);
  const NodeId id = push(Op::ActD2, nodes_[a].rows, nodes_[a].cols, a, kNoNode);
  nodes_[id].akind = k;
  eval(nodes_[id]);
  return id;
}

NodeId Tape::sqnorm_cols(NodeId a) {
  check_node(a);
  const NodeId id = push(Op::SqNormCols, 1, nodes_[a].cols, a, kNoNode);
  eval(nodes_[id]);
  return id;
}

NodeId Tape::max_c(NodeId a, double c) {
  check_node(a);
  const NodeId id = push(Op::MaxC, nodes_[a].rows, nodes_[a].cols, a, kNoNode);
  nodes_[id].c = c;
  eval(nodes_[id]);
  return id;
}

NodeId Tape::gt_c(NodeId a, double c) {
  check_node(a);
  const NodeId id = push(Op::GtC, nodes_[a].rows, nodes_[a].cols, a, kNoNode);
  nodes_[id].c = c;
  eval(nodes_[id]);
  return id;
}

NodeId Tape::mean_cols(NodeId a) {
  check_node(a);
  check_shape(nodes_[a].rows == 1, "mean_cols: expects a 1 x B node");
  const NodeId id = push(Op::MeanCols, 1, 1, a, kNoNode);
  eval(nodes_[id]);
  return id;
}

NodeId Tape::bcast11(NodeId a, std::size_t cols) {
  check_node(a);
  check_shape(nodes_[a].rows == 1 && nodes_[a].cols == 1,
              "bcast11: expects a 1 x 1 node");
  const NodeId id = push(Op::Bcast11, 1, cols, a, kNoNode);
  eval(nodes_[id]);
  return id;
}

NodeId Tape::row_select(NodeId a, std::size_t r) {
  check_node(a);
  check_shape(r < nodes_[a].rows, "row_select: row out of range");
  const NodeId id = push(Op::RowSelect, 1, nodes_[a].cols, a, kNoNode);
  nodes_[id].i0 = r;
  eval(nodes_[id]);
  return id;
}

NodeId Tape::row_scatter(NodeId a, std::size_t r, std::size_t rows) {
  check_node(a);
  check_shape(nodes_[a].rows == 1 && r < rows, "row_scatter: row out of range");
  const NodeId id = push(Op::RowScatter, rows, nodes_[a].cols, a, kNoNode);
  nodes_[id].i0 = r;
  eval(nodes_[id]);
  return id;
}

NodeId Tape::row_stack(std::span<const NodeId> rows) {
  check_shape(!rows.empty(), "row_stack: no rows");
  const std::size_t b = nodes_[rows[0]].cols;
  for (NodeId r : rows) {
    check_node(r);
    check_shape(nodes_[r].rows == 1 && nodes_[r].cols == b,
                "row_stack: rows must be 1 x B with equal B");
  }
  const std::uint32_t start = static_cast<std::uint32_t>(aux_.size());
  aux_.insert(aux_.end(), rows.begin(), rows.end());
  const NodeId id = push(Op::RowStack, rows.size(), b, kNoNode, kNoNode);
  nodes_[id].aux_start = start;
  nodes_[id].aux_count = static_cast<std::uint32_t>(rows.size());
  eval(nodes_[id]);
  return id;
}

Matrix Tape::value(NodeId n) const {
  check_node(n);
  const Node& nd = nodes_[n];
  Matrix m(nd.rows, nd.cols);
  std::memcpy(m.data(), vptr(n), m.size() * sizeof(double));
  return m;
}

double Tape::scalar(NodeId n) const {
  check_node(n);
  check_shape(nodes_[n].rows == 1 && nodes_[n].cols == 1,
              "scalar: node is not 1 x 1");
  return *vptr(n);
}

void Tape::eval(Node& n) {
  const std::size_t r = n.rows, c = n.cols, sz = r * c;
  double* y = vals_.data() + n.val;
  const double* a = n.a >= 0 ? vptr(n.a) : nullptr;
  const double* b = n.b >= 0 ? vptr(n.b) : nullptr;
  switch (n.op) {
    case Op::Const:
      break;  // value written at construction; replay keeps it
    case Op::ParamView:
      std::memcpy(y, params_.data() + n.i0, sz * sizeof(double));
      break;
    case Op::MatMul: {
      std::memset(y, 0, sz * sizeof(double));
      const Node& na = nodes_[n.a];
      gemm_acc(y, a, b, na.rows, na.cols, c);
      break;
    }
    case Op::MatMulT: {
      std::memset(y, 0, sz * sizeof(double));
      const Node& na = nodes_[n.a];
      gemm_tn_acc(y, a, b, na.rows, na.cols, c);
      break;
    }
    case Op::AddCol:
      for (std::size_t i = 0; i < r; ++i) {
        const double bi = b[i];
        for (std::size_t j = 0; j < c; ++j) y[i * c + j] = a[i * c + j] + bi;
      }
      break;
    case Op::Add:
      for (std::size_t i = 0; i < sz; ++i) y[i] = a[i] + b[i];
      break;
    case Op::Sub:
      for (std::size_t i = 0; i < sz; ++i) y[i] = a[i] - b[i];
      break;
    case Op::Hadamard:
      for (std::size_t i = 0; i < sz; ++i) y[i] = a[i] * b[i];
      break;
    case Op::Scale:
      for (std::size_t i = 0; i < sz; ++i) y[i] = n.c * a[i];
      break;
    case Op::ActF:
      for (std::size_t i = 0; i < sz; ++i) y[i] = act_value(n.akind, a[i]);
      break;
    case Op::ActD:
      for (std::size_t i = 0; i < sz; ++i) y[i] = act_d1(n.akind, a[i]);
      break;
    case Op::ActD2:
      for (std::size_t i = 0; i < sz; ++i) y[i] = aelab::act_d2(n.akind, a[i]);
      break;
    case Op::DotCols: {
      const Node& na = nodes_[n.a];
      for (std::size_t j = 0; j < c; ++j) y[j] = 0.0;
      for (std::size_t i = 0; i < na.rows; ++i)
        for (std::size_t j = 0; j < c; ++j) y[j] += a[i * c + j] * b[i * c + j];
      break;
    }
    case Op::SqNormCols: {
      const Node& na = nodes_[n.a];
      for (std::size_t j = 0; j < c; ++j) y[j] = 0.0;
      for (std::size_t i = 0; i < na.rows; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const double v = a[i * c + j];
          y[j] += v * v;
        }
      break;
    }
    case Op::Div:
      for (std::size_t i = 0; i < sz; ++i) y[i] = a[i] / b[i];
      break;
    case Op::MaxC:
      for (std::size_t i = 0; i < sz; ++i) y[i] = a[i] > n.c ? a[i] : n.c;
      break;
    case Op::GtC:
      for (std::size_t i = 0; i < sz; ++i) y[i] = a[i] > n.c ? 1.0 : 0.0;
      break;
    case Op::MeanCols: {
      const std::size_t bcols = nodes_[n.a].cols;
      double acc = 0.0;
      for (std::size_t j = 0; j < bcols; ++j) acc += a[j];
      y[0] = acc / static_cast<double>(bcols);
      break;
    }
    case Op::Bcast11:
      for (std::size_t j = 0; j < c; ++j) y[j] = a[0];
      break;
    case Op::RowSelect:
      std::memcpy(y, a + n.i0 * c, c * sizeof(double));
      break;
    case Op::RowScatter:
      std::memset(y, 0, sz * sizeof(double));
      std::memcpy(y + n.i0 * c, a, c * sizeof(double));
      break;
    case Op::RowStack:
      for (std::size_t k = 0; k < n.aux_count; ++k)
        std::memcpy(y + k * c, vptr(aux_[n.aux_start + k]), c * sizeof(double));
      break;
    case Op::ColScale:
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) y[i * c + j] = a[i * c + j] * b[j];
      break;
  }
}

void Tape::backward(const Node& n, const double* dy, double* adj) {
  const std::size_t r = n.rows, c = n.cols, sz = r * c;
  const double* a = n.a >= 0 ? vptr(n.a) : nullptr;
  const double* b = n.b >= 0 ? vptr(n.b) : nullptr;
  double* da = n.a >= 0 ? adj + nodes_[n.a].val : nullptr;
  double* db = n.b >= 0 ? adj + nodes_[n.b].val : nullptr;
  switch (n.op) {
    case Op::Const:
    case Op::ParamView:
    case Op::GtC:
      break;
    case Op::MatMul: {
      const Node& na = nodes_[n.a];
      gemm_nt_acc(da, dy, b, na.rows, na.cols, c);
      gemm_tn_acc(db, a, dy, na.rows, na.cols, c);
      break;
    }
    case Op::MatMulT: {
      const Node& na = nodes_[n.a];  // a is k x r, y is r x B
      gemm_nt_acc(da, b, dy, na.rows, na.cols, c);
      gemm_acc(db, a, dy, na.rows, na.cols, c);
      break;
    }
    case Op::AddCol:
      for (std::size_t i = 0; i < sz; ++i) da[i] += dy[i];
      for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += dy[i * c + j];
        db[i] += acc;
      }
      break;
    case Op::Add:
      for (std::size_t i = 0; i < sz; ++i) da[i] += dy[i];
      for (std::size_t i = 0; i < sz; ++i) db[i] += dy[i];
      break;
    case Op::Sub:
      for (std::size_t i = 0; i < sz; ++i) da[i] += dy[i];
      for (std::size_t i = 0; i < sz; ++i) db[i] -= dy[i];
      break;
    case Op::Hadamard:
      for (std::size_t i = 0; i < sz; ++i) da[i] += dy[i] * b[i];
      for (std::size_t i = 0; i < sz; ++i) db[i] += dy[i] * a[i];
      break;
    case Op::Scale:
      for (std::size_t i = 0; i < sz; ++i) da[i] += n.c * dy[i];
      break;
    case Op::ActF:
      for (std::size_t i = 0; i < sz; ++i)
        da[i] += dy[i] * act_d1(n.akind, a[i]);
      break;
    case Op::ActD:
      for (std::size_t i = 0; i < sz; ++i)
        da[i] += dy[i] * aelab::act_d2(n.akind, a[i]);
      break;
    case Op::ActD2:
      throw Error("tape: differentiation order above two is not supported");
    case Op::DotCols: {
      const Node& na = nodes_[n.a];
      for (std::size_t i = 0; i < na.rows; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          da[i * c + j] += dy[j] * b[i * c + j];
          db[i * c + j] += dy[j] * a[i * c + j];
        }
      break;
    }
    case Op::SqNormCols: {
      const Node& na = nodes_[n.a];
      for (std::size_t i = 0; i < na.rows; ++i)
        for (std::size_t j = 0; j < c; ++j)
          da[i * c + j] += 2.0 * dy[j] * a[i * c + j];
      break;
    }
    case Op::Div: {
      const double* y = vals_.data() + n.val;
      for (std::size_t i = 0; i < sz; ++i) da[i] += dy[i] / b[i];
      for (std::size_t i = 0; i < sz; ++i) db[i] -= dy[i] * y[i] / b[i];
      break;
    }
    case Op::MaxC:
      for (std::size_t i = 0; i < sz; ++i)
        if (a[i] > n.c) da[i] += dy[i];
      break;
    case Op::MeanCols: {
      const std::size_t bcols = nodes_[n.a].cols;
      const double g = dy[0] / static_cast<double>(bcols);
      for (std::size_t j = 0; j < bcols; ++j) da[j] += g;
      break;
    }
    case Op::Bcast11: {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j) acc += dy[j];
      da[0] += acc;
      break;
    }
    case Op::RowSelect:
      for (std::size_t j = 0; j < c; ++j) da[n.i0 * c + j] += dy[j];
      break;
    case Op::RowScatter:
      for (std::size_t j = 0; j < c; ++j) da[j] += dy[n.i0 * c + j];
      break;
    case Op::RowStack:
      for (std::size_t k = 0; k < n.aux_count; ++k) {
        double* dk = adj + nodes_[aux_[n.aux_start + k]].val;
        for (std::size_t j = 0; j < c; ++j) dk[j] += dy[k * c + j];
      }
      break;
    case Op::ColScale:
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) da[i * c + j] += dy[i * c + j] * b[j];
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) db[j] += dy[i * c + j] * a[i * c + j];
      break;
  }
}

void Tape::throw_non_finite(const std::string& where) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const double* v = vals_.data() + n.val;
    for (std::size_t k = 0; k < std::size_t(n.rows) * n.cols; ++k)
      if (!std::isfinite(v[k]))
        throw NonFiniteError(where + ": non-finite value in node #" +
                             std::to_string(i) + " (" + op_name(n.op) + ")");
  }
  throw NonFiniteError(where + ": non-finite value");
}

std::vector<double> Tape::grad(NodeId root) {
  check_node(root);
  check_shape(nodes_[root].rows == 1 && nodes_[root].cols == 1,
              "grad: root must be a 1 x 1 scalar node");
  for (double v : vals_)
    if (!std::isfinite(v)) throw_non_finite("grad");
  adj_.assign(vals_.size(), 0.0);
  std::vector<char> live(nodes_.size(), 0);
  live[root] = 1;
  adj_[nodes_[root].val] = 1.0;
  for (NodeId i = root; i >= 0; --i) {
    if (!live[i]) continue;
    const Node n = nodes_[i];
    backward(n, adj_.data() + n.val, adj_.data());
    if (n.a >= 0) live[n.a] = 1;
    if (n.b >= 0) live[n.b] = 1;
    for (std::size_t k = 0; k < n.aux_count; ++k) live[aux_[n.aux_start + k]] = 1;
  }
  std::vector<double> g(params_.size(), 0.0);
  for (const Node& n : nodes_) {
    if (n.op != Op::ParamView) continue;
    const double* d = adj_.data() + n.val;
    for (std::size_t k = 0; k < std::size_t(n.rows) * n.cols; ++k)
      g[n.i0 + k] += d[k];
  }
  for (double v : g)
    if (!std::isfinite(v)) throw_non_finite("grad(backward)");
  return g;
}

void Tape::replay() {
  for (Node& n : nodes_) eval(n);
}

NodeId Tape::jvp(NodeId output, NodeId input, NodeId seed) {
  check_node(output);
  check_node(input);
  check_node(seed);
  check_shape(nodes_[seed].rows == nodes_[input].rows &&
                  nodes_[seed].cols == nodes_[input].cols,
              "jvp: seed shape must match input shape");
  if (input == output) return seed;
  const NodeId hi = output;
  std::vector<NodeId> tan(nodes_.size(), kNoNode);
  tan[input] = seed;
  auto lin2 = [&](NodeId x, NodeId y) {
    if (x == kNoNode) return y;
    if (y == kNoNode) return x;
    return add(x, y);
  };
  for (NodeId i = input + 1; i <= hi; ++i) {
    const Node n = nodes_[i];
    const NodeId ta = n.a >= 0 ? tan[n.a] : kNoNode;
    const NodeId tb = n.b >= 0 ? tan[n.b] : kNoNode;
    bool aux_live = false;
    for (std::size_t k = 0; k < n.aux_count && !aux_live; ++k)
      aux_live = tan[aux_[n.aux_start + k]] != kNoNode;
    if (ta == kNoNode && tb == kNoNode && !aux_live) continue;
    NodeId t = kNoNode;
    switch (n.op) {
      case Op::Const:
      case Op::ParamView:
        break;
      case Op::GtC:
        t = kNoNode;  // piecewise-constant mask, zero derivative a.e.
        break;
      case Op::MatMul:
        t = lin2(ta != kNoNode ? matmul(ta, n.b) : kNoNode,
                 tb != kNoNode ? matmul(n.a, tb) : kNoNode);
        break;
      case Op::MatMulT:
        t = lin2(ta != kNoNode ? matmul_t(ta, n.b) : kNoNode,
                 tb != kNoNode ? matmul_t(n.a, tb) : kNoNode);
        break;
      case Op::AddCol:
        if (ta != kNoNode && tb != kNoNode) t = add_col(ta, tb);
        else if (ta != kNoNode) t = ta;
        else t = add_col(constant(n.rows, n.cols, 0.0), tb);
        break;
      case Op::Add:
        t = lin2(ta, tb);
        break;
      case Op::Sub:
        if (ta != kNoNode && tb != kNoNode) t = sub(ta, tb);
        else if (ta != kNoNode) t = ta;
        else t = scale(tb, -1.0);
        break;
      case Op::Hadamard:
        t = lin2(ta != kNoNode ? hadamard(ta, n.b) : kNoNode,
                 tb != kNoNode ? hadamard(n.a, tb) : kNoNode);
        break;
      case Op::Scale:
        t = scale(ta, n.c);
        break;
      case Op::ActF:
        t = hadamard(act_d(n.a, n.akind), ta);
        break;
      case Op::ActD:
        t = hadamard(act_d2(n.a, n.akind), ta);
        break;
      case Op::ActD2:
        throw Error("tape: differentiation order above two is not supported");
      case Op::DotCols:
        t = lin2(ta != kNoNode ? dot_cols(ta, n.b) : kNoNode,
                 tb != kNoNode ? dot_cols(n.a, tb) : kNoNode);
        break;
      case Op::SqNormCols:
        t = scale(dot_cols(n.a, ta), 2.0);
        break;
      case Op::Div: {
        const NodeId t1 = ta != kNoNode ? div(ta, n.b) : kNoNode;
        const NodeId t2 =
            tb != kNoNode ? div(hadamard(i, tb), n.b) : kNoNode;
        if (t1 != kNoNode && t2 != kNoNode) t = sub(t1, t2);
        else if (t1 != kNoNode) t = t1;
        else t = scale(t2, -1.0);
        break;
      }
      case Op::MaxC:
        t = hadamard(ta, gt_c(n.a, n.c));
        break;
      case Op::MeanCols:
        t = mean_cols(ta);
        break;
      case Op::Bcast11:
        t = bcast11(ta, n.cols);
        break;
      case Op::RowSelect:
        t = row_select(ta, n.i0);
        break;
      case Op::RowScatter:
        t = row_scatter(ta, n.i0, n.rows);
        break;
      case Op::RowStack: {
        std::vector<NodeId> parts(n.aux_count);
        for (std::size_t k = 0; k < n.aux_count; ++k) {
          const NodeId tk = tan[aux_[n.aux_start + k]];
          parts[k] = tk != kNoNode ? tk : constant(1, n.cols, 0.0);
        }
        t = row_stack(parts);
        break;
      }
      case Op::ColScale:
        t = lin2(ta != kNoNode ? col_scale(ta, n.b) : kNoNode,
                 tb != kNoNode ? col_scale(n.a, tb) : kNoNode);
        break;
    }
    tan[i] = t;
  }
  return tan[hi] != kNoNode ? tan[hi]
                            : constant(nodes_[hi].rows, nodes_[hi].cols, 0.0);
}

NodeId Tape::vjp(NodeId output, NodeId input, NodeId cotangent) {
  check_node(output);
  check_node(input);
  check_node(cotangent);
  check_shape(nodes_[cotangent].rows == nodes_[output].rows &&
                  nodes_[cotangent].cols == nodes_[output].cols,
              "vjp: cotangent shape must match output shape");
  if (input == output) return cotangent;
  const NodeId hi = output;
  std::vector<char> cone(nodes_.size(), 0);
  cone[input] = 1;
  for (NodeId i = input + 1; i <= hi; ++i) {
    const Node& n = nodes_[i];
    bool c = (n.a >= 0 && cone[n.a]) || (n.b >= 0 && cone[n.b]);
    for (std::size_t k = 0; k < n.aux_count && !c; ++k)
      c = cone[aux_[n.aux_start + k]];
    cone[i] = c ? 1 : 0;
  }
  std::vector<NodeId> cot(nodes_.size(), kNoNode);
  cot[hi] = cotangent;
  auto acc = [&](NodeId slot, NodeId contrib) {
    cot[slot] = cot[slot] == kNoNode ? contrib : add(cot[slot], contrib);
  };
  for (NodeId i = hi; i > input; --i) {
    if (!cone[i] || cot[i] == kNoNode) continue;
    const Node n = nodes_[i];
    const NodeId w = cot[i];
    const bool ca = n.a >= 0 && cone[n.a];
    const bool cb = n.b >= 0 && cone[n.b];
    switch (n.op) {
      case Op::Const:
      case Op::ParamView:
      case Op::GtC:
        break;
      case Op::MatMul:
        if (ca)
          throw Error(
              "vjp: left matmul operand depends on the swept input; only "
              "MLP-shaped segments (parameters outside the sweep) are "
              "supported");
        if (cb) acc(n.b, matmul_t(n.a, w));
        break;
      case Op::MatMulT:
        if (ca)
          throw Error(
              "vjp: left matmul operand depends on the swept input; only "
              "MLP-shaped segments (parameters outside the sweep) are "
              "supported");
        if (cb) acc(n.b, matmul(n.a, w));
        break;
      case Op::AddCol:
        if (cb)
          throw Error("vjp: column-bias operand depends on the swept input");
        if (ca) acc(n.a, w);
        break;
      case Op::Add:
        if (ca) acc(n.a, w);
        if (cb) acc(n.b, w);
        break;
      case Op::Sub:
        if (ca) acc(n.a, w);
        if (cb) acc(n.b, scale(w, -1.0));
        break;
      case Op::Hadamard:
        if (ca) acc(n.a, hadamard(w, n.b));
        if (cb) acc(n.b, hadamard(w, n.a));
        break;
      case Op::Scale:
        acc(n.a, scale(w, n.c));
        break;
      case Op::ActF:
        acc(n.a, hadamard(w, act_d(n.a, n.akind)));
        break;
      case Op::ActD:
        acc(n.a, hadamard(w, act_d2(n.a, n.akind)));
        break;
      case Op::ActD2:
        throw Error("tape: differentiation order above two is not supported");
      case Op::DotCols:
        if (ca) acc(n.a, col_scale(n.b, w));
        if (cb) acc(n.b, col_scale(n.a, w));
        break;
      case Op::SqNormCols:
        acc(n.a, col_scale(n.a, scale(w, 2.0)));
        break;
      case Op::Div:
        if (ca) acc(n.a, div(w, n.b));
        if (cb) acc(n.b, scale(div(hadamard(w, i), n.b), -1.0));
        break;
      case Op::MaxC:
        acc(n.a, hadamard(w, gt_c(n.a, n.c)));
        break;
      case Op::MeanCols:
        acc(n.a, scale(bcast11(w, nodes_[n.a].cols),
                       1.0 / static_cast<double>(nodes_[n.a].cols)));
        break;
      case Op::Bcast11:
        acc(n.a, scale(mean_cols(w), static_cast<double>(n.cols)));
        break;
      case Op::RowSelect:
        acc(n.a, row_scatter(w, n.i0, nodes_[n.a].rows));
        break;
      case Op::RowScatter:
        acc(n.a, row_select(w, n.i0));
        break;
      case Op::RowStack:
        for (std::size_t k = 0; k < n.aux_count; ++k) {
          const NodeId src = aux_[n.aux_start + k];
          if (cone[src]) acc(src, row_select(w, k));
        }
        break;
      case Op::ColScale:
        if (ca) acc(n.a, col_scale(w, n.b));
        if (cb) acc(n.b, dot_cols(n.a, w));
        break;
    }
  }
  return cot[input] != kNoNode
             ? cot[input]
             : constant(nodes_[input].rows, nodes_[input].cols, 0.0);
}

std::vector<double> grad(const std::function<NodeId(Tape&)>& objective,
                         std::span<const double> at) {
  Tape t(at);
  const NodeId root = objective(t);
  return t.grad(root);
}

namespace {

Matrix column(std::span<const double> v) {
  Matrix m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
  return m;
}

std::vector<double> flatten(const Matrix& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

}  // namespace

std::vector<double> jvp(const std::function<NodeId(Tape&, NodeId)>& map,
                        std::span<const double> at,
                        std::span<const double> direction) {
  Tape t;
  const NodeId x = t.constant(column(at));
  const NodeId y = map(t, x);
  const NodeId seed = t.constant(column(direction));
  return flatten(t.value(t.jvp(y, x, seed)));
}

std::vector<double> vjp(const std::function<NodeId(Tape&, NodeId)>& map,
                        std::span<const double> at,
                        std::span<const double> covector) {
  Tape t;
  const NodeId x = t.constant(column(at));
  const NodeId y = map(t, x);
  const NodeId seed = t.constant(column(covector));
  return flatten(t.value(t.vjp(y, x, seed)));
}

}  // namespace aelab
