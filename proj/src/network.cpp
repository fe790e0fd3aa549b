#include "aelab/network.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <sstream>

#include "aelab/io.hpp"
#include "aelab/prng.hpp"

namespace aelab {

ArchSpec parse_arch(const std::string& text, std::size_t input_dim,
                    std::optional<std::size_t> latent, ActKind activation) {
  if (text.empty()) throw ParseError("parse_arch: empty architecture string");
  std::vector<std::size_t> widths;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t dash = std::min(text.find('-', pos), text.size());
    const std::string tok = text.substr(pos, dash - pos);
    if (tok.empty())
      throw ParseError("parse_arch: empty token in '" + text + "'");
    std::size_t used = 0;
    unsigned long w = 0;
    try {
      w = std::stoul(tok, &used);
    } catch (const std::exception&) {
      throw ParseError("parse_arch: non-integer token '" + tok + "'");
    }
    if (used != tok.size() || w == 0)
      throw ParseError("parse_arch: invalid width token '" + tok + "'");
    widths.push_back(static_cast<std::size_t>(w));
    pos = dash + 1;
    if (dash == text.size()) break;
  }

  ArchSpec arch;
  arch.widths = std::move(widths);
  arch.input_dim = input_dim;
  arch.activation = activation;
  if (latent.has_value()) {
    if (*latent >= arch.widths.size())
      throw ParseError("parse_arch: latent index " + std::to_string(*latent) +
                       " out of range for " +
                       std::to_string(arch.widths.size()) + " hidden layers");
    arch.latent_index = *latent;
  } else {
    // Unique width minimum wins; otherwise the earlier middle layer.
    std::size_t min_w = arch.widths[0], min_at = 0, min_count = 1;
    for (std::size_t i = 1; i < arch.widths.size(); ++i) {
      if (arch.widths[i] < min_w) {
        min_w = arch.widths[i];
        min_at = i;
        min_count = 1;
      } else if (arch.widths[i] == min_w) {
        ++min_count;
      }
    }
    arch.latent_index =
        min_count == 1 ? min_at : (arch.widths.size() - 1) / 2;
  }
  return arch;
}

std::string serialize_arch(const ArchSpec& arch) {
  std::string out;
  for (std::size_t i = 0; i < arch.widths.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(arch.widths[i]);
  }
  return out;
}

const char* act_name(ActKind k) {
  switch (k) {
    case ActKind::Identity: return "identity";
    case ActKind::Tanh: return "tanh";
    case ActKind::Softplus: return "softplus";
  }
  return "?";
}

ActKind act_from_name(const std::string& name) {
  if (name == "identity") return ActKind::Identity;
  if (name == "tanh") return ActKind::Tanh;
  if (name == "softplus") return ActKind::Softplus;
  throw ParseError("unknown activation '" + name + "'");
}

std::size_t Net::w_offset(std::size_t l) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < l; ++i) off += out_dim(i) * (in_dim(i) + 1);
  return off;
}

std::size_t Net::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer_count(); ++l)
    n += out_dim(l) * (in_dim(l) + 1);
  return n;
}

Net init(const ArchSpec& arch, std::uint64_t seed) {
  Net net;
  net.arch = arch;
  net.seed = seed;
  net.params.assign(net.param_count(), 0.0);
  Rng rng(seed);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const double s = 1.0 / std::sqrt(static_cast<double>(net.in_dim(l)));
    double* w = net.params.data() + net.w_offset(l);
    const std::size_t nw = net.out_dim(l) * net.in_dim(l);
    for (std::size_t i = 0; i < nw; ++i) w[i] = s * rng.normal();
    // biases stay zero
  }
  return net;
}

namespace {

// One layer forward on a column batch: y = W h + b, activated if hidden.
Matrix layer_forward(const Net& net, std::size_t l, const Matrix& h) {
  const std::size_t out = net.out_dim(l), in = net.in_dim(l), b = h.cols();
  Matrix y(out, b);
  gemm_acc(y.data(), net.params.data() + net.w_offset(l), h.data(), out, in,
           b);
  const double* bias = net.params.data() + net.b_offset(l);
  for (std::size_t i = 0; i < out; ++i)
    for (std::size_t j = 0; j < b; ++j) y(i, j) += bias[i];
  if (net.hidden(l))
    for (std::size_t i = 0; i < out * b; ++i)
      y.data()[i] = act_value(net.arch.activation, y.data()[i]);
  return y;
}

Matrix forward_range(const Net& net, std::size_t l0, std::size_t l1,
                     Matrix h) {
  for (std::size_t l = l0; l < l1; ++l) h = layer_forward(net, l, h);
  return h;
}

Matrix column_of(std::span<const double> v) {
  Matrix m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
  return m;
}

std::vector<double> to_vector(const Matrix& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw ShapeError(std::string(what) + ": dimension " + std::to_string(got) +
                     ", expected " + std::to_string(want));
}

}  // namespace

Matrix encode_m(const Net& net, const Matrix& x) {
  check_dim(x.rows(), net.arch.input_dim, "encode");
  return forward_range(net, 0, net.arch.latent_index + 1, x);
}

Matrix decode_m(const Net& net, const Matrix& z) {
  check_dim(z.rows(), net.arch.latent_dim(), "decode");
  return forward_range(net, net.arch.latent_index + 1, net.layer_count(), z);
}

Matrix reconstruct_m(const Net& net, const Matrix& x) {
  return decode_m(net, encode_m(net, x));
}

std::vector<double> encode(const Net& net, std::span<const double> x) {
  return to_vector(encode_m(net, column_of(x)));
}

std::vector<double> decode(const Net& net, std::span<const double> z) {
  return to_vector(decode_m(net, column_of(z)));
}

std::vector<double> reconstruct(const Net& net, std::span<const double> x) {
  return to_vector(reconstruct_m(net, column_of(x)));
}

namespace {

// Forward with tangent through layers [l0, l1).
std::pair<std::vector<double>, std::vector<double>> jvp_range(
    const Net& net, std::size_t l0, std::size_t l1, std::span<const double> in,
    std::span<const double> tan) {
  std::vector<double> h(in.begin(), in.end());
  std::vector<double> t(tan.begin(), tan.end());
  for (std::size_t l = l0; l < l1; ++l) {
    const std::size_t out = net.out_dim(l), nin = net.in_dim(l);
    const double* w = net.params.data() + net.w_offset(l);
    const double* bias = net.params.data() + net.b_offset(l);
    std::vector<double> u(out, 0.0), tu(out, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
      double au = bias[i], at = 0.0;
      for (std::size_t k = 0; k < nin; ++k) {
        au += w[i * nin + k] * h[k];
        at += w[i * nin + k] * t[k];
      }
      u[i] = au;
      tu[i] = at;
    }
    if (net.hidden(l))
      for (std::size_t i = 0; i < out; ++i) {
        tu[i] *= act_d1(net.arch.activation, u[i]);
        u[i] = act_value(net.arch.activation, u[i]);
      }
    h = std::move(u);
    t = std::move(tu);
  }
  return {std::move(h), std::move(t)};
}

}  // namespace

std::vector<double> decode_jvp(const Net& net, std::span<const double> z,
                               std::span<const double> v) {
  check_dim(z.size(), net.arch.latent_dim(), "decode_jvp");
  check_dim(v.size(), net.arch.latent_dim(), "decode_jvp direction");
  return jvp_range(net, net.arch.latent_index + 1, net.layer_count(), z, v)
      .second;
}

std::vector<double> encode_jvp(const Net& net, std::span<const double> x,
                               std::span<const double> v) {
  check_dim(x.size(), net.arch.input_dim, "encode_jvp");
  check_dim(v.size(), net.arch.input_dim, "encode_jvp direction");
  return jvp_range(net, 0, net.arch.latent_index + 1, x, v).second;
}

std::vector<double> decode_vjp(const Net& net, std::span<const double> z,
                               std::span<const double> w) {
  check_dim(z.size(), net.arch.latent_dim(), "decode_vjp");
  check_dim(w.size(), net.arch.input_dim, "decode_vjp covector");
  const std::size_t l0 = net.arch.latent_index + 1, l1 = net.layer_count();
  // Forward pass keeping pre-activations per layer.
  std::vector<std::vector<double>> pre;
  std::vector<double> h(z.begin(), z.end());
  for (std::size_t l = l0; l < l1; ++l) {
    const std::size_t out = net.out_dim(l), nin = net.in_dim(l);
    const double* wm = net.params.data() + net.w_offset(l);
    const double* bias = net.params.data() + net.b_offset(l);
    std::vector<double> u(out);
    for (std::size_t i = 0; i < out; ++i) {
      double acc = bias[i];
      for (std::size_t k = 0; k < nin; ++k) acc += wm[i * nin + k] * h[k];
      u[i] = acc;
    }
    pre.push_back(u);
    if (net.hidden(l))
      for (double& ui : u) ui = act_value(net.arch.activation, ui);
    h = std::move(u);
  }
  // Transpose sweep.
  std::vector<double> c(w.begin(), w.end());
  for (std::size_t l = l1; l-- > l0;) {
    const std::size_t out = net.out_dim(l), nin = net.in_dim(l);
    const std::vector<double>& u = pre[l - l0];
    if (net.hidden(l))
      for (std::size_t i = 0; i < out; ++i)
        c[i] *= act_d1(net.arch.activation, u[i]);
    const double* wm = net.params.data() + net.w_offset(l);
    std::vector<double> prev(nin, 0.0);
    for (std::size_t i = 0; i < out; ++i)
      for (std::size_t k = 0; k < nin; ++k) prev[k] += wm[i * nin + k] * c[i];
    c = std::move(prev);
  }
  return c;
}

namespace {

NodeId record_range(Tape& tape, const Net& net, std::size_t l0, std::size_t l1,
                    NodeId h) {
  for (std::size_t l = l0; l < l1; ++l) {
    const NodeId w = tape.param_block(net.w_offset(l), net.out_dim(l),
                                      net.in_dim(l));
    const NodeId b = tape.param_block(net.b_offset(l), net.out_dim(l), 1);
    h = tape.add_col(tape.matmul(w, h), b);
    if (net.hidden(l)) h = tape.act(h, net.arch.activation);
  }
  return h;
}

}  // namespace

NodeId record_encode(Tape& tape, const Net& net, NodeId x) {
  return record_range(tape, net, 0, net.arch.latent_index + 1, x);
}

NodeId record_decode(Tape& tape, const Net& net, NodeId z) {
  return record_range(tape, net, net.arch.latent_index + 1, net.layer_count(),
                      z);
}

NodeId record_reconstruct(Tape& tape, const Net& net, NodeId x) {
  return record_decode(tape, net, record_encode(tape, net, x));
}

std::string checkpoint_to_string(const Net& net) {
  std::string out;
  out.reserve(32 * net.params.size() + 256);
  out += "aelab-net 1\n";
  out += "arch " + serialize_arch(net.arch) + "\n";
  out += "latent " + std::to_string(net.arch.latent_index) + "\n";
  out += "activation " + std::string(act_name(net.arch.activation)) + "\n";
  out += "input_dim " + std::to_string(net.arch.input_dim) + "\n";
  out += "seed " + std::to_string(net.seed) + "\n";
  out += "params " + std::to_string(net.params.size()) + "\n";
  char buf[40];
  for (double p : net.params) {
    std::snprintf(buf, sizeof buf, "%.17g\n", p);
    out += buf;
  }
  return out;
}

namespace {

std::string expect_line(std::istringstream& in, const std::string& key) {
  std::string k, v;
  if (!(in >> k >> v) || k != key)
    throw ParseError("checkpoint: expected '" + key + "' line");
  return v;
}

}  // namespace

Net checkpoint_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string magic, version;
  if (!(in >> magic >> version) || magic != "aelab-net" || version != "1")
    throw ParseError("checkpoint: bad header (want 'aelab-net 1')");
  const std::string arch_s = expect_line(in, "arch");
  const std::size_t latent = std::stoul(expect_line(in, "latent"));
  const ActKind act = act_from_name(expect_line(in, "activation"));
  const std::size_t input_dim = std::stoul(expect_line(in, "input_dim"));
  const std::uint64_t seed = std::stoull(expect_line(in, "seed"));
  const std::size_t count = std::stoul(expect_line(in, "params"));

  Net net;
  net.arch = parse_arch(arch_s, input_dim, latent, act);
  net.seed = seed;
  if (count != net.param_count())
    throw ParseError("checkpoint: parameter count " + std::to_string(count) +
                     " does not match architecture (" +
                     std::to_string(net.param_count()) + ")");
  net.params.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    if (!(in >> net.params[i]))
      throw ParseError("checkpoint: truncated parameter list at index " +
                       std::to_string(i));
  return net;
}

void save_checkpoint(const Net& net, const std::string& path) {
  write_file_atomic(path, checkpoint_to_string(net));
}

Net load_checkpoint(const std::string& path) {
  return checkpoint_from_string(read_file(path));
}

}  // namespace aelab
