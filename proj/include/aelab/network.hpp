#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aelab/matrix.hpp"
#include "aelab/tape.hpp"

namespace aelab {

/// Architecture of an MLP autoencoder: hidden-layer widths with a
/// designated latent layer splitting encoder from decoder.  Input and
/// output dimensions are equal by construction.
struct ArchSpec {
  std::vector<std::size_t> widths;
  std::size_t latent_index = 0;
  std::size_t input_dim = 2;
  ActKind activation = ActKind::Tanh;

  std::size_t latent_dim() const { return widths[latent_index]; }
};

/// Parses a width chain like "50-100-200-100-50".  With no explicit
/// latent index, picks the unique width-minimum layer, or the middle
/// layer (earlier of the middle pair) when the minimum is not unique.
ArchSpec parse_arch(const std::string& text, std::size_t input_dim,
                    std::optional<std::size_t> latent = std::nullopt,
                    ActKind activation = ActKind::Tanh);

/// Normalized width-chain string; parse_arch(serialize_arch(a)) == a.
std::string serialize_arch(const ArchSpec& arch);

const char* act_name(ActKind k);
ActKind act_from_name(const std::string& name);

/// MLP autoencoder with parameters in one flat vector, so gradients and
/// optimizer state index uniformly.  Layer l maps dims[l] -> dims[l+1]
/// where dims = [input_dim, widths..., input_dim]; the activation applies
/// to every layer except the last (the spiral targets are unbounded, so
/// the output layer is linear).
struct Net {
  ArchSpec arch;
  std::vector<double> params;
  std::uint64_t seed = 0;

  std::size_t layer_count() const { return arch.widths.size() + 1; }
  std::size_t in_dim(std::size_t l) const {
    return l == 0 ? arch.input_dim : arch.widths[l - 1];
  }
  std::size_t out_dim(std::size_t l) const {
    return l == arch.widths.size() ? arch.input_dim : arch.widths[l];
  }
  std::size_t w_offset(std::size_t l) const;
  std::size_t b_offset(std::size_t l) const {
    return w_offset(l) + out_dim(l) * in_dim(l);
  }
  std::size_t param_count() const;
  bool hidden(std::size_t l) const { return l + 1 < layer_count(); }
};

/// Weights ~ N(0, 1/fan_in), biases zero, deterministic per seed.
Net init(const ArchSpec& arch, std::uint64_t seed);

// Single-point evaluation.
std::vector<double> encode(const Net& net, std::span<const double> x);
std::vector<double> decode(const Net& net, std::span<const double> z);
std::vector<double> reconstruct(const Net& net, std::span<const double> x);

// Column-batched evaluation (columns are points).
Matrix encode_m(const Net& net, const Matrix& x);
Matrix decode_m(const Net& net, const Matrix& z);
Matrix reconstruct_m(const Net& net, const Matrix& x);

// Plain (non-tape) derivative sweeps for diagnostics and value-level
// penalties.
std::vector<double> decode_jvp(const Net& net, std::span<const double> z,
                               std::span<const double> v);
std::vector<double> decode_vjp(const Net& net, std::span<const double> z,
                               std::span<const double> w);
std::vector<double> encode_jvp(const Net& net, std::span<const double> x,
                               std::span<const double> v);

/// Records the encoder on a tape bound to net.params; returns the latent
/// node.  record_decode continues from a latent node to the output.
NodeId record_encode(Tape& tape, const Net& net, NodeId x);
NodeId record_decode(Tape& tape, const Net& net, NodeId z);
NodeId record_reconstruct(Tape& tape, const Net& net, NodeId x);

/// Self-describing versioned text checkpoint with 17-significant-digit
/// decimals; round-trips bit-exactly.
std::string checkpoint_to_string(const Net& net);
Net checkpoint_from_string(const std::string& text);
void save_checkpoint(const Net& net, const std::string& path);
Net load_checkpoint(const std::string& path);

/// Point-level autoencoder interface: lets the risk and diagnostic
/// operations run on analytic models (exact curves) as well as nets.
class PointModel {
public:
  virtual ~PointModel() = default;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t latent_dim() const = 0;
  virtual std::vector<double> encode(std::span<const double> x) const = 0;
  virtual std::vector<double> decode(std::span<const double> z) const = 0;
  virtual std::vector<double> decode_jvp(std::span<const double> z,
                                         std::span<const double> v) const = 0;
  virtual std::vector<double> decode_vjp(std::span<const double> z,
                                         std::span<const double> w) const = 0;
  virtual std::vector<double> encode_jvp(std::span<const double> x,
                                         std::span<const double> v) const = 0;
};

/// PointModel view of a Net (non-owning).
class NetModel final : public PointModel {
public:
  explicit NetModel(const Net& net) : net_(&net) {}
  std::size_t input_dim() const override { return net_->arch.input_dim; }
  std::size_t latent_dim() const override { return net_->arch.latent_dim(); }
  std::vector<double> encode(std::span<const double> x) const override {
    return aelab::encode(*net_, x);
  }
  std::vector<double> decode(std::span<const double> z) const override {
    return aelab::decode(*net_, z);
  }
  std::vector<double> decode_jvp(std::span<const double> z,
                                 std::span<const double> v) const override {
    return aelab::decode_jvp(*net_, z, v);
  }
  std::vector<double> decode_vjp(std::span<const double> z,
                                 std::span<const double> w) const override {
    return aelab::decode_vjp(*net_, z, w);
  }
  std::vector<double> encode_jvp(std::span<const double> x,
                                 std::span<const double> v) const override {
    return aelab::encode_jvp(*net_, x, v);
  }

private:
  const Net* net_;
};

}  // namespace aelab
